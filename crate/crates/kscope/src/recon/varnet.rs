//! Unrolled cascade reconstructor.
//!
//! Each cascade refines the running k-space estimate in image space and then
//! applies a soft data-consistency step against the acquired samples:
//!
//!   k~   = k + F S refine(S* F^-1 k)
//!   k'   = (1-eta) k~ + eta k0   on acquired columns, k~ elsewhere
//!
//! so with eta = 1 the acquired columns of every cascade output equal the
//! acquired input exactly. Sensitivity maps are the fixed simulation maps.

use super::{SenseContext, ReconMetrics};
use crate::error::{Error, Result};
use crate::kcore::{dft2, idft2, ComplexImage, ImageSlice, KSpaceSlice};
use crate::nn;
use crate::sampling::SamplingMask;
use crate::seeds;
use num_complex::Complex64;
use std::path::Path;

pub const DEFAULT_CASCADES: usize = 3;
pub const DEFAULT_CHANNELS: usize = 16;
const K: usize = 3;

/// Parameter container for the cascade reconstructor.
///
/// Canonical flattening order, per cascade: data-consistency weight eta, then
/// the three refinement conv layers as (weights, bias) pairs with kernel
/// layout `[out][in][3][3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniVarNet {
    pub cascades: usize,
    pub channels: usize,
    pub params: Vec<f64>,
}

fn cascade_len(ch: usize) -> usize {
    // eta + (2->ch) + (ch->ch) + (ch->2) convs with biases
    1 + (ch * 2 * K * K + ch) + (ch * ch * K * K + ch) + (2 * ch * K * K + 2)
}

/// Offsets of the per-cascade parameter blocks, relative to cascade start.
struct CascadeLayout {
    eta: usize,
    c1w: usize,
    c1b: usize,
    c2w: usize,
    c2b: usize,
    c3w: usize,
    c3b: usize,
    len: usize,
}

fn layout(ch: usize) -> CascadeLayout {
    let kk = K * K;
    let eta = 0;
    let c1w = 1;
    let c1b = c1w + ch * 2 * kk;
    let c2w = c1b + ch;
    let c2b = c2w + ch * ch * kk;
    let c3w = c2b + ch;
    let c3b = c3w + 2 * ch * kk;
    CascadeLayout { eta, c1w, c1b, c2w, c2b, c3w, c3b, len: c3b + 2 }
}

impl MiniVarNet {
    pub fn n_params(cascades: usize, channels: usize) -> usize {
        cascades * cascade_len(channels)
    }

    /// Zero-weight net with the given eta on every cascade.
    pub fn with_eta(cascades: usize, channels: usize, eta: f64) -> Self {
        let mut params = vec![0.0; Self::n_params(cascades, channels)];
        let step = cascade_len(channels);
        for t in 0..cascades {
            params[t * step] = eta;
        }
        Self { cascades, channels, params }
    }

    /// Seeded random initialization; eta starts at 1.
    pub fn seeded(cascades: usize, channels: usize, seed: u64) -> Self {
        let mut net = Self::with_eta(cascades, channels, 1.0);
        let mut rng = seeds::rng(seed);
        let lay = layout(channels);
        let step = lay.len;
        for t in 0..cascades {
            let base = t * step;
            let p = &mut net.params;
            nn::init_uniform(&mut rng, &mut p[base + lay.c1w..base + lay.c2w], 2 * K * K);
            nn::init_uniform(&mut rng, &mut p[base + lay.c2w..base + lay.c3w], channels * K * K);
            nn::init_uniform(&mut rng, &mut p[base + lay.c3w..base + step], channels * K * K);
        }
        net
    }

    /// Indices of the data-consistency parameters (the eta weights).
    pub fn dc_param_indices(&self) -> Vec<usize> {
        let step = cascade_len(self.channels);
        (0..self.cascades).map(|t| t * step).collect()
    }

    /// Indices of the refinement CNN parameters.
    pub fn refinement_param_indices(&self) -> Vec<usize> {
        let step = cascade_len(self.channels);
        (0..self.cascades)
            .flat_map(|t| t * step + 1..(t + 1) * step)
            .collect()
    }

    pub fn kind(&self) -> String {
        format!("varnet-{}-{}", self.cascades, self.channels)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        nn::save_params(path, &self.kind(), &self.params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (kind, params) = nn::load_params_any(path)?;
        let parts: Vec<&str> = kind.split('-').collect();
        if parts.len() != 3 || parts[0] != "varnet" {
            return Err(Error::Dataset(format!("weight kind '{kind}' is not a varnet")));
        }
        let cascades: usize = parts[1]
            .parse()
            .map_err(|_| Error::Dataset(format!("bad cascade count in '{kind}'")))?;
        let channels: usize = parts[2]
            .parse()
            .map_err(|_| Error::Dataset(format!("bad channel count in '{kind}'")))?;
        if params.len() != Self::n_params(cascades, channels) {
            return Err(Error::Shape(format!(
                "varnet weight file has {} parameters, expected {}",
                params.len(),
                Self::n_params(cascades, channels)
            )));
        }
        Ok(Self { cascades, channels, params })
    }
}

struct RefineCache {
    input: Vec<f64>,
    pre1: Vec<f64>,
    act1: Vec<f64>,
    pre2: Vec<f64>,
    act2: Vec<f64>,
}

struct CascadeCache {
    k_in: Vec<ComplexImage>,
    refine: RefineCache,
    ktilde: Vec<ComplexImage>,
}

/// Everything needed to run the backward pass after a forward evaluation.
pub struct VarNetCache {
    cascades: Vec<CascadeCache>,
    k_final: Vec<ComplexImage>,
    coil_images: Vec<ComplexImage>,
    pub rss: ImageSlice,
}

fn refine_forward(
    net: &MiniVarNet,
    cascade: usize,
    x: &ComplexImage,
) -> (ComplexImage, RefineCache) {
    let ch = net.channels;
    let lay = layout(ch);
    let base = cascade * lay.len;
    let p = &net.params;
    let (h, w) = (x.height, x.width);
    let mut input = Vec::with_capacity(2 * h * w);
    input.extend(x.data.iter().map(|z| z.re));
    input.extend(x.data.iter().map(|z| z.im));
    let pre1 = nn::conv2d_forward(
        &input,
        2,
        h,
        w,
        &p[base + lay.c1w..base + lay.c1b],
        &p[base + lay.c1b..base + lay.c2w],
        ch,
        K,
    );
    let mut act1 = pre1.clone();
    nn::leaky_relu(&mut act1);
    let pre2 = nn::conv2d_forward(
        &act1,
        ch,
        h,
        w,
        &p[base + lay.c2w..base + lay.c2b],
        &p[base + lay.c2b..base + lay.c3w],
        ch,
        K,
    );
    let mut act2 = pre2.clone();
    nn::leaky_relu(&mut act2);
    let out = nn::conv2d_forward(
        &act2,
        ch,
        h,
        w,
        &p[base + lay.c3w..base + lay.c3b],
        &p[base + lay.c3b..base + lay.len],
        2,
        K,
    );
    let r = ComplexImage {
        data: (0..h * w).map(|i| Complex64::new(out[i], out[h * w + i])).collect(),
        height: h,
        width: w,
    };
    (r, RefineCache { input, pre1, act1, pre2, act2 })
}

fn refine_backward(
    net: &MiniVarNet,
    cascade: usize,
    cache: &RefineCache,
    d_r: &ComplexImage,
    grads: &mut [f64],
) -> ComplexImage {
    let ch = net.channels;
    let lay = layout(ch);
    let base = cascade * lay.len;
    let p = &net.params;
    let (h, w) = (d_r.height, d_r.width);
    let mut dout = Vec::with_capacity(2 * h * w);
    dout.extend(d_r.data.iter().map(|z| z.re));
    dout.extend(d_r.data.iter().map(|z| z.im));

    let mut d_act2 = vec![0.0; ch * h * w];
    {
        let (gw, gb) = grads[base + lay.c3w..base + lay.len].split_at_mut(2 * ch * K * K);
        nn::conv2d_backward(
            &cache.act2,
            ch,
            h,
            w,
            &p[base + lay.c3w..base + lay.c3b],
            2,
            K,
            &dout,
            &mut d_act2,
            gw,
            gb,
        );
    }
    let mut d_pre2 = vec![0.0; ch * h * w];
    nn::leaky_relu_backward(&cache.pre2, &d_act2, &mut d_pre2);
    let mut d_act1 = vec![0.0; ch * h * w];
    {
        let (gw, gb) = grads[base + lay.c2w..base + lay.c3w].split_at_mut(ch * ch * K * K);
        nn::conv2d_backward(
            &cache.act1,
            ch,
            h,
            w,
            &p[base + lay.c2w..base + lay.c2b],
            ch,
            K,
            &d_pre2,
            &mut d_act1,
            gw,
            gb,
        );
    }
    let mut d_pre1 = vec![0.0; ch * h * w];
    nn::leaky_relu_backward(&cache.pre1, &d_act1, &mut d_pre1);
    let mut d_input = vec![0.0; 2 * h * w];
    {
        let (gw, gb) = grads[base + lay.c1w..base + lay.c2w].split_at_mut(ch * 2 * K * K);
        nn::conv2d_backward(
            &cache.input,
            2,
            h,
            w,
            &p[base + lay.c1w..base + lay.c1b],
            ch,
            K,
            &d_pre1,
            &mut d_input,
            gw,
            gb,
        );
    }
    ComplexImage {
        data: (0..h * w).map(|i| Complex64::new(d_input[i], d_input[h * w + i])).collect(),
        height: h,
        width: w,
    }
}

/// Run the cascades on masked k-space; returns the RSS magnitude image and
/// the cache for backprop. Deterministic.
pub fn minivarnet_forward(
    net: &MiniVarNet,
    ks: &KSpaceSlice,
    mask: &SamplingMask,
    ctx: &SenseContext,
) -> Result<(ImageSlice, VarNetCache)> {
    super::check_geometry(ks, mask)?;
    if ctx.maps.len() != ks.coils() {
        return Err(Error::Shape("sensitivity maps do not match coil count".into()));
    }
    let (h, w) = (ks.height(), ks.width());
    let lay = layout(net.channels);
    let k0: Vec<ComplexImage> = (0..ks.coils()).map(|c| ks.coil_plane_c64(c)).collect();
    let mut k: Vec<ComplexImage> = k0.clone();
    let mut caches = Vec::with_capacity(net.cascades);
    for t in 0..net.cascades {
        let eta = net.params[t * lay.len + lay.eta];
        // image-space combine
        let mut combined = ComplexImage::zeros(h, w);
        for (kc, map) in k.iter().zip(ctx.maps.iter()) {
            let img = idft2(kc)?;
            for (a, (v, s)) in combined.data.iter_mut().zip(img.data.iter().zip(map.data.iter())) {
                *a += v * s.conj();
            }
        }
        let (r, refine_cache) = refine_forward(net, t, &combined);
        // back to k-space and add
        let mut ktilde = Vec::with_capacity(k.len());
        for (kc, map) in k.iter().zip(ctx.maps.iter()) {
            let weighted = ComplexImage {
                data: r.data.iter().zip(map.data.iter()).map(|(a, s)| a * s).collect(),
                height: h,
                width: w,
            };
            let kr = dft2(&weighted)?;
            ktilde.push(ComplexImage {
                data: kc.data.iter().zip(kr.data.iter()).map(|(a, b)| a + b).collect(),
                height: h,
                width: w,
            });
        }
        // data consistency: acquired columns blend toward k0
        let mut k_next = ktilde.clone();
        for (kn, k0c) in k_next.iter_mut().zip(k0.iter()) {
            for row in 0..h {
                for col in 0..w {
                    if mask.is_acquired(col) {
                        let i = row * w + col;
                        kn.data[i] = kn.data[i] * (1.0 - eta) + k0c.data[i] * eta;
                    }
                }
            }
        }
        caches.push(CascadeCache { k_in: k, refine: refine_cache, ktilde });
        k = k_next;
    }
    let coil_images: Result<Vec<ComplexImage>> = k.iter().map(idft2).collect();
    let coil_images = coil_images?;
    let mut rss = ImageSlice::zeros(h, w);
    for img in &coil_images {
        for (a, z) in rss.data.iter_mut().zip(img.data.iter()) {
            *a += z.norm_sqr();
        }
    }
    for a in rss.data.iter_mut() {
        *a = a.sqrt();
    }
    Ok((rss.clone(), VarNetCache { cascades: caches, k_final: k, coil_images, rss }))
}

/// Backward pass: fold d(loss)/d(rss image) into parameter gradients.
pub fn minivarnet_backward(
    net: &MiniVarNet,
    ks: &KSpaceSlice,
    mask: &SamplingMask,
    ctx: &SenseContext,
    cache: &VarNetCache,
    d_rss: &[f64],
    grads: &mut [f64],
) -> Result<()> {
    let (h, w) = (ks.height(), ks.width());
    let lay = layout(net.channels);
    let k0: Vec<ComplexImage> = (0..ks.coils()).map(|c| ks.coil_plane_c64(c)).collect();

    // rss backward: d x_c = d_rss * x_c / rss
    let mut d_k: Vec<ComplexImage> = Vec::with_capacity(cache.k_final.len());
    for img in &cache.coil_images {
        let mut d_img = ComplexImage::zeros(h, w);
        for i in 0..h * w {
            let m = cache.rss.data[i];
            if m > 0.0 {
                let scale = d_rss[i] / m;
                d_img.data[i] = img.data[i] * scale;
            }
        }
        d_k.push(dft2(&d_img)?); // adjoint of idft2
    }

    for t in (0..net.cascades).rev() {
        let cc = &cache.cascades[t];
        let eta = net.params[t * lay.len + lay.eta];
        // backward through data consistency
        let mut d_eta = 0.0;
        let mut d_ktilde = d_k;
        for (c, dk) in d_ktilde.iter_mut().enumerate() {
            for row in 0..h {
                for col in 0..w {
                    if mask.is_acquired(col) {
                        let i = row * w + col;
                        let v = k0[c].data[i] - cc.ktilde[c].data[i];
                        d_eta += dk.data[i].re * v.re + dk.data[i].im * v.im;
                        dk.data[i] *= 1.0 - eta;
                    }
                }
            }
        }
        grads[t * lay.len + lay.eta] += d_eta;

        // ktilde = k_in + F(S r): direct branch keeps d_ktilde for k_in;
        // refinement branch folds through F, S, the CNNevaluation, S*, F^-1.
        let mut d_r = ComplexImage::zeros(h, w);
        for (dk, map) in d_ktilde.iter().zip(ctx.maps.iter()) {
            let du = idft2(dk)?; // adjoint of dft2
            for (a, (v, s)) in d_r.data.iter_mut().zip(du.data.iter().zip(map.data.iter())) {
                *a += v * s.conj();
            }
        }
        let d_combined = refine_backward(net, t, &cc.refine, &d_r, grads);
        let mut d_k_prev = d_ktilde;
        for (dk, map) in d_k_prev.iter_mut().zip(ctx.maps.iter()) {
            let d_x = ComplexImage {
                data: d_combined.data.iter().zip(map.data.iter()).map(|(a, s)| a * s).collect(),
                height: h,
                width: w,
            };
            let dft = dft2(&d_x)?; // adjoint of idft2
            for (a, b) in dk.data.iter_mut().zip(dft.data.iter()) {
                *a += b;
            }
        }
        d_k = d_k_prev;
    }
    // gradient w.r.t. the input k-space is discarded (inputs are data)
    let _ = cache.cascades.first().map(|c| &c.k_in);
    Ok(())
}

/// Reconstruct and score one slice: forward, optional crop, metrics against
/// the RSS ground truth of the fully sampled slice.
pub fn reconstruct_and_score(
    net: &MiniVarNet,
    full_ks: &KSpaceSlice,
    masked_ks: &KSpaceSlice,
    mask: &SamplingMask,
    ctx: &SenseContext,
    crop: Option<(usize, usize)>,
) -> Result<(ImageSlice, ReconMetrics)> {
    let (img, _) = minivarnet_forward(net, masked_ks, mask, ctx)?;
    let truth = super::ground_truth(full_ks)?;
    let (img, truth) = match crop {
        Some((ch, cw)) => (img.center_crop(ch, cw)?, truth.center_crop(ch, cw)?),
        None => (img, truth),
    };
    let metrics = super::recon_metrics(&img, &truth)?;
    Ok((img, metrics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{phantom_to_kspace, render_phantom_slice, PhantomConfig};
    use crate::recon::{ssim_with_grad, zero_filled};
    use crate::sampling::{apply_mask, equispaced_mask};

    fn phantom_ks(grid: usize, coils: usize, seed: u64) -> KSpaceSlice {
        let cfg = PhantomConfig { grid, coils, noise_sigma: 0.0, ..PhantomConfig::default() };
        let img = render_phantom_slice(&cfg, 0.0, &mut seeds::rng(seed)).unwrap();
        phantom_to_kspace(&img, &cfg, &mut seeds::rng(seed + 1)).unwrap()
    }

    #[test]
    fn zero_refinement_zero_eta_equals_zero_filled() {
        let ks = phantom_ks(24, 2, 1);
        let mask = equispaced_mask(24, 3.0, 0.1).unwrap();
        let masked = apply_mask(&ks, &mask).unwrap();
        let net = MiniVarNet::with_eta(3, 4, 0.0);
        let ctx = SenseContext::for_slice(&masked);
        let (img, _) = minivarnet_forward(&net, &masked, &mask, &ctx).unwrap();
        let zf = zero_filled(&masked, &mask, None).unwrap();
        let err = img
            .data
            .iter()
            .zip(zf.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        assert!(err < 1e-12, "max err {err}");
    }

    #[test]
    fn eta_one_zero_refinement_full_mask_recovers_truth_in_one_cascade() {
        let ks = phantom_ks(24, 2, 2);
        let mask = equispaced_mask(24, 1.0, 0.2).unwrap();
        let net = MiniVarNet::with_eta(1, 4, 1.0);
        let ctx = SenseContext::for_slice(&ks);
        let (img, _) = minivarnet_forward(&net, &ks, &mask, &ctx).unwrap();
        let truth = crate::recon::ground_truth(&ks).unwrap();
        let err = img
            .data
            .iter()
            .zip(truth.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        assert!(err < 1e-12, "max err {err}");
    }

    #[test]
    fn eta_one_pins_acquired_columns_exactly() {
        let ks = phantom_ks(24, 2, 3);
        let mask = equispaced_mask(24, 3.0, 0.1).unwrap();
        let masked = apply_mask(&ks, &mask).unwrap();
        let net = MiniVarNet::seeded(3, 4, 7); // random refinement, eta = 1
        let ctx = SenseContext::for_slice(&masked);
        let (_, cache) = minivarnet_forward(&net, &masked, &mask, &ctx).unwrap();
        let k0: Vec<ComplexImage> = (0..2).map(|c| masked.coil_plane_c64(c)).collect();
        for (kf, k0c) in cache.k_final.iter().zip(k0.iter()) {
            for row in 0..24 {
                for col in 0..24 {
                    if mask.is_acquired(col) {
                        let a = kf.data[row * 24 + col];
                        let b = k0c.data[row * 24 + col];
                        assert_eq!(a, b, "acquired sample moved at ({row},{col})");
                    }
                }
            }
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let ks = phantom_ks(24, 2, 4);
        let mask = equispaced_mask(24, 2.0, 0.1).unwrap();
        let masked = apply_mask(&ks, &mask).unwrap();
        let net = MiniVarNet::seeded(2, 4, 5);
        let ctx = SenseContext::for_slice(&masked);
        let (a, _) = minivarnet_forward(&net, &masked, &mask, &ctx).unwrap();
        let (b, _) = minivarnet_forward(&net, &masked, &mask, &ctx).unwrap();
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn loss_gradient_matches_fd_on_tiny_net() {
        let ks = phantom_ks(12, 1, 6);
        let mask = equispaced_mask(12, 2.0, 0.2).unwrap();
        let masked = apply_mask(&ks, &mask).unwrap();
        let mut net = MiniVarNet::seeded(2, 3, 8);
        let ctx = SenseContext::for_slice(&masked);
        let truth = crate::recon::ground_truth(&ks).unwrap();
        let range = truth.max_abs();

        let loss = |net: &MiniVarNet| -> f64 {
            let (img, _) = minivarnet_forward(net, &masked, &mask, &ctx).unwrap();
            let (s, _) = ssim_with_grad(&img, &truth, range).unwrap();
            1.0 - s
        };
        let (img, cache) = minivarnet_forward(&net, &masked, &mask, &ctx).unwrap();
        let (_, ssim_grad) = ssim_with_grad(&img, &truth, range).unwrap();
        let d_rss: Vec<f64> = ssim_grad.iter().map(|g| -g).collect();
        let mut grads = vec![0.0; net.params.len()];
        minivarnet_backward(&net, &masked, &mask, &ctx, &cache, &d_rss, &mut grads).unwrap();

        use rand::Rng;
        let mut rng = seeds::rng(9);
        let n = net.params.len();
        for _ in 0..40 {
            let i = rng.random_range(0..n);
            let h = 1e-5 * net.params[i].abs().max(1.0);
            let orig = net.params[i];
            net.params[i] = orig + h;
            let up = loss(&net);
            net.params[i] = orig - h;
            let dn = loss(&net);
            net.params[i] = orig;
            let num = (up - dn) / (2.0 * h);
            let rel = (num - grads[i]).abs() / num.abs().max(grads[i].abs()).max(1e-6);
            assert!(rel < 1e-3, "param {i}: fd {num} vs analytic {}", grads[i]);
        }
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let net = MiniVarNet::seeded(2, 4, 10);
        let path = dir.path().join("net.bin");
        net.save(&path).unwrap();
        let back = MiniVarNet::load(&path).unwrap();
        assert_eq!(back.cascades, 2);
        assert_eq!(back.channels, 4);
        assert_eq!(back.params.len(), net.params.len());
    }

    #[test]
    fn default_net_has_pinned_size() {
        let n = MiniVarNet::n_params(DEFAULT_CASCADES, DEFAULT_CHANNELS);
        assert_eq!(n, 3 * 2915);
    }
}
