//! Compressed-sensing reconstruction: FISTA over a multi-level orthonormal
//! Haar sparsity penalty, with monotone restart.

use super::{coil_adjoint, coil_forward, SenseContext};
use crate::error::{Error, Result};
use crate::kcore::{ComplexImage, ImageSlice, KSpaceSlice};
use crate::sampling::SamplingMask;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Complex magnitude soft-threshold: z * max(0, 1 - t/|z|). Reduces to
/// sign(x) max(|x| - t, 0) on the real line.
pub fn shrink(z: Complex64, t: f64) -> Complex64 {
    let m = z.norm();
    if m <= t {
        Complex64::new(0.0, 0.0)
    } else {
        z * ((m - t) / m)
    }
}

/// Number of Haar levels usable for an image: each level halves both dims,
/// which must stay even.
fn usable_levels(mut h: usize, mut w: usize, requested: usize) -> usize {
    let mut levels = 0;
    while levels < requested && h % 2 == 0 && w % 2 == 0 && h >= 2 && w >= 2 {
        h /= 2;
        w /= 2;
        levels += 1;
    }
    levels
}

/// In-place multi-level orthonormal 2D Haar transform.
pub fn haar2_forward(img: &mut ComplexImage, levels: usize) {
    let levels = usable_levels(img.height, img.width, levels);
    let (full_w, mut h, mut w) = (img.width, img.height, img.width);
    let s = 1.0 / 2.0_f64.sqrt();
    for _ in 0..levels {
        // rows
        let mut buf = vec![Complex64::new(0.0, 0.0); w];
        for y in 0..h {
            for x in 0..w / 2 {
                let a = img.data[y * full_w + 2 * x];
                let b = img.data[y * full_w + 2 * x + 1];
                buf[x] = (a + b) * s;
                buf[w / 2 + x] = (a - b) * s;
            }
            img.data[y * full_w..y * full_w + w].copy_from_slice(&buf);
        }
        // columns
        let mut col = vec![Complex64::new(0.0, 0.0); h];
        for x in 0..w {
            for y in 0..h / 2 {
                let a = img.data[(2 * y) * full_w + x];
                let b = img.data[(2 * y + 1) * full_w + x];
                col[y] = (a + b) * s;
                col[h / 2 + y] = (a - b) * s;
            }
            for y in 0..h {
                img.data[y * full_w + x] = col[y];
            }
        }
        h /= 2;
        w /= 2;
    }
}

/// Exact inverse of [`haar2_forward`].
pub fn haar2_inverse(img: &mut ComplexImage, levels: usize) {
    let levels = usable_levels(img.height, img.width, levels);
    let full_w = img.width;
    let s = 1.0 / 2.0_f64.sqrt();
    let mut dims = Vec::new();
    let (mut h, mut w) = (img.height, img.width);
    for _ in 0..levels {
        dims.push((h, w));
        h /= 2;
        w /= 2;
    }
    for &(h, w) in dims.iter().rev() {
        // columns
        let mut col = vec![Complex64::new(0.0, 0.0); h];
        for x in 0..w {
            for y in 0..h / 2 {
                let lo = img.data[y * full_w + x];
                let hi = img.data[(h / 2 + y) * full_w + x];
                col[2 * y] = (lo + hi) * s;
                col[2 * y + 1] = (lo - hi) * s;
            }
            for y in 0..h {
                img.data[y * full_w + x] = col[y];
            }
        }
        // rows
        let mut buf = vec![Complex64::new(0.0, 0.0); w];
        for y in 0..h {
            for x in 0..w / 2 {
                let lo = img.data[y * full_w + x];
                let hi = img.data[y * full_w + w / 2 + x];
                buf[2 * x] = (lo + hi) * s;
                buf[2 * x + 1] = (lo - hi) * s;
            }
            img.data[y * full_w..y * full_w + w].copy_from_slice(&buf);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsConfig {
    /// Regularization weight relative to the zero-filled image peak.
    pub lambda_rel: f64,
    pub iters: usize,
    pub haar_levels: usize,
}

impl Default for CsConfig {
    fn default() -> Self {
        Self { lambda_rel: 1e-2, iters: 200, haar_levels: 3 }
    }
}

/// Objective value: 0.5 ||A x - y||^2 + lambda ||Psi x||_1.
fn objective(
    x: &ComplexImage,
    y: &[ComplexImage],
    ctx: &SenseContext,
    mask: &SamplingMask,
    lambda: f64,
    levels: usize,
) -> Result<f64> {
    let ax = coil_forward(x, ctx, mask)?;
    let mut data_term = 0.0;
    for (a, b) in ax.iter().zip(y.iter()) {
        for (za, zb) in a.data.iter().zip(b.data.iter()) {
            data_term += (za - zb).norm_sqr();
        }
    }
    let mut coeffs = x.clone();
    haar2_forward(&mut coeffs, levels);
    let l1: f64 = coeffs.data.iter().map(|z| z.norm()).sum();
    Ok(0.5 * data_term + lambda * l1)
}

/// FISTA iterative soft-thresholding over the Haar transform, returning the
/// magnitude image and the per-iteration objective trace. The objective is
/// non-increasing (monotone restart); an increase beyond round-off slack
/// aborts with a diagnostic.
pub fn cs_recon(
    ks: &KSpaceSlice,
    mask: &SamplingMask,
    cfg: &CsConfig,
) -> Result<(ImageSlice, Vec<f64>)> {
    let ctx = SenseContext::for_slice(ks);
    let levels = usable_levels(ks.height(), ks.width(), cfg.haar_levels);
    let y: Vec<ComplexImage> = (0..ks.coils()).map(|c| ks.coil_plane_c64(c)).collect();

    // x0 = A^H y (zero-filled SENSE combine); with unit-power maps the
    // Lipschitz constant of the data term is 1, so the step size is 1.
    let x0 = coil_adjoint(&y, &ctx, mask)?;
    let peak = x0.data.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
    let lambda = cfg.lambda_rel * peak;

    let mut x = x0.clone();
    let mut z = x.clone(); // momentum point
    let mut theta = 1.0_f64;
    let mut trace = Vec::with_capacity(cfg.iters + 1);
    trace.push(objective(&x, &y, &ctx, mask, lambda, levels)?);

    let mut iter = 0;
    let mut restarted_this_iter = false;
    while iter < cfg.iters {
        // gradient step at z: g = A^H (A z - y)
        let az = coil_forward(&z, &ctx, mask)?;
        let resid: Vec<ComplexImage> = az
            .iter()
            .zip(y.iter())
            .map(|(a, b)| {
                let data = a.data.iter().zip(b.data.iter()).map(|(za, zb)| za - zb).collect();
                ComplexImage { data, height: a.height, width: a.width }
            })
            .collect();
        let grad = coil_adjoint(&resid, &ctx, mask)?;
        let mut next = ComplexImage {
            data: z.data.iter().zip(grad.data.iter()).map(|(a, g)| a - g).collect(),
            height: z.height,
            width: z.width,
        };
        if lambda > 0.0 {
            haar2_forward(&mut next, levels);
            for c in next.data.iter_mut() {
                *c = shrink(*c, lambda);
            }
            haar2_inverse(&mut next, levels);
        }

        let obj = objective(&next, &y, &ctx, mask, lambda, levels)?;
        let slack = 1e-10 * trace.last().unwrap().abs().max(1.0);
        if obj > trace.last().unwrap() + slack {
            if restarted_this_iter {
                return Err(Error::Numerical(format!(
                    "cs objective increased after restart at iteration {iter}: {} -> {obj}",
                    trace.last().unwrap()
                )));
            }
            // monotone restart: drop momentum and retry as a plain
            // proximal-gradient step from x
            theta = 1.0;
            z = x.clone();
            restarted_this_iter = true;
            continue;
        }
        restarted_this_iter = false;

        let theta_next = (1.0 + (1.0 + 4.0 * theta * theta).sqrt()) / 2.0;
        let beta = (theta - 1.0) / theta_next;
        z = ComplexImage {
            data: next
                .data
                .iter()
                .zip(x.data.iter())
                .map(|(n, o)| n + (n - o) * beta)
                .collect(),
            height: next.height,
            width: next.width,
        };
        theta = theta_next;
        x = next;
        trace.push(obj);
        iter += 1;
    }
    Ok((x.magnitude(), trace))
}
