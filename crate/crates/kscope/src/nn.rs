//! Minimal neural-network substrate: the handful of layer types used by the
//! detector and the cascade reconstructor, each with an exact analytic
//! backward pass, plus Adam and the on-disk weight format.
//!
//! Parameters live in flat f64 vectors owned by each model; layer functions
//! take explicit shapes and raw slices. Gradients are accumulated in a flat
//! vector aligned with the parameter layout, which is also the canonical
//! flattening order used by the weight files and the Fisher machinery.

use crate::error::{Error, Result};
use rand::Rng;
use std::io::{Read, Write};
use std::path::Path;

pub const LEAKY_SLOPE: f64 = 0.01;

/// y = max(x, slope*x), elementwise.
pub fn leaky_relu(x: &mut [f64]) {
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v *= LEAKY_SLOPE;
        }
    }
}

/// dx given pre-activation input and upstream gradient.
pub fn leaky_relu_backward(pre: &[f64], dout: &[f64], dx: &mut [f64]) {
    for i in 0..pre.len() {
        dx[i] = if pre[i] < 0.0 { dout[i] * LEAKY_SLOPE } else { dout[i] };
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Numerically stable binary cross entropy on a logit.
pub fn bce_with_logit(logit: f64, target: f64) -> f64 {
    logit.max(0.0) - logit * target + (1.0 + (-logit.abs()).exp()).ln()
}

/// d(bce)/d(logit) = sigmoid(logit) - target.
pub fn bce_with_logit_backward(logit: f64, target: f64) -> f64 {
    sigmoid(logit) - target
}

/// Valid 1D convolution: x is [in_ch][len], w is [out_ch][in_ch][k],
/// output [out_ch][len-k+1].
pub fn conv1d_forward(
    x: &[f64],
    in_ch: usize,
    len: usize,
    w: &[f64],
    b: &[f64],
    out_ch: usize,
    k: usize,
) -> Vec<f64> {
    let out_len = len - k + 1;
    let mut out = vec![0.0; out_ch * out_len];
    for oc in 0..out_ch {
        for t in 0..out_len {
            let mut acc = b[oc];
            for ic in 0..in_ch {
                let xoff = ic * len + t;
                let woff = (oc * in_ch + ic) * k;
                for j in 0..k {
                    acc += x[xoff + j] * w[woff + j];
                }
            }
            out[oc * out_len + t] = acc;
        }
    }
    out
}

/// Backward of [`conv1d_forward`]; accumulates into dw/db, writes dx.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_backward(
    x: &[f64],
    in_ch: usize,
    len: usize,
    w: &[f64],
    out_ch: usize,
    k: usize,
    dout: &[f64],
    dx: &mut [f64],
    dw: &mut [f64],
    db: &mut [f64],
) {
    let out_len = len - k + 1;
    dx.iter_mut().for_each(|v| *v = 0.0);
    for oc in 0..out_ch {
        for t in 0..out_len {
            let g = dout[oc * out_len + t];
            db[oc] += g;
            for ic in 0..in_ch {
                let xoff = ic * len + t;
                let woff = (oc * in_ch + ic) * k;
                for j in 0..k {
                    dw[woff + j] += g * x[xoff + j];
                    dx[xoff + j] += g * w[woff + j];
                }
            }
        }
    }
}

/// Non-overlapping max pooling over 1D channels; a trailing partial window is
/// dropped. Returns pooled values and flat argmax indices for backward.
pub fn maxpool1d_forward(
    x: &[f64],
    ch: usize,
    len: usize,
    width: usize,
) -> (Vec<f64>, Vec<usize>) {
    let out_len = len / width;
    let mut out = vec![0.0; ch * out_len];
    let mut arg = vec![0usize; ch * out_len];
    for c in 0..ch {
        for t in 0..out_len {
            let base = c * len + t * width;
            let mut best = x[base];
            let mut bi = base;
            for j in 1..width {
                if x[base + j] > best {
                    best = x[base + j];
                    bi = base + j;
                }
            }
            out[c * out_len + t] = best;
            arg[c * out_len + t] = bi;
        }
    }
    (out, arg)
}

pub fn maxpool1d_backward(arg: &[usize], dout: &[f64], dx: &mut [f64]) {
    dx.iter_mut().for_each(|v| *v = 0.0);
    for (i, &src) in arg.iter().enumerate() {
        dx[src] += dout[i];
    }
}

/// Dense layer: w is [out][in], out = w x + b.
pub fn dense_forward(x: &[f64], w: &[f64], b: &[f64], out_dim: usize) -> Vec<f64> {
    let in_dim = x.len();
    let mut out = vec![0.0; out_dim];
    for o in 0..out_dim {
        let mut acc = b[o];
        let row = o * in_dim;
        for i in 0..in_dim {
            acc += w[row + i] * x[i];
        }
        out[o] = acc;
    }
    out
}

pub fn dense_backward(
    x: &[f64],
    w: &[f64],
    out_dim: usize,
    dout: &[f64],
    dx: &mut [f64],
    dw: &mut [f64],
    db: &mut [f64],
) {
    let in_dim = x.len();
    dx.iter_mut().for_each(|v| *v = 0.0);
    for o in 0..out_dim {
        let g = dout[o];
        db[o] += g;
        let row = o * in_dim;
        for i in 0..in_dim {
            dw[row + i] += g * x[i];
            dx[i] += g * w[row + i];
        }
    }
}

/// 2D convolution with 'same' zero padding: x is [in_ch][h][w],
/// kernel [out_ch][in_ch][k][k] (k odd), output [out_ch][h][w].
#[allow(clippy::too_many_arguments)]
pub fn conv2d_forward(
    x: &[f64],
    in_ch: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    bias: &[f64],
    out_ch: usize,
    k: usize,
) -> Vec<f64> {
    let r = k / 2;
    let mut out = vec![0.0; out_ch * h * w];
    for oc in 0..out_ch {
        for y in 0..h {
            for x0 in 0..w {
                let mut acc = bias[oc];
                for ic in 0..in_ch {
                    let woff = ((oc * in_ch + ic) * k) * k;
                    for ky in 0..k {
                        let yy = y as isize + ky as isize - r as isize;
                        if yy < 0 || yy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let xx = x0 as isize + kx as isize - r as isize;
                            if xx < 0 || xx >= w as isize {
                                continue;
                            }
                            acc += x[(ic * h + yy as usize) * w + xx as usize]
                                * weights[woff + ky * k + kx];
                        }
                    }
                }
                out[(oc * h + y) * w + x0] = acc;
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward(
    x: &[f64],
    in_ch: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    out_ch: usize,
    k: usize,
    dout: &[f64],
    dx: &mut [f64],
    dw: &mut [f64],
    db: &mut [f64],
) {
    let r = k / 2;
    dx.iter_mut().for_each(|v| *v = 0.0);
    for oc in 0..out_ch {
        for y in 0..h {
            for x0 in 0..w {
                let g = dout[(oc * h + y) * w + x0];
                db[oc] += g;
                for ic in 0..in_ch {
                    let woff = ((oc * in_ch + ic) * k) * k;
                    for ky in 0..k {
                        let yy = y as isize + ky as isize - r as isize;
                        if yy < 0 || yy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let xx = x0 as isize + kx as isize - r as isize;
                            if xx < 0 || xx >= w as isize {
                                continue;
                            }
                            let xi = (ic * h + yy as usize) * w + xx as usize;
                            dw[woff + ky * k + kx] += g * x[xi];
                            dx[xi] += g * weights[woff + ky * k + kx];
                        }
                    }
                }
            }
        }
    }
}

/// Uniform Kaiming-style init in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
pub fn init_uniform<R: Rng>(rng: &mut R, out: &mut [f64], fan_in: usize) {
    let s = 1.0 / (fan_in as f64).sqrt();
    for v in out.iter_mut() {
        *v = (rng.random::<f64>() * 2.0 - 1.0) * s;
    }
}

/// Adam optimizer over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
}

impl Adam {
    pub fn new(n_params: usize) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let mhat = self.m[i] / b1t;
            let vhat = self.v[i] / b2t;
            params[i] -= lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// Learning-rate schedule: base rate decreased ten-fold every `every` epochs
/// (0-indexed epochs; epoch 39 keeps the base rate, epoch 40 divides it).
pub fn lr_schedule(base: f64, epoch: usize, every: usize) -> f64 {
    base * 0.1_f64.powi((epoch / every) as i32)
}

const WEIGHT_MAGIC: &[u8; 4] = b"KSCW";
const WEIGHT_VERSION: u32 = 1;

/// Write a weight file: magic, version, model kind, little-endian f32 blob in
/// the model's canonical flattening order.
pub fn save_params(path: &Path, kind: &str, params: &[f64]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(WEIGHT_MAGIC)?;
    f.write_all(&WEIGHT_VERSION.to_le_bytes())?;
    let kind_bytes = kind.as_bytes();
    f.write_all(&(kind_bytes.len() as u32).to_le_bytes())?;
    f.write_all(kind_bytes)?;
    f.write_all(&(params.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(params.len() * 4);
    for &p in params {
        buf.extend_from_slice(&(p as f32).to_le_bytes());
    }
    f.write_all(&buf)?;
    Ok(())
}

/// Read a weight file written by [`save_params`], returning its kind tag.
pub fn load_params_any(path: &Path) -> Result<(String, Vec<f64>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let fail = |msg: &str| Error::Dataset(format!("weight file {}: {msg}", path.display()));
    if bytes.len() < 16 || &bytes[0..4] != WEIGHT_MAGIC {
        return Err(fail("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != WEIGHT_VERSION {
        return Err(fail(&format!("unsupported version {version}")));
    }
    let klen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() < 12 + klen + 8 {
        return Err(fail("truncated header"));
    }
    let kind = std::str::from_utf8(&bytes[12..12 + klen])
        .map_err(|_| fail("bad kind"))?
        .to_string();
    let off = 12 + klen;
    let n = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()) as usize;
    let blob = &bytes[off + 8..];
    if blob.len() != n * 4 {
        return Err(fail("payload length disagrees with header"));
    }
    Ok((
        kind,
        (0..n)
            .map(|i| f32::from_le_bytes(blob[i * 4..i * 4 + 4].try_into().unwrap()) as f64)
            .collect(),
    ))
}

/// Read a weight file written by [`save_params`], checking kind and version.
pub fn load_params(path: &Path, expect_kind: &str) -> Result<Vec<f64>> {
    let (kind, params) = load_params_any(path)?;
    if kind != expect_kind {
        return Err(Error::Dataset(format!(
            "weight file {}: kind '{kind}' (expected '{expect_kind}')",
            path.display()
        )));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;

    /// Central finite difference of a scalar-valued closure.
    fn fd<F: FnMut(&[f64]) -> f64>(params: &mut Vec<f64>, i: usize, mut f: F) -> f64 {
        let h = 1e-6 * params[i].abs().max(1.0);
        let orig = params[i];
        params[i] = orig + h;
        let up = f(params);
        params[i] = orig - h;
        let dn = f(params);
        params[i] = orig;
        (up - dn) / (2.0 * h)
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn conv1d_gradients_match_fd() {
        let (in_ch, len, out_ch, k) = (2, 11, 3, 5);
        let mut rng = seeds::rng(1);
        let x: Vec<f64> = (0..in_ch * len).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut w: Vec<f64> = (0..out_ch * in_ch * k).map(|_| rng.random::<f64>() - 0.5).collect();
        let b: Vec<f64> = (0..out_ch).map(|_| rng.random::<f64>() - 0.5).collect();
        // scalar objective: sum of squares of outputs
        let loss = |w: &[f64]| -> f64 {
            conv1d_forward(&x, in_ch, len, w, &b, out_ch, k)
                .iter()
                .map(|v| v * v)
                .sum()
        };
        let out = conv1d_forward(&x, in_ch, len, &w, &b, out_ch, k);
        let dout: Vec<f64> = out.iter().map(|v| 2.0 * v).collect();
        let mut dx = vec![0.0; x.len()];
        let mut dw = vec![0.0; w.len()];
        let mut db = vec![0.0; b.len()];
        conv1d_backward(&x, in_ch, len, &w, out_ch, k, &dout, &mut dx, &mut dw, &mut db);
        for i in 0..w.len() {
            let num = fd(&mut w, i, |w| loss(w));
            assert!(rel_err(num, dw[i]) < 1e-5, "w[{i}]: {num} vs {}", dw[i]);
        }
    }

    #[test]
    fn conv2d_gradients_match_fd() {
        let (in_ch, h, wd, out_ch, k) = (2, 5, 6, 3, 3);
        let mut rng = seeds::rng(2);
        let x: Vec<f64> = (0..in_ch * h * wd).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut w: Vec<f64> =
            (0..out_ch * in_ch * k * k).map(|_| rng.random::<f64>() - 0.5).collect();
        let b: Vec<f64> = (0..out_ch).map(|_| rng.random::<f64>() - 0.5).collect();
        let loss = |w: &[f64]| -> f64 {
            conv2d_forward(&x, in_ch, h, wd, w, &b, out_ch, k)
                .iter()
                .map(|v| v * v)
                .sum()
        };
        let out = conv2d_forward(&x, in_ch, h, wd, &w, &b, out_ch, k);
        let dout: Vec<f64> = out.iter().map(|v| 2.0 * v).collect();
        let mut dx = vec![0.0; x.len()];
        let mut dw = vec![0.0; w.len()];
        let mut db = vec![0.0; b.len()];
        conv2d_backward(&x, in_ch, h, wd, &w, out_ch, k, &dout, &mut dx, &mut dw, &mut db);
        for i in 0..w.len() {
            let num = fd(&mut w, i, |w| loss(w));
            assert!(rel_err(num, dw[i]) < 1e-5, "w[{i}]: {num} vs {}", dw[i]);
        }
        // input gradient too
        let mut xv = x.clone();
        let loss_x = |xp: &[f64]| -> f64 {
            conv2d_forward(xp, in_ch, h, wd, &w, &b, out_ch, k)
                .iter()
                .map(|v| v * v)
                .sum()
        };
        for i in (0..x.len()).step_by(7) {
            let num = fd(&mut xv, i, |xp| loss_x(xp));
            assert!(rel_err(num, dx[i]) < 1e-5, "x[{i}]: {num} vs {}", dx[i]);
        }
    }

    #[test]
    fn dense_and_pool_and_relu_backward() {
        let mut rng = seeds::rng(3);
        let x: Vec<f64> = (0..12).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut w: Vec<f64> = (0..4 * 12).map(|_| rng.random::<f64>() - 0.5).collect();
        let b = vec![0.1; 4];
        let loss = |w: &[f64]| -> f64 {
            let mut y = dense_forward(&x, w, &b, 4);
            leaky_relu(&mut y);
            let (p, _) = maxpool1d_forward(&y, 1, 4, 2);
            p.iter().map(|v| v * v).sum()
        };
        let pre = dense_forward(&x, &w, &b, 4);
        let mut act = pre.clone();
        leaky_relu(&mut act);
        let (p, arg) = maxpool1d_forward(&act, 1, 4, 2);
        let dp: Vec<f64> = p.iter().map(|v| 2.0 * v).collect();
        let mut dact = vec![0.0; 4];
        maxpool1d_backward(&arg, &dp, &mut dact);
        let mut dpre = vec![0.0; 4];
        leaky_relu_backward(&pre, &dact, &mut dpre);
        let mut dx = vec![0.0; 12];
        let mut dw = vec![0.0; w.len()];
        let mut db = vec![0.0; 4];
        dense_backward(&x, &w, 4, &dpre, &mut dx, &mut dw, &mut db);
        for i in 0..w.len() {
            let num = fd(&mut w, i, |w| loss(w));
            assert!(rel_err(num, dw[i]) < 1e-5, "w[{i}]: {num} vs {}", dw[i]);
        }
    }

    #[test]
    fn bce_gradient_is_sigmoid_minus_target() {
        for &(z, y) in &[(0.3, 1.0), (-2.0, 0.0), (5.0, 1.0)] {
            let mut zs = vec![z];
            let num = fd(&mut zs, 0, |p| bce_with_logit(p[0], y));
            let ana = bce_with_logit_backward(z, y);
            assert!(rel_err(num, ana) < 1e-6);
        }
    }

    #[test]
    fn lr_schedule_tenfold_every_40() {
        assert_eq!(lr_schedule(1e-3, 0, 40), 1e-3);
        assert_eq!(lr_schedule(1e-3, 39, 40), 1e-3);
        assert!((lr_schedule(1e-3, 40, 40) - 1e-4).abs() < 1e-18);
        assert!((lr_schedule(1e-3, 80, 40) - 1e-5).abs() < 1e-19);
    }

    #[test]
    fn adam_decreases_quadratic() {
        let mut p = vec![5.0, -3.0];
        let mut opt = Adam::new(2);
        for _ in 0..2000 {
            let g: Vec<f64> = p.iter().map(|v| 2.0 * v).collect();
            opt.step(&mut p, &g, 1e-2);
        }
        assert!(p.iter().all(|v| v.abs() < 1e-3), "{p:?}");
    }

    #[test]
    fn weight_file_roundtrip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.bin");
        let params: Vec<f64> = (0..10).map(|i| i as f64 * 0.25).collect();
        save_params(&path, "detector", &params).unwrap();
        let back = load_params(&path, "detector").unwrap();
        assert_eq!(params, back); // exact: inputs are f32-representable
        assert!(load_params(&path, "varnet").is_err());
    }
}
