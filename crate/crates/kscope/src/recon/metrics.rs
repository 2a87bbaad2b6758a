//! Image quality metrics: windowed SSIM (with the analytic gradient used by
//! reconstructor training), NMSE, and PSNR.

use crate::error::{Error, Result};
use crate::kcore::ImageSlice;
use serde::{Deserialize, Serialize};

pub const SSIM_WINDOW: usize = 7;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconMetrics {
    pub ssim: f64,
    pub nmse: f64,
    /// dB; +infinity when the images are identical.
    #[serde(with = "crate::analysis::jsonnum")]
    pub psnr: f64,
}

/// Mean local SSIM over sliding uniform windows with an explicit data range.
pub fn ssim_with_range(
    pred: &ImageSlice,
    truth: &ImageSlice,
    data_range: f64,
    window: usize,
    k1: f64,
    k2: f64,
) -> Result<f64> {
    let (s, _) = ssim_map(pred, truth, data_range, window, k1, k2, false)?;
    Ok(s)
}

/// SSIM with the conventional 7x7 uniform window, k1 = 0.01, k2 = 0.03, and
/// the data range taken from the ground-truth maximum.
pub fn ssim(pred: &ImageSlice, truth: &ImageSlice) -> Result<f64> {
    let range = truth.max_abs().max(f64::MIN_POSITIVE);
    ssim_with_range(pred, truth, range, SSIM_WINDOW, SSIM_K1, SSIM_K2)
}

/// Mean SSIM and, optionally, its gradient with respect to the prediction.
#[allow(clippy::too_many_arguments)]
fn ssim_map(
    pred: &ImageSlice,
    truth: &ImageSlice,
    data_range: f64,
    window: usize,
    k1: f64,
    k2: f64,
    want_grad: bool,
) -> Result<(f64, Vec<f64>)> {
    if pred.height != truth.height || pred.width != truth.width {
        return Err(Error::Shape(format!(
            "ssim inputs {}x{} vs {}x{}",
            pred.height, pred.width, truth.height, truth.width
        )));
    }
    let (h, w) = (pred.height, pred.width);
    if window > h || window > w {
        return Err(Error::InvalidArg(format!(
            "ssim window {window} larger than {h}x{w} image"
        )));
    }
    let c1 = (k1 * data_range).powi(2);
    let c2 = (k2 * data_range).powi(2);
    let n = (window * window) as f64;
    let n_windows = ((h - window + 1) * (w - window + 1)) as f64;
    let mut grad = if want_grad { vec![0.0; h * w] } else { Vec::new() };
    let mut total = 0.0;
    for wy in 0..=h - window {
        for wx in 0..=w - window {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for y in wy..wy + window {
                for x in wx..wx + window {
                    let a = pred.at(y, x);
                    let b = truth.at(y, x);
                    sa += a;
                    sb += b;
                    saa += a * a;
                    sbb += b * b;
                    sab += a * b;
                }
            }
            let mu_a = sa / n;
            let mu_b = sb / n;
            let va = saa / n - mu_a * mu_a;
            let vb = sbb / n - mu_b * mu_b;
            let cab = sab / n - mu_a * mu_b;
            let a1 = 2.0 * mu_a * mu_b + c1;
            let a2 = 2.0 * cab + c2;
            let b1 = mu_a * mu_a + mu_b * mu_b + c1;
            let b2 = va + vb + c2;
            let s = (a1 * a2) / (b1 * b2);
            total += s;
            if want_grad {
                // dS/da_i = (2/n) [ (mu_b A2 + (b_i - mu_b) A1)/(B1 B2)
                //                   - S (mu_a / B1 + (a_i - mu_a)/B2) ]
                let scale = 2.0 / n / n_windows;
                for y in wy..wy + window {
                    for x in wx..wx + window {
                        let a = pred.at(y, x);
                        let b = truth.at(y, x);
                        let term = (mu_b * a2 + (b - mu_b) * a1) / (b1 * b2)
                            - s * (mu_a / b1 + (a - mu_a) / b2);
                        grad[y * w + x] += scale * term;
                    }
                }
            }
        }
    }
    Ok((total / n_windows, grad))
}

/// Mean SSIM and d(SSIM)/d(pred), for training losses of the form 1 - SSIM.
pub fn ssim_with_grad(
    pred: &ImageSlice,
    truth: &ImageSlice,
    data_range: f64,
) -> Result<(f64, Vec<f64>)> {
    ssim_map(pred, truth, data_range, SSIM_WINDOW, SSIM_K1, SSIM_K2, true)
}

/// ||truth - pred||^2 / ||truth||^2.
pub fn nmse(pred: &ImageSlice, truth: &ImageSlice) -> Result<f64> {
    if pred.height != truth.height || pred.width != truth.width {
        return Err(Error::Shape("nmse inputs differ in shape".into()));
    }
    let num: f64 = pred
        .data
        .iter()
        .zip(truth.data.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let den: f64 = truth.data.iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Err(Error::Degenerate("nmse undefined for zero ground truth".into()));
    }
    Ok(num / den)
}

/// 10 log10(max(truth)^2 / mse); +infinity for identical images.
pub fn psnr(pred: &ImageSlice, truth: &ImageSlice) -> Result<f64> {
    if pred.height != truth.height || pred.width != truth.width {
        return Err(Error::Shape("psnr inputs differ in shape".into()));
    }
    let peak = truth.max_abs();
    if peak == 0.0 {
        return Err(Error::Degenerate("psnr undefined for zero ground truth".into()));
    }
    let mse: f64 = pred
        .data
        .iter()
        .zip(truth.data.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / pred.data.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

pub fn recon_metrics(pred: &ImageSlice, truth: &ImageSlice) -> Result<ReconMetrics> {
    Ok(ReconMetrics {
        ssim: ssim(pred, truth)?,
        nmse: nmse(pred, truth)?,
        psnr: psnr(pred, truth)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;
    use rand::Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> ImageSlice {
        let mut rng = seeds::rng(seed);
        ImageSlice::new((0..h * w).map(|_| rng.random::<f64>()).collect(), h, w).unwrap()
    }

    #[test]
    fn ssim_of_identical_images_is_one() {
        let x = random_image(32, 32, 1);
        assert_eq!(ssim(&x, &x).unwrap(), 1.0);
    }

    #[test]
    fn constant_offset_lowers_ssim() {
        let x = random_image(32, 32, 2);
        let mut y = x.clone();
        for v in y.data.iter_mut() {
            *v += 5.0;
        }
        assert!(ssim(&y, &x).unwrap() < 1.0);
    }

    #[test]
    fn ssim_matches_per_window_oracle() {
        // independent full re-summation per window, no incremental tricks
        let a = random_image(64, 64, 3);
        let b = random_image(64, 64, 4);
        let range = b.max_abs();
        let got = ssim_with_range(&a, &b, range, 7, 0.01, 0.03).unwrap();
        let c1 = (0.01 * range).powi(2);
        let c2 = (0.03 * range).powi(2);
        let mut acc = 0.0;
        let mut count = 0.0;
        for wy in 0..=64 - 7 {
            for wx in 0..=64 - 7 {
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                for y in wy..wy + 7 {
                    for x in wx..wx + 7 {
                        xs.push(a.at(y, x));
                        ys.push(b.at(y, x));
                    }
                }
                let n = 49.0;
                let mx: f64 = xs.iter().sum::<f64>() / n;
                let my: f64 = ys.iter().sum::<f64>() / n;
                let vx: f64 = xs.iter().map(|v| (v - mx) * (v - mx)).sum::<f64>() / n;
                let vy: f64 = ys.iter().map(|v| (v - my) * (v - my)).sum::<f64>() / n;
                let cxy: f64 =
                    xs.iter().zip(&ys).map(|(u, v)| (u - mx) * (v - my)).sum::<f64>() / n;
                acc += ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1.0;
            }
        }
        let want = acc / count;
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn ssim_symmetric_with_shared_range() {
        let a = random_image(24, 24, 5);
        let b = random_image(24, 24, 6);
        let range = 1.0;
        let ab = ssim_with_range(&a, &b, range, 7, 0.01, 0.03).unwrap();
        let ba = ssim_with_range(&b, &a, range, 7, 0.01, 0.03).unwrap();
        assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn ssim_gradient_matches_fd() {
        let mut a = random_image(12, 12, 7);
        let b = random_image(12, 12, 8);
        let range = 1.0;
        let (_, grad) = ssim_with_grad(&a, &b, range).unwrap();
        let mut rng = seeds::rng(9);
        for _ in 0..30 {
            let i = rng.random_range(0..a.data.len());
            let h = 1e-6;
            let orig = a.data[i];
            a.data[i] = orig + h;
            let up = ssim_with_range(&a, &b, range, 7, 0.01, 0.03).unwrap();
            a.data[i] = orig - h;
            let dn = ssim_with_range(&a, &b, range, 7, 0.01, 0.03).unwrap();
            a.data[i] = orig;
            let num = (up - dn) / (2.0 * h);
            let rel = (num - grad[i]).abs() / num.abs().max(grad[i].abs()).max(1e-8);
            assert!(rel < 1e-6, "pixel {i}: fd {num} vs {}", grad[i]);
        }
    }

    #[test]
    fn window_larger_than_image_rejected() {
        let x = random_image(5, 5, 10);
        assert!(ssim_with_range(&x, &x, 1.0, 7, 0.01, 0.03).is_err());
    }

    #[test]
    fn nmse_of_zero_prediction_is_one() {
        let x = random_image(16, 16, 11);
        let z = ImageSlice::zeros(16, 16);
        assert!((nmse(&z, &x).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identical_images_nmse_zero_psnr_infinite() {
        let x = random_image(16, 16, 12);
        assert_eq!(nmse(&x, &x).unwrap(), 0.0);
        assert_eq!(psnr(&x, &x).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_matches_closed_form_for_known_noise() {
        let x = random_image(32, 32, 13);
        let mut noisy = x.clone();
        let eps = 0.01;
        let mut rng = seeds::rng(14);
        let noise: Vec<f64> = (0..32 * 32).map(|_| rng.random::<f64>() - 0.5).collect();
        for (v, n) in noisy.data.iter_mut().zip(noise.iter()) {
            *v += eps * n;
        }
        let mse = noise.iter().map(|n| (eps * n) * (eps * n)).sum::<f64>() / 1024.0;
        let want = 10.0 * (x.max_abs().powi(2) / mse).log10();
        let got = psnr(&noisy, &x).unwrap();
        assert!((got - want).abs() < 1e-9);
    }

    #[test]
    fn zero_ground_truth_rejected() {
        let z = ImageSlice::zeros(8, 8);
        let x = random_image(8, 8, 15);
        assert!(nmse(&x, &z).is_err());
        assert!(psnr(&x, &z).is_err());
    }
}
