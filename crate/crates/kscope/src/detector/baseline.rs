//! Non-learning baseline detector: readout-summed cross-correlation of the
//! observed line against each ACS line, normalized by the same quantity
//! computed from the ground-truth line. Evaluation-only; requires the
//! pre-corruption line.

use crate::error::{Error, Result};

/// Sum over all lags of |cross-correlation| of two real-valued lines:
/// sum_m |sum_n a[n+m] b[n]|.
pub fn cross_correlation_abs_sum(a: &[f64], b: &[f64]) -> f64 {
    let (la, lb) = (a.len() as isize, b.len() as isize);
    let mut total = 0.0;
    for m in -(lb - 1)..la {
        let mut acc = 0.0;
        for n in 0..lb {
            let i = n + m;
            if i >= 0 && i < la {
                acc += a[i as usize] * b[n as usize];
            }
        }
        total += acc.abs();
    }
    total
}

/// Baseline corruption score: mean over ACS lines of the ratio of observed to
/// ground-truth cross-correlation mass. Nonnegative, unbounded above; exactly
/// 1 when the observed line equals the ground truth.
pub fn baseline_score(
    k_h_observed: &[f64],
    acs: &[Vec<f64>],
    k_h_ground_truth: &[f64],
) -> Result<f64> {
    if acs.is_empty() {
        return Err(Error::Degenerate("no ACS reference lines".into()));
    }
    let mut sum = 0.0;
    for k_l in acs {
        let denom = cross_correlation_abs_sum(k_h_ground_truth, k_l);
        if denom == 0.0 {
            return Err(Error::Degenerate(
                "ground-truth cross-correlation mass is zero".into(),
            ));
        }
        sum += cross_correlation_abs_sum(k_h_observed, k_l) / denom;
    }
    Ok(sum / acs.len() as f64)
}
