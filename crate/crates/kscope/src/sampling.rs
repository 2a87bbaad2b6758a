//! Cartesian undersampling masks: equispaced fixed-acceleration masks and
//! variable-acceleration masks whose acquired-line count is drawn uniformly
//! from `[min_lines, width]`.

use crate::error::{Error, Result};
use crate::kcore::KSpaceSlice;
use num_complex::Complex32;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::ops::Range;

/// Per-column acquisition flags with a designated fully sampled ACS block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingMask {
    acquired: Vec<bool>,
    acs_start: usize,
    acs_len: usize,
}

impl SamplingMask {
    fn new(acquired: Vec<bool>, acs: Range<usize>) -> Self {
        debug_assert!(acquired[acs.clone()].iter().all(|&a| a));
        Self { acquired, acs_start: acs.start, acs_len: acs.len() }
    }

    /// Rebuild a mask from acquired column indices and the ACS range,
    /// validating that every ACS column is acquired.
    pub fn from_parts(width: usize, acquired_indices: &[usize], acs: Range<usize>) -> Result<Self> {
        if acs.is_empty() || acs.end > width {
            return Err(Error::InvalidArg("ACS range empty or out of bounds".into()));
        }
        let mut acquired = vec![false; width];
        for &i in acquired_indices {
            if i >= width {
                return Err(Error::InvalidArg(format!("acquired index {i} out of range")));
            }
            acquired[i] = true;
        }
        if !acquired[acs.clone()].iter().all(|&a| a) {
            return Err(Error::InvalidArg("ACS columns must all be acquired".into()));
        }
        Ok(Self::new(acquired, acs))
    }

    pub fn width(&self) -> usize {
        self.acquired.len()
    }

    pub fn is_acquired(&self, col: usize) -> bool {
        self.acquired[col]
    }

    pub fn acquired_flags(&self) -> &[bool] {
        &self.acquired
    }

    pub fn acquired_count(&self) -> usize {
        self.acquired.iter().filter(|&&a| a).count()
    }

    pub fn acquired_columns(&self) -> Vec<usize> {
        (0..self.width()).filter(|&c| self.acquired[c]).collect()
    }

    /// The contiguous auto-calibration block at the mask center.
    pub fn acs(&self) -> Range<usize> {
        self.acs_start..self.acs_start + self.acs_len
    }

    pub fn is_acs(&self, col: usize) -> bool {
        self.acs().contains(&col)
    }

    /// Acquired columns outside the ACS block.
    pub fn non_acs_acquired(&self) -> Vec<usize> {
        (0..self.width())
            .filter(|&c| self.acquired[c] && !self.is_acs(c))
            .collect()
    }

    /// width / acquired-count.
    pub fn acceleration(&self) -> f64 {
        self.width() as f64 / self.acquired_count() as f64
    }
}

/// Size of the centered ACS block: round-half-up of `fraction * width`,
/// at least 1.
fn acs_block(width: usize, fraction: f64) -> Result<Range<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArg(format!(
            "acs fraction {fraction} outside (0, 1]"
        )));
    }
    let len = ((fraction * width as f64).round() as usize).clamp(1, width);
    let start = (width - len) / 2;
    Ok(start..start + len)
}

/// Variable-acceleration mask: the total acquired count is a uniform integer
/// draw from `[min_lines, width]`; the ACS block is acquired first and the
/// remainder is filled with uniformly random distinct non-ACS columns.
pub fn sample_variable_mask<R: Rng>(
    width: usize,
    min_lines: usize,
    acs_fraction: f64,
    rng: &mut R,
) -> Result<SamplingMask> {
    if width == 0 || min_lines == 0 || min_lines > width {
        return Err(Error::InvalidArg(format!(
            "need 1 <= min_lines ({min_lines}) <= width ({width})"
        )));
    }
    let acs = acs_block(width, acs_fraction)?;
    if min_lines < acs.len() {
        return Err(Error::InvalidArg(format!(
            "min_lines {min_lines} smaller than ACS block {} (ACS must always fit)",
            acs.len()
        )));
    }
    let total = rng.random_range(min_lines..=width);
    let mut acquired = vec![false; width];
    for c in acs.clone() {
        acquired[c] = true;
    }
    let candidates: Vec<usize> = (0..width).filter(|c| !acs.contains(c)).collect();
    let extra = total - acs.len();
    let picks = rand::seq::index::sample(rng, candidates.len(), extra);
    for i in picks {
        acquired[candidates[i]] = true;
    }
    Ok(SamplingMask::new(acquired, acs))
}

/// Fixed-acceleration mask: the ACS block plus equispaced non-ACS columns so
/// that the total acquired count is round(width / acceleration).
pub fn equispaced_mask(
    width: usize,
    acceleration: f64,
    center_fraction: f64,
) -> Result<SamplingMask> {
    if width == 0 || !(acceleration >= 1.0) {
        return Err(Error::InvalidArg(format!(
            "need width > 0 and acceleration >= 1 (got {acceleration})"
        )));
    }
    let acs = acs_block(width, center_fraction)?;
    let total = ((width as f64 / acceleration).round() as usize).clamp(1, width);
    if total < acs.len() {
        return Err(Error::InvalidArg(format!(
            "ACS block of {} lines alone exceeds the acquisition budget {total}",
            acs.len()
        )));
    }
    let mut acquired = vec![false; width];
    for c in acs.clone() {
        acquired[c] = true;
    }
    let candidates: Vec<usize> = (0..width).filter(|c| !acs.contains(c)).collect();
    let extra = total - acs.len();
    if extra > 0 {
        let step = candidates.len() as f64 / extra as f64;
        for i in 0..extra {
            acquired[candidates[(i as f64 * step) as usize]] = true;
        }
    }
    Ok(SamplingMask::new(acquired, acs))
}

/// Zero every unacquired column across all coils; acquired columns are copied
/// bit-identically.
pub fn apply_mask(ks: &KSpaceSlice, mask: &SamplingMask) -> Result<KSpaceSlice> {
    if mask.width() != ks.width() {
        return Err(Error::Shape(format!(
            "mask width {} != k-space width {}",
            mask.width(),
            ks.width()
        )));
    }
    let mut out = ks.clone();
    let zero = Complex32::new(0.0, 0.0);
    for c in 0..ks.coils() {
        for ky in 0..ks.height() {
            for kx in 0..ks.width() {
                if !mask.is_acquired(kx) {
                    out.set(c, ky, kx, zero);
                }
            }
        }
    }
    Ok(out)
}
