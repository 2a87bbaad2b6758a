//! Per-line artifact injection: rigid rotational motion, k-space spikes, and
//! bulk translation, each recording ground-truth labels.
//!
//! The ACS block is always assumed nominally uncorrupted: injectors refuse to
//! touch ACS columns and records keep them labeled nominal.

use crate::error::{Error, Result};
use crate::kcore::{dft2, ComplexImage, Dataset, KSpaceSlice};
use crate::sampling::{apply_mask, sample_variable_mask, SamplingMask};
use crate::seeds;
use num_complex::{Complex32, Complex64};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Ground-truth label of one kx column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LineLabel {
    Nominal,
    Rotation { angle: f64 },
    Spike,
    Translation { dx: f64, dy: f64 },
}

impl LineLabel {
    pub fn is_corrupted(&self) -> bool {
        !matches!(self, LineLabel::Nominal)
    }
}

/// One spiked sample: coil, ky, kx and the added complex amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeCoord {
    pub coil: usize,
    pub ky: usize,
    pub kx: usize,
    pub re: f64,
    pub im: f64,
}

/// Per-column ground-truth corruption labels for one slice, paired with the
/// mask that defines its acquired columns and ACS block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionRecord {
    labels: Vec<LineLabel>,
    pub spikes: Vec<SpikeCoord>,
    acs_start: usize,
    acs_len: usize,
}

impl CorruptionRecord {
    pub fn nominal(mask: &SamplingMask) -> Self {
        Self {
            labels: vec![LineLabel::Nominal; mask.width()],
            spikes: Vec::new(),
            acs_start: mask.acs().start,
            acs_len: mask.acs().len(),
        }
    }

    pub fn label(&self, column: usize) -> LineLabel {
        self.labels[column]
    }

    fn set_label(&mut self, column: usize, label: LineLabel) {
        debug_assert!(!(self.acs_start..self.acs_start + self.acs_len).contains(&column));
        self.labels[column] = label;
    }

    /// Merge labels from another record over the same mask.
    pub fn merge(&mut self, other: &CorruptionRecord) {
        for (mine, theirs) in self.labels.iter_mut().zip(other.labels.iter()) {
            if theirs.is_corrupted() {
                *mine = *theirs;
            }
        }
        self.spikes.extend_from_slice(&other.spikes);
    }
}

fn check_columns_disjoint_from_acs(mask: &SamplingMask, columns: &[usize]) -> Result<()> {
    for &c in columns {
        if c >= mask.width() {
            return Err(Error::InvalidArg(format!("column {c} out of range")));
        }
        if mask.is_acs(c) {
            return Err(Error::InvalidArg(format!(
                "column {c} overlaps the ACS block {:?}",
                mask.acs()
            )));
        }
    }
    Ok(())
}

/// Rotate a complex image about its center by `angle` radians using bilinear
/// resampling; out-of-bounds source pixels contribute zero.
pub fn rotate_bilinear(img: &ComplexImage, angle: f64) -> ComplexImage {
    let (h, w) = (img.height, img.width);
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let (s, c) = angle.sin_cos();
    let mut out = ComplexImage::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            // source coordinates: rotate the output pixel by -angle
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            let sx = cx + dx * c + dy * s;
            let sy = cy - dx * s + dy * c;
            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = sx - x0;
            let fy = sy - y0;
            let mut acc = Complex64::new(0.0, 0.0);
            for (oy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
                for (ox, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
                    let yy = y0 + oy;
                    let xx = x0 + ox;
                    if yy >= 0.0 && yy < h as f64 && xx >= 0.0 && xx < w as f64 {
                        acc += img.data[yy as usize * w + xx as usize] * (wy * wx);
                    }
                }
            }
            out.data[y * w + x] = acc;
        }
    }
    out
}

/// Replace the listed columns (all coils) with the corresponding columns of
/// the k-space of the rotated source image, simulating acquisition under a
/// rotated pose. A zero angle is a no-op and stays labeled nominal.
pub fn inject_rotation(
    ks: &KSpaceSlice,
    mask: &SamplingMask,
    img_source: &ComplexImage,
    columns: &[usize],
    angle: f64,
) -> Result<(KSpaceSlice, CorruptionRecord)> {
    if angle.abs() > std::f64::consts::PI {
        return Err(Error::InvalidArg(format!("|angle| {angle} exceeds pi")));
    }
    check_columns_disjoint_from_acs(mask, columns)?;
    let mut record = CorruptionRecord::nominal(mask);
    if angle == 0.0 || columns.is_empty() {
        return Ok((ks.clone(), record));
    }
    if img_source.height != ks.height() || img_source.width != ks.width() {
        return Err(Error::Shape("rotation source image does not match k-space".into()));
    }
    let rotated_k = dft2(&rotate_bilinear(img_source, angle))?;
    let mut out = ks.clone();
    for &col in columns {
        for coil in 0..ks.coils() {
            for ky in 0..ks.height() {
                let z = rotated_k.at(ky, col);
                out.set(coil, ky, col, Complex32::new(z.re as f32, z.im as f32));
            }
        }
        record.set_label(col, LineLabel::Rotation { angle });
    }
    Ok((out, record))
}

/// Add complex amplitudes at the given k-space coordinates. A "line spike"
/// is a full-ky set of points in one column (see [`line_spike`]).
pub fn inject_spike(
    ks: &KSpaceSlice,
    mask: &SamplingMask,
    spikes: &[SpikeCoord],
) -> Result<(KSpaceSlice, CorruptionRecord)> {
    let mut record = CorruptionRecord::nominal(mask);
    let mut out = ks.clone();
    for sp in spikes {
        if sp.coil >= ks.coils() || sp.ky >= ks.height() || sp.kx >= ks.width() {
            return Err(Error::InvalidArg(format!(
                "spike coordinate ({}, {}, {}) out of range",
                sp.coil, sp.ky, sp.kx
            )));
        }
        check_columns_disjoint_from_acs(mask, &[sp.kx])?;
        let old = out.at(sp.coil, sp.ky, sp.kx);
        let new = Complex64::new(old.re as f64 + sp.re, old.im as f64 + sp.im);
        out.set(sp.coil, sp.ky, sp.kx, Complex32::new(new.re as f32, new.im as f32));
        record.set_label(sp.kx, LineLabel::Spike);
    }
    record.spikes = spikes.to_vec();
    Ok((out, record))
}

/// Spike coordinates for a full-column line spike on one coil.
pub fn line_spike(ks: &KSpaceSlice, coil: usize, kx: usize, amplitude: Complex64) -> Vec<SpikeCoord> {
    (0..ks.height())
        .map(|ky| SpikeCoord { coil, ky, kx, re: amplitude.re, im: amplitude.im })
        .collect()
}

/// The translation phase factor at a centered frequency-grid position.
///
/// Bulk in-plane translation by (dx, dy) pixels multiplies k-space by
/// exp(-i (kx dx + ky dy)) with kx = 2 pi (col - W/2)/W and
/// ky = 2 pi (row - H/2)/H.
pub fn translation_phase(height: usize, width: usize, row: usize, col: usize, dx: f64, dy: f64) -> Complex64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let kx = two_pi * (col as f64 - (width / 2) as f64) / width as f64;
    let ky = two_pi * (row as f64 - (height / 2) as f64) / height as f64;
    Complex64::from_polar(1.0, -(kx * dx + ky * dy))
}

fn translate_columns(ks: &KSpaceSlice, columns: &[usize], dx: f64, dy: f64) -> KSpaceSlice {
    let mut out = ks.clone();
    for &col in columns {
        for coil in 0..ks.coils() {
            for ky in 0..ks.height() {
                let z = ks.at(coil, ky, col);
                let z64 = Complex64::new(z.re as f64, z.im as f64)
                    * translation_phase(ks.height(), ks.width(), ky, col, dx, dy);
                out.set(coil, ky, col, Complex32::new(z64.re as f32, z64.im as f32));
            }
        }
    }
    out
}

/// Multiply the listed columns by the bulk-translation phase factor.
/// A zero displacement is a no-op and stays labeled nominal.
pub fn inject_translation(
    ks: &KSpaceSlice,
    mask: &SamplingMask,
    columns: &[usize],
    dx: f64,
    dy: f64,
) -> Result<(KSpaceSlice, CorruptionRecord)> {
    check_columns_disjoint_from_acs(mask, columns)?;
    let mut record = CorruptionRecord::nominal(mask);
    if dx == 0.0 && dy == 0.0 {
        return Ok((ks.clone(), record));
    }
    let out = translate_columns(ks, columns, dx, dy);
    for &col in columns {
        record.set_label(col, LineLabel::Translation { dx, dy });
    }
    Ok((out, record))
}

/// The full-column form of [`inject_translation`]: every column, ACS
/// included, gets the phase factor. This realizes the image-domain
/// circular-shift identity used by the derivation check.
pub fn translate_full(ks: &KSpaceSlice, dx: f64, dy: f64) -> KSpaceSlice {
    let all: Vec<usize> = (0..ks.width()).collect();
    translate_columns(ks, &all, dx, dy)
}

/// Corruption process parameters for dataset generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorruptionConfig {
    /// Probability that an acquired non-ACS column is corrupted.
    pub fraction: f64,
    /// Probability that a corrupted column carries rotation (else spike).
    pub rotation_prob: f64,
    /// Rotation angle magnitude range, radians: |angle| ~ U[min, max], sign random.
    pub min_angle: f64,
    pub max_angle: f64,
    /// Line-spike amplitude as a multiple of the column RMS: U[lo, hi].
    pub spike_scale: [f64; 2],
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        Self {
            fraction: 0.3,
            rotation_prob: 0.5,
            min_angle: 3.0_f64.to_radians(),
            max_angle: 15.0_f64.to_radians(),
            spike_scale: [5.0, 20.0],
        }
    }
}

impl CorruptionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fraction) || !(0.0..=1.0).contains(&self.rotation_prob) {
            return Err(Error::InvalidArg("probabilities must lie in [0,1]".into()));
        }
        if self.min_angle < 0.0 || self.max_angle < self.min_angle {
            return Err(Error::InvalidArg("need 0 <= min_angle <= max_angle".into()));
        }
        if self.spike_scale[0] <= 0.0 || self.spike_scale[1] < self.spike_scale[0] {
            return Err(Error::InvalidArg("spike scale range must be positive and ordered".into()));
        }
        Ok(())
    }
}

/// Mask-generation parameters used when corrupting a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskConfig {
    pub min_lines: usize,
    pub acs_fraction: f64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self { min_lines: 16, acs_fraction: 0.08 }
    }
}

/// One labeled acquired non-ACS line of a corrupted slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledLine {
    pub coil: usize,
    pub column: usize,
    pub corrupted: bool,
    /// Observed (possibly corrupted) line magnitudes, length = height.
    pub k_h: Vec<f64>,
    /// Ground-truth (pre-corruption) line magnitudes, for baseline scoring.
    pub k_h_nominal: Vec<f64>,
}

/// All labeled lines of one slice, sharing the slice's ACS reference lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceLines {
    pub volume: u32,
    pub slice: u32,
    /// Per coil, per ACS column: observed reference line magnitudes.
    pub acs: Vec<Vec<Vec<f64>>>,
    pub lines: Vec<LabeledLine>,
}

/// The labeled line-pair training/evaluation set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorruptionLineSet {
    pub slices: Vec<SliceLines>,
}

impl CorruptionLineSet {
    pub fn num_lines(&self) -> usize {
        self.slices.iter().map(|s| s.lines.len()).sum()
    }

    pub fn corrupted_share(&self) -> f64 {
        let total = self.num_lines();
        if total == 0 {
            return 0.0;
        }
        let bad: usize = self
            .slices
            .iter()
            .flat_map(|s| s.lines.iter())
            .filter(|l| l.corrupted)
            .count();
        bad as f64 / total as f64
    }
}

/// A corrupted slice together with its mask and ground-truth record.
#[derive(Debug, Clone)]
pub struct CorruptedSlice {
    pub ks: KSpaceSlice,
    pub mask: SamplingMask,
    pub record: CorruptionRecord,
}

/// Corrupt one slice: draw a variable mask, corrupt a `fraction` of acquired
/// non-ACS columns with rotation or line spikes, then zero unacquired columns.
pub fn corrupt_slice(
    ks: &KSpaceSlice,
    mask_cfg: &MaskConfig,
    cfg: &CorruptionConfig,
    rng: &mut ChaCha8Rng,
) -> Result<CorruptedSlice> {
    cfg.validate()?;
    let mask = sample_variable_mask(ks.width(), mask_cfg.min_lines, mask_cfg.acs_fraction, rng)?;

    let mut rotation_cols = Vec::new();
    let mut spike_cols = Vec::new();
    for col in mask.non_acs_acquired() {
        if rng.random::<f64>() < cfg.fraction {
            if rng.random::<f64>() < cfg.rotation_prob {
                rotation_cols.push(col);
            } else {
                spike_cols.push(col);
            }
        }
    }

    let mut out = ks.clone();
    let mut record = CorruptionRecord::nominal(&mask);

    if !rotation_cols.is_empty() {
        let magnitude = cfg.min_angle + rng.random::<f64>() * (cfg.max_angle - cfg.min_angle);
        let angle = if rng.random::<bool>() { magnitude } else { -magnitude };
        let source = out.coil_plane_c64(0);
        let img = crate::kcore::idft2(&source)?;
        let (ks2, rec) = inject_rotation(&out, &mask, &img, &rotation_cols, angle)?;
        out = ks2;
        record.merge(&rec);
    }

    if !spike_cols.is_empty() {
        let mut spikes = Vec::new();
        for &col in &spike_cols {
            for coil in 0..out.coils() {
                let col_vals = out.column(coil, col);
                let rms = (col_vals.iter().map(|z| z.norm_sqr()).sum::<f64>()
                    / col_vals.len() as f64)
                    .sqrt();
                let scale = cfg.spike_scale[0]
                    + rng.random::<f64>() * (cfg.spike_scale[1] - cfg.spike_scale[0]);
                let phase = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
                let amp = Complex64::from_polar(scale * rms.max(1e-12), phase);
                spikes.extend(line_spike(&out, coil, col, amp));
            }
        }
        let (ks2, rec) = inject_spike(&out, &mask, &spikes)?;
        out = ks2;
        record.merge(&rec);
    }

    let masked = apply_mask(&out, &mask)?;
    Ok(CorruptedSlice { ks: masked, mask, record })
}

fn slice_lines(nominal: &KSpaceSlice, corrupted: &CorruptedSlice) -> SliceLines {
    let ks = &corrupted.ks;
    let mask = &corrupted.mask;
    let acs: Vec<Vec<Vec<f64>>> = (0..ks.coils())
        .map(|coil| mask.acs().map(|col| ks.column_magnitude(coil, col)).collect())
        .collect();
    let mut lines = Vec::new();
    for col in mask.non_acs_acquired() {
        for coil in 0..ks.coils() {
            lines.push(LabeledLine {
                coil,
                column: col,
                corrupted: corrupted.record.label(col).is_corrupted(),
                k_h: ks.column_magnitude(coil, col),
                k_h_nominal: nominal.column_magnitude(coil, col),
            });
        }
    }
    SliceLines {
        volume: nominal.meta.volume,
        slice: nominal.meta.slice,
        acs,
        lines,
    }
}

/// Corrupt every slice of a dataset and emit the labeled line set: each
/// acquired non-ACS column becomes one labeled line paired with the slice's
/// ACS reference lines.
pub fn make_corruption_dataset(
    dataset: &Dataset,
    mask_cfg: &MaskConfig,
    cfg: &CorruptionConfig,
    seed: u64,
) -> Result<(CorruptionLineSet, Vec<CorruptedSlice>)> {
    if dataset.num_slices() == 0 {
        return Err(Error::Dataset("empty dataset".into()));
    }
    let slices: Vec<&KSpaceSlice> = dataset.slices().collect();
    let results: Result<Vec<(SliceLines, CorruptedSlice)>> = slices
        .par_iter()
        .enumerate()
        .map(|(i, ks)| {
            let mut rng = seeds::rng(seeds::split_index(seed, "corrupt", i as u64));
            let corrupted = corrupt_slice(ks, mask_cfg, cfg, &mut rng)?;
            Ok((slice_lines(ks, &corrupted), corrupted))
        })
        .collect();
    let results = results?;
    let mut set = CorruptionLineSet::default();
    let mut out_slices = Vec::with_capacity(results.len());
    for (lines, cs) in results {
        set.slices.push(lines);
        out_slices.push(cs);
    }
    Ok((set, out_slices))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kcore::{dft2_real, idft2, ImageSlice, SliceMeta};
    use crate::phantom::{render_phantom_slice, PhantomConfig};
    use crate::sampling::equispaced_mask;

    fn phantom_slice(grid: usize, seed: u64) -> (ImageSlice, KSpaceSlice) {
        let cfg = PhantomConfig {
            grid,
            coils: 1,
            blur_sigma: 0.0,
            noise_sigma: 0.0,
            phase_roll_max: 0.0,
            coil_phase_scale: 0.0,
            ..PhantomConfig::default()
        };
        let img = render_phantom_slice(&cfg, 0.0, &mut seeds::rng(seed)).unwrap();
        let k = dft2_real(&img).unwrap();
        let ks = KSpaceSlice::from_planes(&[k], SliceMeta::new("p", 0, 0, seed)).unwrap();
        (img, ks)
    }

    #[test]
    fn zero_angle_rotation_is_identity_and_nominal() {
        let (img, ks) = phantom_slice(32, 1);
        let mask = equispaced_mask(32, 2.0, 0.1).unwrap();
        let cols = [2, 3];
        let (out, rec) =
            inject_rotation(&ks, &mask, &ComplexImage::from_real(&img), &cols, 0.0).unwrap();
        assert_eq!(out.samples(), ks.samples());
        assert!(cols.iter().all(|&c| !rec.label(c).is_corrupted()));
    }

    #[test]
    fn rotation_changes_exactly_the_listed_columns() {
        let (img, ks) = phantom_slice(32, 2);
        let mask = equispaced_mask(32, 2.0, 0.1).unwrap();
        let angle = 10.0_f64.to_radians();
        let (out, rec) =
            inject_rotation(&ks, &mask, &ComplexImage::from_real(&img), &[5], angle).unwrap();
        let mut ndiff_cols = 0;
        for col in 0..32 {
            let differs = (0..32).any(|ky| out.at(0, ky, col) != ks.at(0, ky, col));
            if differs {
                ndiff_cols += 1;
                assert_eq!(col, 5);
            }
        }
        assert_eq!(ndiff_cols, 1);
        assert!(rec.label(5).is_corrupted());
    }

    #[test]
    fn rotation_matches_independent_bilinear_oracle() {
        let (img, ks) = phantom_slice(48, 3);
        let mask = equispaced_mask(48, 2.0, 0.1).unwrap();
        let angle = 10.0_f64.to_radians();
        let col = 7;
        let (out, _) =
            inject_rotation(&ks, &mask, &ComplexImage::from_real(&img), &[col], angle).unwrap();

        // independent oracle: per-pixel inverse-map bilinear rotation
        let n = 48usize;
        let c = (n as f64 - 1.0) / 2.0;
        let mut rot = vec![0.0_f64; n * n];
        for y in 0..n {
            for x in 0..n {
                let dy = y as f64 - c;
                let dx = x as f64 - c;
                let sx = c + dx * angle.cos() + dy * angle.sin();
                let sy = c - dx * angle.sin() + dy * angle.cos();
                if sx < 0.0 || sy < 0.0 || sx > (n - 1) as f64 || sy > (n - 1) as f64 {
                    continue;
                }
                let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
                let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
                let x1 = (x0 + 1).min(n - 1);
                let y1 = (y0 + 1).min(n - 1);
                rot[y * n + x] = img.at(y0, x0) * (1.0 - fx) * (1.0 - fy)
                    + img.at(y0, x1) * fx * (1.0 - fy)
                    + img.at(y1, x0) * (1.0 - fx) * fy
                    + img.at(y1, x1) * fx * fy;
            }
        }
        let oracle_k = dft2_real(&ImageSlice::new(rot, n, n).unwrap()).unwrap();
        for ky in 0..n {
            let got = (out.at(0, ky, col).re as f64).hypot(out.at(0, ky, col).im as f64);
            let want = oracle_k.at(ky, col).norm();
            assert!((got - want).abs() < 1e-4, "ky={ky}: {got} vs {want}");
        }
    }

    #[test]
    fn rotation_rejects_acs_overlap() {
        let (img, ks) = phantom_slice(32, 4);
        let mask = equispaced_mask(32, 2.0, 0.25).unwrap();
        let acs_col = mask.acs().start;
        let r = inject_rotation(&ks, &mask, &ComplexImage::from_real(&img), &[acs_col], 0.1);
        assert!(r.is_err());
    }

    #[test]
    fn empty_spike_list_is_identity() {
        let (_, ks) = phantom_slice(16, 5);
        let mask = equispaced_mask(16, 2.0, 0.2).unwrap();
        let (out, rec) = inject_spike(&ks, &mask, &[]).unwrap();
        assert_eq!(out.samples(), ks.samples());
        assert!((0..16).all(|c| !rec.label(c).is_corrupted()));
    }

    #[test]
    fn point_spike_changes_one_sample_by_the_amplitude() {
        let (_, ks) = phantom_slice(16, 6);
        let mask = equispaced_mask(16, 2.0, 0.2).unwrap();
        // exactly representable amplitude on exactly representable data
        let sp = SpikeCoord { coil: 0, ky: 3, kx: 1, re: 2.0, im: -0.5 };
        let (out, rec) = inject_spike(&ks, &mask, &[sp]).unwrap();
        let mut ndiff = 0;
        for ky in 0..16 {
            for kx in 0..16 {
                if out.at(0, ky, kx) != ks.at(0, ky, kx) {
                    ndiff += 1;
                    assert_eq!((ky, kx), (3, 1));
                    let d_re = out.at(0, ky, kx).re as f64 - ks.at(0, ky, kx).re as f64;
                    let d_im = out.at(0, ky, kx).im as f64 - ks.at(0, ky, kx).im as f64;
                    assert!((d_re - 2.0).abs() < 1e-6 && (d_im + 0.5).abs() < 1e-6);
                }
            }
        }
        assert_eq!(ndiff, 1);
        assert!(rec.label(1).is_corrupted());
        assert_eq!(rec.spikes.len(), 1);
    }

    #[test]
    fn line_spike_energy_matches_arithmetic() {
        let (_, ks) = phantom_slice(32, 7);
        let mask = equispaced_mask(32, 2.0, 0.1).unwrap();
        let col = 3;
        let vals = ks.column(0, col);
        let rms = (vals.iter().map(|z| z.norm_sqr()).sum::<f64>() / vals.len() as f64).sqrt();
        let amp = Complex64::new(10.0 * rms, 0.0);
        let (out, _) = inject_spike(&ks, &mask, &line_spike(&ks, 0, col, amp)).unwrap();
        let e_before: f64 = vals.iter().map(|z| z.norm_sqr()).sum();
        let e_after: f64 = out.column(0, col).iter().map(|z| z.norm_sqr()).sum();
        // |z + a|^2 summed = E + 2 Re(conj(a) sum z) + n |a|^2
        let sum: Complex64 = vals.iter().sum();
        let expect = e_before + 2.0 * (amp.conj() * sum).re + vals.len() as f64 * amp.norm_sqr();
        assert!(
            (e_after - expect).abs() <= 1e-6 * expect.abs(),
            "{e_after} vs {expect}"
        );
    }

    #[test]
    fn zero_translation_is_identity() {
        let (_, ks) = phantom_slice(16, 8);
        let mask = equispaced_mask(16, 2.0, 0.2).unwrap();
        let (out, rec) = inject_translation(&ks, &mask, &[1, 2], 0.0, 0.0).unwrap();
        assert_eq!(out.samples(), ks.samples());
        assert!(!rec.label(1).is_corrupted());
    }

    #[test]
    fn translation_preserves_modulus() {
        let (_, ks) = phantom_slice(32, 9);
        let mask = equispaced_mask(32, 2.0, 0.1).unwrap();
        let cols: Vec<usize> = mask.non_acs_acquired();
        let (out, _) = inject_translation(&ks, &mask, &cols, 1.7, -2.3).unwrap();
        for &col in &cols {
            for ky in 0..32 {
                let a = ks.at(0, ky, col);
                let b = out.at(0, ky, col);
                let ma = (a.re as f64).hypot(a.im as f64);
                let mb = (b.re as f64).hypot(b.im as f64);
                // f32 storage round-off scale
                assert!((ma - mb).abs() <= 1.5e-7 * ma.max(1.0), "{ma} vs {mb}");
            }
        }
    }

    #[test]
    fn full_translation_equals_circular_shift() {
        let (img, ks) = phantom_slice(32, 10);
        let (dx, dy) = (3.0, -5.0);
        let shifted = translate_full(&ks, dx, dy);
        let back = idft2(&shifted.coil_plane_c64(0)).unwrap();
        // roll oracle: x'(y, x) = x(y - dy, x - dx) circularly
        let n = 32i64;
        let mut max_err = 0.0_f64;
        for y in 0..32usize {
            for x in 0..32usize {
                let sy = ((y as i64 - dy as i64).rem_euclid(n)) as usize;
                let sx = ((x as i64 - dx as i64).rem_euclid(n)) as usize;
                let err = (back.at(y, x).re - img.at(sy, sx)).abs().max(back.at(y, x).im.abs());
                max_err = max_err.max(err);
            }
        }
        assert!(max_err < 1e-5, "max abs error {max_err}");
    }

    #[test]
    fn corruption_fraction_zero_all_nominal() {
        let cfg = PhantomConfig { grid: 24, coils: 1, seed: 3, ..PhantomConfig::default() };
        let ds = crate::phantom::make_phantom_dataset(&cfg, 1, 4, None).unwrap();
        let ccfg = CorruptionConfig { fraction: 0.0, ..CorruptionConfig::default() };
        let (set, _) =
            make_corruption_dataset(&ds, &MaskConfig::default(), &ccfg, 11).unwrap();
        assert!(set.num_lines() > 0);
        assert_eq!(set.corrupted_share(), 0.0);
    }

    #[test]
    fn corruption_fraction_one_all_corrupted() {
        let cfg = PhantomConfig { grid: 24, coils: 1, seed: 4, ..PhantomConfig::default() };
        let ds = crate::phantom::make_phantom_dataset(&cfg, 1, 4, None).unwrap();
        let ccfg = CorruptionConfig { fraction: 1.0, ..CorruptionConfig::default() };
        let (set, _) =
            make_corruption_dataset(&ds, &MaskConfig::default(), &ccfg, 12).unwrap();
        assert_eq!(set.corrupted_share(), 1.0);
    }

    #[test]
    fn corruption_share_matches_binomial_bound() {
        let cfg = PhantomConfig { grid: 32, coils: 1, seed: 5, ..PhantomConfig::default() };
        let ds = crate::phantom::make_phantom_dataset(&cfg, 10, 10, None).unwrap();
        let ccfg = CorruptionConfig { fraction: 0.3, ..CorruptionConfig::default() };
        let (set, _) =
            make_corruption_dataset(&ds, &MaskConfig::default(), &ccfg, 13).unwrap();
        let share = set.corrupted_share();
        assert!((share - 0.3).abs() < 0.03, "share {share}");
    }

    #[test]
    fn corrupt_slice_preserves_acs_bitwise() {
        let (_, ks) = phantom_slice(32, 14);
        let mut rng = seeds::rng(15);
        let cs = corrupt_slice(&ks, &MaskConfig::default(), &CorruptionConfig::default(), &mut rng)
            .unwrap();
        for col in cs.mask.acs() {
            for ky in 0..32 {
                assert_eq!(cs.ks.at(0, ky, col), ks.at(0, ky, col));
            }
        }
    }

    #[test]
    fn empty_dataset_rejected() {
        let ds = Dataset::default();
        let r = make_corruption_dataset(
            &ds,
            &MaskConfig::default(),
            &CorruptionConfig::default(),
            1,
        );
        assert!(r.is_err());
    }
}
