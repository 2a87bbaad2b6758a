//! Core numeric substrate: complex slice containers, centered unitary 2D
//! Fourier transforms, coil combination, cropping, and the on-disk dataset
//! format.
//!
//! Storage is complex float32 (the on-disk sample type); all arithmetic is
//! carried out in f64 after lossless widening.

mod dataset;
mod dft;

pub use dataset::{read_dataset, slice_seed, write_dataset, Dataset, Volume, DATASET_VERSION};
pub use dft::{dft2, dft2_real, fftshift, idft2, ifftshift};

use crate::error::{Error, Result};
use num_complex::{Complex32, Complex64};

/// Per-slice provenance metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceMeta {
    /// Free-form anatomy tag, e.g. "shepp-logan".
    pub anatomy: String,
    /// Volume index within its dataset.
    pub volume: u32,
    /// Slice index within its volume.
    pub slice: u32,
    /// Seed from which this slice is exactly regenerable.
    pub seed: u64,
}

impl SliceMeta {
    pub fn new(anatomy: &str, volume: u32, slice: u32, seed: u64) -> Self {
        Self { anatomy: anatomy.to_string(), volume, slice, seed }
    }
}

/// Multi-coil complex Cartesian k-space of one 2D slice.
///
/// Samples are indexed `[coil][ky][kx]` row-major. A k-space "line" is one
/// kx column: all ky samples at a fixed kx.
#[derive(Debug, Clone, PartialEq)]
pub struct KSpaceSlice {
    coils: usize,
    height: usize,
    width: usize,
    data: Vec<Complex32>,
    pub meta: SliceMeta,
}

impl KSpaceSlice {
    pub fn new(
        coils: usize,
        height: usize,
        width: usize,
        data: Vec<Complex32>,
        meta: SliceMeta,
    ) -> Result<Self> {
        if coils == 0 {
            return Err(Error::InvalidArg("k-space slice needs at least one coil".into()));
        }
        if data.len() != coils * height * width {
            return Err(Error::Shape(format!(
                "k-space data length {} != coils*height*width = {}",
                data.len(),
                coils * height * width
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("k-space slice contains NaN/Inf".into()));
        }
        Ok(Self { coils, height, width, data, meta })
    }

    pub fn coils(&self) -> usize {
        self.coils
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn samples(&self) -> &[Complex32] {
        &self.data
    }

    #[inline]
    pub fn index(&self, coil: usize, ky: usize, kx: usize) -> usize {
        (coil * self.height + ky) * self.width + kx
    }

    #[inline]
    pub fn at(&self, coil: usize, ky: usize, kx: usize) -> Complex32 {
        self.data[self.index(coil, ky, kx)]
    }

    pub fn set(&mut self, coil: usize, ky: usize, kx: usize, value: Complex32) {
        let i = self.index(coil, ky, kx);
        self.data[i] = value;
    }

    /// One coil's plane as stored (f32).
    pub fn coil_plane(&self, coil: usize) -> &[Complex32] {
        let n = self.height * self.width;
        &self.data[coil * n..(coil + 1) * n]
    }

    /// One coil's k-space plane widened to f64 for arithmetic.
    pub fn coil_plane_c64(&self, coil: usize) -> ComplexImage {
        let plane: Vec<Complex64> = self
            .coil_plane(coil)
            .iter()
            .map(|z| Complex64::new(z.re as f64, z.im as f64))
            .collect();
        ComplexImage { data: plane, height: self.height, width: self.width }
    }

    /// The kx column `col` of coil `coil`, widened to f64 (length = height).
    pub fn column(&self, coil: usize, col: usize) -> Vec<Complex64> {
        (0..self.height)
            .map(|ky| {
                let z = self.at(coil, ky, col);
                Complex64::new(z.re as f64, z.im as f64)
            })
            .collect()
    }

    /// Magnitudes of the kx column `col` of coil `coil`.
    pub fn column_magnitude(&self, coil: usize, col: usize) -> Vec<f64> {
        self.column(coil, col).iter().map(|z| z.norm()).collect()
    }

    /// Build a slice from per-coil f64 planes, quantizing to the f32 storage type.
    pub fn from_planes(planes: &[ComplexImage], meta: SliceMeta) -> Result<Self> {
        if planes.is_empty() {
            return Err(Error::InvalidArg("k-space slice needs at least one coil".into()));
        }
        let (h, w) = (planes[0].height, planes[0].width);
        if planes.iter().any(|p| p.height != h || p.width != w) {
            return Err(Error::Shape("coil planes disagree on dimensions".into()));
        }
        let mut data = Vec::with_capacity(planes.len() * h * w);
        for p in planes {
            data.extend(p.data.iter().map(|z| Complex32::new(z.re as f32, z.im as f32)));
        }
        Self::new(planes.len(), h, w, data, meta)
    }
}

/// Real-valued 2D image indexed `[y][x]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSlice {
    pub data: Vec<f64>,
    pub height: usize,
    pub width: usize,
}

impl ImageSlice {
    pub fn new(data: Vec<f64>, height: usize, width: usize) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "image data length {} != {}x{}",
                data.len(),
                height,
                width
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image contains NaN/Inf".into()));
        }
        Ok(Self { data, height, width })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { data: vec![0.0; height * width], height, width }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Centered h×w window; the extra row/column of an odd margin is dropped
    /// from the high-index side.
    pub fn center_crop(&self, h: usize, w: usize) -> Result<ImageSlice> {
        let (r0, c0) = crop_origin(self.height, self.width, h, w)?;
        let mut out = Vec::with_capacity(h * w);
        for y in 0..h {
            let row = (r0 + y) * self.width + c0;
            out.extend_from_slice(&self.data[row..row + w]);
        }
        Ok(ImageSlice { data: out, height: h, width: w })
    }
}

/// Complex-valued 2D plane indexed `[y][x]` row-major. Used both for complex
/// images and for single-coil k-space planes.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexImage {
    pub data: Vec<Complex64>,
    pub height: usize,
    pub width: usize,
}

impl ComplexImage {
    pub fn new(data: Vec<Complex64>, height: usize, width: usize) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "plane data length {} != {}x{}",
                data.len(),
                height,
                width
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("complex plane contains NaN/Inf".into()));
        }
        Ok(Self { data, height, width })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { data: vec![Complex64::new(0.0, 0.0); height * width], height, width }
    }

    pub fn from_real(img: &ImageSlice) -> Self {
        Self {
            data: img.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            height: img.height,
            width: img.width,
        }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> Complex64 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: Complex64) {
        self.data[y * self.width + x] = v;
    }

    pub fn magnitude(&self) -> ImageSlice {
        ImageSlice {
            data: self.data.iter().map(|z| z.norm()).collect(),
            height: self.height,
            width: self.width,
        }
    }

    /// Sum of |z|^2 over the plane.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn center_crop(&self, h: usize, w: usize) -> Result<ComplexImage> {
        let (r0, c0) = crop_origin(self.height, self.width, h, w)?;
        let mut out = Vec::with_capacity(h * w);
        for y in 0..h {
            let row = (r0 + y) * self.width + c0;
            out.extend_from_slice(&self.data[row..row + w]);
        }
        Ok(ComplexImage { data: out, height: h, width: w })
    }
}

/// Origin of the centered crop window. Odd margins keep the extra row/column
/// on the high-index side out of the window.
fn crop_origin(height: usize, width: usize, h: usize, w: usize) -> Result<(usize, usize)> {
    if h > height || w > width {
        return Err(Error::InvalidArg(format!(
            "crop {}x{} exceeds source {}x{}",
            h, w, height, width
        )));
    }
    Ok(((height - h) / 2, (width - w) / 2))
}

/// Root-sum-of-squares coil combination of a k-space slice.
///
/// Each coil plane is inverse-transformed, then pixels are combined as
/// sqrt(sum over coils of |image|^2). Cropping is left to the caller.
pub fn rss_combine(ks: &KSpaceSlice) -> Result<ImageSlice> {
    let (h, w) = (ks.height(), ks.width());
    let mut acc = vec![0.0_f64; h * w];
    for c in 0..ks.coils() {
        let img = idft2(&ks.coil_plane_c64(c))?;
        for (a, z) in acc.iter_mut().zip(img.data.iter()) {
            *a += z.norm_sqr();
        }
    }
    for a in acc.iter_mut() {
        *a = a.sqrt();
    }
    ImageSlice::new(acc, h, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> SliceMeta {
        SliceMeta::new("test", 0, 0, 1)
    }

    #[test]
    fn kspace_rejects_bad_shape_and_nonfinite() {
        let err = KSpaceSlice::new(1, 2, 2, vec![Complex32::new(0.0, 0.0); 3], meta());
        assert!(matches!(err, Err(Error::Shape(_))));
        let mut data = vec![Complex32::new(0.0, 0.0); 4];
        data[1] = Complex32::new(f32::NAN, 0.0);
        let err = KSpaceSlice::new(1, 2, 2, data, meta());
        assert!(matches!(err, Err(Error::NonFinite(_))));
        let err = KSpaceSlice::new(0, 2, 2, vec![], meta());
        assert!(matches!(err, Err(Error::InvalidArg(_))));
    }

    #[test]
    fn crop_same_size_is_identity() {
        let img = ImageSlice::new((0..12).map(|v| v as f64).collect(), 3, 4).unwrap();
        assert_eq!(img.center_crop(3, 4).unwrap(), img);
    }

    #[test]
    fn crop_4x4_to_2x2_takes_rows_1_2() {
        let img = ImageSlice::new((0..16).map(|v| v as f64).collect(), 4, 4).unwrap();
        let c = img.center_crop(2, 2).unwrap();
        assert_eq!(c.data, vec![5.0, 6.0, 9.0, 10.0]);
    }

    #[test]
    fn crop_5x5_to_2x2_drops_high_side() {
        // Golden pin of the odd-margin tie-break: rows/cols {1,2}, not {2,3}.
        let img = ImageSlice::new((0..25).map(|v| v as f64).collect(), 5, 5).unwrap();
        let c = img.center_crop(2, 2).unwrap();
        assert_eq!(c.data, vec![6.0, 7.0, 11.0, 12.0]);
    }

    #[test]
    fn crop_oversize_rejected() {
        let img = ImageSlice::zeros(4, 4);
        assert!(img.center_crop(5, 4).is_err());
    }

    #[test]
    fn rss_single_coil_is_magnitude() {
        // k-space of a known image: rss of one uniform coil = |image|.
        let img = ImageSlice::new(vec![1.0, -2.0, 3.0, 0.5, 0.0, 1.5], 2, 3).unwrap();
        let k = dft2_real(&img).unwrap();
        let ks = KSpaceSlice::from_planes(&[k], meta()).unwrap();
        let rss = rss_combine(&ks).unwrap();
        for (a, b) in rss.data.iter().zip(img.data.iter()) {
            assert!((a - b.abs()).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn rss_two_identical_coils_scales_sqrt2() {
        let img = ImageSlice::new(vec![1.0, 2.0, 0.0, 4.0], 2, 2).unwrap();
        let k = dft2_real(&img).unwrap();
        let one = KSpaceSlice::from_planes(&[k.clone()], meta()).unwrap();
        let two = KSpaceSlice::from_planes(&[k.clone(), k], meta()).unwrap();
        let r1 = rss_combine(&one).unwrap();
        let r2 = rss_combine(&two).unwrap();
        for (a, b) in r2.data.iter().zip(r1.data.iter()) {
            assert!((a - b * 2.0_f64.sqrt()).abs() < 1e-6);
        }
    }

    #[test]
    fn rss_output_nonnegative() {
        let img = ImageSlice::new(vec![-5.0, 3.0, -1.0, 0.0], 2, 2).unwrap();
        let k = dft2_real(&img).unwrap();
        let ks = KSpaceSlice::from_planes(&[k], meta()).unwrap();
        assert!(rss_combine(&ks).unwrap().data.iter().all(|&v| v >= 0.0));
    }
}
