//! Centered, unitary 2D discrete Fourier transforms.
//!
//! Convention shared by every module: the DC sample sits at the array center
//! (row `H/2`, column `W/2`), and both directions carry the unitary
//! 1/sqrt(H*W) normalization, so `idft2` is the exact inverse of `dft2` and
//! Parseval's identity holds.

use super::{ComplexImage, ImageSlice};
use crate::error::{Error, Result};
use num_complex::Complex64;
use rustfft::FftPlanner;

/// Move the DC sample from index 0 to the array center.
pub fn fftshift(data: &[Complex64], height: usize, width: usize) -> Vec<Complex64> {
    roll(data, height, width, height / 2, width / 2)
}

/// Inverse of [`fftshift`] (shifts by the ceiling half, which matters for odd sizes).
pub fn ifftshift(data: &[Complex64], height: usize, width: usize) -> Vec<Complex64> {
    roll(data, height, width, height.div_ceil(2), width.div_ceil(2))
}

fn roll(
    data: &[Complex64],
    height: usize,
    width: usize,
    shift_y: usize,
    shift_x: usize,
) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    for y in 0..height {
        let ny = (y + shift_y) % height;
        for x in 0..width {
            let nx = (x + shift_x) % width;
            out[ny * width + nx] = data[y * width + x];
        }
    }
    out
}

fn fft2_inplace(data: &mut [Complex64], height: usize, width: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let row_fft = if inverse {
        planner.plan_fft_inverse(width)
    } else {
        planner.plan_fft_forward(width)
    };
    for row in data.chunks_exact_mut(width) {
        row_fft.process(row);
    }
    let col_fft = if inverse {
        planner.plan_fft_inverse(height)
    } else {
        planner.plan_fft_forward(height)
    };
    let mut col = vec![Complex64::new(0.0, 0.0); height];
    for x in 0..width {
        for y in 0..height {
            col[y] = data[y * width + x];
        }
        col_fft.process(&mut col);
        for y in 0..height {
            data[y * width + x] = col[y];
        }
    }
}

fn transform(img: &ComplexImage, inverse: bool) -> Result<ComplexImage> {
    if img.data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("transform input contains NaN/Inf".into()));
    }
    let (h, w) = (img.height, img.width);
    let mut buf = ifftshift(&img.data, h, w);
    fft2_inplace(&mut buf, h, w, inverse);
    let mut out = fftshift(&buf, h, w);
    let scale = 1.0 / ((h * w) as f64).sqrt();
    for z in out.iter_mut() {
        *z *= scale;
    }
    ComplexImage::new(out, h, w)
}

/// Centered unitary 2D DFT of one plane.
pub fn dft2(img: &ComplexImage) -> Result<ComplexImage> {
    transform(img, false)
}

/// Exact inverse of [`dft2`].
pub fn idft2(k: &ComplexImage) -> Result<ComplexImage> {
    transform(k, true)
}

/// [`dft2`] of a real-valued image.
pub fn dft2_real(img: &ImageSlice) -> Result<ComplexImage> {
    dft2(&ComplexImage::from_real(img))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;

    fn random_plane(h: usize, w: usize, seed: u64) -> ComplexImage {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..h * w)
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        ComplexImage::new(data, h, w).unwrap()
    }

    #[test]
    fn roundtrip_64x64() {
        let x = random_plane(64, 64, 3);
        let back = idft2(&dft2(&x).unwrap()).unwrap();
        let err = x
            .data
            .iter()
            .zip(back.data.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0_f64, f64::max);
        assert!(err < 1e-6, "max abs roundtrip error {err}");
    }

    #[test]
    fn roundtrip_across_sizes_including_odd() {
        for &(h, w) in &[(16, 16), (17, 23), (31, 64), (128, 96), (257, 19)] {
            let x = random_plane(h, w, (h * 1000 + w) as u64);
            let back = idft2(&dft2(&x).unwrap()).unwrap();
            let err = x
                .data
                .iter()
                .zip(back.data.iter())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0_f64, f64::max);
            assert!(err < 1e-6, "{h}x{w} roundtrip error {err}");
        }
    }

    #[test]
    fn centered_impulse_becomes_flat_plane() {
        let (h, w) = (8, 8);
        let mut img = ComplexImage::zeros(h, w);
        img.set(h / 2, w / 2, Complex64::new(1.0, 0.0));
        let k = dft2(&img).unwrap();
        let expect = 1.0 / ((h * w) as f64).sqrt();
        for z in k.data.iter() {
            assert!((z.norm() - expect).abs() < 1e-12);
            assert!(z.im.abs() < 1e-12);
        }
    }

    #[test]
    fn parseval_energy_preserved() {
        for seed in 0..20 {
            let x = random_plane(24, 17, seed);
            let k = dft2(&x).unwrap();
            let ex = x.energy();
            let ek = k.energy();
            assert!((ex - ek).abs() / ex < 1e-12, "relative energy error");
        }
    }

    #[test]
    fn rejects_nonfinite() {
        let mut img = ComplexImage::zeros(4, 4);
        img.data[5] = Complex64::new(f64::INFINITY, 0.0);
        assert!(dft2(&img).is_err());
    }

    #[test]
    fn shift_inverses() {
        let x = random_plane(5, 7, 9);
        let y = ifftshift(&fftshift(&x.data, 5, 7), 5, 7);
        assert_eq!(x.data, y);
    }
}
