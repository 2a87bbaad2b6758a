//! Image reconstruction: zero-filled, compressed sensing, and the unrolled
//! data-consistency/refinement cascade model, plus SSIM-loss training and the
//! transfer-learning protocol.

mod cs;
mod metrics;
mod train;
mod transfer;
mod varnet;

pub use cs::{cs_recon, haar2_forward, haar2_inverse, shrink, CsConfig};
pub use metrics::{
    nmse, psnr, recon_metrics, ssim, ssim_with_grad, ssim_with_range, ReconMetrics, SSIM_K1,
    SSIM_K2, SSIM_WINDOW,
};
pub use train::{
    evaluate_dataset, mean_ssim, train_recon, MaskPolicy, ReconEpochLog, ReconHyper,
    ReconTrainLog,
};
pub use transfer::{transfer_pipeline, TransferArm, TransferReport};
pub use varnet::{
    minivarnet_backward, minivarnet_forward, reconstruct_and_score, MiniVarNet, VarNetCache,
};

use crate::error::{Error, Result};
use crate::kcore::{dft2, idft2, rss_combine, ComplexImage, ImageSlice, KSpaceSlice, SliceMeta};
use crate::phantom::coil_maps;
use crate::sampling::{apply_mask, SamplingMask};

/// Default linear phase scale of the simulation coil model; reconstruction
/// uses the same fixed, deterministic sensitivity maps as the simulator.
pub const DEFAULT_COIL_PHASE: f64 = 0.3;

/// Fixed coil sensitivity maps attached to a slice geometry.
#[derive(Debug, Clone)]
pub struct SenseContext {
    pub maps: Vec<ComplexImage>,
    pub meta: SliceMeta,
}

impl SenseContext {
    /// Simulation ground-truth maps for this slice's geometry.
    pub fn for_slice(ks: &KSpaceSlice) -> Self {
        debug_assert_eq!(ks.height(), ks.width(), "coil model assumes square grids");
        Self {
            maps: coil_maps(ks.coils(), ks.height(), DEFAULT_COIL_PHASE),
            meta: ks.meta.clone(),
        }
    }
}

/// Forward acquisition operator A = M F S: coil-weight the image, transform
/// each coil, zero unacquired columns.
pub fn coil_forward(
    x: &ComplexImage,
    ctx: &SenseContext,
    mask: &SamplingMask,
) -> Result<Vec<ComplexImage>> {
    let mut out = Vec::with_capacity(ctx.maps.len());
    for map in &ctx.maps {
        let weighted = ComplexImage {
            data: x.data.iter().zip(map.data.iter()).map(|(a, s)| a * s).collect(),
            height: x.height,
            width: x.width,
        };
        let mut k = dft2(&weighted)?;
        for y in 0..k.height {
            for col in 0..k.width {
                if !mask.is_acquired(col) {
                    k.data[y * k.width + col] = num_complex::Complex64::new(0.0, 0.0);
                }
            }
        }
        out.push(k);
    }
    Ok(out)
}

/// Adjoint A^H = S^H F^-1 M: mask, inverse-transform, conjugate-coil-combine.
pub fn coil_adjoint(
    y: &[ComplexImage],
    ctx: &SenseContext,
    mask: &SamplingMask,
) -> Result<ComplexImage> {
    let (h, w) = (y[0].height, y[0].width);
    let mut acc = ComplexImage::zeros(h, w);
    for (plane, map) in y.iter().zip(ctx.maps.iter()) {
        let mut masked = plane.clone();
        for row in 0..h {
            for col in 0..w {
                if !mask.is_acquired(col) {
                    masked.data[row * w + col] = num_complex::Complex64::new(0.0, 0.0);
                }
            }
        }
        let img = idft2(&masked)?;
        for (a, (v, s)) in acc.data.iter_mut().zip(img.data.iter().zip(map.data.iter())) {
            *a += v * s.conj();
        }
    }
    Ok(acc)
}

/// Zero-filled reconstruction: RSS coil combination of the masked k-space,
/// optionally center-cropped to an evaluation size.
pub fn zero_filled(
    ks: &KSpaceSlice,
    mask: &SamplingMask,
    crop: Option<(usize, usize)>,
) -> Result<ImageSlice> {
    let masked = apply_mask(ks, mask)?;
    let img = rss_combine(&masked)?;
    match crop {
        Some((h, w)) => img.center_crop(h, w),
        None => Ok(img),
    }
}

/// Ground-truth magnitude image of a fully sampled slice (RSS combine).
pub fn ground_truth(ks: &KSpaceSlice) -> Result<ImageSlice> {
    rss_combine(ks)
}

/// Reject reconstructions whose geometry disagrees with the mask.
pub fn check_geometry(ks: &KSpaceSlice, mask: &SamplingMask) -> Result<()> {
    if ks.width() != mask.width() {
        return Err(Error::Shape(format!(
            "k-space width {} vs mask width {}",
            ks.width(),
            mask.width()
        )));
    }
    Ok(())
}
