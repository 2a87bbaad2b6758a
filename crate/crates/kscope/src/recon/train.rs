//! Reconstructor training: per-slice SSIM loss with Adam, fresh masks every
//! epoch under the configured policy, and an optional anchored-weight penalty
//! for sequential-task training.

use super::{
    ground_truth, minivarnet_backward, minivarnet_forward, ssim_with_grad, MiniVarNet,
    ReconMetrics, SenseContext,
};
use crate::continual::EwcAnchor;
use crate::error::{Error, Result};
use crate::kcore::Dataset;
use crate::nn;
use crate::sampling::{apply_mask, equispaced_mask, sample_variable_mask, SamplingMask};
use crate::seeds;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// How masks are drawn during training and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaskPolicy {
    /// Fresh variable-acceleration mask per slice per epoch.
    Variable { min_lines: usize, acs_fraction: f64 },
    /// Equispaced mask; one of the (acceleration, center_fraction) options
    /// chosen uniformly per slice per epoch.
    Fixed { options: Vec<(f64, f64)> },
}

impl MaskPolicy {
    pub fn variable_default() -> Self {
        MaskPolicy::Variable { min_lines: 16, acs_fraction: 0.08 }
    }

    /// The fixed 4x/8x pairing.
    pub fn fixed_default() -> Self {
        MaskPolicy::Fixed { options: vec![(4.0, 0.08), (8.0, 0.04)] }
    }

    pub fn draw(&self, width: usize, rng: &mut ChaCha8Rng) -> Result<SamplingMask> {
        match self {
            MaskPolicy::Variable { min_lines, acs_fraction } => {
                sample_variable_mask(width, (*min_lines).min(width), *acs_fraction, rng)
            }
            MaskPolicy::Fixed { options } => {
                if options.is_empty() {
                    return Err(Error::InvalidArg("fixed mask policy needs options".into()));
                }
                let (accel, cf) = options[rng.random_range(0..options.len())];
                equispaced_mask(width, accel, cf)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconHyper {
    pub epochs: usize,
    pub base_lr: f64,
    pub lr_decay_every: usize,
    pub cascades: usize,
    pub channels: usize,
    pub policy: MaskPolicy,
    /// Optional evaluation crop (height, width).
    pub crop: Option<(usize, usize)>,
    pub seed: u64,
}

impl Default for ReconHyper {
    fn default() -> Self {
        Self {
            epochs: 10,
            base_lr: 1e-3,
            lr_decay_every: 40,
            cascades: super::varnet::DEFAULT_CASCADES,
            channels: super::varnet::DEFAULT_CHANNELS,
            policy: MaskPolicy::variable_default(),
            crop: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconEpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_ssim: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReconTrainLog {
    pub epochs: Vec<ReconEpochLog>,
}

/// Train a cascade reconstructor to minimize 1 - SSIM (+ optional anchored
/// penalty). Bit-reproducible given the seed: sequential single-slice steps
/// in a seeded shuffle order with deterministic mask draws.
pub fn train_recon(
    init: Option<MiniVarNet>,
    train_set: &Dataset,
    hyper: &ReconHyper,
    anchor: Option<&EwcAnchor>,
) -> Result<(MiniVarNet, ReconTrainLog)> {
    if train_set.num_slices() == 0 {
        return Err(Error::Dataset("empty training set".into()));
    }
    let mut net = init.unwrap_or_else(|| {
        MiniVarNet::seeded(hyper.cascades, hyper.channels, seeds::split(hyper.seed, "varnet-init"))
    });
    if let Some(a) = anchor {
        if a.anchor.len() != net.params.len() {
            return Err(Error::Shape("anchor misaligned with model parameters".into()));
        }
    }
    let slices: Vec<_> = train_set.slices().cloned().collect();
    let truths: Result<Vec<_>> = slices.iter().map(ground_truth).collect();
    let truths = truths?;
    let mut contexts: std::collections::HashMap<usize, SenseContext> = Default::default();
    for s in &slices {
        contexts.entry(s.coils()).or_insert_with(|| SenseContext::for_slice(s));
    }

    let mut opt = nn::Adam::new(net.params.len());
    let mut order: Vec<usize> = (0..slices.len()).collect();
    let mut shuffle_rng = seeds::rng(seeds::split(hyper.seed, "recon-shuffle"));
    let mut mask_rng = seeds::rng(seeds::split(hyper.seed, "recon-masks"));
    let mut log = ReconTrainLog::default();

    for epoch in 0..hyper.epochs {
        let lr = nn::lr_schedule(hyper.base_lr, epoch, hyper.lr_decay_every);
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut epoch_ssim = 0.0;
        for &i in &order {
            let full = &slices[i];
            let truth = &truths[i];
            let mask = hyper.policy.draw(full.width(), &mut mask_rng)?;
            let masked = apply_mask(full, &mask)?;
            let ctx = &contexts[&full.coils()];
            let range = truth.max_abs().max(f64::MIN_POSITIVE);
            let (img, cache) = minivarnet_forward(&net, &masked, &mask, ctx)?;
            let (ssim, sg) = ssim_with_grad(&img, truth, range)?;
            let mut loss = 1.0 - ssim;
            let d_rss: Vec<f64> = sg.iter().map(|g| -g).collect();
            let mut grads = vec![0.0; net.params.len()];
            minivarnet_backward(&net, &masked, &mask, ctx, &cache, &d_rss, &mut grads)?;
            if let Some(a) = anchor {
                loss += a.penalty(&net.params)?;
                a.add_penalty_grad(&net.params, &mut grads)?;
            }
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite reconstruction loss at epoch {epoch}, slice {i}"
                )));
            }
            opt.step(&mut net.params, &grads, lr);
            epoch_loss += loss;
            epoch_ssim += ssim;
        }
        log.epochs.push(ReconEpochLog {
            epoch,
            lr,
            train_loss: epoch_loss / slices.len() as f64,
            train_ssim: epoch_ssim / slices.len() as f64,
        });
    }
    Ok((net, log))
}

/// Evaluate a net over a dataset with per-slice masks drawn deterministically
/// from the seed under the given policy. Parallel across slices.
pub fn evaluate_dataset(
    net: &MiniVarNet,
    ds: &Dataset,
    policy: &MaskPolicy,
    crop: Option<(usize, usize)>,
    seed: u64,
) -> Result<Vec<ReconMetrics>> {
    let slices: Vec<_> = ds.slices().cloned().collect();
    if slices.is_empty() {
        return Err(Error::Dataset("empty evaluation set".into()));
    }
    let mut contexts: std::collections::HashMap<usize, SenseContext> = Default::default();
    for s in &slices {
        contexts.entry(s.coils()).or_insert_with(|| SenseContext::for_slice(s));
    }
    slices
        .par_iter()
        .enumerate()
        .map(|(i, full)| {
            let mut rng = seeds::rng(seeds::split_index(seed, "eval-mask", i as u64));
            let mask = policy.draw(full.width(), &mut rng)?;
            let masked = apply_mask(full, &mask)?;
            let ctx = &contexts[&full.coils()];
            let (img, _) = minivarnet_forward(net, &masked, &mask, ctx)?;
            let truth = ground_truth(full)?;
            let (img, truth) = match crop {
                Some((ch, cw)) => (img.center_crop(ch, cw)?, truth.center_crop(ch, cw)?),
                None => (img, truth),
            };
            super::recon_metrics(&img, &truth)
        })
        .collect()
}

/// Mean SSIM of [`evaluate_dataset`].
pub fn mean_ssim(metrics: &[ReconMetrics]) -> f64 {
    metrics.iter().map(|m| m.ssim).sum::<f64>() / metrics.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{make_phantom_dataset, PhantomConfig};

    fn tiny_dataset(seed: u64, volumes: usize, slices: usize) -> Dataset {
        let cfg = PhantomConfig {
            grid: 24,
            coils: 1,
            noise_sigma: 0.001,
            seed,
            ..PhantomConfig::default()
        };
        make_phantom_dataset(&cfg, volumes, slices, None).unwrap()
    }

    #[test]
    fn overfit_one_slice_reaches_high_ssim() {
        let ds = tiny_dataset(1, 1, 1);
        let hyper = ReconHyper {
            epochs: 200,
            base_lr: 1e-2,
            cascades: 2,
            channels: 8,
            policy: MaskPolicy::Fixed { options: vec![(2.0, 0.16)] },
            seed: 2,
            ..Default::default()
        };
        let (net, log) = train_recon(None, &ds, &hyper, None).unwrap();
        let last = log.epochs.last().unwrap();
        assert!(
            last.train_ssim > 0.99,
            "train SSIM only {} after {} steps",
            last.train_ssim,
            log.epochs.len()
        );
        let metrics = evaluate_dataset(&net, &ds, &hyper.policy, None, 2).unwrap();
        assert!(metrics[0].ssim > 0.98);
    }

    #[test]
    fn training_is_bit_reproducible() {
        let ds = tiny_dataset(3, 1, 2);
        let hyper = ReconHyper {
            epochs: 2,
            cascades: 1,
            channels: 4,
            seed: 5,
            ..Default::default()
        };
        let (a, _) = train_recon(None, &ds, &hyper, None).unwrap();
        let (b, _) = train_recon(None, &ds, &hyper, None).unwrap();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn variable_policy_draws_fresh_masks_each_epoch() {
        let policy = MaskPolicy::variable_default();
        let mut rng = seeds::rng(1);
        let a = policy.draw(64, &mut rng).unwrap();
        let b = policy.draw(64, &mut rng).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn empty_training_set_rejected() {
        let hyper = ReconHyper::default();
        assert!(train_recon(None, &Dataset::default(), &hyper, None).is_err());
    }
}
