//! Transfer-learning protocol: compare pre-training sources by fine-tuning
//! each arm on the same small set and evaluating on a held-out set at fixed
//! 4x and 8x accelerations.

use super::{evaluate_dataset, train_recon, MaskPolicy, MiniVarNet, ReconHyper};
use crate::error::{Error, Result};
use crate::kcore::Dataset;
use crate::seeds;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferArm {
    pub pretrain: String,
    pub ssim_4x: f64,
    pub nmse_4x: f64,
    #[serde(with = "crate::analysis::jsonnum")]
    pub psnr_4x: f64,
    pub ssim_8x: f64,
    pub nmse_8x: f64,
    #[serde(with = "crate::analysis::jsonnum")]
    pub psnr_8x: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferReport {
    pub arms: Vec<TransferArm>,
}

fn finite_mean(vals: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = vals.filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        f64::INFINITY
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn eval_arm(
    name: &str,
    net: &MiniVarNet,
    test: &Dataset,
    crop: Option<(usize, usize)>,
    seed: u64,
) -> Result<TransferArm> {
    let four = evaluate_dataset(net, test, &MaskPolicy::Fixed { options: vec![(4.0, 0.08)] }, crop, seed)?;
    let eight =
        evaluate_dataset(net, test, &MaskPolicy::Fixed { options: vec![(8.0, 0.04)] }, crop, seed)?;
    Ok(TransferArm {
        pretrain: name.to_string(),
        ssim_4x: finite_mean(four.iter().map(|m| m.ssim)),
        nmse_4x: finite_mean(four.iter().map(|m| m.nmse)),
        psnr_4x: finite_mean(four.iter().map(|m| m.psnr)),
        ssim_8x: finite_mean(eight.iter().map(|m| m.ssim)),
        nmse_8x: finite_mean(eight.iter().map(|m| m.nmse)),
        psnr_8x: finite_mean(eight.iter().map(|m| m.psnr)),
    })
}

/// Train the comparison arms: no pretraining, pretraining on the fine-tuning
/// set itself, pretraining on the (phantom) pretrain set, and optionally a
/// larger pretraining set. Every arm gets the same fine-tuning budget and is
/// evaluated on the held-out set at fixed 4x and 8x.
pub fn transfer_pipeline(
    pretrain_set: &Dataset,
    finetune_set: &Dataset,
    test_set: &Dataset,
    large_set: Option<&Dataset>,
    pretrain_epochs: usize,
    finetune_epochs: usize,
    hyper: &ReconHyper,
) -> Result<TransferReport> {
    for (a, b, what) in [
        (pretrain_set, finetune_set, "pretrain/finetune"),
        (pretrain_set, test_set, "pretrain/test"),
        (finetune_set, test_set, "finetune/test"),
    ] {
        if a.overlaps(b) {
            return Err(Error::Dataset(format!("{what} splits share volumes")));
        }
    }
    if let Some(large) = large_set {
        if large.overlaps(test_set) {
            return Err(Error::Dataset("large/test splits share volumes".into()));
        }
    }

    let ft_hyper = |seed_label: &str| {
        let mut h = hyper.clone();
        h.epochs = finetune_epochs;
        h.seed = seeds::split(hyper.seed, seed_label);
        h
    };
    let pre_hyper = |seed_label: &str| {
        let mut h = hyper.clone();
        h.epochs = pretrain_epochs;
        h.seed = seeds::split(hyper.seed, seed_label);
        h
    };

    let mut arms = Vec::new();

    // shared fine-tune seed so every arm sees identical fine-tuning masks
    // and ordering; arms differ only in their initialization
    let (scratch, _) = train_recon(None, finetune_set, &ft_hyper("ft"), None)?;
    arms.push(eval_arm("none", &scratch, test_set, hyper.crop, hyper.seed)?);

    let (pre_ft, _) = train_recon(None, finetune_set, &pre_hyper("pre-ft"), None)?;
    let (ft_ft, _) = train_recon(Some(pre_ft), finetune_set, &ft_hyper("ft"), None)?;
    arms.push(eval_arm("finetune", &ft_ft, test_set, hyper.crop, hyper.seed)?);

    let (pre_ph, _) = train_recon(None, pretrain_set, &pre_hyper("pre-phantom"), None)?;
    let (ph_ft, _) = train_recon(Some(pre_ph), finetune_set, &ft_hyper("ft"), None)?;
    arms.push(eval_arm("phantom", &ph_ft, test_set, hyper.crop, hyper.seed)?);

    if let Some(large) = large_set {
        let (pre_lg, _) = train_recon(None, large, &pre_hyper("pre-large"), None)?;
        let (lg_ft, _) = train_recon(Some(pre_lg), finetune_set, &ft_hyper("ft"), None)?;
        arms.push(eval_arm("large", &lg_ft, test_set, hyper.crop, hyper.seed)?);
    }

    Ok(TransferReport { arms })
}
