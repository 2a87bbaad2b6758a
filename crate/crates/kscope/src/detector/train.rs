//! Detector training: weighted binary cross entropy over (query, reference)
//! line pairs with Adam and the ten-fold/40-epoch learning-rate schedule.

use super::{backward, forward_logit, make_input, score_line, DetectorNet, N_PARAMS};
use crate::corruption::CorruptionLineSet;
use crate::error::{Error, Result};
use crate::nn;
use crate::seeds;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorHyper {
    pub epochs: usize,
    pub base_lr: f64,
    pub lr_decay_every: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for DetectorHyper {
    fn default() -> Self {
        Self { epochs: 20, base_lr: 1e-3, lr_decay_every: 40, batch_size: 32, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// Line-level AUROC on the validation set, when one was supplied.
    pub val_auroc: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

/// One training example: a (line, ACS reference) pair index into the set.
#[derive(Debug, Clone, Copy)]
struct Pair {
    slice: usize,
    line: usize,
    acs: usize,
    label: bool,
}

fn collect_pairs(set: &CorruptionLineSet) -> Vec<Pair> {
    let mut pairs = Vec::new();
    for (si, sl) in set.slices.iter().enumerate() {
        for (li, line) in sl.lines.iter().enumerate() {
            let n_acs = sl.acs[line.coil].len();
            for ai in 0..n_acs {
                pairs.push(Pair { slice: si, line: li, acs: ai, label: line.corrupted });
            }
        }
    }
    pairs
}

fn pair_input(set: &CorruptionLineSet, p: &Pair) -> Vec<f64> {
    let sl = &set.slices[p.slice];
    let line = &sl.lines[p.line];
    make_input(&line.k_h, &sl.acs[line.coil][p.acs])
}

/// Line-level scores and labels over a whole set.
pub fn line_scores(net: &DetectorNet, set: &CorruptionLineSet) -> Result<(Vec<f64>, Vec<bool>)> {
    let jobs: Vec<(usize, usize)> = set
        .slices
        .iter()
        .enumerate()
        .flat_map(|(si, sl)| (0..sl.lines.len()).map(move |li| (si, li)))
        .collect();
    let scored: Result<Vec<(f64, bool)>> = jobs
        .par_iter()
        .map(|&(si, li)| {
            let sl = &set.slices[si];
            let line = &sl.lines[li];
            let s = score_line(net, &line.k_h, &sl.acs[line.coil])?;
            Ok((s, line.corrupted))
        })
        .collect();
    Ok(scored?.into_iter().unzip())
}

/// Train a detector on labeled line pairs; deterministic given the seed.
pub fn detector_train(
    train: &CorruptionLineSet,
    val: Option<&CorruptionLineSet>,
    hyper: &DetectorHyper,
) -> Result<(DetectorNet, TrainLog)> {
    let pairs = collect_pairs(train);
    if pairs.is_empty() {
        return Err(Error::Dataset("no training pairs".into()));
    }
    let mut net = DetectorNet::seeded(seeds::split(hyper.seed, "detector-init"));
    let mut opt = nn::Adam::new(N_PARAMS);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut shuffle_rng = seeds::rng(seeds::split(hyper.seed, "detector-shuffle"));
    let mut log = TrainLog::default();

    for epoch in 0..hyper.epochs {
        let lr = nn::lr_schedule(hyper.base_lr, epoch, hyper.lr_decay_every);
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut n_seen = 0usize;
        for batch in order.chunks(hyper.batch_size) {
            let n_pos = batch.iter().filter(|&&i| pairs[i].label).count();
            let n_neg = batch.len() - n_pos;
            // per-batch class reweighting: each class contributes half
            let (w_pos, w_neg) = if n_pos > 0 && n_neg > 0 {
                (
                    batch.len() as f64 / (2.0 * n_pos as f64),
                    batch.len() as f64 / (2.0 * n_neg as f64),
                )
            } else {
                (1.0, 1.0)
            };
            let per_sample: Result<Vec<(Vec<f64>, f64)>> = batch
                .par_iter()
                .map(|&i| {
                    let p = &pairs[i];
                    let target = if p.label { 1.0 } else { 0.0 };
                    let weight = if p.label { w_pos } else { w_neg };
                    let cache = forward_logit(&net, pair_input(train, p))?;
                    let loss = weight * nn::bce_with_logit(cache.logit, target);
                    let dlogit =
                        weight * nn::bce_with_logit_backward(cache.logit, target) / batch.len() as f64;
                    let mut g = vec![0.0; N_PARAMS];
                    backward(&net, &cache, dlogit, &mut g);
                    Ok((g, loss))
                })
                .collect();
            let per_sample = per_sample?;
            let mut grads = vec![0.0; N_PARAMS];
            let mut batch_loss = 0.0;
            for (g, l) in &per_sample {
                for (a, b) in grads.iter_mut().zip(g.iter()) {
                    *a += b;
                }
                batch_loss += l;
            }
            batch_loss /= batch.len() as f64;
            if !batch_loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite training loss at epoch {epoch}"
                )));
            }
            opt.step(&mut net.params, &grads, lr);
            epoch_loss += batch_loss * batch.len() as f64;
            n_seen += batch.len();
        }
        let train_loss = epoch_loss / n_seen as f64;
        let val_auroc = match val {
            Some(vs) => {
                let (scores, labels) = line_scores(&net, vs)?;
                super::evaluate_classifier(&scores, &labels, 0.1).ok().map(|r| r.auroc)
            }
            None => None,
        };
        log.epochs.push(EpochLog { epoch, lr, train_loss, val_auroc });
    }
    Ok((net, log))
}
