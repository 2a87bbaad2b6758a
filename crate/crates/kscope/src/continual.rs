//! Continual learning across anatomies: the quadratic weight-anchoring loss,
//! diagonal Fisher information estimation, Fisher overlap, and the two-task
//! sequential-training experiment.

use crate::error::{Error, Result};
use crate::kcore::{Dataset, ImageSlice};
use crate::recon::{
    minivarnet_backward, minivarnet_forward, ssim_with_grad, MaskPolicy, MiniVarNet, ReconHyper,
    SenseContext,
};
use crate::sampling::apply_mask;
use crate::seeds;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Per-parameter diagonal Fisher information for one model/task pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherDiagonal {
    pub values: Vec<f64>,
    pub task: String,
    /// Whether `values` have been normalized to unit trace.
    pub unit_trace: bool,
}

impl FisherDiagonal {
    pub fn new(values: Vec<f64>, task: &str) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NonFinite("Fisher values must be finite and nonnegative".into()));
        }
        Ok(Self { values, task: task.to_string(), unit_trace: false })
    }

    /// Normalize to unit trace; errors on an all-zero Fisher.
    pub fn normalized(&self) -> Result<FisherDiagonal> {
        let trace: f64 = self.values.iter().sum();
        if trace <= 0.0 {
            return Err(Error::Degenerate("all-zero Fisher cannot be normalized".into()));
        }
        Ok(FisherDiagonal {
            values: self.values.iter().map(|v| v / trace).collect(),
            task: self.task.clone(),
            unit_trace: true,
        })
    }
}

/// Anchor for the quadratic penalty: parameters snapshot after task 1 plus
/// the paired Fisher diagonal and the penalty weight lambda (infinity means
/// "skip task-2 training entirely", handled by the experiment driver).
#[derive(Debug, Clone, PartialEq)]
pub struct EwcAnchor {
    pub anchor: Vec<f64>,
    pub fisher: FisherDiagonal,
    pub lambda: f64,
}

impl EwcAnchor {
    pub fn new(anchor: Vec<f64>, fisher: FisherDiagonal, lambda: f64) -> Result<Self> {
        if lambda < 0.0 {
            return Err(Error::InvalidArg("lambda must be nonnegative".into()));
        }
        if anchor.len() != fisher.values.len() {
            return Err(Error::Shape(format!(
                "anchor length {} != Fisher length {}",
                anchor.len(),
                fisher.values.len()
            )));
        }
        Ok(Self { anchor, fisher, lambda })
    }

    /// (lambda/2) sum_i F_i (theta_i - anchor_i)^2.
    pub fn penalty(&self, params: &[f64]) -> Result<f64> {
        if params.len() != self.anchor.len() {
            return Err(Error::Shape("parameter vector misaligned with anchor".into()));
        }
        let mut acc = 0.0;
        for i in 0..params.len() {
            let d = params[i] - self.anchor[i];
            acc += self.fisher.values[i] * d * d;
        }
        Ok(0.5 * self.lambda * acc)
    }

    /// Adds lambda F_i (theta_i - anchor_i) to the gradient vector.
    pub fn add_penalty_grad(&self, params: &[f64], grads: &mut [f64]) -> Result<()> {
        if params.len() != self.anchor.len() || grads.len() != self.anchor.len() {
            return Err(Error::Shape("parameter vector misaligned with anchor".into()));
        }
        for i in 0..params.len() {
            grads[i] += self.lambda * self.fisher.values[i] * (params[i] - self.anchor[i]);
        }
        Ok(())
    }
}

/// Training loss with weight anchoring: 1 - SSIM(pred, truth) plus the
/// quadratic penalty at the current parameters.
pub fn ewc_loss(
    pred: &ImageSlice,
    truth: &ImageSlice,
    params: &[f64],
    anchor: &EwcAnchor,
) -> Result<f64> {
    let range = truth.max_abs().max(f64::MIN_POSITIVE);
    let (s, _) = ssim_with_grad(pred, truth, range)?;
    Ok(1.0 - s + anchor.penalty(params)?)
}

/// Empirical diagonal Fisher: mean over samples of the squared per-sample
/// loss gradient. Generic over the gradient provider so the estimator itself
/// is testable against closed forms.
pub fn fisher_diagonal_from_grads<S: Sync>(
    samples: &[S],
    n_params: usize,
    task: &str,
    grad_fn: impl Fn(&S) -> Result<Vec<f64>> + Sync,
) -> Result<FisherDiagonal> {
    if samples.is_empty() {
        return Err(Error::Dataset("Fisher estimation needs a nonempty sample set".into()));
    }
    let grads: Result<Vec<Vec<f64>>> = samples.par_iter().map(&grad_fn).collect();
    let grads = grads?;
    let mut acc = vec![0.0; n_params];
    for g in &grads {
        if g.len() != n_params {
            return Err(Error::Shape("gradient length mismatch in Fisher estimation".into()));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("non-finite gradient in Fisher estimation".into()));
        }
        for (a, v) in acc.iter_mut().zip(g.iter()) {
            *a += v * v;
        }
    }
    for a in acc.iter_mut() {
        *a /= grads.len() as f64;
    }
    FisherDiagonal::new(acc, task)
}

/// Per-slice (1 - SSIM) gradient of a reconstructor on one task sample.
fn slice_loss_grad(
    net: &MiniVarNet,
    full: &crate::kcore::KSpaceSlice,
    policy: &MaskPolicy,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = seeds::rng(seed);
    let mask = policy.draw(full.width(), &mut rng)?;
    let masked = apply_mask(full, &mask)?;
    let ctx = SenseContext::for_slice(&masked);
    let truth = crate::recon::ground_truth(full)?;
    let range = truth.max_abs().max(f64::MIN_POSITIVE);
    let (img, cache) = minivarnet_forward(net, &masked, &mask, &ctx)?;
    let (_, sg) = ssim_with_grad(&img, &truth, range)?;
    let d_rss: Vec<f64> = sg.iter().map(|g| -g).collect();
    let mut grads = vec![0.0; net.params.len()];
    minivarnet_backward(net, &masked, &mask, &ctx, &cache, &d_rss, &mut grads)?;
    Ok(grads)
}

/// Empirical Fisher of a trained reconstructor over a task dataset.
pub fn fisher_diagonal(
    net: &MiniVarNet,
    task_set: &Dataset,
    policy: &MaskPolicy,
    task: &str,
    seed: u64,
) -> Result<FisherDiagonal> {
    let slices: Vec<_> = task_set.slices().cloned().collect();
    let indexed: Vec<(usize, crate::kcore::KSpaceSlice)> =
        slices.into_iter().enumerate().collect();
    fisher_diagonal_from_grads(&indexed, net.params.len(), task, |(i, s)| {
        slice_loss_grad(net, s, policy, seeds::split_index(seed, "fisher", *i as u64))
    })
}

/// Fisher overlap of two unit-trace diagonal Fishers:
/// 1 - 1/2 sum_i (sqrt(a_i) - sqrt(b_i))^2, in [0, 1].
pub fn fisher_overlap(fa: &FisherDiagonal, fb: &FisherDiagonal) -> Result<f64> {
    if fa.values.len() != fb.values.len() {
        return Err(Error::Shape("Fisher diagonals differ in length".into()));
    }
    let a = if fa.unit_trace { fa.clone() } else { fa.normalized()? };
    let b = if fb.unit_trace { fb.clone() } else { fb.normalized()? };
    let mut acc = 0.0;
    for (x, y) in a.values.iter().zip(b.values.iter()) {
        let d = x.sqrt() - y.sqrt();
        acc += d * d;
    }
    Ok((1.0 - 0.5 * acc).clamp(0.0, 1.0))
}

/// Fisher overlap per component of a parameter partition; each component's
/// Fishers are restricted and re-normalized before comparing.
pub fn fisher_overlap_by_component(
    fa: &FisherDiagonal,
    fb: &FisherDiagonal,
    partition: &[(String, Vec<usize>)],
) -> Result<Vec<(String, f64)>> {
    if fa.values.len() != fb.values.len() {
        return Err(Error::Shape("Fisher diagonals differ in length".into()));
    }
    // partition must cover every index exactly once
    let mut seen = vec![false; fa.values.len()];
    for (_, idx) in partition {
        for &i in idx {
            if i >= seen.len() || seen[i] {
                return Err(Error::InvalidArg(
                    "partition is not a disjoint cover of the parameters".into(),
                ));
            }
            seen[i] = true;
        }
    }
    if !seen.iter().all(|&s| s) {
        return Err(Error::InvalidArg("partition does not cover all parameters".into()));
    }
    let mut out = Vec::with_capacity(partition.len());
    for (name, idx) in partition {
        let sub_a: Vec<f64> = idx.iter().map(|&i| fa.values[i]).collect();
        let sub_b: Vec<f64> = idx.iter().map(|&i| fb.values[i]).collect();
        let oa = FisherDiagonal::new(sub_a, &fa.task)?;
        let ob = FisherDiagonal::new(sub_b, &fb.task)?;
        out.push((name.clone(), fisher_overlap(&oa, &ob)?));
    }
    Ok(out)
}

/// Results of one lambda arm of the sequential experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaArm {
    /// Penalty weight; infinity serialized as the string "inf".
    #[serde(with = "crate::analysis::jsonnum")]
    pub lambda: f64,
    pub task_a_ssim: f64,
    #[serde(with = "crate::analysis::jsonnum")]
    pub task_a_psnr: f64,
    pub task_b_ssim: f64,
    #[serde(with = "crate::analysis::jsonnum")]
    pub task_b_psnr: f64,
    /// Task-A SSIM after each phase-2 epoch (empty for the infinite arm).
    pub task_a_curve: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequentialReport {
    pub phase1_task_a_ssim: f64,
    pub arms: Vec<LambdaArm>,
}

/// Sequential two-task experiment: train on task A, snapshot the anchor and
/// its Fisher, then for every lambda train on task B under the anchored loss
/// and evaluate both tasks. Lambda = infinity skips phase 2 by definition.
pub fn sequential_experiment(
    task_a: &Dataset,
    task_b: &Dataset,
    eval_a: &Dataset,
    eval_b: &Dataset,
    lambda_grid: &[f64],
    hyper: &ReconHyper,
    phase2_epochs: usize,
) -> Result<SequentialReport> {
    if lambda_grid.iter().any(|l| *l < 0.0) {
        return Err(Error::InvalidArg("lambda must be nonnegative".into()));
    }
    if !lambda_grid.contains(&0.0) || !lambda_grid.iter().any(|l| l.is_infinite()) {
        return Err(Error::InvalidArg("lambda grid must include 0 and inf".into()));
    }
    if task_a.overlaps(task_b) {
        return Err(Error::Dataset("task datasets share volumes".into()));
    }
    let policy = hyper.policy.clone();
    let (net_a, _) = crate::recon::train_recon(None, task_a, hyper, None)?;
    let fisher = fisher_diagonal(
        &net_a,
        task_a,
        &policy,
        "task-a",
        seeds::split(hyper.seed, "fisher-anchor"),
    )?;
    let eval = |net: &MiniVarNet, ds: &Dataset| -> Result<(f64, f64)> {
        let metrics = crate::recon::evaluate_dataset(net, ds, &policy, hyper.crop, hyper.seed)?;
        let n = metrics.len() as f64;
        let ssim = metrics.iter().map(|m| m.ssim).sum::<f64>() / n;
        let psnr_vals: Vec<f64> =
            metrics.iter().map(|m| m.psnr).filter(|p| p.is_finite()).collect();
        let psnr = if psnr_vals.is_empty() {
            f64::INFINITY
        } else {
            psnr_vals.iter().sum::<f64>() / psnr_vals.len() as f64
        };
        Ok((ssim, psnr))
    };
    let (a_ssim_phase1, a_psnr_phase1) = eval(&net_a, eval_a)?;
    let (b_ssim_phase1, b_psnr_phase1) = eval(&net_a, eval_b)?;

    let mut arms = Vec::with_capacity(lambda_grid.len());
    for &lambda in lambda_grid {
        if lambda.is_infinite() {
            arms.push(LambdaArm {
                lambda,
                task_a_ssim: a_ssim_phase1,
                task_a_psnr: a_psnr_phase1,
                task_b_ssim: b_ssim_phase1,
                task_b_psnr: b_psnr_phase1,
                task_a_curve: Vec::new(),
            });
            continue;
        }
        let anchor = EwcAnchor::new(net_a.params.clone(), fisher.clone(), lambda)?;
        let mut phase2_hyper = hyper.clone();
        phase2_hyper.epochs = phase2_epochs;
        phase2_hyper.seed = seeds::split_index(hyper.seed, "phase2", lambda.to_bits());
        let mut curve = Vec::with_capacity(phase2_epochs);
        let mut net = net_a.clone();
        for epoch in 0..phase2_epochs {
            let mut one = phase2_hyper.clone();
            one.epochs = 1;
            one.seed = seeds::split_index(phase2_hyper.seed, "epoch", epoch as u64);
            let (next, _) = crate::recon::train_recon(Some(net), task_b, &one, Some(&anchor))?;
            net = next;
            curve.push(eval(&net, eval_a)?.0);
        }
        let (task_a_ssim, task_a_psnr) = eval(&net, eval_a)?;
        let (task_b_ssim, task_b_psnr) = eval(&net, eval_b)?;
        arms.push(LambdaArm {
            lambda,
            task_a_ssim,
            task_a_psnr,
            task_b_ssim,
            task_b_psnr,
            task_a_curve: curve,
        });
    }
    Ok(SequentialReport { phase1_task_a_ssim: a_ssim_phase1, arms })
}
