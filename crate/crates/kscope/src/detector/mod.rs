//! The k-space corruption detector: a ~20K-parameter 1D ConvNet scoring an
//! acquired high-frequency line against each ACS reference line, plus its
//! training loop, a non-learning cross-correlation baseline, and classifier
//! evaluation.

mod baseline;
mod metrics;
mod train;

pub use baseline::{baseline_score, cross_correlation_abs_sum};
pub use metrics::{evaluate_classifier, f2_score, ClassifierReport};
pub use train::{detector_train, line_scores, DetectorHyper, EpochLog, TrainLog};

use crate::error::{Error, Result};
use crate::nn;
use crate::seeds;
use std::path::Path;

/// Fixed readout length of the detector input.
pub const INPUT_LEN: usize = 640;

const C1_OUT: usize = 8;
const C1_K: usize = 9;
const C1_LEN: usize = INPUT_LEN - C1_K + 1; // 632
const P1_LEN: usize = C1_LEN / 4; // 158
const C2_OUT: usize = 16;
const C2_K: usize = 9;
const C2_LEN: usize = P1_LEN - C2_K + 1; // 150
const P2_LEN: usize = C2_LEN / 4; // 37
const FLAT: usize = C2_OUT * P2_LEN; // 592
const FC1_OUT: usize = 32;

const C1_W: usize = 0;
const C1_B: usize = C1_W + C1_OUT * 2 * C1_K;
const C2_W: usize = C1_B + C1_OUT;
const C2_B: usize = C2_W + C2_OUT * C1_OUT * C2_K;
const FC1_W: usize = C2_B + C2_OUT;
const FC1_B: usize = FC1_W + FC1_OUT * FLAT;
const FC2_W: usize = FC1_B + FC1_OUT;
const FC2_B: usize = FC2_W + FC1_OUT;
/// Total trainable parameter count (20,329).
pub const N_PARAMS: usize = FC2_B + 1;

/// Parameter container for the corruption detector.
///
/// Canonical flattening order (also the weight-file layout): conv1 weights
/// `[8][2][9]`, conv1 bias, conv2 weights `[16][8][9]`, conv2 bias, fc1
/// weights `[32][592]`, fc1 bias, fc2 weights `[1][32]`, fc2 bias.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorNet {
    pub params: Vec<f64>,
}

impl DetectorNet {
    /// Zero-initialized net: every score is exactly sigmoid(0) = 0.5.
    pub fn zeros() -> Self {
        Self { params: vec![0.0; N_PARAMS] }
    }

    /// Seeded random initialization. Biases are randomized too, so no
    /// pre-activation sits exactly on the leaky-ReLU kink for zero-padded
    /// inputs.
    pub fn seeded(seed: u64) -> Self {
        let mut rng = seeds::rng(seed);
        let mut p = vec![0.0; N_PARAMS];
        nn::init_uniform(&mut rng, &mut p[C1_W..C2_W], 2 * C1_K);
        nn::init_uniform(&mut rng, &mut p[C2_W..FC1_W], C1_OUT * C2_K);
        nn::init_uniform(&mut rng, &mut p[FC1_W..FC2_W], FLAT);
        nn::init_uniform(&mut rng, &mut p[FC2_W..N_PARAMS], FC1_OUT);
        Self { params: p }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        nn::save_params(path, "detector", &self.params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let params = nn::load_params(path, "detector")?;
        if params.len() != N_PARAMS {
            return Err(Error::Shape(format!(
                "detector weight file has {} parameters, expected {N_PARAMS}",
                params.len()
            )));
        }
        Ok(Self { params })
    }
}

/// Symmetrically zero-pad (or center-crop) a line of magnitudes to the fixed
/// input length.
pub fn pad_to_input(line: &[f64]) -> Vec<f64> {
    let l = line.len();
    if l == INPUT_LEN {
        return line.to_vec();
    }
    if l > INPUT_LEN {
        let start = (l - INPUT_LEN) / 2;
        return line[start..start + INPUT_LEN].to_vec();
    }
    let mut out = vec![0.0; INPUT_LEN];
    let start = (INPUT_LEN - l) / 2;
    out[start..start + l].copy_from_slice(line);
    out
}

/// Assemble the 2-channel input: channel 0 the padded query line, channel 1
/// the padded reference line, both scaled by the reference-line peak.
pub fn make_input(k_h: &[f64], k_l: &[f64]) -> Vec<f64> {
    let h = pad_to_input(k_h);
    let l = pad_to_input(k_l);
    let peak = l.iter().cloned().fold(0.0_f64, f64::max);
    let scale = if peak > 0.0 { 1.0 / peak } else { 1.0 };
    let mut x = Vec::with_capacity(2 * INPUT_LEN);
    x.extend(h.iter().map(|v| v * scale));
    x.extend(l.iter().map(|v| v * scale));
    x
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache {
    x: Vec<f64>,
    pre1: Vec<f64>,
    arg1: Vec<usize>,
    pool1: Vec<f64>,
    pre2: Vec<f64>,
    arg2: Vec<usize>,
    pool2: Vec<f64>,
    pre_fc1: Vec<f64>,
    act_fc1: Vec<f64>,
    pub logit: f64,
}

/// Forward pass on an assembled 2-channel input, returning the pre-sigmoid
/// logit and the cache needed for backprop.
pub fn forward_logit(net: &DetectorNet, x: Vec<f64>) -> Result<ForwardCache> {
    if x.len() != 2 * INPUT_LEN {
        return Err(Error::Shape(format!(
            "detector input length {} != {}",
            x.len(),
            2 * INPUT_LEN
        )));
    }
    let p = &net.params;
    let pre1 = nn::conv1d_forward(&x, 2, INPUT_LEN, &p[C1_W..C1_B], &p[C1_B..C2_W], C1_OUT, C1_K);
    let mut act1 = pre1.clone();
    nn::leaky_relu(&mut act1);
    let (pool1, arg1) = nn::maxpool1d_forward(&act1, C1_OUT, C1_LEN, 4);
    let pre2 =
        nn::conv1d_forward(&pool1, C1_OUT, P1_LEN, &p[C2_W..C2_B], &p[C2_B..FC1_W], C2_OUT, C2_K);
    let mut act2 = pre2.clone();
    nn::leaky_relu(&mut act2);
    let (pool2, arg2) = nn::maxpool1d_forward(&act2, C2_OUT, C2_LEN, 4);
    let pre_fc1 = nn::dense_forward(&pool2, &p[FC1_W..FC1_B], &p[FC1_B..FC2_W], FC1_OUT);
    let mut act_fc1 = pre_fc1.clone();
    nn::leaky_relu(&mut act_fc1);
    let out = nn::dense_forward(&act_fc1, &p[FC2_W..FC2_B], &p[FC2_B..N_PARAMS], 1);
    Ok(ForwardCache { x, pre1, arg1, pool1, pre2, arg2, pool2, pre_fc1, act_fc1, logit: out[0] })
}

/// Accumulate parameter gradients for upstream d(loss)/d(logit).
pub fn backward(net: &DetectorNet, cache: &ForwardCache, dlogit: f64, grads: &mut [f64]) {
    let p = &net.params;
    let (g_head, g_fc2b) = grads.split_at_mut(FC2_B);
    let (g_head, g_fc2w) = g_head.split_at_mut(FC2_W);
    let (g_head, g_fc1b) = g_head.split_at_mut(FC1_B);
    let (g_head, g_fc1w) = g_head.split_at_mut(FC1_W);
    let (g_head, g_c2b) = g_head.split_at_mut(C2_B);
    let (g_head, g_c2w) = g_head.split_at_mut(C2_W);
    let (g_c1w, g_c1b) = g_head.split_at_mut(C1_B);

    let dout = [dlogit];
    let mut d_act_fc1 = vec![0.0; FC1_OUT];
    nn::dense_backward(&cache.act_fc1, &p[FC2_W..FC2_B], 1, &dout, &mut d_act_fc1, g_fc2w, g_fc2b);
    let mut d_pre_fc1 = vec![0.0; FC1_OUT];
    nn::leaky_relu_backward(&cache.pre_fc1, &d_act_fc1, &mut d_pre_fc1);
    let mut d_pool2 = vec![0.0; FLAT];
    nn::dense_backward(
        &cache.pool2,
        &p[FC1_W..FC1_B],
        FC1_OUT,
        &d_pre_fc1,
        &mut d_pool2,
        g_fc1w,
        g_fc1b,
    );
    let mut d_act2 = vec![0.0; C2_OUT * C2_LEN];
    nn::maxpool1d_backward(&cache.arg2, &d_pool2, &mut d_act2);
    let mut d_pre2 = vec![0.0; C2_OUT * C2_LEN];
    nn::leaky_relu_backward(&cache.pre2, &d_act2, &mut d_pre2);
    let mut d_pool1 = vec![0.0; C1_OUT * P1_LEN];
    nn::conv1d_backward(
        &cache.pool1,
        C1_OUT,
        P1_LEN,
        &p[C2_W..C2_B],
        C2_OUT,
        C2_K,
        &d_pre2,
        &mut d_pool1,
        g_c2w,
        g_c2b,
    );
    let mut d_act1 = vec![0.0; C1_OUT * C1_LEN];
    nn::maxpool1d_backward(&cache.arg1, &d_pool1, &mut d_act1);
    let mut d_pre1 = vec![0.0; C1_OUT * C1_LEN];
    nn::leaky_relu_backward(&cache.pre1, &d_act1, &mut d_pre1);
    let mut d_x = vec![0.0; 2 * INPUT_LEN];
    nn::conv1d_backward(
        &cache.x,
        2,
        INPUT_LEN,
        &p[C1_W..C1_B],
        C1_OUT,
        C1_K,
        &d_pre1,
        &mut d_x,
        g_c1w,
        g_c1b,
    );
}

/// Sigmoid score in (0,1) for one (query, reference) magnitude pair.
pub fn detector_forward(net: &DetectorNet, k_h: &[f64], k_l: &[f64]) -> Result<f64> {
    let cache = forward_logit(net, make_input(k_h, k_l))?;
    Ok(nn::sigmoid(cache.logit))
}

/// Line-level decision score: mean per-pair sigmoid score over all ACS lines.
pub fn score_line(net: &DetectorNet, k_h: &[f64], acs: &[Vec<f64>]) -> Result<f64> {
    if acs.is_empty() {
        return Err(Error::Degenerate("no ACS reference lines".into()));
    }
    let mut sum = 0.0;
    for k_l in acs {
        sum += detector_forward(net, k_h, k_l)?;
    }
    Ok(sum / acs.len() as f64)
}
