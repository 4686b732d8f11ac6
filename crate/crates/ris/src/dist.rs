//! Action and subgoal distributions.
//!
//! The policy head is a tanh-squashed diagonal Gaussian; the high-level
//! policy head is a diagonal Laplace. Both come in two forms: plain slice
//! functions for rollouts and evaluation, and graph builders for training
//! losses (reparametrized where sampling must be differentiable). The two
//! forms are kept consistent by tests.

use crate::graph::{Graph, NodeId};

/// Clamp range applied to raw log-scale head outputs before exponentiation.
pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Additive constant inside `ln(1 - a^2 + eps)` so the tanh correction stays
/// finite at saturation. Distinct from the prior-estimate floor, which plays
/// a different role.
pub const TANH_CORRECTION_EPS: f64 = 1e-6;

/// Actions are kept strictly inside the open cube; tanh can round to exactly
/// 1.0 in f64 for |u| > ~19.
pub const ACTION_BOUND: f64 = 1.0 - 1e-6;

const HALF_LN_TAU: f64 = 0.918_938_533_204_672_7; // 0.5 * ln(2*pi)

/// Mean and per-dimension log standard deviation of a squashed Gaussian.
/// `log_std` is clamped to `[LOG_STD_MIN, LOG_STD_MAX]` at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SquashedGaussianParams {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl SquashedGaussianParams {
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Self {
        assert_eq!(mean.len(), log_std.len(), "gaussian head dims differ");
        let log_std = log_std
            .into_iter()
            .map(|x| x.clamp(LOG_STD_MIN, LOG_STD_MAX))
            .collect();
        SquashedGaussianParams { mean, log_std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Location and positive per-dimension scale of a diagonal Laplace.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagLaplaceParams {
    pub loc: Vec<f64>,
    pub scale: Vec<f64>,
}

impl DiagLaplaceParams {
    /// Builds from a raw (pre-exponential) scale head output.
    pub fn from_raw(loc: Vec<f64>, raw_scale: Vec<f64>) -> Self {
        assert_eq!(loc.len(), raw_scale.len(), "laplace head dims differ");
        let scale = raw_scale
            .into_iter()
            .map(|r| r.clamp(LOG_STD_MIN, LOG_STD_MAX).exp())
            .collect();
        DiagLaplaceParams { loc, scale }
    }

    pub fn dim(&self) -> usize {
        self.loc.len()
    }
}

/// Reparametrized draw: `a = tanh(mean + std * noise)` with its exact
/// change-of-variable log-density.
pub fn squashed_sample(params: &SquashedGaussianParams, noise: &[f64]) -> (Vec<f64>, f64) {
    assert_eq!(noise.len(), params.dim(), "noise dim mismatch");
    let mut action = Vec::with_capacity(params.dim());
    let mut log_prob = 0.0;
    for i in 0..params.dim() {
        let std = params.log_std[i].exp();
        let u = params.mean[i] + std * noise[i];
        let a = u.tanh().clamp(-ACTION_BOUND, ACTION_BOUND);
        log_prob += -0.5 * noise[i] * noise[i] - params.log_std[i] - HALF_LN_TAU;
        log_prob -= (1.0 - a * a + TANH_CORRECTION_EPS).ln();
        action.push(a);
    }
    (action, log_prob)
}

/// Log-density of a given action under the squashed Gaussian. Actions are
/// clamped to the open cube before the inverse tanh.
pub fn squashed_log_prob(params: &SquashedGaussianParams, action: &[f64]) -> f64 {
    assert_eq!(action.len(), params.dim(), "action dim mismatch");
    let mut log_prob = 0.0;
    for i in 0..params.dim() {
        let a = action[i].clamp(-ACTION_BOUND, ACTION_BOUND);
        let u = a.atanh();
        let z = (u - params.mean[i]) * (-params.log_std[i]).exp();
        log_prob += -0.5 * z * z - params.log_std[i] - HALF_LN_TAU;
        log_prob -= (1.0 - a * a + TANH_CORRECTION_EPS).ln();
    }
    log_prob
}

/// Deterministic head: the squash of the mean, used for evaluation episodes.
pub fn squashed_mean_action(params: &SquashedGaussianParams) -> Vec<f64> {
    params
        .mean
        .iter()
        .map(|m| m.tanh().clamp(-ACTION_BOUND, ACTION_BOUND))
        .collect()
}

/// `sum_i [ -|x_i - mu_i| / b_i - ln(2 b_i) ]`
pub fn laplace_log_prob(x: &[f64], params: &DiagLaplaceParams) -> f64 {
    assert_eq!(x.len(), params.dim(), "laplace dim mismatch");
    let mut lp = 0.0;
    for i in 0..params.dim() {
        lp += -(x[i] - params.loc[i]).abs() / params.scale[i] - (2.0 * params.scale[i]).ln();
    }
    lp
}

/// Inverse-CDF draw from uniform noise in (-1/2, 1/2):
/// `loc - b * sign(u) * ln(1 - 2|u|)`.
pub fn laplace_sample(params: &DiagLaplaceParams, uniform_noise: &[f64]) -> Vec<f64> {
    assert_eq!(uniform_noise.len(), params.dim(), "noise dim mismatch");
    (0..params.dim())
        .map(|i| {
            let u = uniform_noise[i];
            params.loc[i] - params.scale[i] * u.signum() * (1.0 - 2.0 * u.abs()).ln()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Graph builders
// ---------------------------------------------------------------------------

/// Per-row constant `sum_d (-noise^2/2 - ln(2 pi)/2)`, the part of the
/// reparametrized log-density with no parameter dependence.
fn gaussian_noise_row_const(g: &mut Graph, noise: &[f64], rows: usize, dim: usize) -> NodeId {
    let mut rowc = vec![0.0; rows];
    for r in 0..rows {
        for d in 0..dim {
            let n = noise[r * dim + d];
            rowc[r] += -0.5 * n * n - HALF_LN_TAU;
        }
    }
    g.leaf(rows, 1, &rowc, false)
}

/// Reparametrized squashed-Gaussian sample inside the graph.
///
/// `mean` and `raw_log_std` are `[B, D]` nodes (head outputs); `noise` is a
/// plain `[B * D]` standard-normal buffer entered as a constant. Returns the
/// `[B, D]` action node and the `[B, 1]` log-density node; gradients flow to
/// `mean`/`raw_log_std` through both.
pub fn squashed_sample_graph(
    g: &mut Graph,
    mean: NodeId,
    raw_log_std: NodeId,
    noise: &[f64],
) -> (NodeId, NodeId) {
    let (rows, dim) = (g.rows(mean), g.cols(mean));
    assert_eq!(noise.len(), rows * dim, "noise length mismatch");
    let log_std = g.clamp(raw_log_std, LOG_STD_MIN, LOG_STD_MAX);
    let std = g.exp(log_std);
    let noise_node = g.leaf(rows, dim, noise, false);
    let scaled = g.mul(std, noise_node);
    let u = g.add(mean, scaled);
    let squashed = g.tanh(u);
    let action = g.clamp(squashed, -ACTION_BOUND, ACTION_BOUND);

    let a_sq = g.square(action);
    let neg_sq = g.neg(a_sq);
    let inside = g.add_scalar(neg_sq, 1.0 + TANH_CORRECTION_EPS);
    let correction = g.ln(inside);
    let neg_ls = g.neg(log_std);
    let elem = g.sub(neg_ls, correction);
    let row_sum = g.sum_rows(elem);
    let row_const = gaussian_noise_row_const(g, noise, rows, dim);
    let log_prob = g.add(row_sum, row_const);
    (action, log_prob)
}

/// Log-density of an existing `[B, D]` action node under a squashed-Gaussian
/// head. Gradients flow into `action` as well as the head nodes, which is
/// what the prior density term needs.
pub fn squashed_log_prob_graph(
    g: &mut Graph,
    mean: NodeId,
    raw_log_std: NodeId,
    action: NodeId,
) -> NodeId {
    let (rows, dim) = (g.rows(mean), g.cols(mean));
    assert_eq!(g.rows(action), rows, "action rows mismatch");
    assert_eq!(g.cols(action), dim, "action cols mismatch");
    let log_std = g.clamp(raw_log_std, LOG_STD_MIN, LOG_STD_MAX);
    let a = g.clamp(action, -ACTION_BOUND, ACTION_BOUND);
    let u = g.atanh(a);
    let diff = g.sub(u, mean);
    let neg_ls = g.neg(log_std);
    let inv_std = g.exp(neg_ls);
    let z = g.mul(diff, inv_std);
    let z_sq = g.square(z);
    let half_zsq = g.mul_scalar(z_sq, -0.5);
    let gauss = g.sub(half_zsq, log_std);
    let gauss = g.add_scalar(gauss, -HALF_LN_TAU);

    let a_sq = g.square(a);
    let neg_sq = g.neg(a_sq);
    let inside = g.add_scalar(neg_sq, 1.0 + TANH_CORRECTION_EPS);
    let correction = g.ln(inside);
    let elem = g.sub(gauss, correction);
    g.sum_rows(elem)
}

/// `[B, 1]` Laplace log-density of constant targets `x` under `[B, D]`
/// location and raw-scale head nodes.
pub fn laplace_log_prob_graph(
    g: &mut Graph,
    loc: NodeId,
    raw_scale: NodeId,
    x: NodeId,
) -> NodeId {
    let rs = g.clamp(raw_scale, LOG_STD_MIN, LOG_STD_MAX);
    let diff = g.sub(x, loc);
    let dist = g.abs(diff);
    let neg_rs = g.neg(rs);
    let inv_b = g.exp(neg_rs);
    let scaled = g.mul(dist, inv_b);
    // -|x-mu|/b - ln(2b) = -|x-mu|/b - ln2 - raw
    let neg_scaled = g.neg(scaled);
    let minus_raw = g.sub(neg_scaled, rs);
    let elem = g.add_scalar(minus_raw, -std::f64::consts::LN_2);
    g.sum_rows(elem)
}

/// Reparametrized Laplace draw inside the graph: `loc + b * c(u)` where
/// `c(u) = -sign(u) ln(1 - 2|u|)` is a constant of the noise.
pub fn laplace_sample_graph(
    g: &mut Graph,
    loc: NodeId,
    raw_scale: NodeId,
    uniform_noise: &[f64],
) -> NodeId {
    let (rows, dim) = (g.rows(loc), g.cols(loc));
    assert_eq!(uniform_noise.len(), rows * dim, "noise length mismatch");
    let rs = g.clamp(raw_scale, LOG_STD_MIN, LOG_STD_MAX);
    let b = g.exp(rs);
    let c: Vec<f64> = uniform_noise
        .iter()
        .map(|&u| -u.signum() * (1.0 - 2.0 * u.abs()).ln())
        .collect();
    let c_node = g.leaf(rows, dim, &c, false);
    let spread = g.mul(b, c_node);
    g.add(loc, spread)
}
