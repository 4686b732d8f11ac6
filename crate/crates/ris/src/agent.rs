//! The actor-critic with imagined subgoals.
//!
//! Three networks train jointly: twin Q critics with EMA targets, a
//! squashed-Gaussian policy with an EMA copy, and a Laplace high-level
//! policy over subgoals. Per training step the critic regresses the
//! twin-min Bellman target (no entropy term), the high-level policy takes a
//! weighted maximum-likelihood step on replay candidates with batch-softmax
//! advantage weights, and the policy maximizes min(Q1, Q2) under a KL
//! penalty toward the subgoal-conditioned prior.
//!
//! Gradient isolation is structural: parameters enter each loss graph as
//! tracked leaves only for the network being updated; everything else binds
//! as constants, so the reverse sweep cannot touch it.

use crate::dist::{
    squashed_log_prob_graph, squashed_mean_action, squashed_sample, squashed_sample_graph,
    DiagLaplaceParams, SquashedGaussianParams,
};
use crate::error::{Result, RisError};
use crate::graph::{Graph, NodeId};
use crate::mlp::{bind_params, mlp_forward_graph, Activation, BoundParams};
use crate::oracle::MidpointTable;
use crate::replay::Transition;
use crate::rng::{fill_centered_uniform, fill_standard_normal};
use crate::tensor::{adam_step, init_mlp_params, polyak_update, AdamState, ParameterSet, Tensor};
use rand::RngExt;
use rand_chacha::ChaCha12Rng;

pub const STATE_DIM: usize = 2;
pub const ACTION_DIM: usize = 2;
pub const GOAL_DIM: usize = STATE_DIM;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Training hyperparameters. Defaults are the reference navigation
/// settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RisHyperparams {
    pub gamma: f64,
    /// Polyak coefficient shared by the Q targets and the policy EMA.
    pub tau: f64,
    /// KL penalty weight in the policy objective.
    pub alpha: f64,
    /// Advantage temperature of the weighted-ML high-level update.
    pub lambda: f64,
    /// Floor inside the prior-density log.
    pub eps_prior: f64,
    pub batch_size: usize,
    pub lr_critic: f64,
    pub lr_policy: f64,
    pub lr_highlevel: f64,
    /// I: Monte-Carlo subgoal samples for the prior density.
    pub prior_samples: usize,
    /// N: action samples for the KL estimate.
    pub kl_samples: usize,
    /// M: baseline subgoal samples inside the advantage.
    pub advantage_samples: usize,
    pub value_clip: (f64, f64),
    /// Hidden widths shared by all three networks.
    pub hidden: Vec<usize>,
}

impl Default for RisHyperparams {
    fn default() -> Self {
        RisHyperparams {
            gamma: 0.99,
            tau: 5e-3,
            alpha: 0.1,
            lambda: 0.1,
            eps_prior: 1e-16,
            batch_size: 2048,
            lr_critic: 1e-3,
            lr_policy: 1e-3,
            lr_highlevel: 1e-4,
            prior_samples: 10,
            kl_samples: 1,
            advantage_samples: 10,
            value_clip: (-100.0, 0.0),
            hidden: vec![256, 256],
        }
    }
}

impl RisHyperparams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda", self.lambda),
            ("eps_prior", self.eps_prior),
            ("lr_critic", self.lr_critic),
            ("lr_policy", self.lr_policy),
            ("lr_highlevel", self.lr_highlevel),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(RisError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(RisError::Config(format!("gamma must be in (0,1), got {}", self.gamma)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(RisError::Config(format!("tau must be in (0,1], got {}", self.tau)));
        }
        if self.alpha < 0.0 {
            return Err(RisError::Config(format!("alpha must be nonnegative, got {}", self.alpha)));
        }
        if self.batch_size == 0
            || self.prior_samples == 0
            || self.kl_samples == 0
            || self.advantage_samples == 0
        {
            return Err(RisError::Config("batch/sample counts must be positive".into()));
        }
        if self.value_clip.0 >= self.value_clip.1 {
            return Err(RisError::Config(format!(
                "value_clip {:?} inverted",
                self.value_clip
            )));
        }
        if self.hidden.is_empty() {
            return Err(RisError::Config("at least one hidden layer required".into()));
        }
        Ok(())
    }
}

/// Which distribution anchors the policy's KL term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorMode {
    /// Mixture of EMA-policy action distributions at imagined subgoals.
    ImaginedSubgoals,
    /// Uniform density over the action cube.
    Uniform,
    /// The EMA policy conditioned on the true goal.
    MovingAverage,
    /// Imagined-subgoal machinery with subgoals drawn around grid-oracle
    /// midpoints instead of the high-level policy's predictions.
    OracleSubgoals { scale: f64 },
}

/// How the high-level policy is trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HighlevelObjective {
    /// Advantage-weighted maximum likelihood over replay candidates.
    WeightedMaxLikelihood,
    /// Direct cost descent through reparametrized subgoal samples; no
    /// implicit regularization toward visited states.
    DirectCost,
}

/// Trunk MLP with two linear heads (location and raw scale).
#[derive(Debug, Clone)]
pub struct HeadNet {
    pub params: ParameterSet,
    pub hidden: Vec<usize>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl HeadNet {
    pub fn init(rng: &mut ChaCha12Rng, in_dim: usize, hidden: &[usize], out_dim: usize) -> Self {
        assert!(!hidden.is_empty(), "HeadNet needs at least one hidden layer");
        let last = *hidden.last().unwrap();
        let mut params = init_mlp_params(rng, in_dim, &hidden[..hidden.len() - 1], last);
        let bound = 1.0 / (last as f64).sqrt();
        for head in ["loc", "scale"] {
            let data: Vec<f64> = (0..last * out_dim)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            let mut w = Tensor::from_vec(&[last, out_dim], data).expect("sized");
            w.grad = Some(vec![0.0; last * out_dim]);
            let mut b = Tensor::zeros(&[1, out_dim]);
            b.grad = Some(vec![0.0; out_dim]);
            params.insert(&format!("{head}_w"), w).expect("fresh names");
            params.insert(&format!("{head}_b"), b).expect("fresh names");
        }
        HeadNet {
            params,
            hidden: hidden.to_vec(),
            in_dim,
            out_dim,
        }
    }

    /// Forward through `params` (which may be this net's own parameters, an
    /// EMA copy, or a loaded checkpoint with the same names). Returns
    /// (location head, raw scale head), both `[B, out_dim]`.
    pub fn forward(
        &self,
        g: &mut Graph,
        params: &ParameterSet,
        bound: &BoundParams,
        input: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let mut x = input;
        for l in 0..self.hidden.len() {
            let w = bound
                .node(params, &format!("w{l}"))
                .ok_or_else(|| RisError::Config(format!("missing trunk tensor w{l}")))?;
            let b = bound
                .node(params, &format!("b{l}"))
                .ok_or_else(|| RisError::Config(format!("missing trunk tensor b{l}")))?;
            let z = g.matmul(x, w);
            let z = g.add_row_bias(z, b);
            x = g.relu(z);
        }
        let mut out = Vec::with_capacity(2);
        for head in ["loc", "scale"] {
            let w = bound
                .node(params, &format!("{head}_w"))
                .ok_or_else(|| RisError::Config(format!("missing head tensor {head}_w")))?;
            let b = bound
                .node(params, &format!("{head}_b"))
                .ok_or_else(|| RisError::Config(format!("missing head tensor {head}_b")))?;
            let z = g.matmul(x, w);
            out.push(g.add_row_bias(z, b));
        }
        Ok((out[0], out[1]))
    }
}

/// The goal-conditioned policy and its EMA copy (the prior's backbone).
#[derive(Debug, Clone)]
pub struct Policy {
    pub net: HeadNet,
    pub ema: ParameterSet,
    pub adam: AdamState,
}

impl Policy {
    pub fn init(rng: &mut ChaCha12Rng, hidden: &[usize]) -> Self {
        let net = HeadNet::init(rng, STATE_DIM + GOAL_DIM, hidden, ACTION_DIM);
        let ema = net.params.clone();
        let adam = AdamState::new(&net.params);
        Policy { net, ema, adam }
    }
}

/// Twin Q networks with EMA targets. Input is state || action || goal.
#[derive(Debug, Clone)]
pub struct Critic {
    pub q1: ParameterSet,
    pub q2: ParameterSet,
    pub target_q1: ParameterSet,
    pub target_q2: ParameterSet,
    pub adam_q1: AdamState,
    pub adam_q2: AdamState,
    pub hidden: Vec<usize>,
}

impl Critic {
    pub fn init(rng: &mut ChaCha12Rng, hidden: &[usize]) -> Self {
        let in_dim = STATE_DIM + ACTION_DIM + GOAL_DIM;
        let q1 = init_mlp_params(rng, in_dim, hidden, 1);
        let q2 = init_mlp_params(rng, in_dim, hidden, 1);
        let target_q1 = q1.clone();
        let target_q2 = q2.clone();
        let adam_q1 = AdamState::new(&q1);
        let adam_q2 = AdamState::new(&q2);
        Critic {
            q1,
            q2,
            target_q1,
            target_q2,
            adam_q1,
            adam_q2,
            hidden: hidden.to_vec(),
        }
    }
}

/// Laplace subgoal head; its output lives in state space.
#[derive(Debug, Clone)]
pub struct HighLevelPolicy {
    pub net: HeadNet,
    pub adam: AdamState,
}

impl HighLevelPolicy {
    pub fn init(rng: &mut ChaCha12Rng, hidden: &[usize]) -> Self {
        let net = HeadNet::init(rng, STATE_DIM + GOAL_DIM, hidden, STATE_DIM);
        let adam = AdamState::new(&net.params);
        HighLevelPolicy { net, adam }
    }
}

/// Flat minibatch arrays.
struct BatchArrays {
    n: usize,
    s: Vec<f64>,
    a: Vec<f64>,
    g: Vec<f64>,
    s2: Vec<f64>,
    r: Vec<f64>,
    done: Vec<f64>,
}

fn batch_arrays(batch: &[Transition]) -> BatchArrays {
    let n = batch.len();
    let mut out = BatchArrays {
        n,
        s: Vec::with_capacity(n * 2),
        a: Vec::with_capacity(n * 2),
        g: Vec::with_capacity(n * 2),
        s2: Vec::with_capacity(n * 2),
        r: Vec::with_capacity(n),
        done: Vec::with_capacity(n),
    };
    for t in batch {
        out.s.extend_from_slice(&[t.state.0, t.state.1]);
        out.a.extend_from_slice(&[t.action.0, t.action.1]);
        out.g.extend_from_slice(&[t.goal.0, t.goal.1]);
        out.s2.extend_from_slice(&[t.next_state.0, t.next_state.1]);
        out.r.push(t.reward);
        out.done.push(if t.done { 1.0 } else { 0.0 });
    }
    out
}

fn interleave_pairs(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len() / 2;
    let mut out = Vec::with_capacity(n * 4);
    for i in 0..n {
        out.extend_from_slice(&a[i * 2..i * 2 + 2]);
        out.extend_from_slice(&b[i * 2..i * 2 + 2]);
    }
    out
}

/// Batch softmax of `advantages / lambda` with a max shift.
pub fn softmax_weights(advantages: &[f64], lambda: f64) -> Vec<f64> {
    let scaled: Vec<f64> = advantages.iter().map(|a| a / lambda).collect();
    let m = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|x| (x - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub struct Agent {
    pub hp: RisHyperparams,
    pub policy: Policy,
    pub critic: Critic,
    pub highlevel: HighLevelPolicy,
    /// Arena for update graphs, taken out of `self` while building a loss.
    graph: Graph,
    /// Arena for forward-only evaluations (heads, EMA densities).
    scratch: Graph,
    noise_buf: Vec<f64>,
}

impl Agent {
    pub fn new(hp: RisHyperparams, rng: &mut ChaCha12Rng) -> Result<Self> {
        hp.validate()?;
        let policy = Policy::init(rng, &hp.hidden);
        let critic = Critic::init(rng, &hp.hidden);
        let highlevel = HighLevelPolicy::init(rng, &hp.hidden);
        Ok(Agent {
            hp,
            policy,
            critic,
            highlevel,
            graph: Graph::new(),
            scratch: Graph::new(),
            noise_buf: Vec::new(),
        })
    }

    // -- plain evaluations (scratch graph, no gradients) ----------------------

    /// Policy head for one (state, goal) pair.
    pub fn policy_params_for(
        &mut self,
        state: (f64, f64),
        goal: (f64, f64),
    ) -> SquashedGaussianParams {
        let g = &mut self.scratch;
        g.clear();
        let bound = bind_params(g, &self.policy.net.params, false);
        let input = g.leaf(1, 4, &[state.0, state.1, goal.0, goal.1], false);
        let (mean, raw) = self
            .policy
            .net
            .forward(g, &self.policy.net.params, &bound, input)
            .expect("policy net is well-formed by construction");
        SquashedGaussianParams::new(g.value(mean).to_vec(), g.value(raw).to_vec())
    }

    /// Stochastic action for experience collection.
    pub fn act(&mut self, state: (f64, f64), goal: (f64, f64), rng: &mut ChaCha12Rng) -> (f64, f64) {
        let p = self.policy_params_for(state, goal);
        let mut noise = [0.0; ACTION_DIM];
        fill_standard_normal(rng, &mut noise);
        let (a, _) = squashed_sample(&p, &noise);
        (a[0], a[1])
    }

    /// Deterministic action (squashed mean) for evaluation.
    pub fn act_mean(&mut self, state: (f64, f64), goal: (f64, f64)) -> (f64, f64) {
        let p = self.policy_params_for(state, goal);
        let a = squashed_mean_action(&p);
        (a[0], a[1])
    }

    /// Laplace head for one (state, goal) pair.
    pub fn highlevel_params_for(
        &mut self,
        state: (f64, f64),
        goal: (f64, f64),
    ) -> DiagLaplaceParams {
        let (loc, raw) = self.highlevel_heads(&[state.0, state.1, goal.0, goal.1]);
        DiagLaplaceParams::from_raw(loc, raw)
    }

    /// Subgoal location-head means for a set of (state, goal) pairs.
    pub fn predict_subgoals(&mut self, pairs: &[crate::env::StateGoal]) -> Vec<(f64, f64)> {
        let mut input = Vec::with_capacity(pairs.len() * 4);
        for &(s, goal) in pairs {
            input.extend_from_slice(&[s.0, s.1, goal.0, goal.1]);
        }
        let (loc, _) = self.highlevel_heads(&input);
        loc.chunks_exact(2).map(|c| (c[0], c[1])).collect()
    }

    /// High-level head outputs for a flat `[n * 4]` (state||goal) input.
    fn highlevel_heads(&mut self, input: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = input.len() / 4;
        let g = &mut self.scratch;
        g.clear();
        let bound = bind_params(g, &self.highlevel.net.params, false);
        let inp = g.leaf(n, 4, input, false);
        let (loc, raw) = self
            .highlevel
            .net
            .forward(g, &self.highlevel.net.params, &bound, inp)
            .expect("highlevel net is well-formed by construction");
        (g.value(loc).to_vec(), g.value(raw).to_vec())
    }

    /// EMA-policy head outputs for a flat `[n * 4]` input.
    fn ema_heads(&mut self, input: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = input.len() / 4;
        let g = &mut self.scratch;
        g.clear();
        let bound = bind_params(g, &self.policy.ema, false);
        let inp = g.leaf(n, 4, input, false);
        let (mean, raw) = self
            .policy
            .net
            .forward(g, &self.policy.ema, &bound, inp)
            .expect("EMA copy shares the policy net shape");
        (g.value(mean).to_vec(), g.value(raw).to_vec())
    }

    // -- policy evaluation -----------------------------------------------------

    /// One Bellman regression step for both online critics, then a Polyak
    /// update of their targets. The target is
    /// `r + (1 - done) * gamma * min(Q'1, Q'2)(s', a', g)` with one fresh
    /// policy action at s'; no entropy term.
    pub fn critic_update(&mut self, batch: &[Transition], rng: &mut ChaCha12Rng) -> Result<f64> {
        let loss = self.critic_backward(batch, rng)?;
        adam_step(&mut self.critic.q1, &mut self.critic.adam_q1, self.hp.lr_critic, ADAM_BETA1, ADAM_BETA2, ADAM_EPS)?;
        adam_step(&mut self.critic.q2, &mut self.critic.adam_q2, self.hp.lr_critic, ADAM_BETA1, ADAM_BETA2, ADAM_EPS)?;
        polyak_update(&mut self.critic.target_q1, &self.critic.q1, self.hp.tau)?;
        polyak_update(&mut self.critic.target_q2, &self.critic.q2, self.hp.tau)?;
        Ok(loss)
    }

    /// Critic loss value without touching any parameters (clone the rng to
    /// evaluate the same stochastic loss at perturbed parameters).
    pub fn critic_loss(&mut self, batch: &[Transition], rng: &mut ChaCha12Rng) -> Result<f64> {
        self.critic_phase(batch, rng, false)
    }

    /// Critic loss plus gradients written into the critic parameter sets;
    /// no optimizer step. Gradients are zeroed first.
    pub fn critic_backward(&mut self, batch: &[Transition], rng: &mut ChaCha12Rng) -> Result<f64> {
        self.critic_phase(batch, rng, true)
    }

    fn critic_phase(
        &mut self,
        batch: &[Transition],
        rng: &mut ChaCha12Rng,
        backward: bool,
    ) -> Result<f64> {
        let arrays = batch_arrays(batch);
        let n = arrays.n;
        self.noise_buf.resize(n * ACTION_DIM, 0.0);
        fill_standard_normal(rng, &mut self.noise_buf);

        let mut g = std::mem::take(&mut self.graph);
        g.clear();
        let result = self.critic_build_in(&mut g, &arrays, backward);
        self.graph = g;
        result
    }

    fn critic_build_in(&mut self, g: &mut Graph, arrays: &BatchArrays, backward: bool) -> Result<f64> {
        let n = arrays.n;
        let policy_bound = bind_params(g, &self.policy.net.params, false);
        let t1_bound = bind_params(g, &self.critic.target_q1, false);
        let t2_bound = bind_params(g, &self.critic.target_q2, false);
        let q1_bound = bind_params(g, &self.critic.q1, true);
        let q2_bound = bind_params(g, &self.critic.q2, true);

        let s = g.leaf(n, 2, &arrays.s, false);
        let a = g.leaf(n, 2, &arrays.a, false);
        let goal = g.leaf(n, 2, &arrays.g, false);
        let s2 = g.leaf(n, 2, &arrays.s2, false);

        // Bootstrap value at s' under the current policy and target critics.
        let in2 = g.concat_cols(s2, goal);
        let (mean, raw_ls) =
            self.policy
                .net
                .forward(g, &self.policy.net.params, &policy_bound, in2)?;
        let (a2, _) = squashed_sample_graph(g, mean, raw_ls, &self.noise_buf);
        let sa2 = g.concat_cols(s2, a2);
        let sag2 = g.concat_cols(sa2, goal);
        let hidden = self.critic.hidden.clone();
        let tq1 = mlp_forward_graph(g, &self.critic.target_q1, &t1_bound, sag2, &hidden, Activation::Relu)?;
        let tq2 = mlp_forward_graph(g, &self.critic.target_q2, &t2_bound, sag2, &hidden, Activation::Relu)?;
        let tmin = g.min(tq1, tq2);
        let r = g.leaf(n, 1, &arrays.r, false);
        let mask: Vec<f64> = arrays
            .done
            .iter()
            .map(|d| (1.0 - d) * self.hp.gamma)
            .collect();
        let mask = g.leaf(n, 1, &mask, false);
        let boot = g.mul(mask, tmin);
        let y = g.add(r, boot);

        let sa = g.concat_cols(s, a);
        let sag = g.concat_cols(sa, goal);
        let q1 = mlp_forward_graph(g, &self.critic.q1, &q1_bound, sag, &hidden, Activation::Relu)?;
        let q2 = mlp_forward_graph(g, &self.critic.q2, &q2_bound, sag, &hidden, Activation::Relu)?;
        let d1 = g.sub(q1, y);
        let d2 = g.sub(q2, y);
        let e1 = g.square(d1);
        let e2 = g.square(d2);
        let l1 = g.mean_all(e1);
        let l2 = g.mean_all(e2);
        let loss = g.add(l1, l2);
        let loss_value = g.scalar(loss);
        if !loss_value.is_finite() {
            return Err(RisError::NonFinite(format!(
                "critic loss is {loss_value} (q1 {}, q2 {})",
                g.scalar(l1),
                g.scalar(l2)
            )));
        }
        if backward {
            g.backward(loss)?;
            self.critic.q1.zero_grads();
            self.critic.q2.zero_grads();
            q1_bound.accumulate_grads(g, &mut self.critic.q1);
            q2_bound.accumulate_grads(g, &mut self.critic.q2);
        }
        Ok(loss_value)
    }

    // -- values and subgoal costs -----------------------------------------------

    /// Unclipped `min(Q1, Q2)(s, a, g)` with one policy sample per row.
    /// `states`/`goals` are flat `[n * 2]`.
    pub fn value_batch(&mut self, states: &[f64], goals: &[f64], rng: &mut ChaCha12Rng) -> Vec<f64> {
        let n = states.len() / 2;
        self.noise_buf.resize(n * ACTION_DIM, 0.0);
        fill_standard_normal(rng, &mut self.noise_buf);
        let g = &mut self.scratch;
        g.clear();
        let policy_bound = bind_params(g, &self.policy.net.params, false);
        let q1_bound = bind_params(g, &self.critic.q1, false);
        let q2_bound = bind_params(g, &self.critic.q2, false);
        let s = g.leaf(n, 2, states, false);
        let goal = g.leaf(n, 2, goals, false);
        let input = g.concat_cols(s, goal);
        let (mean, raw_ls) = self
            .policy
            .net
            .forward(g, &self.policy.net.params, &policy_bound, input)
            .expect("policy net is well-formed by construction");
        let (a, _) = squashed_sample_graph(g, mean, raw_ls, &self.noise_buf);
        let sa = g.concat_cols(s, a);
        let sag = g.concat_cols(sa, goal);
        let q1 = mlp_forward_graph(g, &self.critic.q1, &q1_bound, sag, &self.critic.hidden, Activation::Relu)
            .expect("critic net is well-formed by construction");
        let q2 = mlp_forward_graph(g, &self.critic.q2, &q2_bound, sag, &self.critic.hidden, Activation::Relu)
            .expect("critic net is well-formed by construction");
        let qmin = g.min(q1, q2);
        g.value(qmin).to_vec()
    }

    /// `V(s, g)` for a single pair (one sampled action, twin minimum),
    /// unclipped; the subgoal cost applies the clip.
    pub fn value(&mut self, s: (f64, f64), goal: (f64, f64), rng: &mut ChaCha12Rng) -> f64 {
        self.value_batch(&[s.0, s.1], &[goal.0, goal.1], rng)[0]
    }

    pub fn clip_value(&self, v: f64) -> f64 {
        v.clamp(self.hp.value_clip.0, self.hp.value_clip.1)
    }

    /// `max(|V(s, s_g)|, |V(s_g, g)|)` on clipped values, batched.
    pub fn subgoal_cost_batch(
        &mut self,
        states: &[f64],
        subgoals: &[f64],
        goals: &[f64],
        rng: &mut ChaCha12Rng,
    ) -> Vec<f64> {
        let leg1 = self.value_batch(states, subgoals, rng);
        let leg2 = self.value_batch(subgoals, goals, rng);
        leg1.iter()
            .zip(leg2.iter())
            .map(|(&v1, &v2)| self.clip_value(v1).abs().max(self.clip_value(v2).abs()))
            .collect()
    }

    /// Subgoal cost for a single triple.
    pub fn subgoal_cost(
        &mut self,
        s: (f64, f64),
        s_g: (f64, f64),
        goal: (f64, f64),
        rng: &mut ChaCha12Rng,
    ) -> f64 {
        self.subgoal_cost_batch(&[s.0, s.1], &[s_g.0, s_g.1], &[goal.0, goal.1], rng)[0]
    }

    /// One Laplace draw per row from already-computed head outputs.
    fn draw_subgoals_from_heads(
        loc: &[f64],
        raw: &[f64],
        rng: &mut ChaCha12Rng,
        noise_buf: &mut Vec<f64>,
    ) -> Vec<f64> {
        let len = loc.len();
        noise_buf.resize(len, 0.0);
        fill_centered_uniform(rng, noise_buf);
        let mut out = vec![0.0; len];
        for i in 0..len {
            let b = raw[i]
                .clamp(crate::dist::LOG_STD_MIN, crate::dist::LOG_STD_MAX)
                .exp();
            let u = noise_buf[i];
            out[i] = loc[i] - b * u.signum() * (1.0 - 2.0 * u.abs()).ln();
        }
        out
    }

    /// Monte-Carlo advantage of candidate subgoals against the current
    /// high-level distribution: mean cost of M baseline samples minus the
    /// candidate's cost. All values are constants (no gradients). The M+1
    /// cost evaluations run as one stacked batch.
    pub fn highlevel_advantage_batch(
        &mut self,
        states: &[f64],
        goals: &[f64],
        candidates: &[f64],
        rng: &mut ChaCha12Rng,
    ) -> Vec<f64> {
        let n = states.len() / 2;
        let m = self.hp.advantage_samples;
        let input = interleave_pairs(states, goals);
        let (loc, raw) = self.highlevel_heads(&input);
        let mut noise_buf = Vec::new();

        let mut stack_states = Vec::with_capacity((m + 1) * n * 2);
        let mut stack_subgoals = Vec::with_capacity((m + 1) * n * 2);
        let mut stack_goals = Vec::with_capacity((m + 1) * n * 2);
        for _ in 0..m {
            let draws = Self::draw_subgoals_from_heads(&loc, &raw, rng, &mut noise_buf);
            stack_states.extend_from_slice(states);
            stack_subgoals.extend_from_slice(&draws);
            stack_goals.extend_from_slice(goals);
        }
        stack_states.extend_from_slice(states);
        stack_subgoals.extend_from_slice(candidates);
        stack_goals.extend_from_slice(goals);

        let costs = self.subgoal_cost_batch(&stack_states, &stack_subgoals, &stack_goals, rng);
        (0..n)
            .map(|i| {
                let baseline: f64 = (0..m).map(|j| costs[j * n + i]).sum();
                baseline / m as f64 - costs[m * n + i]
            })
            .collect()
    }

    /// Advantage for one (s, g, s_g) triple.
    pub fn highlevel_advantage(
        &mut self,
        s: (f64, f64),
        goal: (f64, f64),
        s_g: (f64, f64),
        rng: &mut ChaCha12Rng,
    ) -> f64 {
        self.highlevel_advantage_batch(&[s.0, s.1], &[goal.0, goal.1], &[s_g.0, s_g.1], rng)[0]
    }

    // -- high-level policy improvement --------------------------------------------

    /// Weighted maximum likelihood on replay candidates: weights are the
    /// batch softmax of advantages / lambda; advantages are constants.
    pub fn highlevel_update(
        &mut self,
        batch: &[Transition],
        candidates: &[(f64, f64)],
        rng: &mut ChaCha12Rng,
    ) -> Result<f64> {
        if batch.len() != candidates.len() {
            return Err(RisError::Usage(format!(
                "candidate batch {} does not align with transition batch {}",
                candidates.len(),
                batch.len()
            )));
        }
        let arrays = batch_arrays(batch);
        let cand: Vec<f64> = candidates.iter().flat_map(|&(x, y)| [x, y]).collect();
        let advantages = self.highlevel_advantage_batch(&arrays.s, &arrays.g, &cand, rng);
        let weights = softmax_weights(&advantages, self.hp.lambda);
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(RisError::NonFinite(
                "softmax advantage weights are not finite".into(),
            ));
        }
        let loss = self.highlevel_weighted_loss(batch, candidates, &weights, true)?;
        adam_step(&mut self.highlevel.net.params, &mut self.highlevel.adam, self.hp.lr_highlevel, ADAM_BETA1, ADAM_BETA2, ADAM_EPS)?;
        Ok(loss)
    }

    /// The weighted maximum-likelihood objective itself:
    /// `-sum_i w_i log pi_H(s_g,i | s_i, g_i)` with caller-supplied constant
    /// weights. With `backward` the gradients land in the high-level
    /// parameter set (zeroed first); no optimizer step either way.
    pub fn highlevel_weighted_loss(
        &mut self,
        batch: &[Transition],
        candidates: &[(f64, f64)],
        weights: &[f64],
        backward: bool,
    ) -> Result<f64> {
        if batch.len() != candidates.len() || batch.len() != weights.len() {
            return Err(RisError::Usage(format!(
                "weighted-ML sizes disagree: batch {}, candidates {}, weights {}",
                batch.len(),
                candidates.len(),
                weights.len()
            )));
        }
        let arrays = batch_arrays(batch);
        let cand: Vec<f64> = candidates.iter().flat_map(|&(x, y)| [x, y]).collect();
        let mut g = std::mem::take(&mut self.graph);
        g.clear();
        let result = self.highlevel_weighted_ml_in(&mut g, &arrays, &cand, weights, backward);
        self.graph = g;
        result
    }

    fn highlevel_weighted_ml_in(
        &mut self,
        g: &mut Graph,
        arrays: &BatchArrays,
        cand: &[f64],
        weights: &[f64],
        backward: bool,
    ) -> Result<f64> {
        let n = arrays.n;
        let bound = bind_params(g, &self.highlevel.net.params, true);
        let input = interleave_pairs(&arrays.s, &arrays.g);
        let inp = g.leaf(n, 4, &input, false);
        let (loc, raw) = self
            .highlevel
            .net
            .forward(g, &self.highlevel.net.params, &bound, inp)?;
        let targets = g.leaf(n, 2, cand, false);
        let lp = crate::dist::laplace_log_prob_graph(g, loc, raw, targets);
        let w = g.leaf(n, 1, weights, false);
        let weighted = g.mul(lp, w);
        let total = g.sum_all(weighted);
        let loss = g.neg(total);
        let loss_value = g.scalar(loss);
        if !loss_value.is_finite() {
            return Err(RisError::NonFinite(format!("high-level loss is {loss_value}")));
        }
        if backward {
            g.backward(loss)?;
            self.highlevel.net.params.zero_grads();
            bound.accumulate_grads(g, &mut self.highlevel.net.params);
        }
        Ok(loss_value)
    }

    /// Ablation: descend the expected subgoal cost directly through
    /// reparametrized Laplace samples, with the critic and policy frozen.
    pub fn highlevel_update_direct_cost(
        &mut self,
        batch: &[Transition],
        rng: &mut ChaCha12Rng,
    ) -> Result<f64> {
        let arrays = batch_arrays(batch);
        let n = arrays.n;
        let mut lap_noise = vec![0.0; n * STATE_DIM];
        fill_centered_uniform(rng, &mut lap_noise);
        let mut act_noise1 = vec![0.0; n * ACTION_DIM];
        let mut act_noise2 = vec![0.0; n * ACTION_DIM];
        fill_standard_normal(rng, &mut act_noise1);
        fill_standard_normal(rng, &mut act_noise2);

        let mut g = std::mem::take(&mut self.graph);
        g.clear();
        let result =
            self.highlevel_direct_cost_in(&mut g, &arrays, &lap_noise, &act_noise1, &act_noise2);
        self.graph = g;
        result
    }

    fn highlevel_direct_cost_in(
        &mut self,
        g: &mut Graph,
        arrays: &BatchArrays,
        lap_noise: &[f64],
        act_noise1: &[f64],
        act_noise2: &[f64],
    ) -> Result<f64> {
        let n = arrays.n;
        let hl_bound = bind_params(g, &self.highlevel.net.params, true);
        let policy_bound = bind_params(g, &self.policy.net.params, false);
        let q1_bound = bind_params(g, &self.critic.q1, false);
        let q2_bound = bind_params(g, &self.critic.q2, false);

        let input = interleave_pairs(&arrays.s, &arrays.g);
        let inp = g.leaf(n, 4, &input, false);
        let (loc, raw) = self
            .highlevel
            .net
            .forward(g, &self.highlevel.net.params, &hl_bound, inp)?;
        let sg = crate::dist::laplace_sample_graph(g, loc, raw, lap_noise);

        let s = g.leaf(n, 2, &arrays.s, false);
        let goal = g.leaf(n, 2, &arrays.g, false);

        // |V(s, sg)| and |V(sg, g)| with gradients flowing into sg.
        let (lo, hi) = self.hp.value_clip;
        let hidden = self.critic.hidden.clone();
        let mut legs = Vec::with_capacity(2);
        for (from, to, noise) in [(s, sg, act_noise1), (sg, goal, act_noise2)] {
            let pin = g.concat_cols(from, to);
            let (mean, raw_ls) =
                self.policy
                    .net
                    .forward(g, &self.policy.net.params, &policy_bound, pin)?;
            let (a, _) = squashed_sample_graph(g, mean, raw_ls, noise);
            let sa = g.concat_cols(from, a);
            let sag = g.concat_cols(sa, to);
            let q1 = mlp_forward_graph(g, &self.critic.q1, &q1_bound, sag, &hidden, Activation::Relu)?;
            let q2 = mlp_forward_graph(g, &self.critic.q2, &q2_bound, sag, &hidden, Activation::Relu)?;
            let qmin = g.min(q1, q2);
            let clipped = g.clamp(qmin, lo, hi);
            legs.push(g.abs(clipped));
        }
        let cost = g.max(legs[0], legs[1]);
        let loss = g.mean_all(cost);
        let loss_value = g.scalar(loss);
        if !loss_value.is_finite() {
            return Err(RisError::NonFinite(format!(
                "direct-cost high-level loss is {loss_value}"
            )));
        }
        g.backward(loss)?;
        self.highlevel.net.params.zero_grads();
        hl_bound.accumulate_grads(g, &mut self.highlevel.net.params);
        adam_step(&mut self.highlevel.net.params, &mut self.highlevel.adam, self.hp.lr_highlevel, ADAM_BETA1, ADAM_BETA2, ADAM_EPS)?;
        Ok(loss_value)
    }

    // -- prior policy ---------------------------------------------------------------

    /// Subgoal batches conditioning the prior mixture: I draws per row from
    /// the high-level policy (or a Laplace around oracle midpoints).
    fn prior_subgoals(
        &mut self,
        mode: PriorMode,
        states: &[f64],
        goals: &[f64],
        oracle: Option<&MidpointTable>,
        rng: &mut ChaCha12Rng,
    ) -> Result<Vec<Vec<f64>>> {
        let n = states.len() / 2;
        let count = self.hp.prior_samples;
        match mode {
            PriorMode::Uniform | PriorMode::MovingAverage => Ok(Vec::new()),
            PriorMode::ImaginedSubgoals => {
                let input = interleave_pairs(states, goals);
                let (loc, raw) = self.highlevel_heads(&input);
                let mut noise_buf = Vec::new();
                Ok((0..count)
                    .map(|_| Self::draw_subgoals_from_heads(&loc, &raw, rng, &mut noise_buf))
                    .collect())
            }
            PriorMode::OracleSubgoals { scale } => {
                let table = oracle.ok_or_else(|| {
                    RisError::Usage(
                        "oracle-subgoal prior requires a midpoint table for the maze".into(),
                    )
                })?;
                let mut centers = vec![0.0; n * 2];
                for i in 0..n {
                    let s = (states[i * 2], states[i * 2 + 1]);
                    let goal = (goals[i * 2], goals[i * 2 + 1]);
                    let mid = table.midpoint(s, goal).unwrap_or(s);
                    centers[i * 2] = mid.0;
                    centers[i * 2 + 1] = mid.1;
                }
                let mut out = Vec::with_capacity(count);
                for _ in 0..count {
                    let mut noise = vec![0.0; n * 2];
                    fill_centered_uniform(rng, &mut noise);
                    let mut sg = vec![0.0; n * 2];
                    for i in 0..n * 2 {
                        let u: f64 = noise[i];
                        sg[i] = centers[i] - scale * u.signum() * (1.0 - 2.0 * u.abs()).ln();
                    }
                    out.push(sg);
                }
                Ok(out)
            }
        }
    }

    /// Prior log-density node for an in-graph action. EMA-policy head
    /// outputs enter as constants so no gradient can reach the EMA or
    /// high-level parameters; the action path stays differentiable.
    fn prior_log_prob_node(
        &mut self,
        g: &mut Graph,
        mode: PriorMode,
        states: &[f64],
        goals: &[f64],
        subgoals: &[Vec<f64>],
        action: NodeId,
    ) -> Result<NodeId> {
        let n = states.len() / 2;
        match mode {
            PriorMode::Uniform => {
                // Uniform density on (-1,1)^d: log = -d ln 2.
                let v = vec![-(ACTION_DIM as f64) * std::f64::consts::LN_2; n];
                Ok(g.leaf(n, 1, &v, false))
            }
            PriorMode::MovingAverage => {
                let input = interleave_pairs(states, goals);
                let (mean, raw) = self.ema_heads(&input);
                let mean = g.leaf(n, 2, &mean, false);
                let raw = g.leaf(n, 2, &raw, false);
                Ok(squashed_log_prob_graph(g, mean, raw, action))
            }
            PriorMode::ImaginedSubgoals | PriorMode::OracleSubgoals { .. } => {
                self.mixture_prior_node(g, states, subgoals, action)
            }
        }
    }

    /// `log( (1/I) sum_i exp(log pi_ema(a | s, sg_i)) + eps )` via a
    /// max-shifted log-sum-exp. The shift is clamped below at ln(eps) so the
    /// floor dominates cleanly when every component underflows.
    fn mixture_prior_node(
        &mut self,
        g: &mut Graph,
        states: &[f64],
        subgoals: &[Vec<f64>],
        action: NodeId,
    ) -> Result<NodeId> {
        let n = states.len() / 2;
        let count = subgoals.len();
        if count == 0 {
            return Err(RisError::Usage("mixture prior needs subgoal samples".into()));
        }
        let eps = self.hp.eps_prior;

        // One stacked EMA forward for all I components.
        let mut stacked = Vec::with_capacity(count * n * 4);
        for sg in subgoals {
            stacked.extend_from_slice(&interleave_pairs(states, sg));
        }
        let (mean_all, raw_all) = self.ema_heads(&stacked);
        let mut components = Vec::with_capacity(count);
        for k in 0..count {
            let mean = g.leaf(n, 2, &mean_all[k * n * 2..(k + 1) * n * 2], false);
            let raw = g.leaf(n, 2, &raw_all[k * n * 2..(k + 1) * n * 2], false);
            components.push(squashed_log_prob_graph(g, mean, raw, action));
        }

        let mut shift = vec![eps.ln(); n];
        for comp in &components {
            let vals = g.value(*comp);
            for i in 0..n {
                if vals[i] > shift[i] {
                    shift[i] = vals[i];
                }
            }
        }
        let shift_node = g.leaf(n, 1, &shift, false);
        let mut acc: Option<NodeId> = None;
        for comp in &components {
            let d = g.sub(*comp, shift_node);
            let e = g.exp(d);
            acc = Some(match acc {
                None => e,
                Some(prev) => g.add(prev, e),
            });
        }
        let sum = acc.expect("count > 0");
        let mean_mix = g.mul_scalar(sum, 1.0 / count as f64);
        let floor: Vec<f64> = shift.iter().map(|&c| eps * (-c).exp()).collect();
        let floor = g.leaf(n, 1, &floor, false);
        let inside = g.add(mean_mix, floor);
        let ln = g.ln(inside);
        Ok(g.add(ln, shift_node))
    }

    /// Prior log-density of one action as a plain number (diagnostics and
    /// tests); shares the graph path with the policy update.
    pub fn prior_log_prob(
        &mut self,
        mode: PriorMode,
        s: (f64, f64),
        goal: (f64, f64),
        action: (f64, f64),
        oracle: Option<&MidpointTable>,
        rng: &mut ChaCha12Rng,
    ) -> Result<f64> {
        let states = [s.0, s.1];
        let goals = [goal.0, goal.1];
        let subgoals = self.prior_subgoals(mode, &states, &goals, oracle, rng)?;
        self.prior_log_prob_from_subgoals(mode, &states, &goals, &subgoals, action)
    }

    /// Same as `prior_log_prob` but with the subgoal draws supplied by the
    /// caller, which pins the mixture components exactly.
    pub fn prior_log_prob_from_subgoals(
        &mut self,
        mode: PriorMode,
        states: &[f64],
        goals: &[f64],
        subgoals: &[Vec<f64>],
        action: (f64, f64),
    ) -> Result<f64> {
        let mut g = std::mem::take(&mut self.graph);
        g.clear();
        let a = g.leaf(1, 2, &[action.0, action.1], false);
        let result = self
            .prior_log_prob_node(&mut g, mode, states, goals, subgoals, a)
            .map(|node| g.value(node)[0]);
        self.graph = g;
        result
    }

    // -- policy improvement -----------------------------------------------------------

    /// KL-regularized policy step:
    /// `loss = mean( alpha * (log pi(a|s,g) - log prior(a|s,g)) - min Q(s,a,g) )`
    /// over N reparametrized samples, then the EMA update of the prior
    /// parameters. Returns (loss, mean KL estimate).
    pub fn policy_update(
        &mut self,
        batch: &[Transition],
        mode: PriorMode,
        oracle: Option<&MidpointTable>,
        rng: &mut ChaCha12Rng,
    ) -> Result<(f64, f64)> {
        let (loss, kl) = self.policy_phase(batch, mode, oracle, rng, true)?;
        adam_step(&mut self.policy.net.params, &mut self.policy.adam, self.hp.lr_policy, ADAM_BETA1, ADAM_BETA2, ADAM_EPS)?;
        polyak_update(&mut self.policy.ema, &self.policy.net.params, self.hp.tau)?;
        Ok((loss, kl))
    }

    /// Policy loss value without touching any parameters.
    pub fn policy_loss(
        &mut self,
        batch: &[Transition],
        mode: PriorMode,
        oracle: Option<&MidpointTable>,
        rng: &mut ChaCha12Rng,
    ) -> Result<(f64, f64)> {
        self.policy_phase(batch, mode, oracle, rng, false)
    }

    /// Policy loss plus gradients written into the policy parameter set;
    /// no optimizer step and no EMA update.
    pub fn policy_backward(
        &mut self,
        batch: &[Transition],
        mode: PriorMode,
        oracle: Option<&MidpointTable>,
        rng: &mut ChaCha12Rng,
    ) -> Result<(f64, f64)> {
        self.policy_phase(batch, mode, oracle, rng, true)
    }

    fn policy_phase(
        &mut self,
        batch: &[Transition],
        mode: PriorMode,
        oracle: Option<&MidpointTable>,
        rng: &mut ChaCha12Rng,
        backward: bool,
    ) -> Result<(f64, f64)> {
        let arrays = batch_arrays(batch);
        let n = arrays.n;
        let subgoals = self.prior_subgoals(mode, &arrays.s, &arrays.g, oracle, rng)?;
        let n_samples = self.hp.kl_samples;
        let mut noises = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            let mut buf = vec![0.0; n * ACTION_DIM];
            fill_standard_normal(rng, &mut buf);
            noises.push(buf);
        }

        let mut g = std::mem::take(&mut self.graph);
        g.clear();
        let result = self.policy_build_in(&mut g, &arrays, mode, &subgoals, &noises, backward);
        self.graph = g;
        result
    }

    #[allow(clippy::too_many_arguments)]
    fn policy_build_in(
        &mut self,
        g: &mut Graph,
        arrays: &BatchArrays,
        mode: PriorMode,
        subgoals: &[Vec<f64>],
        noises: &[Vec<f64>],
        backward: bool,
    ) -> Result<(f64, f64)> {
        let n = arrays.n;
        let n_samples = noises.len();
        let policy_bound = bind_params(g, &self.policy.net.params, true);
        let q1_bound = bind_params(g, &self.critic.q1, false);
        let q2_bound = bind_params(g, &self.critic.q2, false);
        let s = g.leaf(n, 2, &arrays.s, false);
        let goal = g.leaf(n, 2, &arrays.g, false);
        let input = g.concat_cols(s, goal);
        let hidden = self.critic.hidden.clone();

        let mut kl_sum = 0.0;
        let mut per_sample = Vec::with_capacity(n_samples);
        for noise in noises {
            let (mean, raw_ls) =
                self.policy
                    .net
                    .forward(g, &self.policy.net.params, &policy_bound, input)?;
            let (a, logp) = squashed_sample_graph(g, mean, raw_ls, noise);
            let prior = self.prior_log_prob_node(g, mode, &arrays.s, &arrays.g, subgoals, a)?;
            let kl = g.sub(logp, prior);
            let sa = g.concat_cols(s, a);
            let sag = g.concat_cols(sa, goal);
            let q1 = mlp_forward_graph(g, &self.critic.q1, &q1_bound, sag, &hidden, Activation::Relu)?;
            let q2 = mlp_forward_graph(g, &self.critic.q2, &q2_bound, sag, &hidden, Activation::Relu)?;
            let qmin = g.min(q1, q2);
            let scaled_kl = g.mul_scalar(kl, self.hp.alpha);
            let per = g.sub(scaled_kl, qmin);
            kl_sum += g.value(kl).iter().sum::<f64>();
            per_sample.push(per);
        }
        let mut acc = per_sample[0];
        for node in &per_sample[1..] {
            acc = g.add(acc, *node);
        }
        let scaled = g.mul_scalar(acc, 1.0 / n_samples as f64);
        let loss = g.mean_all(scaled);
        let loss_value = g.scalar(loss);
        if !loss_value.is_finite() {
            return Err(RisError::NonFinite(format!("policy loss is {loss_value}")));
        }
        if backward {
            g.backward(loss)?;
            self.policy.net.params.zero_grads();
            policy_bound.accumulate_grads(g, &mut self.policy.net.params);
        }
        let kl_mean = kl_sum / (n * n_samples) as f64;
        Ok((loss_value, kl_mean))
    }

    // -- checkpointing ---------------------------------------------------------------

    /// All network parameters under stable namespaces.
    pub fn to_parameter_set(&self) -> ParameterSet {
        let mut out = ParameterSet::new();
        out.insert_namespaced("policy", &self.policy.net.params).expect("fresh");
        out.insert_namespaced("policy_ema", &self.policy.ema).expect("fresh");
        out.insert_namespaced("q1", &self.critic.q1).expect("fresh");
        out.insert_namespaced("q2", &self.critic.q2).expect("fresh");
        out.insert_namespaced("target_q1", &self.critic.target_q1).expect("fresh");
        out.insert_namespaced("target_q2", &self.critic.target_q2).expect("fresh");
        out.insert_namespaced("highlevel", &self.highlevel.net.params).expect("fresh");
        out
    }

    /// Restores network parameters from a checkpoint set, validating every
    /// tensor name and shape.
    pub fn load_parameter_set(&mut self, set: &ParameterSet) -> Result<()> {
        let targets: [(&str, &mut ParameterSet); 7] = [
            ("policy", &mut self.policy.net.params),
            ("policy_ema", &mut self.policy.ema),
            ("q1", &mut self.critic.q1),
            ("q2", &mut self.critic.q2),
            ("target_q1", &mut self.critic.target_q1),
            ("target_q2", &mut self.critic.target_q2),
            ("highlevel", &mut self.highlevel.net.params),
        ];
        for (ns, dst) in targets {
            let src = set.extract_namespace(ns);
            if src.len() != dst.len() {
                return Err(RisError::Checkpoint(format!(
                    "namespace {ns:?}: checkpoint has {} tensors, network expects {}",
                    src.len(),
                    dst.len()
                )));
            }
            for idx in 0..dst.len() {
                let (name, tensor) = dst.at_mut(idx);
                let loaded = src.get(name).ok_or_else(|| {
                    RisError::Checkpoint(format!("checkpoint is missing tensor {ns}.{name}"))
                })?;
                if loaded.shape != tensor.shape {
                    return Err(RisError::Checkpoint(format!(
                        "tensor {ns}.{name} has shape {:?}, network expects {:?}",
                        loaded.shape, tensor.shape
                    )));
                }
                tensor.data.copy_from_slice(&loaded.data);
            }
        }
        Ok(())
    }
}
