//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured quantity when it holds (a failed assert prints the details).
//!
//! The heavy criteria share one set of trained runs (4 seeds of the full
//! method, 4 uniform-prior, 4 oracle-subgoal, 1 unregularized high-level
//! variant) built lazily in a `OnceLock` and reused by every test that
//! needs them. Artifacts land in the cargo test temp dir.

use ris::agent::{Agent, PriorMode, RisHyperparams};
use ris::config::{MazeConfig, TrainConfig, VariantToken};
use ris::env::{make_maze, MazeKind, PointMass, Rect};
use ris::metrics::MetricsRow;
use ris::oracle;
use ris::replay::{RelabelKind, ReplayBuffer, Transition};
use ris::rng::{fill_centered_uniform, fill_standard_normal, stream_rng, Stream};
use ris::tensor::ParameterSet;
use ris::train::{agent_from_checkpoint, evaluate_checkpoint, train};
use rand::RngExt;
use std::path::PathBuf;
use std::sync::OnceLock;

// ---------------------------------------------------------------------------
// Desk-scale benchmark configuration
//
// All reference navigation hyperparameters are kept: gamma, tau,
// alpha, lambda, the eps floor, learning rates, I = 10 prior samples, N = 1
// KL sample, 1 training batch per env step, HER 20/40/40, value clip. Three
// knobs shrink to desk scale so the whole suite runs on a laptop CPU:
// batch 2048 -> 128, hidden [256,256] -> [64,64], advantage baseline
// M 10 -> 4. The agent step is 0.25 units so the hardest U-maze task needs
// ~72 steps, which is the long-horizon regime the benchmark is about.
// ---------------------------------------------------------------------------

const BENCH_BATCH: usize = 128;
const BENCH_HIDDEN: [usize; 2] = [64, 64];
const BENCH_ADVANTAGE_SAMPLES: usize = 4;
const BENCH_MAX_STEP: f64 = 0.25;
const BENCH_TOTAL_STEPS: u64 = 60_000;
const BENCH_WARMUP: u64 = 10_000;
const BENCH_EVAL_EVERY: u64 = 5_000;
const BENCH_EVAL_EPISODES: u32 = 50;
const BENCH_SEEDS: [u64; 4] = [101, 202, 303, 404];
const SUBGOAL_PAIRS: usize = 100;

fn desk_hp() -> RisHyperparams {
    RisHyperparams {
        batch_size: BENCH_BATCH,
        hidden: BENCH_HIDDEN.to_vec(),
        advantage_samples: BENCH_ADVANTAGE_SAMPLES,
        ..RisHyperparams::default()
    }
}

fn bench_config(mode: VariantToken, seed: u64, out: PathBuf) -> TrainConfig {
    TrainConfig {
        maze: MazeConfig::Kind(MazeKind::U),
        max_step: BENCH_MAX_STEP,
        episode_limit: 100,
        hp: desk_hp(),
        seed,
        total_env_steps: BENCH_TOTAL_STEPS,
        warmup_steps: BENCH_WARMUP,
        eval_every: BENCH_EVAL_EVERY,
        eval_episodes: BENCH_EVAL_EPISODES,
        replay_capacity: 1_000_000,
        mode,
        oracle_scale: 0.5,
        subgoal_eval_pairs: SUBGOAL_PAIRS,
        oracle_resolution: 4,
        checkpoint_every: 0,
        out_dir: out,
    }
}

struct BenchRun {
    mode: VariantToken,
    seed: u64,
    rows: Vec<MetricsRow>,
    final_checkpoint: PathBuf,
}

struct BenchArtifacts {
    runs: Vec<BenchRun>,
}

impl BenchArtifacts {
    fn rows_for(&self, mode: VariantToken) -> Vec<&BenchRun> {
        self.runs.iter().filter(|r| r.mode == mode).collect()
    }

    /// Mean eval success across seeds of `mode` at eval index `idx`.
    fn mean_success_at(&self, mode: VariantToken, idx: usize) -> f64 {
        let runs = self.rows_for(mode);
        runs.iter().map(|r| r.rows[idx].eval_success).sum::<f64>() / runs.len() as f64
    }

    fn eval_count(&self) -> usize {
        self.runs[0].rows.len()
    }
}

fn bench_artifacts() -> &'static BenchArtifacts {
    static ARTIFACTS: OnceLock<BenchArtifacts> = OnceLock::new();
    ARTIFACTS.get_or_init(|| {
        let base = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("ris_benchmark");
        let _ = std::fs::remove_dir_all(&base);
        let mut jobs: Vec<(VariantToken, u64)> = Vec::new();
        for &seed in &BENCH_SEEDS {
            jobs.push((VariantToken::Ris, seed));
            jobs.push((VariantToken::Uniform, seed));
            jobs.push((VariantToken::Oracle, seed));
        }
        jobs.push((VariantToken::NoReg, BENCH_SEEDS[0]));

        // Independent runs on a small worker pool; each run is
        // single-threaded per the engine's concurrency model.
        let workers = std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(2)
            .min(4);
        let jobs = std::sync::Mutex::new(jobs);
        let results = std::sync::Mutex::new(Vec::new());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let job = { jobs.lock().unwrap().pop() };
                    let Some((mode, seed)) = job else { break };
                    let out = base.join(format!("{}_{seed}", mode.as_str()));
                    let cfg = bench_config(mode, seed, out);
                    let started = std::time::Instant::now();
                    let outcome = train(&cfg, &mut |_| {}).expect("benchmark run failed");
                    eprintln!(
                        "[bench] {}_{seed} finished in {:.0}s (final eval_success {:.2})",
                        mode.as_str(),
                        started.elapsed().as_secs_f64(),
                        outcome.rows.last().map(|r| r.eval_success).unwrap_or(0.0)
                    );
                    results.lock().unwrap().push(BenchRun {
                        mode,
                        seed,
                        rows: outcome.rows,
                        final_checkpoint: outcome.final_checkpoint,
                    });
                });
            }
        });
        let mut runs = results.into_inner().unwrap();
        runs.sort_by_key(|r| (r.mode.as_str(), r.seed));
        BenchArtifacts { runs }
    })
}

// ---------------------------------------------------------------------------
// Criterion: gradient correctness
// ---------------------------------------------------------------------------

fn flatten_params(p: &ParameterSet) -> Vec<f64> {
    p.iter().flat_map(|(_, t)| t.data.clone()).collect()
}

fn flatten_grads(p: &ParameterSet) -> Vec<f64> {
    p.iter()
        .flat_map(|(_, t)| t.grad.clone().unwrap_or_else(|| vec![0.0; t.len()]))
        .collect()
}

fn write_flat(p: &mut ParameterSet, flat: &[f64]) {
    let mut k = 0;
    for idx in 0..p.len() {
        let (_, t) = p.at_mut(idx);
        for v in t.data.iter_mut() {
            *v = flat[k];
            k += 1;
        }
    }
}

/// Relative error with an absolute floor for near-zero gradients.
fn grad_mismatch(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

#[test]
fn criterion_gradient_correctness() {
    let started = std::time::Instant::now();
    let h = 1e-5;
    let comps_per_trial = 10;
    let mut worst: f64 = 0.0;

    for trial in 0..20u64 {
        let hp = RisHyperparams {
            batch_size: 6,
            hidden: vec![6, 6],
            prior_samples: 3,
            advantage_samples: 2,
            ..RisHyperparams::default()
        };
        let mut agent = Agent::new(hp, &mut stream_rng(trial, Stream::Init, 0)).unwrap();
        // Jitter every parameter (biases init to zero) so no ReLU
        // pre-activation sits exactly on its kink, where central
        // differences see half the one-sided slope.
        {
            let mut jitter = stream_rng(trial, Stream::Init, 1);
            for set in [
                &mut agent.policy.net.params,
                &mut agent.critic.q1,
                &mut agent.critic.q2,
                &mut agent.critic.target_q1,
                &mut agent.critic.target_q2,
                &mut agent.highlevel.net.params,
                &mut agent.policy.ema,
            ] {
                for idx in 0..set.len() {
                    let (_, t) = set.at_mut(idx);
                    for v in t.data.iter_mut() {
                        *v += jitter.random_range(-0.07..0.07);
                    }
                }
            }
        }
        let mut data_rng = stream_rng(trial, Stream::Replay, 0);
        let batch: Vec<Transition> = (0..6)
            .map(|_| {
                Transition::new(
                    (data_rng.random_range(0.5..7.0), data_rng.random_range(0.5..17.0)),
                    (data_rng.random_range(-0.9..0.9), data_rng.random_range(-0.9..0.9)),
                    -1.0,
                    (data_rng.random_range(0.5..7.0), data_rng.random_range(0.5..17.0)),
                    false,
                    (data_rng.random_range(0.5..7.0), data_rng.random_range(0.5..17.0)),
                )
            })
            .collect();
        let candidates: Vec<(f64, f64)> = batch.iter().map(|t| t.next_state).collect();
        let mut comp_rng = stream_rng(trial, Stream::Updates, 9);

        // critic loss wrt critic parameters
        {
            let rng0 = stream_rng(trial, Stream::Updates, 0);
            agent.critic.q1.zero_grads();
            agent.critic.q2.zero_grads();
            agent.critic_backward(&batch, &mut rng0.clone()).unwrap();
            let analytic: Vec<f64> = [&agent.critic.q1, &agent.critic.q2]
                .iter()
                .flat_map(|p| flatten_grads(p))
                .collect();
            let flat0: Vec<f64> = [&agent.critic.q1, &agent.critic.q2]
                .iter()
                .flat_map(|p| flatten_params(p))
                .collect();
            let q1_len = flatten_params(&agent.critic.q1).len();
            for _ in 0..comps_per_trial {
                let k = comp_rng.random_range(0..flat0.len());
                let mut eval = |delta: f64| -> f64 {
                    let mut flat = flat0.clone();
                    flat[k] += delta;
                    let (f1, f2) = flat.split_at(q1_len);
                    write_flat(&mut agent.critic.q1, f1);
                    write_flat(&mut agent.critic.q2, f2);
                    agent.critic_loss(&batch, &mut rng0.clone()).unwrap()
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                eval(0.0);
                worst = worst.max(grad_mismatch(analytic[k], numeric));
                assert!(
                    grad_mismatch(analytic[k], numeric) < 1e-4,
                    "critic trial {trial} comp {k}: analytic {} vs numeric {}",
                    analytic[k],
                    numeric
                );
            }
        }

        // high-level weighted-ML loss wrt high-level parameters
        {
            let rng0 = stream_rng(trial, Stream::Updates, 1);
            let arrays_s: Vec<f64> = batch.iter().flat_map(|t| [t.state.0, t.state.1]).collect();
            let arrays_g: Vec<f64> = batch.iter().flat_map(|t| [t.goal.0, t.goal.1]).collect();
            let cand: Vec<f64> = candidates.iter().flat_map(|&(x, y)| [x, y]).collect();
            let adv =
                agent.highlevel_advantage_batch(&arrays_s, &arrays_g, &cand, &mut rng0.clone());
            let weights = ris::agent::softmax_weights(&adv, agent.hp.lambda);
            agent.highlevel.net.params.zero_grads();
            agent
                .highlevel_weighted_loss(&batch, &candidates, &weights, true)
                .unwrap();
            let analytic = flatten_grads(&agent.highlevel.net.params);
            let flat0 = flatten_params(&agent.highlevel.net.params);
            for _ in 0..comps_per_trial {
                let k = comp_rng.random_range(0..flat0.len());
                let mut eval = |delta: f64| -> f64 {
                    let mut flat = flat0.clone();
                    flat[k] += delta;
                    write_flat(&mut agent.highlevel.net.params, &flat);
                    agent
                        .highlevel_weighted_loss(&batch, &candidates, &weights, false)
                        .unwrap()
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                eval(0.0);
                worst = worst.max(grad_mismatch(analytic[k], numeric));
                assert!(
                    grad_mismatch(analytic[k], numeric) < 1e-4,
                    "highlevel trial {trial} comp {k}: analytic {} vs numeric {}",
                    analytic[k],
                    numeric
                );
            }
        }

        // policy loss wrt policy parameters (imagined-subgoal prior)
        {
            let rng0 = stream_rng(trial, Stream::Updates, 2);
            agent.policy.net.params.zero_grads();
            agent
                .policy_backward(&batch, PriorMode::ImaginedSubgoals, None, &mut rng0.clone())
                .unwrap();
            let analytic = flatten_grads(&agent.policy.net.params);
            let flat0 = flatten_params(&agent.policy.net.params);
            for _ in 0..comps_per_trial {
                let k = comp_rng.random_range(0..flat0.len());
                let mut eval = |delta: f64| -> f64 {
                    let mut flat = flat0.clone();
                    flat[k] += delta;
                    write_flat(&mut agent.policy.net.params, &flat);
                    agent
                        .policy_loss(&batch, PriorMode::ImaginedSubgoals, None, &mut rng0.clone())
                        .unwrap()
                        .0
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                eval(0.0);
                worst = worst.max(grad_mismatch(analytic[k], numeric));
                assert!(
                    grad_mismatch(analytic[k], numeric) < 1e-4,
                    "policy trial {trial} comp {k}: analytic {} vs numeric {}",
                    analytic[k],
                    numeric
                );
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 60.0, "gradient check took {secs:.1}s, budget is 60s");
    println!(
        "PASS gradient correctness: 20 parameterizations x 3 losses, worst relative error {worst:.2e}, {secs:.1}s"
    );
}

// ---------------------------------------------------------------------------
// Criterion: distribution correctness
// ---------------------------------------------------------------------------

fn simpson(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let n = n | 1;
    let h = (hi - lo) / (n - 1) as f64;
    let mut acc = 0.0;
    for i in 0..n {
        let w = if i == 0 || i == n - 1 {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * f(lo + h * i as f64);
    }
    acc * h / 3.0
}

#[test]
fn criterion_distribution_correctness() {
    use ris::dist::*;
    // densities integrate to 1
    let squashed = SquashedGaussianParams::new(vec![0.4], vec![-0.3]);
    let total_sq = simpson(
        &|a| squashed_log_prob(&squashed, &[a]).exp(),
        -1.0 + 1e-9,
        1.0 - 1e-9,
        40_001,
    );
    assert!((total_sq - 1.0).abs() < 1e-3, "squashed integral {total_sq}");
    let laplace = DiagLaplaceParams {
        loc: vec![1.0],
        scale: vec![0.7],
    };
    let total_lap = simpson(&|x| laplace_log_prob(&[x], &laplace).exp(), -30.0, 32.0, 60_001);
    assert!((total_lap - 1.0).abs() < 1e-3, "laplace integral {total_lap}");

    // reparametrized gradients match finite differences of the fixed-noise
    // Monte-Carlo objective
    let mut rng = stream_rng(77, Stream::Init, 0);
    let k = 64;
    let mut noise = vec![0.0; k];
    fill_standard_normal(&mut rng, &mut noise);
    let objective = |mu: f64, ls: f64| -> f64 {
        let p = SquashedGaussianParams::new(vec![mu], vec![ls]);
        noise
            .iter()
            .map(|&n| {
                let (a, _) = squashed_sample(&p, &[n]);
                (a[0] - 0.25) * (a[0] - 0.25)
            })
            .sum::<f64>()
            / k as f64
    };
    let (mu0, ls0) = (0.3, -0.4);
    let h = 1e-6;
    let fd_mu = (objective(mu0 + h, ls0) - objective(mu0 - h, ls0)) / (2.0 * h);
    let fd_ls = (objective(mu0, ls0 + h) - objective(mu0, ls0 - h)) / (2.0 * h);

    let mut g = ris::graph::Graph::new();
    let mean = g.leaf(k, 1, &vec![mu0; k], true);
    let ls = g.leaf(k, 1, &vec![ls0; k], true);
    let (a, _) = squashed_sample_graph(&mut g, mean, ls, &noise);
    let shifted = g.add_scalar(a, -0.25);
    let sq = g.square(shifted);
    let loss = g.mean_all(sq);
    g.backward(loss).unwrap();
    let g_mu: f64 = g.grad(mean).unwrap().iter().sum();
    let g_ls: f64 = g.grad(ls).unwrap().iter().sum();
    let rel_mu = (g_mu - fd_mu).abs() / fd_mu.abs().max(1e-9);
    let rel_ls = (g_ls - fd_ls).abs() / fd_ls.abs().max(1e-9);
    assert!(rel_mu < 1e-3, "{g_mu} vs {fd_mu}");
    assert!(rel_ls < 1e-3, "{g_ls} vs {fd_ls}");

    // Laplace reparametrization too
    let mut unoise = vec![0.0; k];
    fill_centered_uniform(&mut rng, &mut unoise);
    let lap_objective = |loc: f64, raw: f64| -> f64 {
        let p = DiagLaplaceParams::from_raw(vec![loc], vec![raw]);
        unoise
            .iter()
            .map(|&u| {
                let s = laplace_sample(&p, &[u]);
                (s[0] - 0.5) * (s[0] - 0.5)
            })
            .sum::<f64>()
            / k as f64
    };
    let fd_loc = (lap_objective(0.1 + h, -0.2) - lap_objective(0.1 - h, -0.2)) / (2.0 * h);
    let mut g = ris::graph::Graph::new();
    let loc = g.leaf(k, 1, &vec![0.1; k], true);
    let raw = g.leaf(k, 1, &vec![-0.2; k], true);
    let s = laplace_sample_graph(&mut g, loc, raw, &unoise);
    let shifted = g.add_scalar(s, -0.5);
    let sq = g.square(shifted);
    let loss = g.mean_all(sq);
    g.backward(loss).unwrap();
    let g_loc: f64 = g.grad(loc).unwrap().iter().sum();
    assert!((g_loc - fd_loc).abs() / fd_loc.abs().max(1e-9) < 1e-3);

    println!(
        "PASS distribution correctness: integrals {total_sq:.6}/{total_lap:.6}, reparam rel errors {rel_mu:.2e}/{rel_ls:.2e}"
    );
}

// ---------------------------------------------------------------------------
// Criterion: HER relabel mix
// ---------------------------------------------------------------------------

#[test]
fn criterion_her_mix() {
    let spec = make_maze(MazeKind::U);
    let env = PointMass::new(spec.clone());
    let mut buf = ReplayBuffer::new(100_000);
    let mut env_rng = stream_rng(11, Stream::Env, 0);
    let mut traj_rng = stream_rng(11, Stream::Warmup, 0);
    for _ in 0..60 {
        let mut state = env.reset(&mut env_rng).unwrap();
        let mut steps = Vec::new();
        for _ in 0..40 {
            let action = (
                traj_rng.random_range(-1.0..1.0),
                traj_rng.random_range(-1.0..1.0),
            );
            let (next, reward, done) = env.step(&state, action);
            steps.push(Transition::new(
                state.position,
                action,
                reward,
                next.position,
                done,
                state.goal,
            ));
            state = next;
            if done {
                break;
            }
        }
        buf.push_trajectory(steps).unwrap();
    }
    let n = 100_000;
    let mut rng = stream_rng(12, Stream::Replay, 0);
    let (_, kinds) = buf.sample_her_detailed(n, &spec, &mut rng);
    let count = |k: RelabelKind| kinds.iter().filter(|&&x| x == k).count() as f64 / n as f64;
    let (o, r, f) = (
        count(RelabelKind::Original),
        count(RelabelKind::RandomState),
        count(RelabelKind::Future),
    );
    assert!((o - 0.2).abs() < 0.01, "original {o}");
    assert!((r - 0.4).abs() < 0.01, "random {r}");
    assert!((f - 0.4).abs() < 0.01, "future {f}");
    println!("PASS HER mix: observed ({o:.4}, {r:.4}, {f:.4}) vs (0.20, 0.40, 0.40) within 1%");
}

// ---------------------------------------------------------------------------
// Criterion: advantage-softmax mechanics
// ---------------------------------------------------------------------------

#[test]
fn criterion_softmax_mechanics() {
    use ris::agent::softmax_weights;
    let adv = [1.25, -0.5, 3.0, 0.0, 2.25, -4.5];
    let lambda = 0.1;
    let w = softmax_weights(&adv, lambda);
    let sum: f64 = w.iter().sum();
    assert!((sum - 1.0).abs() < 1e-12, "sum {sum}");
    // shift invariance
    let shifted: Vec<f64> = adv.iter().map(|a| a + 123.0).collect();
    let ws = softmax_weights(&shifted, lambda);
    for (a, b) in w.iter().zip(ws.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
    // lambda -> lambda/2 equals doubling all advantages, exactly
    let doubled: Vec<f64> = adv.iter().map(|a| a * 2.0).collect();
    assert_eq!(softmax_weights(&adv, lambda / 2.0), softmax_weights(&doubled, lambda));
    println!("PASS advantage-softmax mechanics: sum-to-one 1e-12, shift-invariant, lambda-scaling exact");
}

// ---------------------------------------------------------------------------
// Criterion: value behaves as a distance (corridor training)
// ---------------------------------------------------------------------------

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(xs: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..xs.len()).collect();
        idx.sort_by(|&i, &j| xs[i].partial_cmp(&xs[j]).unwrap());
        let mut out = vec![0.0; xs.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                out[idx[k]] = avg;
            }
            i = j + 1;
        }
        out
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for i in 0..a.len() {
        num += (ra[i] - mean) * (rb[i] - mean);
        da += (ra[i] - mean) * (ra[i] - mean);
        db += (rb[i] - mean) * (rb[i] - mean);
    }
    num / (da.sqrt() * db.sqrt())
}

#[test]
fn criterion_value_as_distance() {
    let started = std::time::Instant::now();
    let out = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("ris_corridor");
    let _ = std::fs::remove_dir_all(&out);
    let corridor = MazeConfig::Custom {
        bounds: (12.0, 3.0),
        walls: vec![],
        success_radius: 0.5,
        hardest: Some((Rect::new(0.25, 0.25, 1.5, 2.5), Rect::new(10.25, 0.25, 1.5, 2.5))),
    };
    let cfg = TrainConfig {
        maze: corridor.clone(),
        max_step: BENCH_MAX_STEP,
        episode_limit: 100,
        hp: desk_hp(),
        seed: 5,
        total_env_steps: 50_000,
        warmup_steps: 10_000,
        eval_every: 10_000,
        eval_episodes: 20,
        replay_capacity: 1_000_000,
        mode: VariantToken::Ris,
        oracle_scale: 0.5,
        subgoal_eval_pairs: 20,
        oracle_resolution: 4,
        checkpoint_every: 0,
        out_dir: out.clone(),
    };
    let outcome = train(&cfg, &mut |_| {}).unwrap();
    let set = ris::checkpoint::load(&outcome.final_checkpoint).unwrap();
    let mut agent = agent_from_checkpoint(&set, &cfg.hp).unwrap();

    let spec = corridor.build().unwrap();
    let env = PointMass {
        spec: spec.clone(),
        max_step: BENCH_MAX_STEP,
        episode_limit: 100,
    };
    let mut pair_rng = stream_rng(99, Stream::Eval, 0);
    let mut v_rng = stream_rng(98, Stream::Eval, 1);
    let mut values = Vec::with_capacity(200);
    let mut distances = Vec::with_capacity(200);
    for _ in 0..200 {
        let st = env.reset(&mut pair_rng).unwrap();
        let field = oracle::build_distance_field(&spec, st.position, 4).unwrap();
        let d_units = field.distance_to(st.goal);
        let d_steps = oracle::steps_for_distance(d_units, BENCH_MAX_STEP);
        let v = agent.value(st.position, st.goal, &mut v_rng);
        values.push(v.abs());
        distances.push(d_steps as f64);
    }
    let rho = spearman(&values, &distances);
    let secs = started.elapsed().as_secs_f64();
    assert!(
        rho >= 0.9,
        "Spearman(|V|, oracle steps) = {rho:.4} after 50k corridor steps"
    );
    println!("PASS value-as-distance: Spearman {rho:.4} >= 0.9 over 200 pairs ({secs:.0}s)");
}

// ---------------------------------------------------------------------------
// Criterion: subgoal quality against grid-oracle midpoints
// ---------------------------------------------------------------------------

/// Frozen evaluation pairs shared by the subgoal-quality comparisons.
fn subgoal_pairs(spec: &ris::env::MazeSpec) -> Vec<ris::env::StateGoal> {
    let env = PointMass::new(spec.clone());
    let mut rng = stream_rng(4242, Stream::SubgoalEval, 0);
    (0..SUBGOAL_PAIRS)
        .map(|_| {
            let st = env.reset(&mut rng).unwrap();
            (st.position, st.goal)
        })
        .collect()
}

#[test]
fn criterion_subgoal_quality() {
    let artifacts = bench_artifacts();
    let spec = make_maze(MazeKind::U);
    let pairs = subgoal_pairs(&spec);
    let eval_set = oracle::SubgoalEvalSet::new(&spec, pairs.clone(), 4).unwrap();

    let error_of = |checkpoint: &PathBuf| -> f64 {
        let set = ris::checkpoint::load(checkpoint).unwrap();
        let mut agent = agent_from_checkpoint(&set, &desk_hp()).unwrap();
        let preds = agent.predict_subgoals(&pairs);
        eval_set.error(&preds)
    };

    let ris_runs = artifacts.rows_for(VariantToken::Ris);
    let ris_err = ris_runs
        .iter()
        .map(|r| error_of(&r.final_checkpoint))
        .sum::<f64>()
        / ris_runs.len() as f64;

    // untrained baseline: a fresh high-level policy scored on the same pairs
    let mut untrained = Agent::new(desk_hp(), &mut stream_rng(9999, Stream::Init, 0)).unwrap();
    let untrained_err = eval_set.error(&untrained.predict_subgoals(&pairs));

    // Monte-Carlo floor context: uniform free-space draws
    let env = PointMass::new(spec.clone());
    let mut mc_rng = stream_rng(31_337, Stream::Eval, 0);
    let uniform_preds: Vec<(f64, f64)> = (0..SUBGOAL_PAIRS)
        .map(|_| env.reset(&mut mc_rng).unwrap().position)
        .collect();
    let uniform_err = eval_set.error(&uniform_preds);

    let noreg_runs = artifacts.rows_for(VariantToken::NoReg);
    let noreg_err = noreg_runs
        .iter()
        .map(|r| error_of(&r.final_checkpoint))
        .sum::<f64>()
        / noreg_runs.len() as f64;

    let diagonal = spec.diagonal();
    assert!(
        ris_err <= 0.25 * diagonal,
        "trained subgoal error {ris_err:.3} exceeds 25% of diagonal ({:.3})",
        0.25 * diagonal
    );
    assert!(
        ris_err < untrained_err,
        "trained subgoal error {ris_err:.3} not below untrained baseline {untrained_err:.3}"
    );
    assert!(
        noreg_err > ris_err,
        "unregularized high-level error {noreg_err:.3} should exceed the regularized {ris_err:.3}"
    );
    println!(
        "PASS subgoal quality: trained {ris_err:.3} <= {:.3} (25% diag), untrained {untrained_err:.3}, uniform-draw {uniform_err:.3}, unregularized {noreg_err:.3}",
        0.25 * diagonal
    );
}

// ---------------------------------------------------------------------------
// Criterion: end-to-end benchmark with prior ablations
// ---------------------------------------------------------------------------

#[test]
fn criterion_end_to_end_benchmark() {
    let artifacts = bench_artifacts();
    let evals = artifacts.eval_count();
    assert!(evals > 0);

    // first eval index where the mean success of the full method is >= 0.8
    let mut t_star = None;
    for idx in 0..evals {
        if artifacts.mean_success_at(VariantToken::Ris, idx) >= 0.8 {
            t_star = Some(idx);
            break;
        }
    }
    let t_star = t_star.expect("full method never reached 80% mean eval success within the budget");
    let steps_at = |idx: usize| artifacts.runs[0].rows[idx].env_steps;
    assert!(steps_at(t_star) <= 200_000);

    let ris_at = artifacts.mean_success_at(VariantToken::Ris, t_star);
    let uniform_at = artifacts.mean_success_at(VariantToken::Uniform, t_star);
    assert!(
        uniform_at < ris_at,
        "uniform prior at the same budget: {uniform_at:.3} vs {ris_at:.3}"
    );

    // the oracle-subgoal variant reaches 80% no later
    let mut oracle_t = None;
    for idx in 0..evals {
        if artifacts.mean_success_at(VariantToken::Oracle, idx) >= 0.8 {
            oracle_t = Some(idx);
            break;
        }
    }
    let oracle_t = oracle_t.expect("oracle-subgoal variant never reached 80%");
    assert!(
        oracle_t <= t_star,
        "oracle subgoals reached 80% at eval {oracle_t}, later than the learned subgoals at {t_star}"
    );

    println!(
        "PASS end-to-end benchmark: full method {:.2} at {} steps (oracle by {} steps); uniform prior {:.2} at the same budget",
        ris_at,
        steps_at(t_star),
        steps_at(oracle_t),
        uniform_at
    );
}

// ---------------------------------------------------------------------------
// Criterion: determinism
// ---------------------------------------------------------------------------

#[test]
fn criterion_determinism() {
    let base = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("ris_determinism");
    let _ = std::fs::remove_dir_all(&base);
    let mut outputs = Vec::new();
    for tag in ["a", "b"] {
        let cfg = TrainConfig {
            maze: MazeConfig::Kind(MazeKind::U),
            hp: RisHyperparams {
                batch_size: 24,
                hidden: vec![12, 12],
                prior_samples: 3,
                advantage_samples: 2,
                ..RisHyperparams::default()
            },
            seed: 17,
            total_env_steps: 700,
            warmup_steps: 300,
            eval_every: 350,
            eval_episodes: 3,
            replay_capacity: 10_000,
            mode: VariantToken::Ris,
            oracle_scale: 0.5,
            subgoal_eval_pairs: 3,
            oracle_resolution: 2,
            checkpoint_every: 0,
            out_dir: base.join(tag),
            max_step: 0.75,
            episode_limit: 50,
        };
        let outcome = train(&cfg, &mut |_| {}).unwrap();
        outputs.push((
            std::fs::read(&outcome.metrics_path).unwrap(),
            std::fs::read(&outcome.final_checkpoint).unwrap(),
        ));
    }
    assert_eq!(outputs[0].0, outputs[1].0, "metrics.csv differ across identical runs");
    assert_eq!(outputs[0].1, outputs[1].1, "final checkpoints differ across identical runs");
    println!(
        "PASS determinism: identical seeds give bitwise-identical metrics.csv ({} bytes) and checkpoints ({} bytes)",
        outputs[0].0.len(),
        outputs[0].1.len()
    );
}

// ---------------------------------------------------------------------------
// Criterion: checkpoint round trip
// ---------------------------------------------------------------------------

#[test]
fn criterion_checkpoint_round_trip() {
    let mut agent = Agent::new(
        RisHyperparams {
            batch_size: 16,
            hidden: vec![16, 16],
            prior_samples: 2,
            advantage_samples: 2,
            ..RisHyperparams::default()
        },
        &mut stream_rng(55, Stream::Init, 0),
    )
    .unwrap();
    // nudge the parameters off their init so the round trip carries real data
    let mut rng = stream_rng(56, Stream::Updates, 0);
    let mut data_rng = stream_rng(57, Stream::Replay, 0);
    let batch: Vec<Transition> = (0..16)
        .map(|_| {
            Transition::new(
                (data_rng.random_range(0.5..7.0), data_rng.random_range(0.5..17.0)),
                (data_rng.random_range(-0.9..0.9), data_rng.random_range(-0.9..0.9)),
                -1.0,
                (data_rng.random_range(0.5..7.0), data_rng.random_range(0.5..17.0)),
                false,
                (data_rng.random_range(0.5..7.0), data_rng.random_range(0.5..17.0)),
            )
        })
        .collect();
    agent.critic_update(&batch, &mut rng).unwrap();
    agent
        .policy_update(&batch, PriorMode::ImaginedSubgoals, None, &mut rng)
        .unwrap();

    let bytes1 = ris::checkpoint::to_bytes(&agent.to_parameter_set());
    let loaded = ris::checkpoint::from_bytes(&bytes1).unwrap();
    let bytes2 = ris::checkpoint::to_bytes(&loaded);
    assert_eq!(bytes1, bytes2, "save -> load -> save not byte-identical");

    // reloaded evaluation reproduces the pre-save evaluation exactly
    let env = PointMass::new(make_maze(MazeKind::U));
    let (rate_a, ret_a) =
        evaluate_checkpoint(&mut agent, &env, 10, true, &mut stream_rng(58, Stream::Eval, 0))
            .unwrap();
    let mut reloaded = agent_from_checkpoint(&loaded, &agent.hp).unwrap();
    let (rate_b, ret_b) =
        evaluate_checkpoint(&mut reloaded, &env, 10, true, &mut stream_rng(58, Stream::Eval, 0))
            .unwrap();
    assert_eq!(rate_a, rate_b);
    assert_eq!(ret_a, ret_b);
    println!(
        "PASS checkpoint round trip: {} bytes byte-identical, reloaded eval reproduces {:.2}/{:.2}",
        bytes1.len(),
        rate_a,
        ret_a
    );
}
