//! The joint training loop: collect one environment step, then (after
//! warmup) run one critic update, one high-level policy update, and one
//! policy update on fresh minibatches, in that order. Evaluation episodes
//! run periodically with the deterministic policy mean on the hardest
//! configuration, and a metrics row is appended per evaluation.
//!
//! Determinism contract: all randomness derives from the config seed
//! through fixed per-subsystem streams, and evaluation draws from a
//! per-round stream so it can never perturb training noise.

use crate::agent::{Agent, HighlevelObjective, PriorMode};
use crate::config::TrainConfig;
use crate::env::{EnvState, PointMass};
use crate::error::{Result, RisError};
use crate::metrics::MetricsRow;
use crate::oracle::{MidpointTable, SubgoalEvalSet};
use crate::replay::{ReplayBuffer, Transition};
use crate::rng::{stream_rng, Stream};
use rand::RngExt;
use rand_chacha::ChaCha12Rng;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

/// Progress events, in emission order. Update events fire once per
/// completed sub-update, in the fixed order critic, high-level, policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainEvent {
    /// One environment step was taken with `action`.
    Step { step: u64, action: (f64, f64) },
    CriticUpdated { step: u64 },
    HighlevelUpdated { step: u64 },
    PolicyUpdated { step: u64 },
    Evaluated { row: MetricsRow },
}

pub struct TrainOutcome {
    pub rows: Vec<MetricsRow>,
    pub metrics_path: PathBuf,
    pub final_checkpoint: PathBuf,
}

/// Mean evaluation outcome of `episodes` deterministic rollouts.
struct EvalStats {
    success_rate: f64,
    mean_return: f64,
}

fn run_eval(
    agent: &mut Agent,
    env: &PointMass,
    episodes: u32,
    rng: &mut ChaCha12Rng,
) -> Result<EvalStats> {
    let mut successes = 0u32;
    let mut total_return = 0.0;
    for _ in 0..episodes {
        let mut state = if env.spec.hardest.is_some() {
            env.reset_hardest(rng)?
        } else {
            env.reset(rng)?
        };
        let mut ep_return = 0.0;
        loop {
            let action = agent.act_mean(state.position, state.goal);
            let (next, reward, done) = env.step(&state, action);
            ep_return += reward;
            state = next;
            if done {
                if reward == 0.0 {
                    successes += 1;
                }
                break;
            }
        }
        total_return += ep_return;
    }
    Ok(EvalStats {
        success_rate: successes as f64 / episodes as f64,
        mean_return: total_return / episodes as f64,
    })
}

/// Accumulates per-step losses between evaluations.
#[derive(Default)]
struct LossWindow {
    critic: f64,
    highlevel: f64,
    kl: f64,
    count: u64,
}

impl LossWindow {
    fn push(&mut self, critic: f64, highlevel: f64, kl: f64) {
        self.critic += critic;
        self.highlevel += highlevel;
        self.kl += kl;
        self.count += 1;
    }

    fn drain(&mut self) -> (f64, f64, f64) {
        let n = self.count.max(1) as f64;
        let out = (self.critic / n, self.highlevel / n, self.kl / n);
        *self = LossWindow::default();
        out
    }
}

/// Runs one full training job, writing `metrics.csv`, periodic checkpoints,
/// and `checkpoint_final.ris` under `config.out_dir`.
pub fn train(config: &TrainConfig, events: &mut dyn FnMut(TrainEvent)) -> Result<TrainOutcome> {
    config.validate()?;
    let spec = config.maze.build()?;
    let env = PointMass {
        spec: spec.clone(),
        max_step: config.max_step,
        episode_limit: config.episode_limit,
    };
    let seed = config.seed;
    let prior_mode = config.prior_mode();
    let objective = config.highlevel_objective();

    let mut agent = Agent::new(config.hp.clone(), &mut stream_rng(seed, Stream::Init, 0))?;
    let mut buffer = ReplayBuffer::new(config.replay_capacity);
    let oracle_table = match prior_mode {
        PriorMode::OracleSubgoals { .. } => {
            Some(MidpointTable::build(&spec, config.oracle_resolution)?)
        }
        _ => None,
    };

    // Frozen (state, goal) pairs for the subgoal-error metric.
    let mut pair_rng = stream_rng(seed, Stream::SubgoalEval, 0);
    let mut pairs = Vec::with_capacity(config.subgoal_eval_pairs);
    for _ in 0..config.subgoal_eval_pairs {
        let s = env.reset(&mut pair_rng)?;
        pairs.push((s.position, s.goal));
    }
    let eval_set = SubgoalEvalSet::new(&spec, pairs, config.oracle_resolution)?;

    fs::create_dir_all(&config.out_dir)?;
    let metrics_path = config.out_dir.join("metrics.csv");
    let mut metrics_file = fs::File::create(&metrics_path)?;
    writeln!(metrics_file, "{}", crate::metrics::HEADER)?;

    let mut env_rng = stream_rng(seed, Stream::Env, 0);
    let mut warmup_rng = stream_rng(seed, Stream::Warmup, 0);
    let mut policy_rng = stream_rng(seed, Stream::PolicyNoise, 0);
    let mut replay_rng = stream_rng(seed, Stream::Replay, 0);
    let mut update_rng = stream_rng(seed, Stream::Updates, 0);

    let mut state = env.reset(&mut env_rng)?;
    let mut episode: Vec<Transition> = Vec::with_capacity(config.episode_limit as usize);
    let mut train_successes = 0u64;
    let mut train_episodes = 0u64;
    let mut losses = LossWindow::default();
    let mut rows = Vec::new();
    let mut eval_round = 0u32;

    for step in 0..config.total_env_steps {
        let action = if step < config.warmup_steps {
            (
                warmup_rng.random_range(-1.0..1.0),
                warmup_rng.random_range(-1.0..1.0),
            )
        } else {
            agent.act(state.position, state.goal, &mut policy_rng)
        };
        events(TrainEvent::Step { step, action });
        let (next, reward, done) = env.step(&state, action);
        episode.push(Transition::new(
            state.position,
            action,
            reward,
            next.position,
            done,
            state.goal,
        ));
        if done {
            train_episodes += 1;
            if reward == 0.0 {
                train_successes += 1;
            }
            buffer.push_trajectory(std::mem::take(&mut episode))?;
            state = env.reset(&mut env_rng)?;
        } else {
            state = next;
        }

        if step >= config.warmup_steps && !buffer.is_empty() {
            let batch = buffer.sample_her(config.hp.batch_size, &env.spec, &mut replay_rng);
            let candidates = buffer.sample_subgoal_candidates(config.hp.batch_size, &mut replay_rng);
            let critic_loss = agent
                .critic_update(&batch, &mut update_rng)
                .map_err(|e| run_context(e, "critic update", step))?;
            events(TrainEvent::CriticUpdated { step });
            let hl_loss = match objective {
                HighlevelObjective::WeightedMaxLikelihood => agent
                    .highlevel_update(&batch, &candidates, &mut update_rng)
                    .map_err(|e| run_context(e, "high-level update", step))?,
                HighlevelObjective::DirectCost => agent
                    .highlevel_update_direct_cost(&batch, &mut update_rng)
                    .map_err(|e| run_context(e, "high-level update", step))?,
            };
            events(TrainEvent::HighlevelUpdated { step });
            let (_, kl) = agent
                .policy_update(&batch, prior_mode, oracle_table.as_ref(), &mut update_rng)
                .map_err(|e| run_context(e, "policy update", step))?;
            events(TrainEvent::PolicyUpdated { step });
            losses.push(critic_loss, hl_loss, kl);
        }

        let env_steps = step + 1;
        if env_steps % config.eval_every == 0 {
            eval_round += 1;
            let mut eval_rng = stream_rng(seed, Stream::Eval, eval_round);
            let stats = run_eval(&mut agent, &env, config.eval_episodes, &mut eval_rng)?;
            let predictions = agent.predict_subgoals(&eval_set.pairs);
            let subgoal_error = eval_set.error(&predictions);
            let (critic_loss, highlevel_loss, policy_kl) = losses.drain();
            let row = MetricsRow {
                env_steps,
                train_success: if train_episodes > 0 {
                    train_successes as f64 / train_episodes as f64
                } else {
                    0.0
                },
                eval_success: stats.success_rate,
                mean_return: stats.mean_return,
                critic_loss,
                highlevel_loss,
                policy_kl,
                subgoal_error,
            };
            writeln!(metrics_file, "{}", row.to_csv_line())?;
            metrics_file.flush()?;
            events(TrainEvent::Evaluated { row });
            rows.push(row);
            train_successes = 0;
            train_episodes = 0;

            if config.checkpoint_every > 0 && env_steps % config.checkpoint_every == 0 {
                let path = config.out_dir.join(format!("checkpoint_{env_steps:09}.ris"));
                crate::checkpoint::save(&agent.to_parameter_set(), &path)?;
            }
        }
    }

    let final_checkpoint = config.out_dir.join("checkpoint_final.ris");
    crate::checkpoint::save(&agent.to_parameter_set(), &final_checkpoint)?;
    Ok(TrainOutcome {
        rows,
        metrics_path,
        final_checkpoint,
    })
}

fn run_context(e: RisError, what: &str, step: u64) -> RisError {
    match e {
        RisError::NonFinite(msg) => {
            RisError::NonFinite(format!("{what} aborted at env step {step}: {msg}"))
        }
        other => other,
    }
}

/// Builds an agent shaped like the checkpoint and loads the weights. The
/// hidden widths are inferred from the stored policy trunk shapes.
pub fn agent_from_checkpoint(
    set: &crate::tensor::ParameterSet,
    hp_base: &crate::agent::RisHyperparams,
) -> Result<Agent> {
    let mut hidden = Vec::new();
    let mut l = 0;
    while let Some(w) = set.get(&format!("policy.w{l}")) {
        if w.shape.len() != 2 {
            return Err(RisError::Checkpoint(format!(
                "tensor policy.w{l} has rank {}, expected 2",
                w.shape.len()
            )));
        }
        hidden.push(w.shape[1]);
        l += 1;
    }
    if hidden.is_empty() {
        return Err(RisError::Checkpoint(
            "checkpoint holds no policy trunk tensors (policy.w0 missing)".into(),
        ));
    }
    let hp = crate::agent::RisHyperparams {
        hidden,
        ..hp_base.clone()
    };
    let mut agent = Agent::new(hp, &mut stream_rng(0, Stream::Init, 0))?;
    agent.load_parameter_set(set)?;
    Ok(agent)
}

/// One deterministic evaluation pass against a fixed maze, mirroring the
/// in-training evaluation.
pub fn evaluate_checkpoint(
    agent: &mut Agent,
    env: &PointMass,
    episodes: u32,
    hardest: bool,
    rng: &mut ChaCha12Rng,
) -> Result<(f64, f64)> {
    if episodes == 0 {
        return Err(RisError::Usage("evaluation needs at least one episode".into()));
    }
    let mut successes = 0u32;
    let mut total_return = 0.0;
    for _ in 0..episodes {
        let mut state: EnvState = if hardest {
            env.reset_hardest(rng)?
        } else {
            env.reset(rng)?
        };
        let mut ep_return = 0.0;
        loop {
            let action = agent.act_mean(state.position, state.goal);
            let (next, reward, done) = env.step(&state, action);
            ep_return += reward;
            state = next;
            if done {
                if reward == 0.0 {
                    successes += 1;
                }
                break;
            }
        }
        total_return += ep_return;
    }
    Ok((
        successes as f64 / episodes as f64,
        total_return / episodes as f64,
    ))
}
