//! Run configuration: a flat `key = value` text format with `[section]`
//! headers, plus the canonical snapshot writer.
//!
//! Sections are `[maze]`, `[hyperparams]`, and `[run]`. Unknown sections or
//! keys are rejected with field-level messages. `wall` may repeat to stack
//! rectangles for custom layouts. A snapshot serializes every effective
//! value, so parsing a snapshot reproduces the run exactly.

use crate::agent::{HighlevelObjective, PriorMode, RisHyperparams};
use crate::env::{make_maze, MazeKind, MazeSpec, Rect};
use crate::error::{Result, RisError};
use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq)]
pub enum MazeConfig {
    Kind(MazeKind),
    Custom {
        bounds: (f64, f64),
        walls: Vec<Rect>,
        success_radius: f64,
        hardest: Option<(Rect, Rect)>,
    },
}

impl MazeConfig {
    pub fn build(&self) -> Result<MazeSpec> {
        let spec = match self {
            MazeConfig::Kind(kind) => make_maze(*kind),
            MazeConfig::Custom {
                bounds,
                walls,
                success_radius,
                hardest,
            } => MazeSpec {
                bounds: *bounds,
                walls: walls.clone(),
                success_radius: *success_radius,
                hardest: *hardest,
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// The mode token exposed on the command line, bundling the prior choice
/// with the high-level training objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VariantToken {
    Ris,
    Uniform,
    Ema,
    Oracle,
    NoReg,
}

impl VariantToken {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ris" => Ok(VariantToken::Ris),
            "uniform" => Ok(VariantToken::Uniform),
            "ema" => Ok(VariantToken::Ema),
            "oracle" => Ok(VariantToken::Oracle),
            "noreg" => Ok(VariantToken::NoReg),
            other => Err(RisError::Config(format!(
                "unknown prior mode {other:?}; expected ris|uniform|ema|oracle|noreg"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            VariantToken::Ris => "ris",
            VariantToken::Uniform => "uniform",
            VariantToken::Ema => "ema",
            VariantToken::Oracle => "oracle",
            VariantToken::NoReg => "noreg",
        }
    }

    /// (prior mode, high-level objective) realized by this token.
    pub fn variant(&self, oracle_scale: f64) -> (PriorMode, HighlevelObjective) {
        match self {
            VariantToken::Ris => (
                PriorMode::ImaginedSubgoals,
                HighlevelObjective::WeightedMaxLikelihood,
            ),
            VariantToken::Uniform => (PriorMode::Uniform, HighlevelObjective::WeightedMaxLikelihood),
            VariantToken::Ema => (
                PriorMode::MovingAverage,
                HighlevelObjective::WeightedMaxLikelihood,
            ),
            VariantToken::Oracle => (
                PriorMode::OracleSubgoals {
                    scale: oracle_scale,
                },
                HighlevelObjective::WeightedMaxLikelihood,
            ),
            VariantToken::NoReg => (
                PriorMode::ImaginedSubgoals,
                HighlevelObjective::DirectCost,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub maze: MazeConfig,
    pub max_step: f64,
    pub episode_limit: u32,
    pub hp: RisHyperparams,
    pub seed: u64,
    pub total_env_steps: u64,
    pub warmup_steps: u64,
    pub eval_every: u64,
    pub eval_episodes: u32,
    pub replay_capacity: usize,
    pub mode: VariantToken,
    pub oracle_scale: f64,
    pub subgoal_eval_pairs: usize,
    pub oracle_resolution: usize,
    pub checkpoint_every: u64,
    pub out_dir: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            maze: MazeConfig::Kind(MazeKind::U),
            max_step: crate::env::DEFAULT_MAX_STEP,
            episode_limit: crate::env::DEFAULT_EPISODE_LIMIT,
            hp: RisHyperparams::default(),
            seed: 0,
            total_env_steps: 200_000,
            warmup_steps: 10_000,
            eval_every: 5_000,
            eval_episodes: 50,
            replay_capacity: 1_000_000,
            mode: VariantToken::Ris,
            oracle_scale: 0.5,
            subgoal_eval_pairs: 100,
            oracle_resolution: 4,
            checkpoint_every: 50_000,
            out_dir: PathBuf::from("runs/out"),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.hp.validate()?;
        self.maze.build()?;
        if !(self.max_step > 0.0) {
            return Err(RisError::Config(format!(
                "[maze] max_step must be positive, got {}",
                self.max_step
            )));
        }
        if self.episode_limit == 0 {
            return Err(RisError::Config("[maze] episode_limit must be at least 1".into()));
        }
        if self.total_env_steps == 0 {
            return Err(RisError::Config("[run] total_env_steps must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(RisError::Config("[run] eval_every must be at least 1".into()));
        }
        if self.eval_episodes == 0 {
            return Err(RisError::Config("[run] eval_episodes must be at least 1".into()));
        }
        if self.replay_capacity < self.episode_limit as usize {
            return Err(RisError::Config(format!(
                "[run] replay_capacity {} cannot hold one episode of limit {}",
                self.replay_capacity, self.episode_limit
            )));
        }
        if self.subgoal_eval_pairs == 0 {
            return Err(RisError::Config("[run] subgoal_eval_pairs must be at least 1".into()));
        }
        if self.oracle_resolution == 0 {
            return Err(RisError::Config("[run] oracle_resolution must be at least 1".into()));
        }
        if !(self.oracle_scale > 0.0) {
            return Err(RisError::Config(format!(
                "[run] oracle_scale must be positive, got {}",
                self.oracle_scale
            )));
        }
        Ok(())
    }

    pub fn prior_mode(&self) -> PriorMode {
        self.mode.variant(self.oracle_scale).0
    }

    pub fn highlevel_objective(&self) -> HighlevelObjective {
        self.mode.variant(self.oracle_scale).1
    }

    /// Canonical text form: parsing it reproduces `self` exactly.
    pub fn to_snapshot(&self) -> String {
        let mut out = String::new();
        out.push_str("[maze]\n");
        match &self.maze {
            MazeConfig::Kind(MazeKind::U) => out.push_str("kind = u\n"),
            MazeConfig::Kind(MazeKind::S) => out.push_str("kind = s\n"),
            MazeConfig::Custom {
                bounds,
                walls,
                success_radius,
                hardest,
            } => {
                out.push_str("kind = custom\n");
                out.push_str(&format!("bounds = {} {}\n", bounds.0, bounds.1));
                for w in walls {
                    out.push_str(&format!("wall = {} {} {} {}\n", w.x, w.y, w.w, w.h));
                }
                out.push_str(&format!("success_radius = {success_radius}\n"));
                if let Some((s, g)) = hardest {
                    out.push_str(&format!(
                        "hardest_start = {} {} {} {}\n",
                        s.x, s.y, s.w, s.h
                    ));
                    out.push_str(&format!("hardest_goal = {} {} {} {}\n", g.x, g.y, g.w, g.h));
                }
            }
        }
        out.push_str(&format!("max_step = {}\n", self.max_step));
        out.push_str(&format!("episode_limit = {}\n", self.episode_limit));
        out.push_str("\n[hyperparams]\n");
        let hp = &self.hp;
        out.push_str(&format!("gamma = {}\n", hp.gamma));
        out.push_str(&format!("tau = {}\n", hp.tau));
        out.push_str(&format!("alpha = {}\n", hp.alpha));
        out.push_str(&format!("lambda = {}\n", hp.lambda));
        out.push_str(&format!("eps_prior = {}\n", hp.eps_prior));
        out.push_str(&format!("batch_size = {}\n", hp.batch_size));
        out.push_str(&format!("lr_critic = {}\n", hp.lr_critic));
        out.push_str(&format!("lr_policy = {}\n", hp.lr_policy));
        out.push_str(&format!("lr_highlevel = {}\n", hp.lr_highlevel));
        out.push_str(&format!("prior_samples = {}\n", hp.prior_samples));
        out.push_str(&format!("kl_samples = {}\n", hp.kl_samples));
        out.push_str(&format!("advantage_samples = {}\n", hp.advantage_samples));
        out.push_str(&format!(
            "value_clip = {} {}\n",
            hp.value_clip.0, hp.value_clip.1
        ));
        let hidden: Vec<String> = hp.hidden.iter().map(|h| h.to_string()).collect();
        out.push_str(&format!("hidden = {}\n", hidden.join(" ")));
        out.push_str("\n[run]\n");
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("total_env_steps = {}\n", self.total_env_steps));
        out.push_str(&format!("warmup_steps = {}\n", self.warmup_steps));
        out.push_str(&format!("eval_every = {}\n", self.eval_every));
        out.push_str(&format!("eval_episodes = {}\n", self.eval_episodes));
        out.push_str(&format!("replay_capacity = {}\n", self.replay_capacity));
        out.push_str(&format!("prior_mode = {}\n", self.mode.as_str()));
        out.push_str(&format!("oracle_scale = {}\n", self.oracle_scale));
        out.push_str(&format!("subgoal_eval_pairs = {}\n", self.subgoal_eval_pairs));
        out.push_str(&format!("oracle_resolution = {}\n", self.oracle_resolution));
        out.push_str(&format!("checkpoint_every = {}\n", self.checkpoint_every));
        out.push_str(&format!("out_dir = {}\n", self.out_dir.display()));
        out
    }
}

fn parse_f64(section: &str, key: &str, raw: &str) -> Result<f64> {
    raw.parse::<f64>()
        .map_err(|e| RisError::Config(format!("[{section}] {key} = {raw:?}: {e}")))
        .and_then(|v| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(RisError::Config(format!(
                    "[{section}] {key} must be finite, got {raw:?}"
                )))
            }
        })
}

fn parse_u64(section: &str, key: &str, raw: &str) -> Result<u64> {
    raw.parse::<u64>()
        .map_err(|e| RisError::Config(format!("[{section}] {key} = {raw:?}: {e}")))
}

fn parse_usize(section: &str, key: &str, raw: &str) -> Result<usize> {
    raw.parse::<usize>()
        .map_err(|e| RisError::Config(format!("[{section}] {key} = {raw:?}: {e}")))
}

fn parse_f64_list(section: &str, key: &str, raw: &str, want: usize) -> Result<Vec<f64>> {
    let parts: Vec<&str> = raw.split_whitespace().collect();
    if parts.len() != want {
        return Err(RisError::Config(format!(
            "[{section}] {key} expects {want} numbers, got {}",
            parts.len()
        )));
    }
    parts
        .iter()
        .map(|p| parse_f64(section, key, p))
        .collect()
}

/// Parses the config text. Starts from defaults; every key overrides one
/// field. Unknown sections/keys are errors.
pub fn parse(text: &str) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    let mut section = String::new();
    // custom-maze staging; only applied when kind = custom
    let mut kind: Option<String> = None;
    let mut bounds: Option<(f64, f64)> = None;
    let mut walls: Vec<Rect> = Vec::new();
    let mut success_radius = 0.5;
    let mut hardest_start: Option<Rect> = None;
    let mut hardest_goal: Option<Rect> = None;

    for (lineno, raw_line) in text.lines().enumerate() {
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| {
                RisError::Config(format!("line {}: malformed section header {line:?}", lineno + 1))
            })?;
            match name {
                "maze" | "hyperparams" | "run" => section = name.to_string(),
                other => {
                    return Err(RisError::Config(format!(
                        "line {}: unknown section [{other}]",
                        lineno + 1
                    )))
                }
            }
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            RisError::Config(format!("line {}: expected key = value, got {line:?}", lineno + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        match (section.as_str(), key) {
            ("maze", "kind") => kind = Some(value.to_string()),
            ("maze", "bounds") => {
                let v = parse_f64_list("maze", key, value, 2)?;
                bounds = Some((v[0], v[1]));
            }
            ("maze", "wall") => {
                let v = parse_f64_list("maze", key, value, 4)?;
                walls.push(Rect::new(v[0], v[1], v[2], v[3]));
            }
            ("maze", "success_radius") => success_radius = parse_f64("maze", key, value)?,
            ("maze", "hardest_start") => {
                let v = parse_f64_list("maze", key, value, 4)?;
                hardest_start = Some(Rect::new(v[0], v[1], v[2], v[3]));
            }
            ("maze", "hardest_goal") => {
                let v = parse_f64_list("maze", key, value, 4)?;
                hardest_goal = Some(Rect::new(v[0], v[1], v[2], v[3]));
            }
            ("maze", "max_step") => cfg.max_step = parse_f64("maze", key, value)?,
            ("maze", "episode_limit") => {
                cfg.episode_limit = parse_u64("maze", key, value)? as u32
            }
            ("hyperparams", "gamma") => cfg.hp.gamma = parse_f64("hyperparams", key, value)?,
            ("hyperparams", "tau") => cfg.hp.tau = parse_f64("hyperparams", key, value)?,
            ("hyperparams", "alpha") => cfg.hp.alpha = parse_f64("hyperparams", key, value)?,
            ("hyperparams", "lambda") => cfg.hp.lambda = parse_f64("hyperparams", key, value)?,
            ("hyperparams", "eps_prior") => {
                cfg.hp.eps_prior = parse_f64("hyperparams", key, value)?
            }
            ("hyperparams", "batch_size") => {
                cfg.hp.batch_size = parse_usize("hyperparams", key, value)?
            }
            ("hyperparams", "lr_critic") => {
                cfg.hp.lr_critic = parse_f64("hyperparams", key, value)?
            }
            ("hyperparams", "lr_policy") => {
                cfg.hp.lr_policy = parse_f64("hyperparams", key, value)?
            }
            ("hyperparams", "lr_highlevel") => {
                cfg.hp.lr_highlevel = parse_f64("hyperparams", key, value)?
            }
            ("hyperparams", "prior_samples") => {
                cfg.hp.prior_samples = parse_usize("hyperparams", key, value)?
            }
            ("hyperparams", "kl_samples") => {
                cfg.hp.kl_samples = parse_usize("hyperparams", key, value)?
            }
            ("hyperparams", "advantage_samples") => {
                cfg.hp.advantage_samples = parse_usize("hyperparams", key, value)?
            }
            ("hyperparams", "value_clip") => {
                let v = parse_f64_list("hyperparams", key, value, 2)?;
                cfg.hp.value_clip = (v[0], v[1]);
            }
            ("hyperparams", "hidden") => {
                let parts: Vec<&str> = value.split_whitespace().collect();
                if parts.is_empty() {
                    return Err(RisError::Config(
                        "[hyperparams] hidden needs at least one width".into(),
                    ));
                }
                cfg.hp.hidden = parts
                    .iter()
                    .map(|p| parse_usize("hyperparams", "hidden", p))
                    .collect::<Result<Vec<_>>>()?;
            }
            ("run", "seed") => cfg.seed = parse_u64("run", key, value)?,
            ("run", "total_env_steps") => cfg.total_env_steps = parse_u64("run", key, value)?,
            ("run", "warmup_steps") => cfg.warmup_steps = parse_u64("run", key, value)?,
            ("run", "eval_every") => cfg.eval_every = parse_u64("run", key, value)?,
            ("run", "eval_episodes") => cfg.eval_episodes = parse_u64("run", key, value)? as u32,
            ("run", "replay_capacity") => cfg.replay_capacity = parse_usize("run", key, value)?,
            ("run", "prior_mode") => cfg.mode = VariantToken::parse(value)?,
            ("run", "oracle_scale") => cfg.oracle_scale = parse_f64("run", key, value)?,
            ("run", "subgoal_eval_pairs") => {
                cfg.subgoal_eval_pairs = parse_usize("run", key, value)?
            }
            ("run", "oracle_resolution") => {
                cfg.oracle_resolution = parse_usize("run", key, value)?
            }
            ("run", "checkpoint_every") => cfg.checkpoint_every = parse_u64("run", key, value)?,
            ("run", "out_dir") => cfg.out_dir = PathBuf::from(value),
            ("", k) => {
                return Err(RisError::Config(format!(
                    "line {}: key {k:?} appears before any [section]",
                    lineno + 1
                )))
            }
            (s, k) => {
                return Err(RisError::Config(format!(
                    "line {}: unknown key {k:?} in section [{s}]",
                    lineno + 1
                )))
            }
        }
    }

    let is_custom = kind.as_deref() == Some("custom");
    if !is_custom && (bounds.is_some() || !walls.is_empty()) {
        return Err(RisError::Config(
            "[maze] bounds/wall only apply to kind = custom".into(),
        ));
    }
    match kind.as_deref() {
        None | Some("u") => cfg.maze = MazeConfig::Kind(MazeKind::U),
        Some("s") => cfg.maze = MazeConfig::Kind(MazeKind::S),
        Some("custom") => {
            let bounds = bounds.ok_or_else(|| {
                RisError::Config("[maze] kind = custom requires bounds".into())
            })?;
            let hardest = match (hardest_start, hardest_goal) {
                (Some(s), Some(g)) => Some((s, g)),
                (None, None) => None,
                _ => {
                    return Err(RisError::Config(
                        "[maze] hardest_start and hardest_goal must be given together".into(),
                    ))
                }
            };
            cfg.maze = MazeConfig::Custom {
                bounds,
                walls,
                success_radius,
                hardest,
            };
        }
        Some(other) => {
            return Err(RisError::Config(format!(
                "[maze] unknown kind {other:?}; expected u|s|custom"
            )))
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_round_trip_through_snapshot() {
        let cfg = TrainConfig::default();
        let snap = cfg.to_snapshot();
        let parsed = parse(&snap).unwrap();
        assert_eq!(cfg, parsed);
    }

    #[test]
    fn custom_maze_round_trips() {
        let cfg = TrainConfig {
            maze: MazeConfig::Custom {
                bounds: (12.0, 3.0),
                walls: vec![Rect::new(2.0, 0.0, 1.5, 1.5)],
                success_radius: 0.5,
                hardest: Some((
                    Rect::new(0.5, 0.5, 1.0, 1.0),
                    Rect::new(10.5, 0.5, 1.0, 1.0),
                )),
            },
            ..TrainConfig::default()
        };
        let parsed = parse(&cfg.to_snapshot()).unwrap();
        assert_eq!(cfg, parsed);
        parsed.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let err = parse("[run]\nseeed = 4\n").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("seeed") && msg.contains("[run]"), "{msg}");
        assert!(parse("[nope]\n").is_err());
        assert!(parse("seed = 4\n").is_err());
        assert!(parse("[maze]\nkind = pentagon\n").is_err());
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "\n# leading comment\n[run]\nseed = 9   # trailing comment\n\n[maze]\nkind = s\n";
        let cfg = parse(text).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.maze, MazeConfig::Kind(MazeKind::S));
    }

    #[test]
    fn mode_tokens_map_to_variants() {
        use crate::agent::{HighlevelObjective, PriorMode};
        let cases = [
            ("ris", PriorMode::ImaginedSubgoals, HighlevelObjective::WeightedMaxLikelihood),
            ("uniform", PriorMode::Uniform, HighlevelObjective::WeightedMaxLikelihood),
            ("ema", PriorMode::MovingAverage, HighlevelObjective::WeightedMaxLikelihood),
            (
                "oracle",
                PriorMode::OracleSubgoals { scale: 0.5 },
                HighlevelObjective::WeightedMaxLikelihood,
            ),
            ("noreg", PriorMode::ImaginedSubgoals, HighlevelObjective::DirectCost),
        ];
        for (token, mode, objective) in cases {
            let t = VariantToken::parse(token).unwrap();
            let (m, o) = t.variant(0.5);
            assert_eq!(m, mode);
            assert_eq!(o, objective);
            assert_eq!(t.as_str(), token);
        }
        assert!(VariantToken::parse("boltzmann").is_err());
    }

    proptest! {
        /// The parser never panics on arbitrary text.
        #[test]
        fn parser_total_on_arbitrary_text(text in "\\PC{0,400}") {
            let _ = parse(&text);
        }

        /// Any parsed config re-snapshots to a fixed point.
        #[test]
        fn snapshot_is_idempotent(seed in 0u64..10_000, steps in 1u64..1_000_000) {
            let cfg = TrainConfig { seed, total_env_steps: steps, ..TrainConfig::default() };
            let snap = cfg.to_snapshot();
            let reparsed = parse(&snap).unwrap();
            prop_assert_eq!(reparsed.to_snapshot(), snap);
        }
    }
}