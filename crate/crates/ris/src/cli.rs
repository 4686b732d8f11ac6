//! Command-line entry points: `train`, `eval`, and `report`.
//!
//! `train` runs a full training job from a config file (plus overrides) and
//! writes a config snapshot, metrics.csv, and checkpoints into the output
//! directory. `eval` rolls out a checkpoint with the deterministic policy.
//! `report` renders summary tables and SVG charts from metrics files.

use crate::config::{self, TrainConfig, VariantToken};
use crate::env::{make_maze, MazeKind, PointMass};
use crate::error::{Result, RisError};
use crate::rng::{stream_rng, Stream};
use crate::train::{agent_from_checkpoint, evaluate_checkpoint, train, TrainEvent, TrainOutcome};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Default, Clone)]
pub struct TrainArgs {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub prior_mode: Option<VariantToken>,
    pub maze: Option<MazeKind>,
    pub out: Option<PathBuf>,
}

/// Loads the config, applies command-line overrides, and returns the
/// effective configuration for this run.
pub fn resolve_train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                RisError::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            config::parse(&text)?
        }
        None => TrainConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = args.prior_mode {
        cfg.mode = mode;
    }
    if let Some(kind) = args.maze {
        cfg.maze = config::MazeConfig::Kind(kind);
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs training; the output directory is created if missing and receives
/// `config.txt` (the snapshot), `metrics.csv`, and checkpoints.
pub fn cmd_train(args: &TrainArgs, events: &mut dyn FnMut(TrainEvent)) -> Result<TrainOutcome> {
    let cfg = resolve_train_config(args)?;
    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join("config.txt"), cfg.to_snapshot())?;
    train(&cfg, events)
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub checkpoint: PathBuf,
    pub maze: MazeKind,
    pub episodes: u32,
    pub hardest: bool,
    pub seed: u64,
    /// Optional CSV file to append the result row to.
    pub out: Option<PathBuf>,
}

pub const EVAL_CSV_HEADER: &str = "checkpoint,maze,episodes,success_rate,mean_return";

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub checkpoint: PathBuf,
    pub maze: MazeKind,
    pub episodes: u32,
    pub success_rate: f64,
    pub mean_return: f64,
}

impl EvalReport {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.checkpoint.display(),
            match self.maze {
                MazeKind::U => "u",
                MazeKind::S => "s",
            },
            self.episodes,
            self.success_rate,
            self.mean_return
        )
    }
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport> {
    if args.episodes == 0 {
        return Err(RisError::Usage("--episodes must be at least 1".into()));
    }
    let set = crate::checkpoint::load(&args.checkpoint)?;
    let mut agent = agent_from_checkpoint(&set, &crate::agent::RisHyperparams::default())?;
    let env = PointMass::new(make_maze(args.maze));
    let mut rng = stream_rng(args.seed, Stream::Eval, 0);
    let (success_rate, mean_return) =
        evaluate_checkpoint(&mut agent, &env, args.episodes, args.hardest, &mut rng)?;
    let report = EvalReport {
        checkpoint: args.checkpoint.clone(),
        maze: args.maze,
        episodes: args.episodes,
        success_rate,
        mean_return,
    };
    if let Some(path) = &args.out {
        append_eval_row(path, &report)?;
    }
    Ok(report)
}

fn append_eval_row(path: &Path, report: &EvalReport) -> Result<()> {
    use std::io::Write;
    let fresh = !path.exists();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{EVAL_CSV_HEADER}")?;
    }
    writeln!(f, "{}", report.to_csv_line())?;
    Ok(())
}

pub fn cmd_report(inputs: &[PathBuf], out_dir: &Path) -> Result<crate::report::ReportOutcome> {
    if inputs.is_empty() {
        return Err(RisError::Usage("report needs at least one metrics file".into()));
    }
    crate::report::write_report(inputs, out_dir)
}

const USAGE: &str = "\
usage:
  ris train [--config FILE] [--seed N] [--prior-mode ris|uniform|ema|oracle|noreg]
            [--maze u|s] [--out DIR]
  ris eval --checkpoint FILE [--maze u|s] [--episodes N] [--hardest]
           [--seed N] [--out FILE.csv]
  ris report [--out DIR] METRICS.csv...
";

fn parse_maze(s: &str) -> Result<MazeKind> {
    match s {
        "u" => Ok(MazeKind::U),
        "s" => Ok(MazeKind::S),
        other => Err(RisError::Usage(format!("unknown maze {other:?}; expected u|s"))),
    }
}

fn want_value<'a>(flag: &str, it: &mut impl Iterator<Item = &'a String>) -> Result<&'a String> {
    it.next()
        .ok_or_else(|| RisError::Usage(format!("{flag} expects a value")))
}

/// Entry point used by the binary; returns the process exit code.
pub fn main() -> i32 {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    match run(&argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn run(argv: &[String]) -> Result<()> {
    let Some(command) = argv.first() else {
        eprint!("{USAGE}");
        return Err(RisError::Usage("missing subcommand".into()));
    };
    let mut it = argv[1..].iter();
    match command.as_str() {
        "train" => {
            let mut args = TrainArgs::default();
            while let Some(flag) = it.next() {
                match flag.as_str() {
                    "--config" => args.config = Some(PathBuf::from(want_value(flag, &mut it)?)),
                    "--seed" => {
                        args.seed = Some(want_value(flag, &mut it)?.parse().map_err(|e| {
                            RisError::Usage(format!("--seed expects an integer: {e}"))
                        })?)
                    }
                    "--prior-mode" => {
                        args.prior_mode = Some(VariantToken::parse(want_value(flag, &mut it)?)?)
                    }
                    "--maze" => args.maze = Some(parse_maze(want_value(flag, &mut it)?)?),
                    "--out" => args.out = Some(PathBuf::from(want_value(flag, &mut it)?)),
                    other => return Err(RisError::Usage(format!("unknown flag {other:?}"))),
                }
            }
            let outcome = cmd_train(&args, &mut |event| {
                if let TrainEvent::Evaluated { row } = event {
                    eprintln!(
                        "step {:>9}  train_success {:.3}  eval_success {:.3}  return {:.2}  subgoal_err {:.3}",
                        row.env_steps,
                        row.train_success,
                        row.eval_success,
                        row.mean_return,
                        row.subgoal_error
                    );
                }
            })?;
            println!("metrics: {}", outcome.metrics_path.display());
            println!("final checkpoint: {}", outcome.final_checkpoint.display());
            Ok(())
        }
        "eval" => {
            let mut checkpoint: Option<PathBuf> = None;
            let mut maze = MazeKind::U;
            let mut episodes = 50u32;
            let mut hardest = false;
            let mut seed = 0u64;
            let mut out: Option<PathBuf> = None;
            while let Some(flag) = it.next() {
                match flag.as_str() {
                    "--checkpoint" => checkpoint = Some(PathBuf::from(want_value(flag, &mut it)?)),
                    "--maze" => maze = parse_maze(want_value(flag, &mut it)?)?,
                    "--episodes" => {
                        episodes = want_value(flag, &mut it)?.parse().map_err(|e| {
                            RisError::Usage(format!("--episodes expects an integer: {e}"))
                        })?
                    }
                    "--hardest" => hardest = true,
                    "--seed" => {
                        seed = want_value(flag, &mut it)?.parse().map_err(|e| {
                            RisError::Usage(format!("--seed expects an integer: {e}"))
                        })?
                    }
                    "--out" => out = Some(PathBuf::from(want_value(flag, &mut it)?)),
                    other => return Err(RisError::Usage(format!("unknown flag {other:?}"))),
                }
            }
            let checkpoint = checkpoint
                .ok_or_else(|| RisError::Usage("eval requires --checkpoint".into()))?;
            let report = cmd_eval(&EvalArgs {
                checkpoint,
                maze,
                episodes,
                hardest,
                seed,
                out,
            })?;
            eprintln!(
                "success rate {:.3} over {} episodes (mean return {:.2})",
                report.success_rate, report.episodes, report.mean_return
            );
            println!("{EVAL_CSV_HEADER}");
            println!("{}", report.to_csv_line());
            Ok(())
        }
        "report" => {
            let mut out_dir = PathBuf::from(".");
            let mut inputs = Vec::new();
            while let Some(arg) = it.next() {
                match arg.as_str() {
                    "--out" => out_dir = PathBuf::from(want_value(arg, &mut it)?),
                    other if other.starts_with("--") => {
                        return Err(RisError::Usage(format!("unknown flag {other:?}")))
                    }
                    path => inputs.push(PathBuf::from(path)),
                }
            }
            let outcome = cmd_report(&inputs, &out_dir)?;
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", outcome.table);
            for p in &outcome.svg_paths {
                eprintln!("wrote {}", p.display());
            }
            Ok(())
        }
        other => {
            eprint!("{USAGE}");
            Err(RisError::Usage(format!("unknown subcommand {other:?}")))
        }
    }
}
