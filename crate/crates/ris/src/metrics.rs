//! Per-evaluation metrics rows and their CSV form.
//!
//! Schema (UTF-8, LF):
//! `env_steps,train_success,eval_success,mean_return,critic_loss,highlevel_loss,policy_kl,subgoal_error`
//! one row per evaluation, strictly increasing `env_steps`. Floats are
//! written with Rust's shortest round-trip formatting, so a parsed file
//! reproduces the exact values and identical runs produce identical bytes.

use crate::error::{Result, RisError};

pub const HEADER: &str =
    "env_steps,train_success,eval_success,mean_return,critic_loss,highlevel_loss,policy_kl,subgoal_error";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub env_steps: u64,
    pub train_success: f64,
    pub eval_success: f64,
    pub mean_return: f64,
    pub critic_loss: f64,
    pub highlevel_loss: f64,
    pub policy_kl: f64,
    pub subgoal_error: f64,
}

impl MetricsRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.env_steps,
            self.train_success,
            self.eval_success,
            self.mean_return,
            self.critic_loss,
            self.highlevel_loss,
            self.policy_kl,
            self.subgoal_error
        )
    }
}

pub fn to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

/// Strict parser for the metrics schema; rejects unknown headers, ragged
/// rows, non-numeric fields, and non-increasing step columns.
pub fn parse_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| RisError::Usage("metrics file is empty".into()))?;
    if header.trim_end() != HEADER {
        return Err(RisError::Usage(format!(
            "unexpected metrics header {header:?}"
        )));
    }
    let mut rows = Vec::new();
    let mut prev_steps: Option<u64> = None;
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(RisError::Usage(format!(
                "line {}: expected 8 fields, got {}",
                lineno + 2,
                fields.len()
            )));
        }
        let env_steps: u64 = fields[0]
            .parse()
            .map_err(|e| RisError::Usage(format!("line {}: bad env_steps: {e}", lineno + 2)))?;
        let mut f = [0.0f64; 7];
        for (k, raw) in fields[1..].iter().enumerate() {
            f[k] = raw.parse().map_err(|e| {
                RisError::Usage(format!("line {}: bad float field {}: {e}", lineno + 2, k + 1))
            })?;
            if !f[k].is_finite() {
                return Err(RisError::Usage(format!(
                    "line {}: non-finite field {}",
                    lineno + 2,
                    k + 1
                )));
            }
        }
        if let Some(prev) = prev_steps {
            if env_steps <= prev {
                return Err(RisError::Usage(format!(
                    "line {}: env_steps {} not increasing after {}",
                    lineno + 2,
                    env_steps,
                    prev
                )));
            }
        }
        prev_steps = Some(env_steps);
        rows.push(MetricsRow {
            env_steps,
            train_success: f[0],
            eval_success: f[1],
            mean_return: f[2],
            critic_loss: f[3],
            highlevel_loss: f[4],
            policy_kl: f[5],
            subgoal_error: f[6],
        });
    }
    Ok(rows)
}
