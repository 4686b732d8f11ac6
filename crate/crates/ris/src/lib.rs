//! Goal-conditioned reinforcement learning with imagined subgoals.
//!
//! A self-contained KL-regularized actor-critic for 2D point-mass maze
//! navigation. The policy's search is guided by a simultaneously trained
//! high-level policy that proposes intermediate subgoals; those subgoals
//! define a prior policy used only as a KL anchor during training, never at
//! evaluation time.
//!
//! Crate layout mirrors the moving parts:
//! - [`graph`], [`tensor`], [`mlp`], [`checkpoint`]: reverse-mode autodiff,
//!   parameters, Adam/Polyak, and the binary checkpoint format.
//! - [`dist`]: tanh-squashed Gaussian and diagonal Laplace heads.
//! - [`env`]: point-mass maze environments with sparse -1/0 reward.
//! - [`replay`]: trajectory-aware replay with hindsight goal relabeling.
//! - [`agent`], [`train`]: the actor-critic updates and the training loop.
//! - [`oracle`]: grid-search ground truth used for verification.
//! - [`config`], [`metrics`], [`report`], [`cli`]: run configuration, CSV
//!   metrics, SVG reports, and the command-line entry points.

#![forbid(unsafe_code)]
// `!(x > 0.0)` is the NaN-rejecting form of the positivity checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod agent;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dist;
pub mod env;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod mlp;
pub mod oracle;
pub mod replay;
pub mod report;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Result, RisError};
