//! Deterministic randomness.
//!
//! Every run derives all of its randomness from a single seed. Each subsystem
//! gets its own ChaCha stream so that, for example, adding an extra evaluation
//! episode cannot shift the noise consumed by training.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Stream identifiers for the per-subsystem RNG split.
#[derive(Debug, Clone, Copy)]
pub enum Stream {
    Init = 1,
    Env = 2,
    Warmup = 3,
    PolicyNoise = 4,
    Replay = 5,
    Updates = 6,
    Eval = 7,
    SubgoalEval = 8,
}

/// An RNG for one subsystem of one run. `nonce` distinguishes repeated
/// derivations within a stream (e.g. one per evaluation round).
pub fn stream_rng(seed: u64, stream: Stream, nonce: u32) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 32) | nonce as u64);
    rng
}

/// Fills `out` with standard-normal draws (Box-Muller).
pub fn fill_standard_normal(rng: &mut ChaCha12Rng, out: &mut [f64]) {
    let mut i = 0;
    while i < out.len() {
        // u1 in (0, 1] so the log is finite.
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        out[i] = r * theta.cos();
        if i + 1 < out.len() {
            out[i + 1] = r * theta.sin();
        }
        i += 2;
    }
}

/// Fills `out` with uniform draws strictly inside (-1/2, 1/2), the noise
/// domain of the Laplace inverse-CDF sampler.
pub fn fill_centered_uniform(rng: &mut ChaCha12Rng, out: &mut [f64]) {
    for v in out.iter_mut() {
        let u = rng.random::<f64>() - 0.5;
        *v = u.clamp(-0.5 + 1e-12, 0.5 - 1e-12);
    }
}
