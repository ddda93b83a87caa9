//! Per-trajectory random streams.
//!
//! Trajectory `j` of a run with master seed `s` draws from ChaCha8 keyed by
//! `s` (expanded with `seed_from_u64`) on stream number `j`. Step `n` of the
//! trajectory consumes exactly two 64-bit outputs, i.e. keystream words
//! `4n .. 4n + 4`, so the draws of any (seed, trajectory, step) triple can be
//! reproduced directly with [`uniforms_at`] regardless of scheduling.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// 32-bit keystream words consumed per step.
pub const WORDS_PER_STEP: u128 = 4;

pub fn trajectory_stream(seed: u64, traj_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(traj_index);
    rng
}

/// Uniform in [0, 1) with 53 random bits.
#[inline]
pub fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// The two uniforms of a step.
#[inline]
pub fn step_uniforms(rng: &mut ChaCha8Rng) -> [f64; 2] {
    let u1 = uniform(rng);
    let u2 = uniform(rng);
    [u1, u2]
}

/// The uniforms consumed by step `step` (0-based) of trajectory `traj_index`.
pub fn uniforms_at(seed: u64, traj_index: u64, step: u64) -> [f64; 2] {
    let mut rng = trajectory_stream(seed, traj_index);
    rng.set_word_pos(WORDS_PER_STEP * step as u128);
    step_uniforms(&mut rng)
}
