//! Seed splitting and complex Gaussian sampling.
//!
//! Every random stream is a `ChaCha8Rng` keyed by a 64-bit seed derived from
//! `(master_seed, tags...)` through SplitMix64 mixing: the master seed is mixed
//! once, then each tag is folded in with `mix(state ^ mix(tag + GOLDEN))`.
//! Streams used by the simulator:
//!
//! | purpose                 | tags                          |
//! |-------------------------|-------------------------------|
//! | task sampling           | `[TAG_TASKS]`                 |
//! | environment sampling    | `[TAG_ENVIRONMENTS]`          |
//! | topology / positions    | `[TAG_LAYOUT]`                |
//! | run `r` seed            | `[TAG_RUN, r]`                |
//!
//! Within a run, agent `k` draws its data from `stream(run_seed, [k])` and the
//! combination disturbance comes from `stream(run_seed, [TAG_DISTURBANCE])`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const TAG_TASKS: u64 = 0x7461_736b;
pub const TAG_ENVIRONMENTS: u64 = 0x656e_7673;
pub const TAG_LAYOUT: u64 = 0x6c61_796f;
pub const TAG_RUN: u64 = 0x7275_6e73;
pub const TAG_DISTURBANCE: u64 = u64::MAX;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn split_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix(master.wrapping_add(GOLDEN)), |state, &t| {
        mix(state ^ mix(t.wrapping_add(GOLDEN)))
    })
}

pub fn stream(master: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(split_seed(master, tags))
}

/// Seed of Monte Carlo run `run`.
pub fn run_seed(master: u64, run: u64) -> u64 {
    split_seed(master, &[TAG_RUN, run])
}

/// Data stream of agent `agent` within the run seeded by `run_seed`.
pub fn agent_stream(run_seed: u64, agent: usize) -> ChaCha8Rng {
    stream(run_seed, &[agent as u64])
}

pub fn disturbance_stream(run_seed: u64) -> ChaCha8Rng {
    stream(run_seed, &[TAG_DISTURBANCE])
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Circularly-symmetric complex Gaussian with `E|z|^2 = variance`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (0.5 * variance).sqrt();
    Complex64::new(s * normal(rng), s * normal(rng))
}

pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}
