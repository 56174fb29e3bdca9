//! Channel-collision analysis: closed form, Monte Carlo, and the
//! deterministic-schedule zero-collision check.
//!
//! The randomized baseline models standard CS hopping as independent uniform
//! channel choices per step and per pair. With `P` simultaneous pairs over
//! `N` channels the per-step probability that a victim pair shares its
//! channel with at least one other pair is `1 - ((N-1)/N)^(P-1)`, and the
//! expected overlap count over one `N`-step procedure is `N` times that.
//! The deterministic cyclic-shift schedule keeps simultaneous pairs disjoint
//! at every step, which [`count_deterministic_collisions`] verifies by
//! exhaustive enumeration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::coordination::{
    active_pairs, channel_sequence, AssignmentMatrix, ChannelList, CoordinationError,
};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CollisionError {
    #[error("{overlaps} overlaps requested for a {len}-step sequence")]
    TooManyOverlaps { overlaps: usize, len: usize },
    #[error("cannot place a collision-free step: the channel pool only holds the victim's channel")]
    NoAlternativeChannel,
}

/// Per-step probability that a victim pair collides with at least one of the
/// other `pairs - 1` pairs when all hop independently and uniformly over
/// `channels` channels.
pub fn collision_probability<T: Real>(channels: u32, pairs: u32) -> T {
    assert!(channels >= 1 && pairs >= 1);
    let n = T::from_u32(channels).expect("channel count");
    let ratio = (n - T::one()) / n;
    T::one() - ratio.powi(pairs as i32 - 1)
}

/// Expected overlapping steps across one procedure of `channels` steps.
pub fn expected_overlaps<T: Real>(channels: u32, pairs: u32) -> T {
    T::from_u32(channels).expect("channel count") * collision_probability::<T>(channels, pairs)
}

/// Monte Carlo setup for the randomized-hopping baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CollisionScenario {
    pub channels: u32,
    pub pairs: u32,
    pub trials: u64,
    pub seed: u64,
}

/// Empirical overlap statistics from [`simulate_random_hopping`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoppingEstimate<T> {
    pub mean: T,
    pub stderr: T,
    pub trials: u64,
}

// Per-trial seeds are derived from the scenario seed with a SplitMix64 step,
// so trials are independent of execution order and may run in parallel.
fn trial_seed(seed: u64, trial: u64) -> u64 {
    let mut z = seed ^ trial.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn run_trial(scenario: &CollisionScenario, trial: u64) -> u32 {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(scenario.seed, trial));
    let n = scenario.channels;
    let mut overlaps = 0u32;
    for _ in 0..n {
        let victim = rng.gen_range(0..n);
        let mut hit = false;
        for _ in 1..scenario.pairs {
            if rng.gen_range(0..n) == victim {
                hit = true;
            }
        }
        if hit {
            overlaps += 1;
        }
    }
    overlaps
}

/// Draws independent uniform channel sequences for every pair and counts the
/// steps where the victim shares its channel, averaged over all trials.
/// Deterministic for a given scenario, regardless of thread scheduling.
pub fn simulate_random_hopping<T: Real>(scenario: &CollisionScenario) -> HoppingEstimate<T> {
    assert!(scenario.trials >= 1);
    let (sum, sum_sq) = (0..scenario.trials)
        .into_par_iter()
        .map(|trial| {
            let x = run_trial(scenario, trial) as u64;
            (x as u128, (x * x) as u128)
        })
        .reduce(|| (0u128, 0u128), |a, b| (a.0 + b.0, a.1 + b.1));
    let trials = T::from_u64(scenario.trials).expect("trial count");
    let mean = T::from_u128(sum).expect("overlap sum") / trials;
    let stderr = if scenario.trials > 1 {
        let variance =
            (T::from_u128(sum_sq).expect("overlap sum of squares") - trials * mean * mean)
                / (trials - T::one());
        (variance.max(T::zero()) / trials).sqrt()
    } else {
        T::zero()
    };
    HoppingEstimate {
        mean,
        stderr,
        trials: scenario.trials,
    }
}

/// Enumerates every scheduled pair's channel sequence for each given event
/// counter and counts same-step channel collisions between distinct pairs.
/// The deterministic schedule contract is a count of exactly zero.
pub fn count_deterministic_collisions(
    matrix: &AssignmentMatrix,
    base: &ChannelList,
    event_counters: &[u16],
) -> Result<u64, CoordinationError> {
    let mut collisions = 0u64;
    for &counter in event_counters {
        for slot in 0..matrix.slot_count() {
            let pairs = active_pairs(matrix, slot)?;
            if pairs.len() > base.len() {
                return Err(CoordinationError::TooManyPairs {
                    slot,
                    pairs: pairs.len(),
                    channels: base.len(),
                });
            }
            let sequences: Vec<Vec<u8>> =
                pairs.iter().map(|pair| channel_sequence(pair, counter, base)).collect();
            for step in 0..base.len() {
                for a in 0..sequences.len() {
                    for b in (a + 1)..sequences.len() {
                        if sequences[a][step] == sequences[b][step] {
                            collisions += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(collisions)
}

/// Builds a channel sequence with exactly `overlaps` steps colliding with the
/// victim's sequence at randomly chosen positions; every other step picks a
/// channel from `pool` that differs from the victim's channel at that step.
pub fn build_overlap_sequence(
    victim: &[u8],
    pool: &ChannelList,
    overlaps: usize,
    seed: u64,
) -> Result<Vec<u8>, CollisionError> {
    if overlaps > victim.len() {
        return Err(CollisionError::TooManyOverlaps {
            overlaps,
            len: victim.len(),
        });
    }
    if pool.len() < 2 && overlaps < victim.len() {
        return Err(CollisionError::NoAlternativeChannel);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut colliding = vec![false; victim.len()];
    for pick in rand::seq::index::sample(&mut rng, victim.len(), overlaps) {
        colliding[pick] = true;
    }
    let sequence = victim
        .iter()
        .enumerate()
        .map(|(step, &victim_channel)| {
            if colliding[step] {
                victim_channel
            } else {
                loop {
                    let candidate = pool.channel(rng.gen_range(0..pool.len()));
                    if candidate != victim_channel {
                        break candidate;
                    }
                }
            }
        })
        .collect();
    Ok(sequence)
}

/// Same-step matches between two sequences; the independent recount used to
/// check [`build_overlap_sequence`].
pub fn count_overlaps(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x == y).count()
}

/// One row of the collision-analysis report.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CollisionRow {
    pub channels: u32,
    pub pairs: u32,
    pub analytic_p: f64,
    pub analytic_expected_overlaps: f64,
    pub empirical_mean: f64,
    pub stderr: f64,
    pub trials: u64,
    pub seed: u64,
}

impl CollisionRow {
    pub fn csv_header() -> &'static str {
        "N,P,analytic_p,analytic_EX,empirical_mean,stderr,trials,seed"
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.channels,
            self.pairs,
            self.analytic_p,
            self.analytic_expected_overlaps,
            self.empirical_mean,
            self.stderr,
            self.trials,
            self.seed
        )
    }
}

/// Runs the analytic model and the Monte Carlo baseline for one scenario.
pub fn analyze(scenario: &CollisionScenario) -> CollisionRow {
    let estimate = simulate_random_hopping::<f64>(scenario);
    CollisionRow {
        channels: scenario.channels,
        pairs: scenario.pairs,
        analytic_p: collision_probability(scenario.channels, scenario.pairs),
        analytic_expected_overlaps: expected_overlaps(scenario.channels, scenario.pairs),
        empirical_mean: estimate.mean,
        stderr: estimate.stderr,
        trials: scenario.trials,
        seed: scenario.seed,
    }
}
