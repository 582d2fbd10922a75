//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream addressed by
//! `(master_seed, trial, lane)`: the master seed sets the key, the trial
//! index selects one of the 2^64 ChaCha streams, and the lane selects a
//! block of 2^36 words inside that stream. Matrix row `i` of a trial uses
//! lane `i`; the initial state and auxiliary draws use reserved lanes near
//! `u32::MAX`. Results therefore do not depend on how trials or rows are
//! scheduled across threads.
//!
//! Normal deviates use `rand_distr::StandardNormal` (ziggurat) on top of the
//! stream, which is deterministic for a given stream position.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Lane used for the noise of the initial state.
pub const LANE_INITIAL: u32 = u32::MAX - 1;
/// Lane used for auxiliary random vectors (identity checks, probes).
pub const LANE_AUX: u32 = u32::MAX - 2;

const LANE_SHIFT: u32 = 36;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub master_seed: u64,
    pub trial: u64,
    pub lane: u32,
}

impl StreamKey {
    pub fn new(master_seed: u64, trial: u64, lane: u32) -> Self {
        Self {
            master_seed,
            trial,
            lane,
        }
    }

    pub fn rng(&self) -> StreamRng {
        stream(self.master_seed, self.trial, self.lane)
    }
}

pub fn stream(master_seed: u64, trial: u64, lane: u32) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial);
    rng.set_word_pos(u128::from(lane) << LANE_SHIFT);
    rng
}

/// Addresses the random streams of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TrialSeed {
    pub master_seed: u64,
    pub trial: u64,
}

impl TrialSeed {
    pub fn new(master_seed: u64, trial: u64) -> Self {
        Self { master_seed, trial }
    }

    pub fn lane(&self, lane: u32) -> StreamRng {
        stream(self.master_seed, self.trial, lane)
    }

    pub fn row(&self, row: usize) -> StreamRng {
        self.lane(u32::try_from(row).expect("row index fits in a lane"))
    }

    pub fn initial(&self) -> StreamRng {
        self.lane(LANE_INITIAL)
    }

    pub fn aux(&self) -> StreamRng {
        self.lane(LANE_AUX)
    }
}

/// Packs a sweep index (e.g. position in a list of network sizes) and a
/// trial index into one stream id so different sweeps never share streams.
pub fn sweep_trial_id(sweep: u32, trial: u32) -> u64 {
    (u64::from(sweep) << 32) | u64::from(trial)
}
