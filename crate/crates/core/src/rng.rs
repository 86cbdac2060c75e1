//! Independent random streams addressed by (scenario, replication, purpose).
//!
//! Every stream is a ChaCha8 generator keyed by the master seed with a
//! stream number that packs the three coordinates, so a replication can be
//! regenerated on any worker without touching any other replication.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for inside one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    Historical = 1,
    Current = 2,
    Arms = 3,
    /// Historical-control draw for the strategy 1 final set (shared with
    /// the unadjusted test at the strategy 1 size).
    Sampling1 = 4,
    /// As above for strategy 2.
    Sampling2 = 5,
    /// Historical-control draw at the initial size.
    SamplingInitial = 6,
}

/// Largest replication index that fits in a stream number.
pub const MAX_REPLICATION: u64 = (1 << 48) - 1;

/// Stream number: scenario in the top byte, purpose in the next, replication
/// index in the low 48 bits.
pub fn stream_id(scenario: u8, rep: u64, purpose: Purpose) -> u64 {
    assert!(rep <= MAX_REPLICATION, "replication index {rep} out of range");
    (u64::from(scenario) << 56) | ((purpose as u64) << 48) | rep
}

pub fn stream(master_seed: u64, scenario: u8, rep: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id(scenario, rep, purpose));
    rng
}

/// Streams of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplicationStreams {
    pub master_seed: u64,
    pub scenario: u8,
    pub rep: u64,
}

impl ReplicationStreams {
    pub fn new(master_seed: u64, scenario: u8, rep: u64) -> Self {
        Self {
            master_seed,
            scenario,
            rep,
        }
    }

    pub fn get(&self, purpose: Purpose) -> ChaCha8Rng {
        stream(self.master_seed, self.scenario, self.rep, purpose)
    }
}
