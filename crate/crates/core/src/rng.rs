//! Counter-based random stream derivation.
//!
//! Every random draw in a simulation comes from a ChaCha8 stream that is
//! addressed by `(run seed, step, node, phase)`. A run seed is derived from the
//! master seed and the run index with SplitMix64; the remaining coordinates are
//! packed into the ChaCha stream id. Because streams are addressed rather than
//! consumed in sequence, the order in which runs or nodes are processed (and
//! therefore the worker-pool width) never changes the results.
//!
//! Stream id layout (most significant first): 24 bits step, 24 bits node,
//! 16 bits phase.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose of a random stream within one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum Phase {
    Sensing = 1,
    MsResample = 2,
    MsRoughen = 3,
    MsBirth = 4,
    MsKmeans = 5,
    /// Per-node streams, shared by the diffusion filter and the local
    /// baseline so that an isolated node behaves identically in both.
    NodeResample = 6,
    NodeRoughen = 7,
    NodeBirth = 8,
    Test = 0xfff0,
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of Monte Carlo run `run` under `master`.
pub fn run_seed(master: u64, run: u64) -> u64 {
    splitmix64(master ^ splitmix64(run.wrapping_add(1)))
}

/// Source of per-(step, node, phase) random streams for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamFactory {
    seed: u64,
}

impl StreamFactory {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Stream for `phase` at `step` on `node` (use 0 for central processing).
    pub fn stream(&self, step: usize, node: usize, phase: Phase) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let id = ((step as u64 & 0xff_ffff) << 40)
            | ((node as u64 & 0xff_ffff) << 16)
            | phase as u16 as u64;
        rng.set_stream(id);
        rng
    }
}
