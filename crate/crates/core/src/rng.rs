//! Deterministic random substreams.
//!
//! Every stochastic component (thinning streams, innovations, intervention
//! effects, bootstrap replicates, study replicates) draws from its own
//! ChaCha stream derived from a master seed and a path of component ids.
//! Adding or removing draws on one component can therefore never perturb
//! another, and replicate-parallel code stays reproducible at any thread
//! count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A point in the seed-derivation tree. `StreamKey::new(seed)` is the root;
/// `child(id)` descends deterministically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey(u64);

// splitmix64 finalizer; full-period mixing of one 64-bit word.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl StreamKey {
    pub fn new(master_seed: u64) -> Self {
        StreamKey(mix(master_seed ^ 0xD6E8_FEB8_6659_FD93))
    }

    /// Derive the substream for component `id`. Order-sensitive:
    /// `k.child(a).child(b) != k.child(b).child(a)` in general.
    pub fn child(self, id: u64) -> Self {
        StreamKey(mix(self.0 ^ id.wrapping_mul(0xA24B_AED4_963E_E407)))
    }

    /// Materialize the stream.
    pub fn rng(self) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        let mut st = self.0;
        for chunk in seed.chunks_mut(8) {
            st = mix(st);
            chunk.copy_from_slice(&st.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

/// Component ids used by the simulator and the pipelines.
pub mod component {
    /// Parent of the per-lag thinning streams.
    pub const THINNING: u64 = 1;
    /// Innovation stream.
    pub const INNOVATION: u64 = 2;
    /// Parent of the per-intervention streams.
    pub const INTERVENTION: u64 = 3;
    /// Parent of per-replicate streams (bootstrap, studies).
    pub const REPLICATE: u64 = 4;
    /// Parent of per-iteration streams in the detection pipeline.
    pub const ITERATION: u64 = 5;
}
