//! Seeded random streams.
//!
//! Every stochastic operation draws from a [`ChaCha8Rng`] derived from the
//! simulation seed. Independent consumers use distinct stream ids so their
//! draws never depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream ids for the top-level consumers.
pub mod stream {
    pub const NETWORK: u64 = 1;
    pub const INITIAL_OPINIONS: u64 = 2;
    pub const GMP_INIT: u64 = 3;
    pub const INTERPOLATION: u64 = 4;
    pub const CLUSTERING: u64 = 5;
    pub const BASELINE: u64 = 6;
    pub const PROFILES: u64 = 7;
    /// Per-agent generator streams start here; see [`super::agent_step_rng`].
    pub const AGENT_BASE: u64 = 1 << 32;
}

pub fn seeded_rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derive_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream for one agent at one step, independent of processing order.
pub fn agent_step_rng(seed: u64, agent: usize, step: usize) -> SimRng {
    let mut rng = derive_rng(seed, stream::AGENT_BASE + agent as u64);
    // 2^20 words per step keeps per-step draws disjoint for any realistic use.
    rng.set_word_pos((step as u128) << 20);
    rng
}
