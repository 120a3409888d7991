pub mod data;
pub mod env;
pub mod error;
pub mod eval;
pub mod il;
pub mod nn;
pub mod rl;

pub use env::{Action, ArenaConfig, Cell, CoinField, Compass, Env, State, StateMode};
pub use error::{Error, Result};

/// Independent sub-seed for a named stream of a run.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the combined value
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream ids for `derive_seed`, so each consumer of a run seed draws
/// from its own generator.
pub mod stream {
    pub const POLICY_INIT: u64 = 1;
    pub const VALUE_INIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const EVAL: u64 = 4;
    pub const ROLLOUT: u64 = 5;
}
