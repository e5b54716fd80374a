//! Seeded, splittable random streams.
//!
//! Every random quantity is drawn from ChaCha8 keyed by the user seed
//! (expanded with `SeedableRng::seed_from_u64`) and positioned on a stream
//! whose 64-bit id packs what the numbers are for:
//!
//! ```text
//! bits 63..56  purpose tag
//! bits 55..40  grid index (e.g. position in an n-grid)
//! bits 39..0   trial index
//! ```
//!
//! Streams never overlap, so results do not depend on the order in which
//! trials are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for; the discriminant is the purpose tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    /// A standalone dataset from `synth_regression`.
    Dataset = 1,
    /// Training sample of one Monte Carlo trial.
    Train = 2,
    /// Fresh test sample for risk estimates.
    Test = 3,
    /// Large sample for the reference minimiser.
    Reference = 4,
    /// Random rotation of the instance distribution.
    Rotation = 5,
    /// Index sampling of SGD.
    Sgd = 6,
    /// Random preconditioners and other auxiliary draws.
    Auxiliary = 7,
}

const TRIAL_BITS: u32 = 40;

pub fn stream_id(purpose: Purpose, grid: u16, trial: u64) -> u64 {
    debug_assert!(trial < 1 << TRIAL_BITS);
    ((purpose as u64) << 56) | ((grid as u64) << TRIAL_BITS) | (trial & ((1 << TRIAL_BITS) - 1))
}

pub fn stream_rng(seed: u64, purpose: Purpose, grid: u16, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(purpose, grid, trial));
    rng
}
