//! Seed lineage and keyed random substreams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream selected by
//! `(seed, stream id)`. ChaCha is counter based, so a stream can be opened
//! anywhere without touching other streams; this is what makes environment
//! refinement order-independent and ensemble results independent of the
//! number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream carrying the base increments of the environment on `x >= 0`.
pub const STREAM_RIGHT: u64 = 0;
/// Stream carrying the base increments of the environment on `x <= 0`.
pub const STREAM_LEFT: u64 = 1;

const LATTICE_NORMAL_TAG: u64 = 1 << 63;
const LATTICE_UNIFORM_TAG: u64 = 1 << 62;
const LATTICE_MASK: u64 = (1 << 62) - 1;

/// Tags used when deriving child seeds from a master seed.
pub mod tag {
    pub const ENVIRONMENT: u64 = 0x656e_7669;
    pub const PATH: u64 = 0x7061_7468;
    pub const BOOTSTRAP: u64 = 0x626f_6f74;
    pub const ORACLE: u64 = 0x6f72_6163;
    pub const RESAMPLE: u64 = 0x7265_7361;
}

/// Opens stream `stream` of the generator keyed by `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finaliser; used only to derive child seeds.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic child seed for slot `index` under `tag`.
pub fn derive_seed(master: u64, tag: u64, index: u64) -> u64 {
    mix64(mix64(master ^ mix64(tag)) ^ index)
}

fn zigzag(k: i64) -> u64 {
    ((k << 1) ^ (k >> 63)) as u64
}

/// Standard normal keyed by a lattice position.
pub fn lattice_normal(seed: u64, lattice_index: i64) -> f64 {
    let stream = LATTICE_NORMAL_TAG | (zigzag(lattice_index) & LATTICE_MASK);
    substream(seed, stream).sample(StandardNormal)
}

/// Uniform on `[0, 1)` keyed by a lattice position (bridge-crossing draws).
pub fn lattice_uniform(seed: u64, lattice_index: i64) -> f64 {
    let stream = LATTICE_UNIFORM_TAG | (zigzag(lattice_index) & LATTICE_MASK);
    substream(seed, stream).random::<f64>()
}
