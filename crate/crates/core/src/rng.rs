//! Seed derivation.
//!
//! Every random stream in a run is derived from one root seed. A stream is
//! identified by a [`Stream`] tag and an index (episode number, trial number,
//! worker id), and its seed is `splitmix64(root ^ splitmix64(tag << 32 | index))`.
//! Streams are therefore independent of the order in which they are created,
//! which is what makes paired comparisons across controller modes possible:
//! the gust stream for trial `k` does not depend on anything the controller did.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    Gust = 1,
    InitialState = 2,
    SensorNoise = 3,
    NetInit = 4,
    Exploration = 5,
    Replay = 6,
    Evaluation = 7,
    Calibration = 8,
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(root: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(root ^ splitmix64(((stream as u64) << 32) ^ index))
}

pub fn stream_rng(root: u64, stream: Stream, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(root, stream, index))
}
