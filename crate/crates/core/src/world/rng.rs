use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Sensor streams. Each stream draws from its own generator so adding or
/// skipping one sensor never perturbs another.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Track = 1,
    Lidar = 2,
    Detector = 3,
    Odometry = 4,
    StereoMatch = 5,
    Benchmark = 6,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic generator for `(seed, stream, index)`, e.g. one per sensor tick.
pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mixed = splitmix64(seed ^ splitmix64((stream as u64) << 32 ^ splitmix64(index)));
    ChaCha8Rng::seed_from_u64(mixed)
}
