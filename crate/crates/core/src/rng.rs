//! Seeded random sub-streams.
//!
//! Every stochastic quantity in a run is drawn from its own stream derived
//! from `(master_seed, system, purpose)`. Adding or removing systems, or
//! reordering draws of one purpose, never perturbs draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// What a sub-stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    PlantNoise,
    UplinkChannel,
    DownlinkChannel,
    UplinkRxNoise,
    DownlinkRxNoise,
    /// Controller-side surrogate draws of the downlink estimation error.
    MirrorNoise,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::PlantNoise => 1,
            Purpose::UplinkChannel => 2,
            Purpose::DownlinkChannel => 3,
            Purpose::UplinkRxNoise => 4,
            Purpose::DownlinkRxNoise => 5,
            Purpose::MirrorNoise => 6,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic stream for `(master_seed, system, purpose)`.
pub fn stream(master_seed: u64, system: usize, purpose: Purpose) -> ChaCha12Rng {
    let mixed = splitmix64(
        splitmix64(master_seed ^ 0x5743_5f43_4f52_455f).wrapping_add(
            splitmix64((system as u64).wrapping_mul(0x0100_0000_01b3) ^ purpose.tag()),
        ),
    );
    ChaCha12Rng::seed_from_u64(mixed)
}
