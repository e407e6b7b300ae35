//! Seeded random-number lanes.
//!
//! Every run derives independent ChaCha streams from one seed. The
//! environment lanes (arrivals, items, reward noise) are shared by all
//! policies so comparisons use common random numbers; policies draw from
//! their own lane and never touch the environment lanes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lane {
    Arrivals,
    Items,
    RewardNoise,
    /// Internal randomness of a policy (privatizer seeds, tie noise).
    Policy,
    /// Ground-truth world construction.
    World,
}

impl Lane {
    pub fn stream(self) -> u64 {
        match self {
            Lane::Arrivals => 0,
            Lane::Items => 1,
            Lane::RewardNoise => 2,
            Lane::Policy => 3,
            Lane::World => 1 << 32,
        }
    }
}

pub fn lane_rng(seed: u64, lane: Lane) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(lane.stream());
    rng
}
