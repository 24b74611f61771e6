//! Seeded random streams.
//!
//! Every source of randomness draws from its own ChaCha stream derived from
//! the run seed, so changing how one concern consumes randomness never shifts
//! the numbers another concern sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Jitter,
    Workloads,
    Scheduler,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Jitter => 1,
            Stream::Workloads => 2,
            Stream::Scheduler => 3,
        }
    }
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}
