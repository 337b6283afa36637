//! Named deterministic random streams.
//!
//! Every consumer of randomness draws from its own stream, seeded from a
//! master seed and a stream tag, so that e.g. changing the node count never
//! perturbs the task data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::numerics::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stream {
    Graph,
    GroundTruth,
    TaskData,
    InitMatrix,
    Splits,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Graph => 0x6772_6170_6800_0001,
            Stream::GroundTruth => 0x7472_7574_6800_0002,
            Stream::TaskData => 0x7461_736b_7300_0003,
            Stream::InitMatrix => 0x696e_6974_0000_0004,
            Stream::Splits => 0x7370_6c69_7400_0005,
        }
    }
}

/// SplitMix64 finalizer.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, which.tag()))
}

/// Seed for trial `trial` of an experiment with master seed `master`.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    mix(master, trial as u64 + 1)
}

/// Standard Gaussian matrix, filled column by column.
pub fn gaussian_matrix<R: rand::Rng>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}
