use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Root of a deterministic random stream.
///
/// Identical seeds and inputs give bit-identical outputs for every
/// stochastic operation in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RngSeed(pub u64);

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngSeed {
    /// Child seed for the stream identified by `tags`. Order of tags matters.
    pub fn derive(self, tags: &[u64]) -> RngSeed {
        let mut h = splitmix64(self.0);
        for &t in tags {
            h = splitmix64(h ^ splitmix64(t.wrapping_add(0x632B_E59B_D9B4_E019)));
        }
        RngSeed(h)
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

impl From<u64> for RngSeed {
    fn from(v: u64) -> Self {
        RngSeed(v)
    }
}

/// Stream tags shared by the pipeline so child seeds never collide.
pub mod tags {
    pub const DATA: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const CELL: u64 = 3;
    pub const RETRAIN: u64 = 4;
    pub const BOOTSTRAP: u64 = 5;
    pub const TRIAL: u64 = 6;
    pub const TRUE_VALUE: u64 = 7;
    pub const EPISODE: u64 = 8;
}
