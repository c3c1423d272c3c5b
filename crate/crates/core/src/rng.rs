//! Seed-splittable random streams.
//!
//! Every stream is a ChaCha20 generator keyed by `(domain, experiment seed,
//! chain seed)` and positioned on stream `replica`, so any cell of an
//! ensemble can be regenerated independently of scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Stream domain, so that e.g. mass draws and state samples never share keys.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Masses,
    StateSamples,
    Bootstrap,
    Misc,
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::Masses => 0x6d61_7373,
            Domain::StateSamples => 0x7374_6174,
            Domain::Bootstrap => 0x626f_6f74,
            Domain::Misc => 0x6d69_7363,
        }
    }
}

pub fn stream(domain: Domain, experiment_seed: u64, chain_seed: u64, replica: u64) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&domain.tag().to_le_bytes());
    key[8..16].copy_from_slice(&experiment_seed.to_le_bytes());
    key[16..24].copy_from_slice(&chain_seed.to_le_bytes());
    key[24..32].copy_from_slice(b"chainlab");
    let mut rng = ChaCha20Rng::from_seed(key);
    rng.set_stream(replica);
    rng
}
