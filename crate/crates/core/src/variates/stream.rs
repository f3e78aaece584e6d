//! Counter-based uniform streams.
//!
//! Each stream is a ChaCha8 keystream keyed by `(seed, replication, stream)`,
//! so the n-th uniform of a stream depends on nothing but that triple and
//! `n`. Replications can run on any thread in any order and still see the
//! same numbers.

use std::collections::HashMap;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Stream ids at or above this value are reserved for routing decisions.
pub const ROUTING_STREAM_BASE: u64 = 1 << 40;

const DOMAIN: [u8; 8] = *b"stochnet";

fn key(seed: u64, replication: u64, stream: u64) -> [u8; 32] {
    let mut k = [0u8; 32];
    k[..8].copy_from_slice(&seed.to_le_bytes());
    k[8..16].copy_from_slice(&replication.to_le_bytes());
    k[16..24].copy_from_slice(&stream.to_le_bytes());
    k[24..].copy_from_slice(&DOMAIN);
    k
}

/// Maps 64 random bits to the open interval (0, 1).
pub fn bits_to_open_unit(x: u64) -> f64 {
    ((x >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// An infinite sequence of uniforms in (0, 1).
#[derive(Clone, Debug)]
pub struct UniformStream {
    rng: ChaCha8Rng,
}

impl Iterator for UniformStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        Some(bits_to_open_unit(self.rng.next_u64()))
    }
}

pub fn stream(seed: u64, replication: u64, stream: u64) -> UniformStream {
    UniformStream {
        rng: ChaCha8Rng::from_seed(key(seed, replication, stream)),
    }
}

/// Deterministically derives a child seed, e.g. one per optimization
/// iteration or per macro-replication.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug)]
struct Cached {
    source: UniformStream,
    values: Vec<f64>,
}

/// The randomness ω of one replication: random access into every stream,
/// with generated values cached so that evaluating the same replication at
/// several parameter points reuses identical uniforms.
#[derive(Debug)]
pub struct Replication {
    seed: u64,
    index: u64,
    streams: HashMap<u64, Cached>,
    generated: u64,
}

impl Replication {
    pub fn new(seed: u64, index: u64) -> Self {
        Self {
            seed,
            index,
            streams: HashMap::new(),
            generated: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    /// The `n`-th (0-based) uniform of stream `id`.
    pub fn uniform(&mut self, id: u64, n: usize) -> f64 {
        let (seed, index) = (self.seed, self.index);
        let cached = self.streams.entry(id).or_insert_with(|| Cached {
            source: stream(seed, index, id),
            values: Vec::new(),
        });
        while cached.values.len() <= n {
            cached.values.push(cached.source.next().unwrap());
            self.generated += 1;
        }
        cached.values[n]
    }

    /// Number of distinct uniforms generated so far.
    pub fn draws(&self) -> u64 {
        self.generated
    }
}
