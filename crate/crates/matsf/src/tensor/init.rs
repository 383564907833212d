//! Counter-based deterministic generator for parameter initialization.
//!
//! Draw `i` is a pure function of `(seed, i)` (splitmix64 finalizer over a
//! Weyl sequence), so initialization is reproducible independent of any
//! external RNG crate's stream layout.

const WEYL: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent stream seed for one party of a run (forecaster i,
/// discriminator, ...) from the run seed.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    mix(seed ^ mix(stream.wrapping_mul(WEYL).wrapping_add(0x5851_F42D_4C95_7F2D)))
}

#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { key: seed, counter: 0 }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.key.wrapping_add(self.counter.wrapping_mul(WEYL)))
    }

    /// Uniform in [0, 1).
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [-bound, bound).
    pub fn next_symmetric(&mut self, bound: f64) -> f64 {
        bound * (2.0 * self.next_unit() - 1.0)
    }

    pub fn fill_symmetric(&mut self, count: usize, bound: f64) -> Vec<f64> {
        (0..count).map(|_| self.next_symmetric(bound)).collect()
    }
}
