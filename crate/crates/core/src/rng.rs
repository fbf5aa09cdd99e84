//! Seeded, splittable, counter-based 64-bit generator.
//!
//! The stream is fully specified here so that ports in other languages can
//! reproduce every sample bit for bit:
//!
//! ```text
//! GAMMA  = 0x9E3779B97F4A7C15
//! mix(z) = z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//!          z ^= z >> 27; z *= 0x94D049BB133111EB;
//!          z ^ (z >> 31)                       (wrapping u64 arithmetic)
//!
//! new(seed)        key = mix(seed), counter = 0
//! next_u64()       counter += 1; return mix(key + counter * GAMMA)
//! split(label)     child key = mix(key ^ mix(label + GAMMA)), counter = 0
//! uniform()        (next_u64() >> 11) * 2^-53                  in [0, 1)
//! below(n)         (next_u64() as u128 * n) >> 64              in [0, n)
//! normal_pair()    u1 = 1 - uniform(); u2 = uniform();
//!                  r = sqrt(-2 ln u1); (r cos 2πu2, r sin 2πu2)
//! normal()         normal_pair().0
//! ```
//!
//! `split` never advances the parent, so sub-streams are addressed by label
//! rather than by call order.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeededRng {
    key: u64,
    counter: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            key: mix(seed),
            counter: 0,
        }
    }

    /// Independent child stream identified by `label`.
    pub fn split(&self, label: u64) -> Self {
        Self {
            key: mix(self.key ^ mix(label.wrapping_add(GAMMA))),
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.key.wrapping_add(self.counter.wrapping_mul(GAMMA)))
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`. `n` must be non-zero.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Two independent standard normals from one Box–Muller transform.
    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        (r * theta.cos(), r * theta.sin())
    }

    pub fn normal(&mut self) -> f64 {
        self.normal_pair().0
    }
}
