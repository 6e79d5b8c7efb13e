//! Deterministic seedable randomness.
//!
//! A single 64-bit state drives every draw, which keeps the full generator
//! state trivially persistable in checkpoints and makes sample streams
//! bit-exact for a fixed seed.

/// Splitmix64 generator. Identical seed, identical stream, forever.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    /// Raw state, used for checkpoint persistence.
    pub fn state(&self) -> u64 {
        self.state
    }

    /// Restore a generator at an exact saved state.
    pub fn from_state(state: u64) -> Self {
        Rng { state }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn uniform01(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`.
    pub fn uniform_usize(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Modulo bias is below 2^-53 for every n used here.
        (self.uniform01() * n as f64) as usize
    }

    /// Uniform draw in `[lo, hi]` over the integers, inclusive.
    pub fn uniform_range(&mut self, lo: usize, hi: usize) -> usize {
        debug_assert!(hi >= lo);
        lo + self.uniform_usize(hi - lo + 1)
    }

    /// One Bernoulli trial with success probability `p`.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform01() < p
    }

    /// Fill `out` with i.i.d. standard normal draws (Box-Muller, consumed
    /// in pairs so the generator state stays a single u64).
    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        let mut i = 0;
        while i < out.len() {
            let (z0, z1) = self.normal_pair();
            out[i] = z0;
            if i + 1 < out.len() {
                out[i + 1] = z1;
            }
            i += 2;
        }
    }

    fn normal_pair(&mut self) -> (f64, f64) {
        // u1 must be strictly positive for the log.
        let u1 = 1.0 - self.uniform01();
        let u2 = self.uniform01();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        (r * theta.cos(), r * theta.sin())
    }
}
