//! Portable seeded randomness.
//!
//! Every random draw in the crate comes from [`SplitMix64`], a 64-bit
//! generator whose full state transition is:
//!
//! ```text
//! state <- state + 0x9E3779B97F4A7C15            (wrapping)
//! z     <- state
//! z     <- (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9  (wrapping)
//! z     <- (z ^ (z >> 27)) * 0x94D049BB133111EB  (wrapping)
//! out   <- z ^ (z >> 31)
//! ```
//!
//! Derived quantities are built from that stream only:
//!
//! * uniform `[0, 1)`: `(out >> 11) * 2^-53`
//! * integer below `n`: rejection on `out < floor(2^64 / n) * n`, then `out % n`
//! * shuffle: Fisher-Yates from the last index down, `j = below(i + 1)`
//! * standard normal: Box-Muller cosine branch, `u1 = 1 - uniform()`, `u2 = uniform()`,
//!   two uniforms consumed per draw, nothing cached
//!
//! Any language with wrapping 64-bit arithmetic reproduces the same streams.

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Unbiased integer in `0..n`. Panics when `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let zone = (u64::MAX / n) * n;
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % n;
            }
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

/// Sub-seed for a pipeline stage: FNV-1a of the tag mixed into the global seed.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    SplitMix64::new(seed ^ h).next_u64()
}
