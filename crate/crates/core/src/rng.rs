//! Seeded randomness for data generation and parameter initialization.
//!
//! Everything random in this crate flows through [`SplitMix64`] so that a
//! given seed reproduces results bit for bit. The generator is the standard
//! SplitMix64 step: state advances by the 64-bit golden-ratio constant
//! `0x9E3779B97F4A7C15`, and the output is the two-round mix
//!
//! ```text
//! z  = state            (after the increment)
//! z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9;
//! z ^= z >> 27;  z *= 0x94D049BB133111EB;
//! z ^= z >> 31;
//! ```
//!
//! `next_f64` maps the top 53 bits to `[0, 1)`. Standard normals come from
//! the Box–Muller transform: with `u1 ∈ (0, 1]` and `u2 ∈ [0, 1)`,
//! `r = sqrt(-2 ln u1)` and the pair `(r cos(2π u2), r sin(2π u2))` is
//! returned across consecutive calls (the second value is cached).
//! Substreams created by [`SplitMix64::split`] are seeded from the parent's
//! next output, so the substream layout is part of a generator's contract.

/// Splittable 64-bit PRNG; see the module docs for the exact algorithm.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
    cached_normal: Option<f64>,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 {
            state: seed,
            cached_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal via Box–Muller; pairs are generated together and the
    /// second member is served on the following call.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.next_f64(); // (0, 1]: keeps ln well-defined
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.cached_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Derive an independent substream. The child is seeded from this
    /// generator's next output, so split order matters and is fixed per
    /// caller.
    pub fn split(&mut self) -> SplitMix64 {
        SplitMix64::new(self.next_u64())
    }

    /// Exactly `count` distinct indices from `0..n`, chosen uniformly via a
    /// partial Fisher–Yates shuffle. Order of the result is not meaningful.
    pub fn choose_exact(&mut self, n: usize, count: usize) -> Vec<usize> {
        assert!(count <= n, "cannot choose {count} of {n}");
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..count {
            let j = i + (self.next_u64() as usize) % (n - i);
            idx.swap(i, j);
        }
        idx.truncate(count);
        idx
    }
}
