//! Deterministic random streams: splitmix64, Box–Muller normals, and
//! Fisher–Yates index sampling.
//!
//! Every stochastic artifact produced by this crate (noise images, synthetic
//! low-rank instances, randomized test matrices) draws from this generator,
//! so a 64-bit seed pins the result bit-for-bit.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The splitmix64 output mix (Steele, Lea & Flood's `mix64`).
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// splitmix64 stream: a 64-bit counter advanced by a Weyl increment and
/// finalized by an avalanching mix. Tiny state, no platform dependence.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
    spare_normal: Option<f64>,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 {
            state: seed,
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform on [0, 1) with 53-bit resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal via Box–Muller. Draws a (cos, sin) pair per two calls;
    /// the second member is cached, so the stream position depends only on
    /// how many normals were requested.
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let mut u1 = self.next_f64();
        while u1 == 0.0 {
            u1 = self.next_f64();
        }
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        self.spare_normal = Some(r * s);
        r * c
    }

    /// Uniform integer in [0, bound), rejection-sampled so every value is
    /// exactly equally likely.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "next_below: bound must be positive");
        let zone = u64::MAX - u64::MAX % bound;
        loop {
            let r = self.next_u64();
            if r < zone {
                return r % bound;
            }
        }
    }

    /// The first `take` entries of a Fisher–Yates shuffle of `0..len`: a
    /// uniform sample of distinct indices, in draw order.
    pub fn sample_indices(&mut self, len: usize, take: usize) -> Vec<usize> {
        assert!(take <= len, "sample_indices: take {take} exceeds len {len}");
        let mut idx: Vec<usize> = (0..len).collect();
        for i in 0..take {
            let j = i + self.next_below((len - i) as u64) as usize;
            idx.swap(i, j);
        }
        idx.truncate(take);
        idx
    }
}

/// Deterministically combines a base seed with stream labels (grid indices,
/// repeat counters, …) so that parallel workers draw from disjoint streams
/// and a run is reproducible regardless of scheduling.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut s = mix64(base ^ GOLDEN_GAMMA);
    for &p in parts {
        s = mix64(s.wrapping_add(GOLDEN_GAMMA) ^ mix64(p.wrapping_add(1)));
    }
    s
}
