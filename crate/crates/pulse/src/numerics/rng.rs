//! Deterministic random sampling.
//!
//! The generator is xoshiro256** (Blackman & Vigna), seeded through
//! splitmix64. Both algorithms are published with exact integer semantics,
//! so a given seed yields the same stream on every platform. All sampling
//! used anywhere in the crate (init, shuffling, dropout, mixup, synthesis)
//! goes through this type; nothing touches OS entropy.

/// Deterministic pseudo-random generator (xoshiro256**).
#[derive(Debug, Clone)]
pub struct Rng {
    state: [u64; 4],
    /// Spare Gaussian from Box-Muller, if one is banked.
    gauss_spare: Option<f64>,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

impl Rng {
    /// Seed the generator. Equal seeds produce bitwise-equal streams.
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let state = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        Rng { state, gauss_spare: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n) by rejection (unbiased).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "Rng::below called with n = 0");
        let n = n as u64;
        let limit = u64::MAX - u64::MAX % n;
        loop {
            let r = self.next_u64();
            if r < limit {
                return (r % n) as usize;
            }
        }
    }

    /// Standard normal via Box-Muller. The paired draw is banked and
    /// returned on the next call.
    pub fn gauss(&mut self) -> f64 {
        if let Some(z) = self.gauss_spare.take() {
            return z;
        }
        // u1 in (0, 1] so the log is finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.gauss_spare = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Exact Beta(alpha, beta) sample via Johnk's algorithm.
    ///
    /// Valid for all alpha, beta > 0; the rejection loop is efficient for
    /// the shape parameters below 1 used here (acceptance rate near 1 for
    /// alpha = beta = 0.15).
    pub fn sample_beta(&mut self, alpha: f64, beta: f64) -> f64 {
        assert!(alpha > 0.0 && beta > 0.0, "Beta shape parameters must be positive");
        loop {
            let u = self.next_f64();
            let v = self.next_f64();
            if u == 0.0 || v == 0.0 {
                continue;
            }
            let x = u.powf(1.0 / alpha);
            let y = v.powf(1.0 / beta);
            let s = x + y;
            if s > 0.0 && s <= 1.0 {
                let lambda = x / s;
                if lambda > 0.0 && lambda < 1.0 {
                    return lambda;
                }
            }
        }
    }

    /// Fisher-Yates permutation of 0..n.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.below(i + 1);
            p.swap(i, j);
        }
        p
    }
}
