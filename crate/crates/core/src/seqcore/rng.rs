use crate::error::{ensure, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 generator.
///
/// State advances by the golden-ratio increment and each output is the
/// Stafford "mix13" finalizer of the new state. Uniform reals take the top
/// 53 bits; gaussians use the Box-Muller transform without caching the
/// second variate, so every call consumes exactly two words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeededRng {
    seed: u64,
    state: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { seed, state: seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for a named sub-stream of `seed`.
    pub fn derive(seed: u64, stream: u64) -> Self {
        let mixed = mix(seed ^ mix(stream.wrapping_add(GOLDEN_GAMMA)));
        Self::new(mixed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix(self.state)
    }

    /// Uniform on `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        ensure!(
            lo.is_finite() && hi.is_finite() && lo < hi,
            "uniform range [{lo}, {hi}) is empty or not finite"
        );
        let v = lo + (hi - lo) * self.next_f64();
        // rounding can land exactly on hi for very wide ranges
        Ok(if v >= hi { lo } else { v })
    }

    pub fn gaussian(&mut self, mean: f64, std: f64) -> Result<f64> {
        ensure!(
            std >= 0.0 && std.is_finite() && mean.is_finite(),
            "gaussian needs finite mean and std >= 0, got mean {mean}, std {std}"
        );
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        if std == 0.0 {
            return Ok(mean);
        }
        let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        Ok(mean + std * z)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        // Lemire's multiply-shift; the bias is below 2^-40 for the sizes used here.
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
