use crate::error::{ensure, Result};

use super::frame::SequenceSample;

/// Per-dimension mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl NormStats {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        ensure!(
            mean.len() == std.len() && !mean.is_empty(),
            "normalization mean and std must have equal non-zero length"
        );
        ensure!(
            mean.iter().all(|v| v.is_finite()) && std.iter().all(|v| v.is_finite() && *v > 0.0),
            "normalization stats must be finite with positive std"
        );
        Ok(Self { mean, std })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn normalize_frame(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// Fits mean and divisor-N std over every frame of `samples`.
///
/// Constant dimensions get std 1 (and their exact value as mean), so they
/// normalize to 0.
pub fn compute_norm_stats(samples: &[SequenceSample]) -> Result<NormStats> {
    ensure!(!samples.is_empty(), "cannot fit normalization on no samples");
    let dim = samples[0].dim();
    ensure!(
        samples.iter().all(|s| s.dim() == dim),
        "samples disagree on frame dimension"
    );
    let frames = || samples.iter().flat_map(|s| s.frames().iter());
    let n = frames().count() as f64;

    let mut mean = vec![0.0; dim];
    for f in frames() {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; dim];
    for f in frames() {
        for ((s, v), m) in var.iter_mut().zip(f).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let first = &samples[0].frames()[0];
    let mut std = Vec::with_capacity(dim);
    for j in 0..dim {
        let constant = frames().all(|f| f[j] == first[j]);
        let sd = (var[j] / n).sqrt();
        if constant || sd <= 1e-12 * mean[j].abs().max(1.0) {
            if constant {
                mean[j] = first[j];
            }
            std.push(1.0);
        } else {
            std.push(sd);
        }
    }
    Ok(NormStats { mean, std })
}

pub fn apply_normalization(samples: &[SequenceSample], stats: &NormStats) -> Result<Vec<SequenceSample>> {
    ensure!(!samples.is_empty(), "nothing to normalize");
    for s in samples {
        ensure!(
            s.dim() == stats.dim(),
            "sequence {:?} has {} features but the normalization expects {}",
            s.id,
            s.dim(),
            stats.dim()
        );
    }
    Ok(samples.iter().map(|s| s.map_frames(|x| stats.normalize_frame(x))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqcore::SeededRng;
    use proptest::prelude::*;

    fn sample(frames: Vec<Vec<f64>>) -> SequenceSample {
        SequenceSample::new("s", frames, None).unwrap()
    }

    #[test]
    fn one_two_three() {
        let s = vec![sample(vec![vec![1.0], vec![2.0], vec![3.0]])];
        let stats = compute_norm_stats(&s).unwrap();
        let out = apply_normalization(&s, &stats).unwrap();
        let r = (1.5f64).sqrt();
        let got: Vec<f64> = out[0].frames().iter().map(|f| f[0]).collect();
        for (g, e) in got.iter().zip([-r, 0.0, r]) {
            assert!((g - e).abs() < 1e-12);
        }
        assert!((got[0] + 1.22474).abs() < 1e-5);
    }

    #[test]
    fn constant_dimension_maps_to_zero() {
        let s = vec![sample(vec![vec![0.1, 1.0], vec![0.1, 2.0], vec![0.1, 4.0]])];
        let stats = compute_norm_stats(&s).unwrap();
        assert_eq!(stats.std()[0], 1.0);
        let out = apply_normalization(&s, &stats).unwrap();
        assert!(out[0].frames().iter().all(|f| f[0] == 0.0));
    }

    #[test]
    fn standardized_input_is_fixed() {
        let s = vec![sample(vec![vec![-1.0, 1.0], vec![1.0, -1.0]])];
        let stats = compute_norm_stats(&s).unwrap();
        let out = apply_normalization(&s, &stats).unwrap();
        for (a, b) in out[0].frames().iter().flatten().zip(s[0].frames().iter().flatten()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        assert!(compute_norm_stats(&[]).is_err());
        let stats = NormStats::identity(3);
        assert!(apply_normalization(&[sample(vec![vec![1.0], vec![2.0]])], &stats).is_err());
    }

    proptest! {
        #[test]
        fn fitted_subset_is_standardized(seed in 0u64..1000, n in 1usize..6, scale in 0.01f64..100.0) {
            let mut rng = SeededRng::new(seed);
            let samples: Vec<_> = (0..n).map(|_| {
                let t = 2 + rng.below(20);
                sample((0..t).map(|_| (0..4).map(|j| scale * rng.gaussian(j as f64 * 10.0, 1.0 + j as f64).unwrap()).collect()).collect())
            }).collect();
            let stats = compute_norm_stats(&samples).unwrap();
            let out = apply_normalization(&samples, &stats).unwrap();
            let refit = compute_norm_stats(&out).unwrap();
            for j in 0..4 {
                prop_assert!(refit.mean()[j].abs() < 1e-9);
                prop_assert!((refit.std()[j] - 1.0).abs() < 1e-9);
            }
        }
    }
}
