//! Deterministic synthetic gait recordings.
//!
//! Every channel of a class-`c` sequence follows
//!
//! ```text
//! x_k(t) = offset_k + a·gain_k·(sin(θ_t + φ_k) + harmonic_c·sin(2(θ_t + φ_k) + ψ_c)) + noise_c·ε
//! θ_t    = 2π·f_c·(1 + δ)·t + θ_0
//! ```
//!
//! with the per-class fundamental `f_c` (cycles per step), harmonic weight,
//! harmonic phase `ψ_c` and noise level from [`CLASS_GAITS`]. Per sequence,
//! the amplitude `a` is drawn from U(0.9, 1.1), the frequency jitter `δ`
//! from U(−0.02, 0.02) and the phase `θ_0` from U(0, 2π). Channel gains,
//! phases and offsets are a fixed function of the channel index, shared by
//! all classes.

use serde::Deserialize;

use crate::error::{ensure, Error, Result};
use crate::seqcore::SeededRng;

use super::frame::{SequenceSample, TerrainLabel, FRAME_DIM};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassGait {
    pub fundamental: f64,
    pub harmonic: f64,
    /// Phase of the second harmonic relative to the fundamental, radians.
    pub harmonic_phase: f64,
    pub noise: f64,
}

const SIXTH: f64 = std::f64::consts::PI / 3.0;

/// Gait parameters, indexed by terrain code.
///
/// Fundamentals are spaced by a factor of about 1.7. Harmonic weights stay
/// below 1/√5 so each period has exactly two mean crossings.
pub const CLASS_GAITS: [ClassGait; TerrainLabel::COUNT] = [
    ClassGait { fundamental: 0.020, harmonic: 0.30, harmonic_phase: 0.0 * SIXTH, noise: 0.03 },
    ClassGait { fundamental: 0.034, harmonic: 0.40, harmonic_phase: 1.0 * SIXTH, noise: 0.06 },
    ClassGait { fundamental: 0.058, harmonic: 0.25, harmonic_phase: 2.0 * SIXTH, noise: 0.09 },
    ClassGait { fundamental: 0.098, harmonic: 0.40, harmonic_phase: 3.0 * SIXTH, noise: 0.04 },
    ClassGait { fundamental: 0.167, harmonic: 0.30, harmonic_phase: 4.0 * SIXTH, noise: 0.07 },
    ClassGait { fundamental: 0.284, harmonic: 0.35, harmonic_phase: 5.0 * SIXTH, noise: 0.10 },
];

/// Generator settings. Config-file keys are the field names.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub n_sequences: usize,
    pub t_min: usize,
    pub t_max: usize,
    pub seed: u64,
    pub class_count: usize,
    pub dim: usize,
    /// Multiplies every class noise level.
    pub noise_scale: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_sequences: 300,
            t_min: 40,
            t_max: 80,
            seed: 0,
            class_count: TerrainLabel::COUNT,
            dim: FRAME_DIM,
            noise_scale: 1.0,
        }
    }
}

impl SynthSpec {
    /// Parses flat `key = value` TOML.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::contract(format!("synth config: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            (1..=TerrainLabel::COUNT).contains(&self.class_count),
            "class_count must be in 1..={}, got {}",
            TerrainLabel::COUNT,
            self.class_count
        );
        ensure!(
            self.n_sequences >= self.class_count,
            "n_sequences ({}) must be at least class_count ({})",
            self.n_sequences,
            self.class_count
        );
        ensure!(
            self.t_min >= 2 && self.t_min <= self.t_max,
            "sequence lengths need 2 <= t_min <= t_max, got [{}, {}]",
            self.t_min,
            self.t_max
        );
        ensure!(self.dim >= 1, "dim must be positive");
        ensure!(
            self.noise_scale >= 0.0 && self.noise_scale.is_finite(),
            "noise_scale must be >= 0"
        );
        Ok(())
    }
}

fn channel_gain(k: usize) -> f64 {
    0.5 + 0.1 * ((k * 7) % 11) as f64
}

fn channel_phase(k: usize) -> f64 {
    std::f64::consts::TAU * ((k * 5) % 13) as f64 / 13.0
}

fn channel_offset(k: usize) -> f64 {
    0.25 * (k % 5) as f64
}

/// Sequence `i` gets class `i % class_count`, so classes are balanced within one.
pub fn synth_generate(spec: &SynthSpec) -> Result<Vec<SequenceSample>> {
    spec.validate()?;
    let mut rng = SeededRng::new(spec.seed);
    let mut out = Vec::with_capacity(spec.n_sequences);
    for i in 0..spec.n_sequences {
        let label = TerrainLabel::from_code(i % spec.class_count)?;
        let gait = CLASS_GAITS[label.code()];
        let len = spec.t_min + rng.below(spec.t_max - spec.t_min + 1);
        let amp = rng.uniform(0.9, 1.1)?;
        let freq = gait.fundamental * (1.0 + rng.uniform(-0.02, 0.02)?);
        let theta0 = rng.uniform(0.0, std::f64::consts::TAU)?;
        let noise = gait.noise * spec.noise_scale;
        let mut frames = Vec::with_capacity(len);
        for t in 0..len {
            let theta = std::f64::consts::TAU * freq * t as f64 + theta0;
            let mut frame = Vec::with_capacity(spec.dim);
            for k in 0..spec.dim {
                let ph = theta + channel_phase(k);
                let clean = channel_offset(k) + amp * channel_gain(k) * (ph.sin() + gait.harmonic * (2.0 * ph + gait.harmonic_phase).sin());
                frame.push(clean + rng.gaussian(0.0, noise)?);
            }
            frames.push(frame);
        }
        out.push(SequenceSample::new(format!("synth-{i:05}"), frames, Some(label))?);
    }
    Ok(out)
}
