use std::fmt;
use std::str::FromStr;

use crate::error::{ensure, Error, Result};
use crate::objective::RegularizationSpec;

/// What the classifier stage reads from the frozen predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CascadeMode {
    /// Next-frame predictions `X̂_2..X̂_T`, in training and inference.
    #[default]
    Predictive,
    /// Predictor hidden states `h_1..h_T`.
    Hidden,
    /// Raw frames `X_1..X_T` while training, predictions at inference.
    PaperLiteral,
}

impl CascadeMode {
    pub fn name(self) -> &'static str {
        match self {
            CascadeMode::Predictive => "predictive",
            CascadeMode::Hidden => "hidden",
            CascadeMode::PaperLiteral => "paper-literal",
        }
    }
}

impl fmt::Display for CascadeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CascadeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "predictive" => Ok(CascadeMode::Predictive),
            "hidden" => Ok(CascadeMode::Hidden),
            "paper-literal" | "paper_literal" => Ok(CascadeMode::PaperLiteral),
            other => Err(Error::contract(format!(
                "unknown cascade mode {other:?} (expected predictive, hidden or paper-literal)"
            ))),
        }
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Upper bound; the best-validation epoch is kept.
    pub epochs: usize,
    /// Sequences per Adam step.
    pub batch_size: usize,
    pub lr: f64,
    pub dropout: f64,
    /// Folds for stage-2 cross-validation; 1 disables it.
    pub k: usize,
    pub hidden_size: usize,
    pub reg: RegularizationSpec,
    pub seed: u64,
    /// ReLU on stage-1 inputs.
    pub input_relu: bool,
    pub cascade_mode: CascadeMode,
    /// Keep test sequences inside predictor training.
    pub paper_literal_split: bool,
    /// Fit normalization on every sequence instead of predictor training data only.
    pub global_normalization: bool,
    /// Include the classification head in the stage-2 penalty.
    pub penalize_head: bool,
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 512,
            lr: 0.005,
            dropout: 0.2,
            k: 5,
            hidden_size: 200,
            reg: RegularizationSpec::default(),
            seed: 0,
            input_relu: true,
            cascade_mode: CascadeMode::Predictive,
            paper_literal_split: false,
            global_normalization: false,
            penalize_head: true,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.batch_size >= 1, "batch size must be >= 1");
        ensure!(self.k >= 1, "k must be >= 1");
        ensure!(self.hidden_size >= 1, "hidden size must be >= 1");
        ensure!(
            self.lr > 0.0 && self.lr.is_finite(),
            "learning rate must be > 0, got {}",
            self.lr
        );
        ensure!(
            (0.0..1.0).contains(&self.dropout),
            "dropout must lie in [0, 1), got {}",
            self.dropout
        );
        if let Some(c) = self.clip_norm {
            ensure!(c > 0.0 && c.is_finite(), "clip norm must be > 0");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!((c.epochs, c.batch_size, c.k, c.hidden_size), (300, 512, 5, 200));
        assert_eq!(c.lr, 0.005);
        assert_eq!(c.dropout, 0.2);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn cascade_names_round_trip() {
        for m in [CascadeMode::Predictive, CascadeMode::Hidden, CascadeMode::PaperLiteral] {
            assert_eq!(m.name().parse::<CascadeMode>().unwrap(), m);
        }
        assert!("x".parse::<CascadeMode>().is_err());
    }

    #[test]
    fn invalid_values() {
        for c in [
            TrainConfig { dropout: 1.0, ..TrainConfig::default() },
            TrainConfig { batch_size: 0, ..TrainConfig::default() },
            TrainConfig { lr: 0.0, ..TrainConfig::default() },
            TrainConfig { hidden_size: 0, ..TrainConfig::default() },
        ] {
            assert!(c.validate().is_err());
        }
    }
}
