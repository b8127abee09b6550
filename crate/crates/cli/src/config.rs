//! Training config files and flag overrides.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use stacklstm::objective::RegularizationSpec;
use stacklstm::pipeline::{CascadeMode, TrainConfig};

use crate::CliError;

/// Keys accepted in a `--config` file. Every key is also a flag.
#[derive(Debug, Clone, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct CliConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub header_map: Option<PathBuf>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch: Option<usize>,
    pub dropout: Option<f64>,
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    pub k: Option<usize>,
    pub hidden: Option<usize>,
    pub cascade: Option<String>,
    pub input_relu: Option<bool>,
    pub paper_literal_split: Option<bool>,
    pub global_norm: Option<bool>,
    pub penalize_head: Option<bool>,
    pub clip_norm: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainFlags {
    /// Dataset CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory for the model, histories and manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML file with any of the flag names as keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Column mapping for non-canonical CSV headers (`canonical = source` lines).
    #[arg(long)]
    pub header_map: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Sequences per Adam step.
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Elastic-net strength.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Elastic-net ℓ1 share, in [0, 1].
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Cross-validation folds for the classifier; 1 disables.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    /// predictive, hidden or paper-literal.
    #[arg(long)]
    pub cascade: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub input_relu: Option<bool>,
    /// Keep test sequences in predictor training.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub paper_literal_split: Option<bool>,
    /// Fit normalization on every sequence.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub global_norm: Option<bool>,
    /// Penalize the classification head as well as the classifier LSTM.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub penalize_head: Option<bool>,
    /// Global gradient-norm clip; off unless given.
    #[arg(long)]
    pub clip_norm: Option<f64>,
}

impl CliConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Data(format!("config file: {}", e.message())))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// File values, overridden by any flag that was given.
    pub fn resolve(flags: &TrainFlags) -> Result<Self, CliError> {
        let mut c = match &flags.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        macro_rules! over {
            ($($f:ident),*) => { $( if flags.$f.is_some() { c.$f = flags.$f.clone(); } )* };
        }
        over!(
            data, out, header_map, seed, epochs, lr, batch, dropout, lambda, gamma, k, hidden, cascade,
            input_relu, paper_literal_split, global_norm, penalize_head, clip_norm
        );
        Ok(c)
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let d = TrainConfig::default();
        let reg = RegularizationSpec::new(
            self.lambda.unwrap_or(d.reg.lambda()),
            self.gamma.unwrap_or(d.reg.gamma()),
        )?;
        let cascade_mode = match &self.cascade {
            Some(s) => s.parse::<CascadeMode>().map_err(|e| CliError::Usage(e.to_string()))?,
            None => d.cascade_mode,
        };
        let cfg = TrainConfig {
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch.unwrap_or(d.batch_size),
            lr: self.lr.unwrap_or(d.lr),
            dropout: self.dropout.unwrap_or(d.dropout),
            k: self.k.unwrap_or(d.k),
            hidden_size: self.hidden.unwrap_or(d.hidden_size),
            reg,
            seed: self.seed.unwrap_or(d.seed),
            input_relu: self.input_relu.unwrap_or(d.input_relu),
            cascade_mode,
            paper_literal_split: self.paper_literal_split.unwrap_or(d.paper_literal_split),
            global_normalization: self.global_norm.unwrap_or(d.global_normalization),
            penalize_head: self.penalize_head.unwrap_or(d.penalize_head),
            clip_norm: self.clip_norm.or(d.clip_norm),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// The resolved settings as written to the run manifest.
#[derive(Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ResolvedConfig {
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub dropout: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub k: usize,
    pub hidden: usize,
    pub cascade: String,
    pub input_relu: bool,
    pub paper_literal_split: bool,
    pub global_norm: bool,
    pub penalize_head: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_norm: Option<f64>,
}

impl From<&TrainConfig> for ResolvedConfig {
    fn from(c: &TrainConfig) -> Self {
        Self {
            seed: c.seed,
            epochs: c.epochs,
            lr: c.lr,
            batch: c.batch_size,
            dropout: c.dropout,
            lambda: c.reg.lambda(),
            gamma: c.reg.gamma(),
            k: c.k,
            hidden: c.hidden_size,
            cascade: c.cascade_mode.name().to_string(),
            input_relu: c.input_relu,
            paper_literal_split: c.paper_literal_split,
            global_norm: c.global_normalization,
            penalize_head: c.penalize_head,
            clip_norm: c.clip_norm,
        }
    }
}
