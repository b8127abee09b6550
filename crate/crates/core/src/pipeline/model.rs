use crate::data::{apply_normalization, NormStats, SequenceSample, TerrainLabel};
use crate::error::{ensure, Result};
use crate::recurrent::{
    apply_classification_head, lstm_forward, DropoutSpec, LstmParams, LinearHead, StageParams,
};
use crate::seqcore::{argmax, SeededRng};

use super::config::{CascadeMode, TrainConfig};

pub(crate) mod streams {
    pub const INIT_STAGE1: u64 = 1;
    pub const INIT_STAGE2: u64 = 2;
    pub const STAGE1_VAL_SPLIT: u64 = 3;
    pub const STAGE1_SHUFFLE: u64 = 4;
    pub const STAGE1_DROPOUT: u64 = 5;
    pub const STAGE2_SHUFFLE: u64 = 6;
    pub const STAGE2_DROPOUT: u64 = 7;
    pub const KFOLD: u64 = 8;
    pub const FOLD_BASE: u64 = 100;
}

/// The stacked model.
///
/// Stage 1 maps `d`-dimensional frames to a next-frame prediction; stage 2
/// maps cascade features to terrain logits. Once frozen, stage 1 can only be
/// read.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    stage1: StageParams,
    stage2: StageParams,
    pub norm: NormStats,
    pub config: TrainConfig,
    stage1_frozen: bool,
    stage2_trained: bool,
}

pub(crate) fn stage2_input_size(cfg: &TrainConfig, dim: usize) -> usize {
    match cfg.cascade_mode {
        CascadeMode::Hidden => cfg.hidden_size,
        CascadeMode::Predictive | CascadeMode::PaperLiteral => dim,
    }
}

impl ModelState {
    /// Freshly initialized model for `dim`-dimensional frames.
    pub fn new(cfg: &TrainConfig, dim: usize, norm: NormStats) -> Result<Self> {
        cfg.validate()?;
        ensure!(
            norm.dim() == dim,
            "normalization covers {} dimensions but frames have {dim}",
            norm.dim()
        );
        let h = cfg.hidden_size;
        let stage1 = StageParams::init(dim, h, dim, &mut SeededRng::derive(cfg.seed, streams::INIT_STAGE1))?;
        let stage2 = Self::fresh_stage2(cfg, dim)?;
        Ok(Self {
            stage1,
            stage2,
            norm,
            config: cfg.clone(),
            stage1_frozen: false,
            stage2_trained: false,
        })
    }

    pub(crate) fn fresh_stage2(cfg: &TrainConfig, dim: usize) -> Result<StageParams> {
        StageParams::init(
            stage2_input_size(cfg, dim),
            cfg.hidden_size,
            TerrainLabel::COUNT,
            &mut SeededRng::derive(cfg.seed, streams::INIT_STAGE2),
        )
    }

    /// Reassembles a model from stored parts, checking that shapes agree.
    pub fn from_parts(
        stage1: StageParams,
        stage2: StageParams,
        norm: NormStats,
        config: TrainConfig,
        stage1_frozen: bool,
        stage2_trained: bool,
    ) -> Result<Self> {
        let d = stage1.lstm.input_size();
        ensure!(
            stage1.head.output_size() == d,
            "prediction head emits {} values for {d}-dimensional frames",
            stage1.head.output_size()
        );
        ensure!(norm.dim() == d, "normalization covers {} of {d} dimensions", norm.dim());
        ensure!(
            stage1.lstm.hidden_size() == config.hidden_size && stage2.lstm.hidden_size() == config.hidden_size,
            "layer widths disagree with hidden_size {}",
            config.hidden_size
        );
        let expected = stage2_input_size(&config, d);
        ensure!(
            stage2.lstm.input_size() == expected,
            "stage 2 reads {} inputs but cascade mode {} needs {expected}",
            stage2.lstm.input_size(),
            config.cascade_mode
        );
        ensure!(
            stage2.head.output_size() == TerrainLabel::COUNT,
            "classification head has {} classes, expected {}",
            stage2.head.output_size(),
            TerrainLabel::COUNT
        );
        Ok(Self {
            stage1,
            stage2,
            norm,
            config,
            stage1_frozen,
            stage2_trained,
        })
    }

    pub fn dim(&self) -> usize {
        self.stage1.lstm.input_size()
    }

    pub fn stage1(&self) -> &StageParams {
        &self.stage1
    }

    pub fn stage2(&self) -> &StageParams {
        &self.stage2
    }

    /// Mutable stage-1 tensors; refused once frozen.
    pub fn stage1_mut(&mut self) -> Result<&mut StageParams> {
        ensure!(!self.stage1_frozen, "stage-1 weights are frozen");
        Ok(&mut self.stage1)
    }

    pub fn stage2_mut(&mut self) -> &mut StageParams {
        &mut self.stage2
    }

    /// Installs classifier parameters directly and marks the model usable for prediction.
    pub fn set_stage2(&mut self, stage: StageParams) -> Result<()> {
        ensure!(
            stage.lstm.input_size() == self.stage2.lstm.input_size()
                && stage.lstm.hidden_size() == self.stage2.lstm.hidden_size()
                && stage.head.output_size() == self.stage2.head.output_size(),
            "stage-2 parameters have the wrong shape"
        );
        self.stage2 = stage;
        self.stage2_trained = true;
        Ok(())
    }

    pub fn is_stage1_frozen(&self) -> bool {
        self.stage1_frozen
    }

    pub fn is_stage2_trained(&self) -> bool {
        self.stage2_trained
    }

    pub(crate) fn mark_stage2_trained(&mut self) {
        self.stage2_trained = true;
    }

    pub(crate) fn reset_for_enrichment(&mut self) -> Result<()> {
        self.stage1_frozen = false;
        self.stage2_trained = false;
        self.stage2 = Self::fresh_stage2(&self.config, self.dim())?;
        Ok(())
    }

    /// Normalizes raw samples with the stored statistics.
    pub fn normalize(&self, samples: &[SequenceSample]) -> Result<Vec<SequenceSample>> {
        ensure!(
            samples.iter().all(|s| s.dim() == self.dim()),
            "data has {} features per frame but the model expects {}",
            samples.iter().map(SequenceSample::dim).find(|&d| d != self.dim()).unwrap_or(0),
            self.dim()
        );
        apply_normalization(samples, &self.norm)
    }

    pub(crate) fn stage1_inputs(&self, frames: &[Vec<f64>]) -> Vec<Vec<f64>> {
        if self.config.input_relu {
            frames.iter().map(|f| f.iter().map(|v| v.max(0.0)).collect()).collect()
        } else {
            frames.to_vec()
        }
    }

    /// Frozen-predictor next-frame estimates for frames `2..T`.
    pub fn predict_next_frames(&self, frames: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        ensure!(frames.len() >= 2, "next-frame prediction needs at least 2 frames");
        let inputs = self.stage1_inputs(&frames[..frames.len() - 1]);
        let trace = lstm_forward(&self.stage1.lstm, &inputs, &mut DropoutSpec::eval())?;
        Ok(trace.outputs().iter().map(|h| self.stage1.head.affine(h)).collect())
    }

    pub(crate) fn training_features(&self, frames: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        match self.config.cascade_mode {
            CascadeMode::PaperLiteral => Ok(frames.to_vec()),
            _ => cascade_features(self, frames),
        }
    }

    /// Per-step class distributions for normalized frames.
    pub fn step_distributions(&self, frames: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        ensure!(self.stage2_trained, "the classifier stage has not been trained");
        let features = cascade_features(self, frames)?;
        classify_features(&self.stage2, &features)
    }
}

pub(crate) fn classify_features(stage: &StageParams, features: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let trace = lstm_forward(&stage.lstm, features, &mut DropoutSpec::eval())?;
    trace
        .outputs()
        .iter()
        .map(|h| apply_classification_head(&stage.head, h))
        .collect()
}

/// Marks stage 1 immutable. Idempotent.
pub fn freeze_stage1(mut model: ModelState) -> ModelState {
    model.stage1_frozen = true;
    model
}

/// Stage-2 inputs derived from the stage-1 predictor at inference time.
pub fn cascade_features(model: &ModelState, frames: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    ensure!(!frames.is_empty(), "cascade over an empty sequence");
    ensure!(
        frames.iter().all(|f| f.len() == model.dim()),
        "frames must have {} features",
        model.dim()
    );
    match model.config.cascade_mode {
        CascadeMode::Predictive | CascadeMode::PaperLiteral => model.predict_next_frames(frames),
        CascadeMode::Hidden => {
            let inputs = model.stage1_inputs(frames);
            Ok(lstm_forward(&model.stage1.lstm, &inputs, &mut DropoutSpec::eval())?.into_outputs())
        }
    }
}

/// Time-averaged class distribution and its argmax, for normalized frames.
pub fn predict_sequence(model: &ModelState, frames: &[Vec<f64>]) -> Result<(TerrainLabel, Vec<f64>)> {
    ensure!(frames.len() >= 2, "prediction needs at least 2 frames");
    let steps = model.step_distributions(frames)?;
    let mut mean = vec![0.0; TerrainLabel::COUNT];
    for p in &steps {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= steps.len() as f64;
    }
    Ok((TerrainLabel::from_code(argmax(&mean))?, mean))
}

/// Builds a model around explicit parameters; used by tests and tools.
pub fn model_with_zero_stages(cfg: &TrainConfig, dim: usize) -> Result<ModelState> {
    let h = cfg.hidden_size;
    let stage1 = StageParams::new(LstmParams::zeros(dim, h), LinearHead::zeros(dim, h))?;
    let stage2 = StageParams::new(
        LstmParams::zeros(stage2_input_size(cfg, dim), h),
        LinearHead::zeros(TerrainLabel::COUNT, h),
    )?;
    ModelState::from_parts(stage1, stage2, NormStats::identity(dim), cfg.clone(), false, false)
}
