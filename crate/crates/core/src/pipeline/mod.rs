//! Two-stage semi-supervised training, inference and model files.

mod config;
mod model;
mod persist;
mod train;

pub use config::{CascadeMode, TrainConfig};
pub use model::{cascade_features, freeze_stage1, model_with_zero_stages, predict_sequence, ModelState};
pub use persist::{load_model, read_model, save_model, write_model, FORMAT_VERSION};
pub use train::{
    kfold_stage2, run_training, train_stage1, train_stage2, EpochRecord, KFoldSummary, TrainingRun,
};
