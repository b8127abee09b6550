//! Sensor recordings: CSV ingestion, normalization, splitting and a
//! synthetic generator.

mod csv;
mod frame;
mod norm;
mod split;
mod synth;

pub use self::csv::{
    format_f64, ingest_csv, ingest_csv_mapped, read_csv_file, write_csv, HeaderMap, CANONICAL_FEATURES,
};
pub use frame::{FeatureFrame, SequenceSample, TerrainLabel, FRAME_DIM};
pub use norm::{apply_normalization, compute_norm_stats, NormStats};
pub use split::{
    kfold_indices, kfold_partition, select, split_semi_supervised, SplitResult, MIN_SPLIT_SEQUENCES,
};
pub use synth::{synth_generate, ClassGait, SynthSpec, CLASS_GAITS};
