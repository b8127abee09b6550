//! Semi-supervised stacked-LSTM terrain classification.
//!
//! A first LSTM layer learns to predict the next sensor frame without labels.
//! Its weights are then frozen and its predictions feed a second LSTM layer
//! trained to classify the terrain. Both stages minimize an elastic-net
//! regularized loss with Adam.

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod objective;
pub mod optim;
pub mod pipeline;
pub mod recurrent;
pub mod seqcore;

pub use error::{Error, Result};
