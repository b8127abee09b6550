//! LSTM layer, read-out heads and backpropagation through time.

mod bptt;
mod cell;
mod head;

pub use bptt::{
    bptt, sequence_loss, ParamGradients, PenaltyScope, SequenceEval, StageParams, Target, TENSOR_NAMES,
};
pub(crate) use bptt::run_sequence;
pub use cell::{lstm_forward, lstm_step, DropoutSpec, Gate, GateOrder, LstmParams, LstmState, LstmTrace};
pub use head::{apply_classification_head, apply_prediction_head, ClassificationHead, LinearHead, PredictionHead};
