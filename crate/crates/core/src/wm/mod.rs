//! The weightlessness-mechanism network: a stacked LSTM mapping a 10-frame
//! joint-position window to per-joint relaxation levels in (0, 1).
//!
//! Output convention: `w ≈ 1` keeps a joint fully active, `w ≈ 0` relaxes it.
//! Training targets are therefore `1 - label`, where labels mark weightless
//! joints.

mod adam;
mod checkpoint;
mod input;
mod loss;
mod network;
mod online;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use input::{build_input, WmInput, FUTURE_LEN, HISTORY_LEN, WINDOW_FRAMES};
pub use loss::{bce_loss, logit_gradient, smoothness_loss, total_loss, BCE_CLAMP};
pub use network::{Architecture, BpttSession, DropoutMasks, ForwardTrace, LstmState, ParamGroup, WmNetwork};
pub use online::OnlineWm;
pub use train::{
    evaluate, predict_sequence, total_variation, train, train_with_progress, EvalReport, TrainConfig,
    TrainReport,
};
