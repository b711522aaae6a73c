//! Frame and track BLSTMs, attention over detections, the event LSTM and the
//! squared-hinge objective.

mod config;
mod forward;
mod gradcheck;
pub mod layers;
mod params;

pub use config::{ClipScore, Mode, ModelConfig};
pub use forward::{backward, backward_adjoints, clip_loss, forward, loss_and_grad, squared_hinge, ForwardTrace};
pub use gradcheck::{check_gradients, BlockReport};
pub use layers::{attention, avg_player, blstm, lstm_cell, run_lstm, track_states, Attended, LstmState};
pub use params::{check_shapes, init_params, param_blocks, param_shapes, AttnBlock, Handles, LstmBlock};
