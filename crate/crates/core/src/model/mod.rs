//! The attention encoder–decoder: bidirectional LSTM encoder, bilinear
//! attention, LSTM decoder and vocabulary readout, with hand-derived
//! backward passes.

mod attention;
mod lstm;
mod network;
mod params;

pub use attention::attend;
pub use lstm::lstm_cell_step;
pub use network::{
    decode_step, decoder_step_cost, encode, encoder_cost, example_loss, example_loss_and_grad,
    forward_teacher_forced, teacher_forced_cost, DecodeStep, EncoderOutput, ExampleLoss,
    TeacherForced,
};
pub use params::{glorot_bound, init_params, LstmCellParams, ModelDims, ModelParams};
