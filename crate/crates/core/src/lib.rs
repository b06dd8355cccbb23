//! A from-scratch attention sequence-to-sequence chatbot engine: text
//! preprocessing, a bidirectional-LSTM encoder with bilinear attention and an
//! LSTM decoder, Adam training, evaluation and greedy-decoding chat.

pub mod error;
pub mod gradcheck;
pub mod inference;
pub mod model;
pub mod stats;
pub mod tensor;
pub mod text;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
