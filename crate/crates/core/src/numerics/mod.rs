//! Dense tensors, reverse-mode gradients, Adam and gradient checking.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod tape;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckReport};
pub use tape::{elu, leaky_relu, log_sigmoid, sigmoid, softmax, Gradients, Tape, Var};
pub use tensor::Tensor;
