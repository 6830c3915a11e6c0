//! Dense tensors, a differentiable tape, and the kernels the classifiers use.

mod graph;
mod lstm;
mod tensor;

pub use graph::{softmax_rows, Gradients, Graph, Padding, Var};
pub use lstm::{lstm_cell, lstm_cell_projected, LstmWeights};
pub use tensor::{identity, Scalar, Tensor};
