//! Dense tensors with tape-based reverse-mode differentiation.

mod conv;
mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{grad_check, grad_check_with, relative_error, GradCheckOptions, GradCheckReport};
pub use graph::{CustomOp, Elementwise, Graph, Reduction, Var};
pub use tensor::Tensor;
