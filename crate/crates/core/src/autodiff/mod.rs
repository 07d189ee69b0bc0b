//! Minimal reverse-mode automatic differentiation: dense f64 tensors, a
//! per-forward-pass operation tape, and finite-difference gradient checking.

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{gradcheck, GradCheckConfig, GradCheckReport, ParamCheck, relative_error};
pub use graph::{sigmoid, Graph, ValueId};
pub use tensor::{Tensor, Var};
