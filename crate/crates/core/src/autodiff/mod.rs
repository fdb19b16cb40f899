//! Dense tensors and a reverse-mode differentiation tape.
//!
//! A [`Graph`] is built fresh for every forward pass. Parameters enter as
//! leaves with `requires_grad = true`; after [`Graph::backward`] their
//! gradients are read back with [`Graph::grad`].

mod graph;
mod tensor;

pub mod gradcheck;

pub use graph::{softmax_values, Graph, Var};
pub use tensor::Tensor;
