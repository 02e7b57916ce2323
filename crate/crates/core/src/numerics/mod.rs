//! Double-precision tensors, reverse-mode differentiation for the layer set
//! the estimation networks use, and the Adam optimizer.

mod adam;
mod gemm;
pub mod gradcheck;
mod graph;
mod layers;
mod net;
mod params;
pub mod rng;
mod tensor;

pub use adam::{AdamConfig, AdamState, Schedule};
pub use graph::{Function, Gradients, Graph, ParamVars, Var};
pub use layers::{activation_forward, Conv1d, Conv1dSpec, Dense, LeakyRelu, LEAKY_SLOPE};
pub use net::ConvNetSpec;
pub use params::ModelParams;
pub use tensor::Tensor;
