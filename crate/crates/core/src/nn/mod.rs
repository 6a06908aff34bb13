//! Minimal tensor and reverse-mode autodiff engine used by the networks.

mod graph;
mod optim;
mod params;
mod scalar;
mod tensor;

pub use graph::{sigmoid, Gradients, Graph, Var};
pub use optim::{Adam, AdamConfig};
pub use params::{Bound, ParamId, ParamStore};
pub use scalar::Real;
pub use tensor::{
    conv2d_backward, conv2d_forward, conv_transpose2d_backward, conv_transpose2d_forward,
    conv_transpose_geom, ConvGeom, Tensor,
};
