//! Dense kernels, activations, the Adam optimizer, a finite-difference
//! gradient oracle and the tensor checkpoint format.

mod activation;
mod adam;
pub mod checkpoint;
mod gradcheck;
mod matrix;

pub use activation::{gelu, gelu_grad, layer_norm, normal_cdf, relu, sigmoid, softplus, LAYER_NORM_EPS};
pub(crate) use activation::{layer_norm_row, layer_norm_row_backward};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{finite_diff_grad, relative_error};
pub use matrix::{dot, linear, Matrix};
