//! Shared numerical primitives: dense matrices, activations, loss, Adam,
//! seeded random streams and a central-difference gradient checker.

mod activation;
mod adam;
mod gradcheck;
mod loss;
mod matrix;
mod rng;

pub use activation::{
    gelu_grad_scalar, gelu_scalar, relu_grad_scalar, relu_scalar, sigmoid, sigmoid_scalar,
    softmax, softmax_inplace,
};
pub use adam::{
    AdamHyper, AdamState, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPSILON, DEFAULT_LEARNING_RATE,
};
pub use gradcheck::{finite_diff_grad, relative_error};
pub use loss::{mae_loss, sign};
pub use matrix::{axpy, dot, squared_euclidean, Matrix};
pub use rng::Rng;
