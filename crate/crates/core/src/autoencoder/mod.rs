//! Dense autoencoder compressing feature vectors to a latent code, trained
//! with Adam on the mean absolute reconstruction error. Gradients are
//! derived by hand; `sign(0) = 0` and `relu'(0) = 0` at the kinks.

mod model;
mod network;
mod train;

pub use model::{Autoencoder, MinMaxScaler, AENC_KIND};
pub use network::{
    backprop, backprop_batch, backward_stack, batch_loss, decode, encode, encode_batch,
    encoder_input_gradient, forward_stack, reconstruction_loss, Activation, AutoencoderParams,
    DenseLayer, StackTrace, DEFAULT_LAYER_SIZES,
};
pub use train::{train, TrainConfig};
