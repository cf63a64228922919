//! Minimal neural-network kernels with exact manual backpropagation.
//!
//! Layers are conv (cross-correlation, zero padding), dense and ReLU. A
//! network is an encoder stack followed by a dense head; the encoder/head
//! split is the freeze boundary. Backward passes that stop at the boundary
//! never touch encoder arithmetic.

mod activation;
mod adam;
mod conv;
mod dense;
pub mod gradcheck;
mod network;

pub use activation::{relu_backward, relu_forward};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use conv::{conv_backward, conv_forward, ConvLayerSpec};
pub use dense::{dense_backward, dense_forward, DenseLayerSpec};
pub use network::{
    backward_accumulate, backward_from_loss, encode, forward_full, forward_head_cached, forward_head_only, param_flops,
    ActivationCache, Grads, LayerSpec, NetworkSpec, ParamStore,
};

use crate::tensor::{Scalar, Tensor};

/// Weight and bias of one layer. Also used as the gradient container.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T = f32> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> LayerParams<T> {
    pub fn zeros_like(other: &LayerParams<T>) -> Self {
        Self {
            weight: Tensor::zeros(other.weight.shape().to_vec()),
            bias: Tensor::zeros(other.bias.shape().to_vec()),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.weight.all_finite() && self.bias.all_finite()
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}
