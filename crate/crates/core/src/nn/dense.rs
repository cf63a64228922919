use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::nn::LayerParams;
use crate::tensor::{axpy, dot, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseLayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
}

impl DenseLayerSpec {
    pub fn new(in_dim: usize, out_dim: usize) -> Self {
        Self { in_dim, out_dim }
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        vec![self.out_dim, self.in_dim]
    }

    pub fn macs(&self) -> u64 {
        (self.in_dim * self.out_dim) as u64
    }

    fn check<T: Scalar>(&self, input: &Tensor<T>, params: &LayerParams<T>) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return config_err(format!("degenerate dense spec {self:?}"));
        }
        if input.len() != self.in_dim {
            return config_err(format!(
                "dense layer expects {} inputs, got {}",
                self.in_dim,
                input.len()
            ));
        }
        if params.weight.shape() != [self.out_dim, self.in_dim] || params.bias.shape() != [self.out_dim] {
            return config_err(format!(
                "dense params {:?}/{:?} do not match spec {self:?}",
                params.weight.shape(),
                params.bias.shape()
            ));
        }
        Ok(())
    }
}

/// `y = W x + b`. Any input shape with `in_dim` elements is accepted and
/// read in row-major order, so conv outputs flatten implicitly.
pub fn dense_forward<T: Scalar>(
    input: &Tensor<T>,
    spec: &DenseLayerSpec,
    params: &LayerParams<T>,
) -> Result<Tensor<T>> {
    spec.check(input, params)?;
    let x = input.data();
    let w = params.weight.data();
    let out = params
        .bias
        .data()
        .iter()
        .enumerate()
        .map(|(i, &b)| b + dot(&w[i * spec.in_dim..(i + 1) * spec.in_dim], x))
        .collect();
    Ok(Tensor::vector(out))
}

pub(crate) fn dense_backward_accumulate<T: Scalar>(
    grad_out: &Tensor<T>,
    cached_input: &Tensor<T>,
    spec: &DenseLayerSpec,
    params: &LayerParams<T>,
    grads: &mut LayerParams<T>,
    want_input_grad: bool,
) -> Result<Option<Tensor<T>>> {
    spec.check(cached_input, params)?;
    if grad_out.len() != spec.out_dim {
        return config_err(format!(
            "dense grad_out has {} elements, expected {}",
            grad_out.len(),
            spec.out_dim
        ));
    }
    let x = cached_input.data();
    let g = grad_out.data();
    {
        let gw = grads.weight.data_mut();
        for (i, &gi) in g.iter().enumerate() {
            axpy(gi, x, &mut gw[i * spec.in_dim..(i + 1) * spec.in_dim]);
        }
    }
    for (gb, &gi) in grads.bias.data_mut().iter_mut().zip(g) {
        *gb = *gb + gi;
    }
    if !want_input_grad {
        return Ok(None);
    }
    let w = params.weight.data();
    let mut gin = vec![T::zero(); spec.in_dim];
    for (i, &gi) in g.iter().enumerate() {
        axpy(gi, &w[i * spec.in_dim..(i + 1) * spec.in_dim], &mut gin);
    }
    Tensor::new(cached_input.shape().to_vec(), gin).map(Some)
}

/// Returns `(dL/dx, dL/dW and dL/db)`; `dL/dx` has the input's shape.
pub fn dense_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    cached_input: &Tensor<T>,
    spec: &DenseLayerSpec,
    params: &LayerParams<T>,
) -> Result<(Tensor<T>, LayerParams<T>)> {
    let mut grads = LayerParams::zeros_like(params);
    let gin = dense_backward_accumulate(grad_out, cached_input, spec, params, &mut grads, true)?
        .expect("input gradient requested");
    Ok((gin, grads))
}
