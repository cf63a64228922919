use crate::error::{config_err, Result};
use crate::tensor::{Scalar, Tensor};

/// Elementwise `max(0, x)`.
pub fn relu_forward<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let mut out = input.clone();
    relu_in_place(&mut out);
    out
}

pub(crate) fn relu_in_place<T: Scalar>(t: &mut Tensor<T>) {
    for v in t.data_mut() {
        if !(*v > T::zero()) {
            *v = T::zero();
        }
    }
}

/// Passes `grad` through where `input > 0`; the subgradient at 0 is 0.
/// `input` may be either the pre- or post-activation value.
pub fn relu_backward<T: Scalar>(grad: &Tensor<T>, input: &Tensor<T>) -> Result<Tensor<T>> {
    if grad.len() != input.len() {
        return config_err(format!(
            "relu grad has {} elements, input has {}",
            grad.len(),
            input.len()
        ));
    }
    let mut out = grad.clone();
    relu_mask_in_place(&mut out, input);
    Ok(out)
}

pub(crate) fn relu_mask_in_place<T: Scalar>(grad: &mut Tensor<T>, input: &Tensor<T>) {
    for (g, &x) in grad.data_mut().iter_mut().zip(input.data()) {
        if !(x > T::zero()) {
            *g = T::zero();
        }
    }
}
