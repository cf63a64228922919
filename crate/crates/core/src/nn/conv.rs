//! 2-D convolution (cross-correlation, zero padding) via im2col.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::nn::LayerParams;
use crate::tensor::{axpy, dot, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayerSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Side of the square kernel.
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvLayerSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    /// Output spatial size `floor((in + 2p - k) / s) + 1`.
    pub fn output_size(&self, in_h: usize, in_w: usize) -> Result<(usize, usize)> {
        if self.in_channels == 0 || self.out_channels == 0 || self.kernel == 0 || self.stride == 0 {
            return config_err(format!("degenerate conv spec {self:?}"));
        }
        let side = |n: usize| -> Result<usize> {
            let padded = n + 2 * self.padding;
            if padded < self.kernel {
                return config_err(format!(
                    "conv kernel {} does not fit input extent {n} with padding {}",
                    self.kernel, self.padding
                ));
            }
            Ok((padded - self.kernel) / self.stride + 1)
        };
        Ok((side(in_h)?, side(in_w)?))
    }

    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        vec![self.out_channels, self.in_channels, self.kernel, self.kernel]
    }

    fn check_input<T: Scalar>(&self, input: &Tensor<T>) -> Result<(usize, usize, usize, usize)> {
        let shape = input.shape();
        if shape.len() != 3 || shape[0] != self.in_channels {
            return config_err(format!(
                "conv expects input ({}, H, W), got {shape:?}",
                self.in_channels
            ));
        }
        let (oh, ow) = self.output_size(shape[1], shape[2])?;
        Ok((shape[1], shape[2], oh, ow))
    }

    fn check_params<T: Scalar>(&self, params: &LayerParams<T>) -> Result<()> {
        if params.weight.shape() != self.weight_shape().as_slice() || params.bias.shape() != [self.out_channels] {
            return config_err(format!(
                "conv params {:?}/{:?} do not match spec {self:?}",
                params.weight.shape(),
                params.bias.shape()
            ));
        }
        Ok(())
    }

    /// Multiply-adds of one forward pass over an `in_h x in_w` input.
    pub fn macs(&self, in_h: usize, in_w: usize) -> Result<u64> {
        let (oh, ow) = self.output_size(in_h, in_w)?;
        Ok((oh * ow * self.out_channels * self.patch_len()) as u64)
    }
}

/// Unrolls input patches into a `(C*k*k, H'*W')` row-major matrix.
fn im2col<T: Scalar>(input: &[T], spec: &ConvLayerSpec, h: usize, w: usize, oh: usize, ow: usize) -> Vec<T> {
    let k = spec.kernel;
    let n = oh * ow;
    let mut cols = vec![T::zero(); spec.patch_len() * n];
    for c in 0..spec.in_channels {
        let plane = &input[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * n..(row + 1) * n];
                for oy in 0..oh {
                    let iy = (oy * spec.stride + ky) as isize - spec.padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..ow {
                        let ix = (ox * spec.stride + kx) as isize - spec.padding as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[oy * ow + ox] = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Scalar>(cols: &[T], spec: &ConvLayerSpec, h: usize, w: usize, oh: usize, ow: usize) -> Vec<T> {
    let k = spec.kernel;
    let n = oh * ow;
    let mut out = vec![T::zero(); spec.in_channels * h * w];
    for c in 0..spec.in_channels {
        let plane = &mut out[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * n..(row + 1) * n];
                for oy in 0..oh {
                    let iy = (oy * spec.stride + ky) as isize - spec.padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * spec.stride + kx) as isize - spec.padding as isize;
                        if ix >= 0 && ix < w as isize {
                            let idx = iy as usize * w + ix as usize;
                            plane[idx] = plane[idx] + src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Forward pass. Input `(C, H, W)`, output `(O, H', W')`. No kernel flip.
pub fn conv_forward<T: Scalar>(input: &Tensor<T>, spec: &ConvLayerSpec, params: &LayerParams<T>) -> Result<Tensor<T>> {
    let (h, w, oh, ow) = spec.check_input(input)?;
    spec.check_params(params)?;
    let n = oh * ow;
    let r = spec.patch_len();
    let cols = im2col(input.data(), spec, h, w, oh, ow);
    let weight = params.weight.data();
    let mut out = vec![T::zero(); spec.out_channels * n];
    for (o, row) in out.chunks_exact_mut(n).enumerate() {
        row.fill(params.bias.data()[o]);
        for (ri, &wv) in weight[o * r..(o + 1) * r].iter().enumerate() {
            axpy(wv, &cols[ri * n..(ri + 1) * n], row);
        }
    }
    Tensor::new(vec![spec.out_channels, oh, ow], out)
}

/// Accumulates parameter gradients into `grads` and returns the input
/// gradient when `want_input_grad` is set.
pub(crate) fn conv_backward_accumulate<T: Scalar>(
    grad_out: &Tensor<T>,
    cached_input: &Tensor<T>,
    spec: &ConvLayerSpec,
    params: &LayerParams<T>,
    grads: &mut LayerParams<T>,
    want_input_grad: bool,
) -> Result<Option<Tensor<T>>> {
    let (h, w, oh, ow) = spec.check_input(cached_input)?;
    spec.check_params(params)?;
    if grad_out.shape() != [spec.out_channels, oh, ow] {
        return config_err(format!(
            "conv grad_out {:?} does not match forward output ({}, {oh}, {ow})",
            grad_out.shape(),
            spec.out_channels
        ));
    }
    let n = oh * ow;
    let r = spec.patch_len();
    let cols = im2col(cached_input.data(), spec, h, w, oh, ow);
    let go = grad_out.data();
    {
        let gw = grads.weight.data_mut();
        for o in 0..spec.out_channels {
            let g_row = &go[o * n..(o + 1) * n];
            for ri in 0..r {
                gw[o * r + ri] = gw[o * r + ri] + dot(g_row, &cols[ri * n..(ri + 1) * n]);
            }
        }
    }
    {
        let gb = grads.bias.data_mut();
        for o in 0..spec.out_channels {
            let s = go[o * n..(o + 1) * n].iter().fold(T::zero(), |a, &v| a + v);
            gb[o] = gb[o] + s;
        }
    }
    if !want_input_grad {
        return Ok(None);
    }
    let weight = params.weight.data();
    let mut gcols = vec![T::zero(); r * n];
    for ri in 0..r {
        let dst = &mut gcols[ri * n..(ri + 1) * n];
        for o in 0..spec.out_channels {
            axpy(weight[o * r + ri], &go[o * n..(o + 1) * n], dst);
        }
    }
    let gin = col2im(&gcols, spec, h, w, oh, ow);
    Tensor::new(vec![spec.in_channels, h, w], gin).map(Some)
}

/// Gradients of a conv layer with respect to its input and its parameters.
pub fn conv_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    cached_input: &Tensor<T>,
    spec: &ConvLayerSpec,
    params: &LayerParams<T>,
) -> Result<(Tensor<T>, LayerParams<T>)> {
    let mut grads = LayerParams::zeros_like(params);
    let gin = conv_backward_accumulate(grad_out, cached_input, spec, params, &mut grads, true)?
        .expect("input gradient requested");
    Ok((gin, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(spec: &ConvLayerSpec, w: f64, b: f64) -> LayerParams<f64> {
        LayerParams {
            weight: Tensor::filled(spec.weight_shape(), w),
            bias: Tensor::filled(vec![spec.out_channels], b),
        }
    }

    /// Direct quadruple loop, written independently of the im2col path.
    fn reference_conv(input: &Tensor<f64>, spec: &ConvLayerSpec, p: &LayerParams<f64>) -> Vec<f64> {
        let (c_in, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let (oh, ow) = spec.output_size(h, w).unwrap();
        let k = spec.kernel;
        let mut out = Vec::new();
        for o in 0..spec.out_channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = p.bias.data()[o];
                    for c in 0..c_in {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * spec.stride + ky) as i64 - spec.padding as i64;
                                let ix = (ox * spec.stride + kx) as i64 - spec.padding as i64;
                                if iy < 0 || ix < 0 || iy >= h as i64 || ix >= w as i64 {
                                    continue;
                                }
                                let wi = ((o * c_in + c) * k + ky) * k + kx;
                                let xi = (c * h + iy as usize) * w + ix as usize;
                                acc += p.weight.data()[wi] * input.data()[xi];
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
        out
    }

    #[test]
    fn ones_kernel_over_ones_input_sums_patch() {
        let spec = ConvLayerSpec::new(1, 1, 2, 1, 0);
        let x = Tensor::filled(vec![1, 3, 3], 1.0);
        let y = conv_forward(&x, &spec, &params(&spec, 1.0, 0.0)).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2]);
        assert!(y.data().iter().all(|&v| v == 4.0));
    }

    #[test]
    fn zero_input_yields_bias() {
        let spec = ConvLayerSpec::new(2, 3, 3, 2, 1);
        let x = Tensor::zeros(vec![2, 5, 5]);
        let y = conv_forward(&x, &spec, &params(&spec, 0.7, -0.25)).unwrap();
        assert!(y.data().iter().all(|&v| v == -0.25));
    }

    #[test]
    fn matches_direct_loop_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for spec in [
            ConvLayerSpec::new(1, 2, 3, 1, 0),
            ConvLayerSpec::new(2, 3, 3, 2, 1),
            ConvLayerSpec::new(3, 2, 2, 2, 0),
        ] {
            let x = Tensor::new(
                vec![spec.in_channels, 4, 4],
                (0..spec.in_channels * 16).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let mut p = params(&spec, 0.0, 0.0);
            p.weight
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.gen_range(-1.0..1.0));
            p.bias.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
            let y = conv_forward(&x, &spec, &p).unwrap();
            for (a, b) in y.data().iter().zip(reference_conv(&x, &spec, &p)) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let spec = ConvLayerSpec::new(2, 2, 3, 1, 1);
        let x = Tensor::filled(vec![2, 4, 4], 0.5);
        let p = params(&spec, 0.3, 0.1);
        let (gi, gp) = conv_backward(&Tensor::zeros(vec![2, 4, 4]), &x, &spec, &p).unwrap();
        assert!(gi.data().iter().all(|&v| v == 0.0));
        assert!(gp.weight.data().iter().all(|&v| v == 0.0));
        assert!(gp.bias.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sum_loss_weight_grad_is_patch_sum() {
        // L = sum(output) on a 3x3 input with a 2x2 kernel: dL/dw[ky,kx] is the
        // sum of the four input values that weight touches.
        let spec = ConvLayerSpec::new(1, 1, 2, 1, 0);
        let x = Tensor::new(vec![1, 3, 3], (1..=9).map(f64::from).collect()).unwrap();
        let p = params(&spec, 0.5, 0.0);
        let (_, gp) = conv_backward(&Tensor::filled(vec![1, 2, 2], 1.0), &x, &spec, &p).unwrap();
        // w00 touches 1,2,4,5; w01 touches 2,3,5,6; w10 touches 4,5,7,8; w11 touches 5,6,8,9
        assert_eq!(gp.weight.data(), &[12.0, 16.0, 24.0, 28.0]);
        assert_eq!(gp.bias.data(), &[4.0]);
    }

    #[test]
    fn shape_mismatch_is_config_error() {
        let spec = ConvLayerSpec::new(2, 2, 3, 1, 0);
        let p = params(&spec, 0.0, 0.0);
        assert!(conv_forward(&Tensor::zeros(vec![1, 4, 4]), &spec, &p).is_err());
        assert!(conv_forward(&Tensor::zeros(vec![2, 2, 2]), &spec, &p).is_err());
        let x = Tensor::zeros(vec![2, 4, 4]);
        assert!(conv_backward(&Tensor::zeros(vec![2, 3, 3]), &x, &spec, &p).is_err());
    }

    #[test]
    fn output_size_formula() {
        let spec = ConvLayerSpec::new(1, 1, 3, 2, 0);
        assert_eq!(spec.output_size(24, 24).unwrap(), (11, 11));
        assert_eq!(spec.output_size(11, 11).unwrap(), (5, 5));
        assert_eq!(ConvLayerSpec::new(1, 1, 3, 1, 1).output_size(4, 4).unwrap(), (4, 4));
        assert_eq!(ConvLayerSpec::new(1, 2, 3, 1, 0).macs(4, 4).unwrap(), 72);
    }
}
