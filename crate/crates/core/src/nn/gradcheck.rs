//! Central finite-difference checks of the analytic gradients.
//!
//! The scalar probed is `L = sum(c * y)` for a fixed random `c`, so the
//! upstream gradient handed to the backward pass is `c` itself. Numerical
//! derivatives use only forward passes.

use rand::Rng;

use super::conv::{conv_backward, conv_forward, ConvLayerSpec};
use super::dense::{dense_backward, dense_forward, DenseLayerSpec};
use super::network::{backward_from_loss, forward_full, ActivationCache, NetworkSpec, ParamStore};
use super::{relu_backward, relu_forward, LayerParams};
use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates whose perturbation flipped a ReLU on or off.
    pub skipped_kinks: usize,
}

impl GradCheckReport {
    fn merge(&mut self, other: GradCheckReport) {
        self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
        self.checked += other.checked;
        self.skipped_kinks += other.skipped_kinks;
    }

    fn record(&mut self, analytic: f64, numeric: f64) {
        self.max_rel_error = self.max_rel_error.max(relative_error(analytic, numeric));
        self.checked += 1;
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

pub fn random_tensor<R: Rng + ?Sized>(shape: Vec<usize>, rng: &mut R) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("shape matches")
}

fn weighted_sum(c: &Tensor<f64>, y: &Tensor<f64>) -> f64 {
    c.data().iter().zip(y.data()).map(|(a, b)| a * b).sum()
}

/// Perturbs each coordinate of `x` by `+-h` and compares the symmetric
/// difference of `f` with `analytic`.
fn check_coords(
    x: &mut [f64],
    analytic: &[f64],
    h: f64,
    report: &mut GradCheckReport,
    mut f: impl FnMut(&[f64]) -> f64,
) {
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let plus = f(x);
        x[i] = orig - h;
        let minus = f(x);
        x[i] = orig;
        report.record(analytic[i], (plus - minus) / (2.0 * h));
    }
}

/// Checks weight, bias and input gradients of one conv layer.
pub fn check_conv<R: Rng + ?Sized>(
    spec: &ConvLayerSpec,
    h_in: usize,
    w_in: usize,
    h: f64,
    rng: &mut R,
) -> Result<GradCheckReport> {
    let x = random_tensor(vec![spec.in_channels, h_in, w_in], rng);
    let params = LayerParams {
        weight: random_tensor(spec.weight_shape(), rng),
        bias: random_tensor(vec![spec.out_channels], rng),
    };
    let y = conv_forward(&x, spec, &params)?;
    let c = random_tensor(y.shape().to_vec(), rng);
    let (gx, gp) = conv_backward(&c, &x, spec, &params)?;
    let mut report = GradCheckReport::default();
    let loss =
        |x: &Tensor<f64>, p: &LayerParams<f64>| weighted_sum(&c, &conv_forward(x, spec, p).expect("shapes fixed"));

    let mut xd = x.data().to_vec();
    check_coords(&mut xd, gx.data(), h, &mut report, |v| {
        loss(&Tensor::new(x.shape().to_vec(), v.to_vec()).unwrap(), &params)
    });
    let mut wd = params.weight.data().to_vec();
    check_coords(&mut wd, gp.weight.data(), h, &mut report, |v| {
        let p = LayerParams {
            weight: Tensor::new(params.weight.shape().to_vec(), v.to_vec()).unwrap(),
            bias: params.bias.clone(),
        };
        loss(&x, &p)
    });
    let mut bd = params.bias.data().to_vec();
    check_coords(&mut bd, gp.bias.data(), h, &mut report, |v| {
        let p = LayerParams {
            weight: params.weight.clone(),
            bias: Tensor::vector(v.to_vec()),
        };
        loss(&x, &p)
    });
    Ok(report)
}

/// Checks weight, bias and input gradients of one dense layer.
pub fn check_dense<R: Rng + ?Sized>(spec: &DenseLayerSpec, h: f64, rng: &mut R) -> Result<GradCheckReport> {
    let x = random_tensor(vec![spec.in_dim], rng);
    let params = LayerParams {
        weight: random_tensor(spec.weight_shape(), rng),
        bias: random_tensor(vec![spec.out_dim], rng),
    };
    let c = random_tensor(vec![spec.out_dim], rng);
    let (gx, gp) = dense_backward(&c, &x, spec, &params)?;
    let mut report = GradCheckReport::default();
    let loss =
        |x: &Tensor<f64>, p: &LayerParams<f64>| weighted_sum(&c, &dense_forward(x, spec, p).expect("shapes fixed"));

    let mut xd = x.data().to_vec();
    check_coords(&mut xd, gx.data(), h, &mut report, |v| {
        loss(&Tensor::vector(v.to_vec()), &params)
    });
    let mut wd = params.weight.data().to_vec();
    check_coords(&mut wd, gp.weight.data(), h, &mut report, |v| {
        let p = LayerParams {
            weight: Tensor::new(params.weight.shape().to_vec(), v.to_vec()).unwrap(),
            bias: params.bias.clone(),
        };
        loss(&x, &p)
    });
    let mut bd = params.bias.data().to_vec();
    check_coords(&mut bd, gp.bias.data(), h, &mut report, |v| {
        let p = LayerParams {
            weight: params.weight.clone(),
            bias: Tensor::vector(v.to_vec()),
        };
        loss(&x, &p)
    });
    Ok(report)
}

/// Checks the ReLU input gradient on `n` inputs kept at least `2h` away
/// from the kink.
pub fn check_relu<R: Rng + ?Sized>(n: usize, h: f64, rng: &mut R) -> Result<GradCheckReport> {
    let data: Vec<f64> = (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(0.1..1.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    let x = Tensor::vector(data);
    let c = random_tensor(vec![n], rng);
    let g = relu_backward(&c, &x)?;
    let mut report = GradCheckReport::default();
    let mut xd = x.data().to_vec();
    check_coords(&mut xd, g.data(), h, &mut report, |v| {
        weighted_sum(&c, &relu_forward(&Tensor::vector(v.to_vec())))
    });
    Ok(report)
}

fn relu_pattern(spec: &NetworkSpec, cache: &ActivationCache<f64>) -> Vec<bool> {
    let n = spec.layers().len();
    (0..n - 1)
        .flat_map(|i| {
            cache
                .layer_output(i)
                .expect("full cache")
                .data()
                .iter()
                .map(|&v| v > 0.0)
        })
        .collect()
}

/// Checks every parameter gradient of a full network (conv, dense and ReLU
/// composed), skipping coordinates whose `+-h` probe changes any ReLU mask.
pub fn check_network<R: Rng + ?Sized>(spec: &NetworkSpec, h: f64, rng: &mut R) -> Result<GradCheckReport> {
    let params: ParamStore<f64> = ParamStore::init_he_uniform(spec, rng);
    // non-zero biases so ReLUs are exercised away from the init pattern
    let layers: Vec<LayerParams<f64>> = params
        .layers()
        .iter()
        .map(|l| LayerParams {
            weight: l.weight.clone(),
            bias: random_tensor(l.bias.shape().to_vec(), rng),
        })
        .collect();
    let params = ParamStore::from_layers(spec, layers.clone())?;
    let x = random_tensor(spec.input_shape().to_vec(), rng);
    let (q, _, cache) = forward_full(&x, spec, &params)?;
    let c = random_tensor(q.shape().to_vec(), rng);
    let grads = backward_from_loss(&c, &cache, spec, &params, false)?;
    let base_pattern = relu_pattern(spec, &cache);
    let eval = |layers: Vec<LayerParams<f64>>| -> (f64, Vec<bool>) {
        let p = ParamStore::from_layers(spec, layers).expect("shapes fixed");
        let (q, _, cache) = forward_full(&x, spec, &p).expect("shapes fixed");
        (weighted_sum(&c, &q), relu_pattern(spec, &cache))
    };
    let mut report = GradCheckReport::default();
    for (li, g) in grads.layers.iter().enumerate() {
        let g = g.as_ref().expect("full backward reaches every layer");
        for (is_bias, analytic) in [(false, g.weight.data()), (true, g.bias.data())] {
            for (i, &a) in analytic.iter().enumerate() {
                let probe = |delta: f64| {
                    let mut ls = layers.clone();
                    let t = if is_bias { &mut ls[li].bias } else { &mut ls[li].weight };
                    t.data_mut()[i] += delta;
                    eval(ls)
                };
                let (plus, pp) = probe(h);
                let (minus, pm) = probe(-h);
                if pp != base_pattern || pm != base_pattern {
                    report.skipped_kinks += 1;
                    continue;
                }
                report.record(a, (plus - minus) / (2.0 * h));
            }
        }
    }
    Ok(report)
}

/// Aggregates several reports.
pub fn merge_reports(reports: impl IntoIterator<Item = GradCheckReport>) -> GradCheckReport {
    let mut out = GradCheckReport::default();
    for r in reports {
        out.merge(r);
    }
    out
}
