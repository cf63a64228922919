use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::{relu_in_place, relu_mask_in_place};
use super::conv::{conv_backward_accumulate, conv_forward, ConvLayerSpec};
use super::dense::{dense_backward_accumulate, dense_forward, DenseLayerSpec};
use super::LayerParams;
use crate::error::{config_err, Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv(ConvLayerSpec),
    Dense(DenseLayerSpec),
}

impl LayerSpec {
    fn weight_shape(&self) -> Vec<usize> {
        match self {
            LayerSpec::Conv(c) => c.weight_shape(),
            LayerSpec::Dense(d) => d.weight_shape(),
        }
    }

    fn out_features(&self) -> usize {
        match self {
            LayerSpec::Conv(c) => c.out_channels,
            LayerSpec::Dense(d) => d.out_dim,
        }
    }

    fn fan_in(&self) -> usize {
        match self {
            LayerSpec::Conv(c) => c.patch_len(),
            LayerSpec::Dense(d) => d.in_dim,
        }
    }
}

/// Encoder layers (conv and/or dense) followed by dense head layers.
///
/// A ReLU follows every layer except the final one, so the latent (the
/// encoder output) is post-activation whenever a head exists.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    boundary: usize,
    /// Input shape of every layer plus the output shape of the last one.
    shapes: Vec<Vec<usize>>,
}

impl NetworkSpec {
    /// `input_shape` is `(channels, height, width)`.
    pub fn new(input_shape: [usize; 3], encoder: Vec<LayerSpec>, head: Vec<DenseLayerSpec>) -> Result<Self> {
        if input_shape.contains(&0) {
            return config_err(format!("input shape {input_shape:?} has a zero dimension"));
        }
        if encoder.is_empty() {
            return config_err("encoder needs at least one layer");
        }
        let boundary = encoder.len();
        let layers: Vec<LayerSpec> = encoder
            .into_iter()
            .chain(head.into_iter().map(LayerSpec::Dense))
            .collect();
        let mut shapes = vec![input_shape.to_vec()];
        for (i, layer) in layers.iter().enumerate() {
            let cur = shapes.last().expect("non-empty");
            let next = match layer {
                LayerSpec::Conv(c) => {
                    if cur.len() != 3 {
                        return config_err(format!("conv layer {i} follows a flat layer"));
                    }
                    if cur[0] != c.in_channels {
                        return config_err(format!(
                            "conv layer {i} expects {} channels, previous output has {}",
                            c.in_channels, cur[0]
                        ));
                    }
                    let (h, w) = c.output_size(cur[1], cur[2])?;
                    vec![c.out_channels, h, w]
                }
                LayerSpec::Dense(d) => {
                    let flat: usize = cur.iter().product();
                    if d.in_dim != flat || d.out_dim == 0 {
                        return config_err(format!(
                            "dense layer {i} expects {} inputs, previous output has {flat}",
                            d.in_dim
                        ));
                    }
                    vec![d.out_dim]
                }
            };
            shapes.push(next);
        }
        Ok(Self {
            input_shape: input_shape.to_vec(),
            layers,
            boundary,
            shapes,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn encoder_layers(&self) -> &[LayerSpec] {
        &self.layers[..self.boundary]
    }

    pub fn head_layers(&self) -> &[LayerSpec] {
        &self.layers[self.boundary..]
    }

    /// Index of the first head layer.
    pub fn freeze_boundary(&self) -> usize {
        self.boundary
    }

    /// Latent size `L`.
    pub fn latent_dim(&self) -> usize {
        self.shapes[self.boundary].iter().product()
    }

    pub fn num_outputs(&self) -> usize {
        self.shapes.last().expect("non-empty").iter().product()
    }

    /// Output shape of layer `i`.
    pub fn layer_output_shape(&self, i: usize) -> &[usize] {
        &self.shapes[i + 1]
    }

    fn has_relu(&self, i: usize) -> bool {
        i + 1 < self.layers.len()
    }
}

/// Per-layer parameters plus the encoder freeze flag.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T = f32> {
    layers: Vec<LayerParams<T>>,
    boundary: usize,
    encoder_frozen: bool,
    version: u64,
}

impl<T: Scalar> ParamStore<T> {
    /// He-uniform weights `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, zero biases.
    pub fn init_he_uniform<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Self {
        let layers = spec
            .layers
            .iter()
            .map(|l| {
                let bound = (6.0 / l.fan_in() as f64).sqrt();
                let shape = l.weight_shape();
                let n: usize = shape.iter().product();
                let data = (0..n).map(|_| T::of_f64(rng.gen_range(-bound..bound))).collect();
                LayerParams {
                    weight: Tensor::new(shape, data).expect("shape from spec"),
                    bias: Tensor::zeros(vec![l.out_features()]),
                }
            })
            .collect();
        Self {
            layers,
            boundary: spec.boundary,
            encoder_frozen: false,
            version: 0,
        }
    }

    /// Builds a store from explicit tensors, checking them against `spec`.
    pub fn from_layers(spec: &NetworkSpec, layers: Vec<LayerParams<T>>) -> Result<Self> {
        if layers.len() != spec.layers.len() {
            return config_err(format!(
                "expected {} layers of parameters, got {}",
                spec.layers.len(),
                layers.len()
            ));
        }
        for (i, (l, p)) in spec.layers.iter().zip(&layers).enumerate() {
            if p.weight.shape() != l.weight_shape().as_slice() || p.bias.shape() != [l.out_features()] {
                return config_err(format!("parameter shapes of layer {i} do not match spec"));
            }
        }
        Ok(Self {
            layers,
            boundary: spec.boundary,
            encoder_frozen: false,
            version: 0,
        })
    }

    pub fn layers(&self) -> &[LayerParams<T>] {
        &self.layers
    }

    pub fn encoder(&self) -> &[LayerParams<T>] {
        &self.layers[..self.boundary]
    }

    pub fn head(&self) -> &[LayerParams<T>] {
        &self.layers[self.boundary..]
    }

    pub fn is_encoder_frozen(&self) -> bool {
        self.encoder_frozen
    }

    pub fn freeze_encoder(&mut self) {
        self.encoder_frozen = true;
    }

    /// Bumped on every parameter write; caches remember the version they saw.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(LayerParams::num_params).sum()
    }

    /// Hard copy of every layer (target sync before freezing).
    pub fn copy_all_from(&mut self, other: &ParamStore<T>) {
        self.layers.clone_from(&other.layers);
        self.version += 1;
    }

    /// Hard copy of the head layers only.
    pub fn copy_head_from(&mut self, other: &ParamStore<T>) {
        for (dst, src) in self.layers[self.boundary..]
            .iter_mut()
            .zip(&other.layers[other.boundary..])
        {
            dst.clone_from(src);
        }
        self.version += 1;
    }

    pub(crate) fn layer_mut(&mut self, i: usize) -> &mut LayerParams<T> {
        &mut self.layers[i]
    }

    pub(crate) fn bump_version(&mut self) {
        self.version += 1;
    }
}

/// Activations saved by a forward pass for the matching backward pass.
///
/// `activations[0]` is the input of layer `start_layer`; `activations[j + 1]`
/// is the (post-ReLU) output of layer `start_layer + j`.
#[derive(Clone, Debug)]
pub struct ActivationCache<T = f32> {
    start_layer: usize,
    activations: Vec<Tensor<T>>,
    version: u64,
}

impl<T: Scalar> ActivationCache<T> {
    pub fn start_layer(&self) -> usize {
        self.start_layer
    }

    /// Output of layer `layer` (absolute index), if the cache covers it.
    pub fn layer_output(&self, layer: usize) -> Option<&Tensor<T>> {
        layer
            .checked_sub(self.start_layer)
            .and_then(|j| self.activations.get(j + 1))
    }
}

/// Parameter gradients; `None` for layers the backward pass did not reach.
#[derive(Clone, Debug, PartialEq)]
pub struct Grads<T = f32> {
    pub layers: Vec<Option<LayerParams<T>>>,
}

impl<T: Scalar> Grads<T> {
    /// Zeroed gradients for every layer from `from_layer` upwards.
    pub fn zeros_from(params: &ParamStore<T>, from_layer: usize) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .enumerate()
                .map(|(i, p)| (i >= from_layer).then(|| LayerParams::zeros_like(p)))
                .collect(),
        }
    }

    pub fn encoder_is_empty(&self, spec: &NetworkSpec) -> bool {
        self.layers[..spec.boundary].iter().all(Option::is_none)
    }

    pub fn scale(&mut self, factor: T) {
        for l in self.layers.iter_mut().flatten() {
            l.weight.data_mut().iter_mut().for_each(|v| *v = *v * factor);
            l.bias.data_mut().iter_mut().for_each(|v| *v = *v * factor);
        }
    }
}

fn layer_forward<T: Scalar>(
    spec: &NetworkSpec,
    params: &ParamStore<T>,
    i: usize,
    input: &Tensor<T>,
) -> Result<Tensor<T>> {
    let mut out = match &spec.layers[i] {
        LayerSpec::Conv(c) => conv_forward(input, c, &params.layers[i])?,
        LayerSpec::Dense(d) => dense_forward(input, d, &params.layers[i])?,
    };
    if spec.has_relu(i) {
        relu_in_place(&mut out);
    }
    Ok(out)
}

fn check_store<T: Scalar>(spec: &NetworkSpec, params: &ParamStore<T>) -> Result<()> {
    if params.layers.len() != spec.layers.len() || params.boundary != spec.boundary {
        return config_err("parameter store does not belong to this network spec");
    }
    Ok(())
}

fn forward_range<T: Scalar>(
    input: &Tensor<T>,
    spec: &NetworkSpec,
    params: &ParamStore<T>,
    range: std::ops::Range<usize>,
    keep: bool,
) -> Result<(Tensor<T>, ActivationCache<T>)> {
    check_store(spec, params)?;
    let expected = &spec.shapes[range.start];
    let expected_len: usize = expected.iter().product();
    let ok = if spec
        .layers
        .get(range.start)
        .is_some_and(|l| matches!(l, LayerSpec::Conv(_)))
    {
        input.shape() == expected.as_slice()
    } else {
        input.len() == expected_len
    };
    if !ok {
        return config_err(format!(
            "network input at layer {} has shape {:?}, expected {expected:?}",
            range.start,
            input.shape()
        ));
    }
    let start = range.start;
    let mut activations = Vec::new();
    let mut cur = input.clone();
    for i in range {
        let next = layer_forward(spec, params, i, &cur)?;
        if keep {
            activations.push(std::mem::replace(&mut cur, next));
        } else {
            cur = next;
        }
    }
    if keep {
        activations.push(cur.clone());
    }
    Ok((
        cur,
        ActivationCache {
            start_layer: start,
            activations,
            version: params.version,
        },
    ))
}

/// Full forward pass: returns Q-values, the latent (encoder output, flat)
/// and the activation cache.
pub fn forward_full<T: Scalar>(
    obs: &Tensor<T>,
    spec: &NetworkSpec,
    params: &ParamStore<T>,
) -> Result<(Tensor<T>, Tensor<T>, ActivationCache<T>)> {
    let (q, cache) = forward_range(obs, spec, params, 0..spec.layers.len(), true)?;
    let latent = cache.activations[spec.boundary].clone();
    let latent = Tensor::vector(latent.into_data());
    Ok((q, latent, cache))
}

/// Encoder-only forward pass `f_psi(obs)`, flattened to length `L`.
pub fn encode<T: Scalar>(obs: &Tensor<T>, spec: &NetworkSpec, params: &ParamStore<T>) -> Result<Tensor<T>> {
    let (z, _) = forward_range(obs, spec, params, 0..spec.boundary, false)?;
    Ok(Tensor::vector(z.into_data()))
}

/// Head-only forward pass on a latent of length `L`.
pub fn forward_head_only<T: Scalar>(
    latent: &Tensor<T>,
    spec: &NetworkSpec,
    params: &ParamStore<T>,
) -> Result<Tensor<T>> {
    check_latent(latent, spec)?;
    forward_range(latent, spec, params, spec.boundary..spec.layers.len(), false).map(|(q, _)| q)
}

/// Head-only forward pass that keeps the cache for a head-only backward.
pub fn forward_head_cached<T: Scalar>(
    latent: &Tensor<T>,
    spec: &NetworkSpec,
    params: &ParamStore<T>,
) -> Result<(Tensor<T>, ActivationCache<T>)> {
    check_latent(latent, spec)?;
    forward_range(latent, spec, params, spec.boundary..spec.layers.len(), true)
}

fn check_latent<T: Scalar>(latent: &Tensor<T>, spec: &NetworkSpec) -> Result<()> {
    if latent.len() != spec.latent_dim() {
        return config_err(format!(
            "latent has {} elements, network expects {}",
            latent.len(),
            spec.latent_dim()
        ));
    }
    Ok(())
}

/// Backpropagates `loss_grad` (dL/dq) and adds the parameter gradients into
/// `grads`. With `stop_at_freeze_boundary` the pass ends at the first head
/// layer: no encoder gradients and no arithmetic below the boundary.
pub fn backward_accumulate<T: Scalar>(
    loss_grad: &Tensor<T>,
    cache: &ActivationCache<T>,
    spec: &NetworkSpec,
    params: &ParamStore<T>,
    stop_at_freeze_boundary: bool,
    grads: &mut Grads<T>,
) -> Result<()> {
    check_store(spec, params)?;
    if cache.version != params.version {
        return Err(Error::Internal(format!(
            "stale activation cache (version {}, parameters at {})",
            cache.version, params.version
        )));
    }
    let n = spec.layers.len();
    if cache.activations.len() != n - cache.start_layer + 1 {
        return Err(Error::Internal("activation cache does not span the network".into()));
    }
    let lowest = if stop_at_freeze_boundary { spec.boundary } else { 0 };
    if cache.start_layer > lowest {
        return Err(Error::Internal(format!(
            "cache starts at layer {}, backward needs layer {lowest}",
            cache.start_layer
        )));
    }
    if loss_grad.len() != spec.num_outputs() {
        return config_err(format!(
            "loss gradient has {} elements, network has {} outputs",
            loss_grad.len(),
            spec.num_outputs()
        ));
    }
    if grads.layers.len() != n {
        return config_err("gradient container does not match the network");
    }
    let mut grad = loss_grad.clone();
    for i in (lowest..n).rev() {
        let j = i - cache.start_layer;
        let input = &cache.activations[j];
        if spec.has_relu(i) {
            relu_mask_in_place(&mut grad, &cache.activations[j + 1]);
        }
        let slot = grads.layers[i].get_or_insert_with(|| LayerParams::zeros_like(&params.layers[i]));
        let want_input = i > lowest;
        let next = match &spec.layers[i] {
            LayerSpec::Conv(c) => {
                let g = grad.reshaped(spec.shapes[i + 1].clone())?;
                conv_backward_accumulate(&g, input, c, &params.layers[i], slot, want_input)?
            }
            LayerSpec::Dense(d) => dense_backward_accumulate(&grad, input, d, &params.layers[i], slot, want_input)?,
        };
        match next {
            Some(g) => grad = g,
            None => break,
        }
    }
    Ok(())
}

/// Allocating wrapper around [`backward_accumulate`].
pub fn backward_from_loss<T: Scalar>(
    loss_grad: &Tensor<T>,
    cache: &ActivationCache<T>,
    spec: &NetworkSpec,
    params: &ParamStore<T>,
    stop_at_freeze_boundary: bool,
) -> Result<Grads<T>> {
    let mut grads = Grads {
        layers: vec![None; spec.layers.len()],
    };
    backward_accumulate(loss_grad, cache, spec, params, stop_at_freeze_boundary, &mut grads)?;
    Ok(grads)
}

/// Forward multiply-adds `(E, M)` of encoder and head. Conv layers count
/// `H'*W'*out*(k*k*in)`, dense layers `in*out`; biases and ReLUs are free.
pub fn param_flops(spec: &NetworkSpec) -> (u64, u64) {
    let macs = |i: usize| -> u64 {
        match &spec.layers[i] {
            LayerSpec::Conv(c) => {
                let s = &spec.shapes[i];
                c.macs(s[1], s[2]).expect("validated spec")
            }
            LayerSpec::Dense(d) => d.macs(),
        }
    };
    let e = (0..spec.boundary).map(macs).sum();
    let m = (spec.boundary..spec.layers.len()).map(macs).sum();
    (e, m)
}
