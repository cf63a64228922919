use serde::{Deserialize, Serialize};

use super::network::{Grads, ParamStore};
use super::LayerParams;
use crate::error::{config_err, Error, Result};
use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moments mirroring a [`ParamStore`], plus the step count.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T = f32> {
    pub config: AdamConfig,
    m: Vec<LayerParams<T>>,
    v: Vec<LayerParams<T>>,
    step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, params: &ParamStore<T>) -> Self {
        let zeros: Vec<_> = params.layers().iter().map(LayerParams::zeros_like).collect();
        Self {
            config,
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, layer: usize) -> &LayerParams<T> {
        &self.m[layer]
    }

    pub fn second_moment(&self, layer: usize) -> &LayerParams<T> {
        &self.v[layer]
    }
}

/// One bias-corrected Adam update. Layers without a gradient and frozen
/// encoder layers are left untouched, moments included.
pub fn adam_step<T: Scalar>(params: &mut ParamStore<T>, grads: &Grads<T>, state: &mut AdamState<T>) -> Result<()> {
    if grads.layers.len() != params.layers().len() || state.m.len() != params.layers().len() {
        return config_err("gradients or optimizer state do not match the parameters");
    }
    for (i, g) in grads.layers.iter().enumerate() {
        if let Some(g) = g {
            if !g.all_finite() {
                return Err(Error::NonFinite(format!("gradient of layer {i} contains NaN/inf")));
            }
            if g.weight.shape() != params.layers()[i].weight.shape()
                || g.bias.shape() != params.layers()[i].bias.shape()
            {
                return config_err(format!("gradient shape mismatch at layer {i}"));
            }
        }
    }
    state.step += 1;
    let c = state.config;
    let t = state.step as i32;
    let bc1 = T::of_f64(1.0 - c.beta1.powi(t));
    let bc2 = T::of_f64(1.0 - c.beta2.powi(t));
    let (b1, b2) = (T::of_f64(c.beta1), T::of_f64(c.beta2));
    let (lr, eps) = (T::of_f64(c.lr), T::of_f64(c.eps));
    let boundary = params.encoder().len();
    let frozen = params.is_encoder_frozen();
    for (i, g) in grads.layers.iter().enumerate() {
        let Some(g) = g else { continue };
        if frozen && i < boundary {
            continue;
        }
        let p = params.layer_mut(i);
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for (pw, gw, mw, vw) in [
            (&mut p.weight, &g.weight, &mut m.weight, &mut v.weight),
            (&mut p.bias, &g.bias, &mut m.bias, &mut v.bias),
        ] {
            for (((pv, &gv), mv), vv) in pw
                .data_mut()
                .iter_mut()
                .zip(gw.data())
                .zip(mw.data_mut())
                .zip(vw.data_mut())
            {
                *mv = b1 * *mv + (T::one() - b1) * gv;
                *vv = b2 * *vv + (T::one() - b2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv = *pv - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
    params.bump_version();
    Ok(())
}
