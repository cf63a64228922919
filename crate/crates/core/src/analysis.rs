//! Spatial attention maps of encoder activations, exported as plain PGM.
//!
//! The map is the channel mean of `|a[c, i, j]|` followed by a softmax over
//! all spatial positions jointly. Pooling uses the post-ReLU layer outputs.

use std::fmt::Write as _;
use std::path::Path;

use crate::env::Observation;
use crate::error::{config_err, Error, Result};
use crate::nn::{forward_full, LayerSpec, NetworkSpec, ParamStore};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl AttentionMap {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Row-major entries; they sum to one.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// Gray levels after max-normalization to `0..=255`.
    pub fn to_levels(&self) -> Vec<u8> {
        let max = self.values.iter().copied().fold(0.0f64, f64::max);
        self.values
            .iter()
            .map(|&v| if max > 0.0 { (v / max * 255.0).round() as u8 } else { 0 })
            .collect()
    }
}

/// Attention map of a `[C, H', W']` activation tensor.
pub fn attention_map<T: Scalar>(activations: &Tensor<T>) -> Result<AttentionMap> {
    let &[c, h, w] = activations.shape() else {
        return config_err(format!(
            "attention needs a [C, H, W] tensor, got shape {:?}",
            activations.shape()
        ));
    };
    let hw = h * w;
    let data = activations.data();
    let mut pooled = vec![0.0f64; hw];
    for ch in 0..c {
        for (p, &a) in pooled.iter_mut().zip(&data[ch * hw..(ch + 1) * hw]) {
            *p += a.as_f64().abs();
        }
    }
    for p in &mut pooled {
        *p /= c as f64;
    }
    let max = pooled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for p in &mut pooled {
        *p = (*p - max).exp();
        total += *p;
    }
    for p in &mut pooled {
        *p /= total;
    }
    Ok(AttentionMap {
        height: h,
        width: w,
        values: pooled,
    })
}

/// Index of the last convolution in the encoder.
pub fn default_attention_layer(spec: &NetworkSpec) -> Option<usize> {
    spec.encoder_layers()
        .iter()
        .rposition(|l| matches!(l, LayerSpec::Conv(_)))
}

/// Attention map of `obs` at conv layer `layer` (default: last encoder conv).
pub fn observation_attention(
    obs: &Observation,
    spec: &NetworkSpec,
    params: &ParamStore<f32>,
    layer: Option<usize>,
) -> Result<AttentionMap> {
    let layer = match layer.or_else(|| default_attention_layer(spec)) {
        Some(l) => l,
        None => return config_err("the encoder has no convolution layer"),
    };
    match spec.layers().get(layer) {
        Some(LayerSpec::Conv(_)) => {}
        _ => return config_err(format!("layer {layer} is not a convolution")),
    }
    let (_, _, cache) = forward_full(&obs.to_tensor(), spec, params)?;
    let act = cache
        .layer_output(layer)
        .ok_or_else(|| Error::Internal(format!("no cached output for layer {layer}")))?;
    attention_map(act)
}

/// Plain-text P2 graymap: `P2`, `W H`, `255`, then one row of levels per line.
pub fn to_pgm(map: &AttentionMap) -> String {
    let levels = map.to_levels();
    let mut out = format!("P2\n{} {}\n255\n", map.width, map.height);
    for row in levels.chunks(map.width) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}

pub fn export_pgm(map: &AttentionMap, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_pgm(map))?;
    Ok(())
}

/// A parsed P2 image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graymap {
    pub width: usize,
    pub height: usize,
    pub max_value: u32,
    pub pixels: Vec<u32>,
}

/// Parses a plain P2 graymap; `#` comments are skipped.
pub fn parse_pgm(text: &str) -> Result<Graymap> {
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    if tokens.next() != Some("P2") {
        return config_err("not a P2 graymap");
    }
    let mut num = |what: &str| -> Result<u32> {
        tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Config(format!("bad or missing {what} in graymap")))
    };
    let width = num("width")? as usize;
    let height = num("height")? as usize;
    let max_value = num("max value")?;
    let mut pixels = Vec::with_capacity(width * height);
    for _ in 0..width * height {
        let v = num("pixel")?;
        if v > max_value {
            return config_err(format!("pixel {v} exceeds max value {max_value}"));
        }
        pixels.push(v);
    }
    Ok(Graymap {
        width,
        height,
        max_value,
        pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(shape: Vec<usize>, data: Vec<f64>) -> Tensor<f64> {
        Tensor::new(shape, data).unwrap()
    }

    #[test]
    fn uniform_activations_give_uniform_map() {
        let m = attention_map(&Tensor::<f64>::filled(vec![3, 4, 5], 0.7)).unwrap();
        assert_eq!((m.height(), m.width()), (4, 5));
        for &v in m.values() {
            assert!((v - 1.0 / 20.0).abs() < 1e-15);
        }
    }

    #[test]
    fn peak_dominates() {
        let mut data = vec![0.0; 2 * 3 * 3];
        data[4] = 20.0;
        data[9 + 4] = 20.0;
        let m = attention_map(&tensor(vec![2, 3, 3], data)).unwrap();
        assert!(m.get(1, 1) > 0.99);
        let s: f64 = m.values().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn absolute_value_before_pooling() {
        let pos = attention_map(&tensor(vec![1, 1, 2], vec![1.0, 3.0])).unwrap();
        let neg = attention_map(&tensor(vec![1, 1, 2], vec![-1.0, -3.0])).unwrap();
        assert_eq!(pos, neg);
        // softmax(1, 3)
        let e = (-2.0f64).exp();
        assert!((pos.values()[0] - e / (1.0 + e)).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_3d() {
        assert!(attention_map(&Tensor::<f64>::zeros(vec![4])).is_err());
    }

    #[test]
    fn pgm_header_and_roundtrip() {
        let m = attention_map(&tensor(vec![1, 2, 3], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0])).unwrap();
        let text = to_pgm(&m);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("P2"));
        assert_eq!(lines.next(), Some("3 2"));
        assert_eq!(lines.next(), Some("255"));
        let g = parse_pgm(&text).unwrap();
        assert_eq!((g.width, g.height, g.max_value), (3, 2, 255));
        let levels: Vec<u32> = m.to_levels().into_iter().map(u32::from).collect();
        assert_eq!(g.pixels, levels);
        assert_eq!(*g.pixels.last().unwrap(), 255);
    }

    #[test]
    fn uniform_map_exports_all_white() {
        let m = attention_map(&Tensor::<f64>::filled(vec![1, 2, 2], 1.0)).unwrap();
        assert!(parse_pgm(&to_pgm(&m)).unwrap().pixels.iter().all(|&p| p == 255));
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(parse_pgm("P5\n1 1\n255\n0").is_err());
        assert!(parse_pgm("P2\n2 1\n255\n0").is_err());
        assert!(parse_pgm("P2\n1 1\n10\n11").is_err());
        assert!(parse_pgm("P2 # comment\n1 1\n255\n7\n").is_ok());
    }
}
