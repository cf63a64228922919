//! Versioned binary checkpoint of the online and target parameters.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes  "SEERCKPT"
//! version      u32      1
//! meta_len     u32
//! meta         meta_len bytes of UTF-8 JSON (run config, step, frozen flag)
//! count        u32      number of tensors
//! per tensor:
//!   name_len   u32
//!   name       UTF-8, e.g. "online.0.weight", "target.3.bias"
//!   ndim       u32
//!   dims       ndim x u32
//!   data       prod(dims) x f32
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::agent::DqnAgent;
use crate::error::{config_err, Error, Result};
use crate::nn::{LayerParams, NetworkSpec, ParamStore};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"SEERCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: RunConfig,
    pub seed: u64,
    pub step: u64,
    pub encoder_frozen: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: Vec<NamedTensor>,
}

fn push_params(out: &mut Vec<NamedTensor>, prefix: &str, params: &ParamStore<f32>) {
    for (i, layer) in params.layers().iter().enumerate() {
        out.push(NamedTensor {
            name: format!("{prefix}.{i}.weight"),
            tensor: layer.weight.clone(),
        });
        out.push(NamedTensor {
            name: format!("{prefix}.{i}.bias"),
            tensor: layer.bias.clone(),
        });
    }
}

impl Checkpoint {
    pub fn from_agent(agent: &DqnAgent, config: &RunConfig, seed: u64, step: u64) -> Self {
        let mut tensors = Vec::new();
        push_params(&mut tensors, "online", agent.online());
        push_params(&mut tensors, "target", agent.target());
        Self {
            meta: CheckpointMeta {
                config: config.clone(),
                seed,
                step,
                encoder_frozen: agent.is_frozen(),
            },
            tensors,
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|t| t.name == name).map(|t| &t.tensor)
    }

    /// Rebuilds the parameter set stored under `prefix` ("online" or "target").
    pub fn params(&self, spec: &NetworkSpec, prefix: &str) -> Result<ParamStore<f32>> {
        let mut layers = Vec::new();
        for i in 0..spec.layers().len() {
            let get = |part: &str| {
                self.tensor(&format!("{prefix}.{i}.{part}"))
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("checkpoint lacks {prefix}.{i}.{part}")))
            };
            layers.push(LayerParams {
                weight: get("weight")?,
                bias: get("bias")?,
            });
        }
        let mut params = ParamStore::from_layers(spec, layers)?;
        if self.meta.encoder_frozen {
            params.freeze_encoder();
        }
        Ok(params)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let meta = serde_json::to_vec(&self.meta).expect("meta serializes");
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            let shape = t.tensor.shape();
            out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for &d in shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return config_err("not a checkpoint file (bad magic)");
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return config_err(format!("unsupported checkpoint version {version}"));
        }
        let meta_len = read_u32(&mut r)? as usize;
        let meta: CheckpointMeta = serde_json::from_slice(take(&mut r, meta_len)?)?;
        let count = read_u32(&mut r)?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let name = String::from_utf8(take(&mut r, name_len)?.to_vec())
                .map_err(|_| Error::Config("tensor name is not UTF-8".into()))?;
            let ndim = read_u32(&mut r)? as usize;
            let shape = (0..ndim)
                .map(|_| read_u32(&mut r).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = take(&mut r, n * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(NamedTensor {
                name,
                tensor: Tensor::new(shape, data)?,
            });
        }
        if !r.is_empty() {
            return config_err(format!("{} trailing bytes after the last tensor", r.len()));
        }
        Ok(Self { meta, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

fn take<'a>(r: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if r.len() < n {
        return config_err("checkpoint is truncated");
    }
    let (head, tail) = r.split_at(n);
    *r = tail;
    Ok(head)
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    buf.copy_from_slice(take(r, buf.len())?);
    Ok(())
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}
