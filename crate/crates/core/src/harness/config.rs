//! Run configuration: one flat JSON document per run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::AgentConfig;
use crate::augment::AugmentConfig;
use crate::env::{EnvConfig, EnvId};
use crate::error::{config_err, Error, Result};
use crate::nn::{ConvLayerSpec, DenseLayerSpec, LayerSpec, NetworkSpec};
use crate::replay::{capacity_for_budget, BufferMode, ObservationCost, ReplayConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Full-network training throughout; the encoder never freezes.
    Baseline,
    /// Freeze at `freeze_step` and switch to latent replay.
    Seer,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Seer => "seer",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "seer" => Ok(Mode::Seer),
            other => config_err(format!("unknown mode {other:?} (expected baseline or seer)")),
        }
    }
}

/// One convolution of the encoder; input channels follow from the previous
/// layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvDef {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    #[serde(default)]
    pub padding: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mode: Mode,

    pub env: EnvId,
    pub grid_size: usize,
    pub render_size: usize,
    pub frame_stack: usize,
    pub max_episode_steps: usize,

    pub conv_layers: Vec<ConvDef>,
    /// Width of the dense layer closing the encoder; `None` uses the
    /// flattened conv output as the latent.
    pub latent_dim: Option<usize>,
    pub head_hidden: Vec<usize>,

    pub gamma: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_steps: u64,
    pub target_sync_period: u64,
    pub updates_per_step: usize,
    pub initial_steps: u64,
    pub double_q: bool,
    /// `T_f`; used in seer mode only.
    pub freeze_step: u64,

    pub augment: bool,
    pub crop_pad: usize,
    /// `K`
    pub augmentations: usize,

    /// `C`, before any byte budget is applied.
    pub replay_capacity: usize,
    /// Observation-storage budget in bytes (constrained-memory mode).
    pub memory_budget: Option<u64>,

    pub total_steps: u64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub log_every: u64,
    pub seeds: Vec<u64>,
}

impl Default for RunConfig {
    /// Catch 12x12 rendered at 24x24 with two stacked frames.
    fn default() -> Self {
        let env = EnvConfig::catch();
        Self {
            mode: Mode::Seer,
            env: env.env_id,
            grid_size: env.grid_size,
            render_size: env.render_size,
            frame_stack: env.frame_stack,
            max_episode_steps: env.max_episode_steps,
            conv_layers: vec![
                ConvDef {
                    channels: 8,
                    kernel: 3,
                    stride: 2,
                    padding: 0,
                },
                ConvDef {
                    channels: 8,
                    kernel: 3,
                    stride: 2,
                    padding: 0,
                },
            ],
            latent_dim: Some(32),
            head_hidden: vec![64],
            gamma: 0.99,
            batch_size: 32,
            learning_rate: 1e-3,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_steps: 12_000,
            target_sync_period: 500,
            updates_per_step: 1,
            initial_steps: 1000,
            double_q: false,
            freeze_step: 12_000,
            augment: false,
            crop_pad: 1,
            augmentations: 1,
            replay_capacity: 10_000,
            memory_budget: None,
            total_steps: 30_000,
            eval_every: 1000,
            eval_episodes: 10,
            log_every: 1000,
            seeds: vec![0],
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            env_id: self.env,
            grid_size: self.grid_size,
            render_size: self.render_size,
            frame_stack: self.frame_stack,
            max_episode_steps: self.max_episode_steps,
        }
    }

    pub fn network_spec(&self) -> Result<NetworkSpec> {
        let env = self.env_config();
        let shape = env.obs_shape();
        let mut encoder = Vec::new();
        let mut channels = shape[0];
        let (mut h, mut w) = (shape[1], shape[2]);
        for c in &self.conv_layers {
            let conv = ConvLayerSpec::new(channels, c.channels, c.kernel, c.stride, c.padding);
            (h, w) = conv.output_size(h, w)?;
            channels = c.channels;
            encoder.push(LayerSpec::Conv(conv));
        }
        let mut width = channels * h * w;
        if let Some(l) = self.latent_dim {
            encoder.push(LayerSpec::Dense(DenseLayerSpec::new(width, l)));
            width = l;
        }
        let mut head = Vec::new();
        for &hidden in &self.head_hidden {
            head.push(DenseLayerSpec::new(width, hidden));
            width = hidden;
        }
        head.push(DenseLayerSpec::new(width, env.num_actions()));
        NetworkSpec::new(shape, encoder, head)
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            gamma: self.gamma,
            freeze_step: (self.mode == Mode::Seer).then_some(self.freeze_step),
            batch_size: self.batch_size,
            eps_start: self.eps_start,
            eps_end: self.eps_end,
            eps_decay_steps: self.eps_decay_steps,
            target_sync_period: self.target_sync_period,
            updates_per_step: self.updates_per_step,
            learning_rate: self.learning_rate,
            initial_steps: self.initial_steps,
            double_q: self.double_q,
        }
    }

    pub fn augment_config(&self) -> AugmentConfig {
        AugmentConfig {
            pad: self.crop_pad,
            k: self.augmentations,
            enabled: self.augment,
        }
    }

    /// Replay configuration; under a byte budget the image capacity is the
    /// number of frame-sized observations the budget holds.
    pub fn replay_config(&self) -> Result<ReplayConfig> {
        let env = self.env_config();
        let latent_dim = self.network_spec()?.latent_dim();
        let mut capacity = self.replay_capacity;
        if let Some(budget) = self.memory_budget {
            let cost = ObservationCost {
                frame_bytes: env.frame_bytes() as u64,
                latent_dim: latent_dim as u64,
                augmentations: self.augmentations as u64,
                encoders: 1,
            };
            capacity = capacity.min(capacity_for_budget(budget, BufferMode::Image, &cost)?);
        }
        Ok(ReplayConfig {
            capacity,
            obs_shape: env.obs_shape(),
            latent_dim,
            augmentations: self.augmentations,
            encoders: 1,
            byte_budget: self.memory_budget,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let env = self.env_config();
        env.validate()?;
        self.network_spec()?;
        self.agent_config().validate()?;
        self.augment_config().validate(env.render_size, env.render_size)?;
        crate::replay::ReplayBuffer::new(self.replay_config()?)?;
        if self.mode == Mode::Seer && self.freeze_step >= self.total_steps {
            return config_err(format!(
                "seer mode needs freeze_step ({}) < total_steps ({})",
                self.freeze_step, self.total_steps
            ));
        }
        if self.eval_every == 0 || self.log_every == 0 || self.eval_episodes == 0 {
            return config_err("eval_every, log_every and eval_episodes must be positive");
        }
        if self.seeds.is_empty() {
            return config_err("at least one seed is required");
        }
        Ok(())
    }
}
