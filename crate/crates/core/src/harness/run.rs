//! Training loop, metrics rows and run artifacts.
//!
//! Iteration `t` (1-based): pick an action (uniformly at random during the
//! first `initial_steps` steps, epsilon-greedy afterwards), step the
//! environment, store the transition (images before the freeze, latents
//! after), fire the freeze event when `t == T_f`, then update once the
//! warm-up is over. Updates use image batches before the freeze and latent
//! batches from the freeze step on.

use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::config::{Mode, RunConfig};
use super::eval::{evaluate, EvalResult};
use super::seeds::{self, splitmix64, stream, stream_seed};
use crate::accounting::FlopModel;
use crate::agent::DqnAgent;
use crate::env::{Env, Observation};
use crate::error::{Error, Result};
use crate::replay::{ConversionReport, ReplayBuffer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    PreFreeze,
    PostFreeze,
}

/// One line of `metrics.csv`. Empty fields mean "not available yet".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    /// Undiscounted return of the most recently finished episode.
    pub episode_return: Option<f64>,
    pub eval_mean_return: Option<f64>,
    pub eval_std_return: Option<f64>,
    pub cumulative_macs: u64,
    pub bytes_used: u64,
    pub buffer_occupancy: usize,
    pub buffer_capacity: usize,
    pub epsilon: f64,
    pub loss: Option<f64>,
    pub phase: Phase,
}

impl MetricsRow {
    pub const HEADER: [&'static str; 11] = [
        "step",
        "episode_return",
        "eval_mean_return",
        "eval_std_return",
        "cumulative_macs",
        "bytes_used",
        "buffer_occupancy",
        "buffer_capacity",
        "epsilon",
        "loss",
        "phase",
    ];
}

pub fn write_metrics_csv<W: std::io::Write>(out: W, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(MetricsRow::HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<MetricsRow>, _>>()?;
    Ok(rows)
}

/// Closed-form MAC total of a run that follows the loop above, with every
/// post-warm-up step performing `updates_per_step` updates.
pub fn predicted_total_macs(model: &FlopModel, config: &RunConfig, conversion_capacity: u64) -> u64 {
    let total = config.total_steps;
    let warm = config.initial_steps.min(total);
    let ups = config.updates_per_step as u64;
    let active = total - warm;
    let pre_iter = model.action_forward() + ups * model.pre_update();
    match (config.mode, config.freeze_step) {
        (Mode::Seer, tf) if tf < total => {
            // validation guarantees tf >= warm. Steps warm+1 ..= tf-1 train the
            // full network; step tf acts, converts, then runs head updates;
            // later steps also encode the new observation.
            let pre_steps = tf.saturating_sub(1).saturating_sub(warm);
            let freeze_iter = if tf > warm {
                model.action_forward() + ups * model.post_update()
            } else {
                0
            };
            let post_steps = total - tf.max(warm);
            let post_iter = model.action_forward() + ups * model.post_update() + model.latent_store();
            let conversion = crate::accounting::one_time_freeze_cost(
                model.encoder_macs,
                model.augmentations,
                model.encoders,
                tf,
                conversion_capacity,
            );
            pre_steps * pre_iter + freeze_iter + conversion + post_steps * post_iter
        }
        _ => active * pre_iter,
    }
}

/// Mutable state of one seed's training run.
pub struct Trainer {
    config: RunConfig,
    seed: u64,
    env: Env,
    obs: Observation,
    agent: DqnAgent,
    buffer: ReplayBuffer,
    agent_rng: ChaCha8Rng,
    augment_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
    eval_seed: u64,
    t: u64,
    episode_return: f64,
    last_episode_return: Option<f64>,
    last_eval: Option<EvalResult>,
    last_loss: Option<f64>,
    rows: Vec<MetricsRow>,
    freeze_events: u32,
    conversion: Option<ConversionReport>,
}

impl Trainer {
    pub fn new(config: &RunConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let spec = config.network_spec()?;
        let agent = DqnAgent::new(
            spec,
            config.agent_config(),
            config.augment_config(),
            &mut stream(seed, seeds::INIT),
        )?;
        let (env, obs) = Env::new(config.env_config(), stream_seed(seed, seeds::ENV))?;
        let mut buffer = ReplayBuffer::new(config.replay_config()?)?;
        buffer.begin_episode(obs.latest_frame())?;
        let mut trainer = Self {
            config: config.clone(),
            seed,
            env,
            obs,
            agent,
            buffer,
            agent_rng: stream(seed, seeds::AGENT),
            augment_rng: stream(seed, seeds::AUGMENT),
            replay_rng: stream(seed, seeds::REPLAY),
            eval_seed: stream_seed(seed, seeds::EVAL),
            t: 0,
            episode_return: 0.0,
            last_episode_return: None,
            last_eval: None,
            last_loss: None,
            rows: Vec::new(),
            freeze_events: 0,
            conversion: None,
        };
        if trainer.config.agent_config().freeze_step == Some(0) {
            trainer.freeze()?;
        }
        Ok(trainer)
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn is_finished(&self) -> bool {
        self.t >= self.config.total_steps
    }

    pub fn agent(&self) -> &DqnAgent {
        &self.agent
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn rows(&self) -> &[MetricsRow] {
        &self.rows
    }

    pub fn freeze_events(&self) -> u32 {
        self.freeze_events
    }

    pub fn conversion(&self) -> Option<&ConversionReport> {
        self.conversion.as_ref()
    }

    pub fn last_eval(&self) -> Option<&EvalResult> {
        self.last_eval.as_ref()
    }

    fn freeze(&mut self) -> Result<()> {
        let report = self.agent.freeze(self.t, &mut self.buffer, &mut self.augment_rng)?;
        log::info!(
            "seed {}: encoder frozen at step {}; {} transitions re-encoded, capacity now {}",
            self.seed,
            self.t,
            report.transitions,
            report.capacity
        );
        self.freeze_events += 1;
        self.conversion = Some(report);
        Ok(())
    }

    fn epsilon(&self) -> f64 {
        if self.t <= self.config.initial_steps {
            1.0
        } else {
            self.config.agent_config().epsilon(self.t)
        }
    }

    /// Runs iteration `t + 1`.
    pub fn step(&mut self) -> Result<()> {
        if self.is_finished() {
            return Err(Error::Usage("training already reached total_steps".into()));
        }
        let t = self.t + 1;
        self.t = t;
        let action = if t <= self.config.initial_steps {
            self.agent.random_action(&mut self.agent_rng)
        } else {
            self.agent.act(&self.obs, t, &mut self.agent_rng)?
        };
        let res = self.env.step(action)?;
        self.episode_return += res.reward;
        let reward = res.reward as f32;
        if self.agent.is_frozen() {
            let z_next = self.agent.encode_for_storage(&res.observation, &mut self.augment_rng)?;
            let z_t = self
                .buffer
                .current_latents()
                .cloned()
                .ok_or_else(|| Error::Internal("latent buffer has no current observation".into()))?;
            self.buffer.push_latent(&z_t, action, reward, &z_next, res.done)?;
        } else {
            self.buffer
                .push_image(res.observation.latest_frame(), action, reward, res.done)?;
        }
        if self.config.agent_config().freeze_step == Some(t) {
            self.freeze()?;
        }
        let b = self.config.batch_size;
        if t > self.config.initial_steps && self.buffer.len() >= b {
            for _ in 0..self.config.updates_per_step {
                let loss = if self.agent.is_frozen() {
                    let batch = self.buffer.sample_latent_batch(b, &mut self.replay_rng)?;
                    self.agent.update_post_freeze(&batch)?
                } else {
                    let batch = self.buffer.sample_image_batch(b, &mut self.replay_rng)?;
                    self.agent.update_pre_freeze(&batch, &mut self.augment_rng)?
                };
                self.last_loss = Some(loss as f64);
            }
        }
        if res.done {
            self.last_episode_return = Some(self.episode_return);
            self.episode_return = 0.0;
            self.obs = self.env.reset();
            if self.agent.is_frozen() {
                let z0 = self.agent.encode_unmetered(&self.obs, &mut self.augment_rng)?;
                self.buffer.begin_episode_latent(z0)?;
            } else {
                self.buffer.begin_episode(self.obs.latest_frame())?;
            }
        } else {
            self.obs = res.observation;
        }
        if t.is_multiple_of(self.config.eval_every) {
            let env = self.config.env_config();
            let seed = splitmix64(self.eval_seed ^ t);
            self.last_eval = Some(evaluate(&mut self.agent, &env, self.config.eval_episodes, seed)?);
        }
        let freeze_row = self.config.mode == Mode::Seer && t == self.config.freeze_step;
        if t.is_multiple_of(self.config.log_every)
            || t.is_multiple_of(self.config.eval_every)
            || freeze_row
            || self.is_finished()
        {
            self.log_row();
        }
        Ok(())
    }

    fn log_row(&mut self) {
        let bytes = self.buffer.bytes_used();
        let macs = self.agent.ledger().total();
        self.agent.ledger_mut().sample_bytes(self.t, bytes);
        let phase = if self.agent.is_frozen() {
            Phase::PostFreeze
        } else {
            Phase::PreFreeze
        };
        self.rows.push(MetricsRow {
            step: self.t,
            episode_return: self.last_episode_return,
            eval_mean_return: self.last_eval.as_ref().map(|e| e.mean),
            eval_std_return: self.last_eval.as_ref().map(|e| e.std),
            cumulative_macs: macs,
            bytes_used: bytes,
            buffer_occupancy: self.buffer.len(),
            buffer_capacity: self.buffer.capacity(),
            epsilon: self.epsilon(),
            loss: self.last_loss,
            phase,
        });
    }

    pub fn run_to_end(&mut self) -> Result<()> {
        while !self.is_finished() {
            self.step()?;
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_agent(&self.agent, &self.config, self.seed, self.t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub steps: u64,
    pub final_eval_mean: Option<f64>,
    pub final_eval_std: Option<f64>,
    pub cumulative_macs: u64,
    pub predicted_macs: u64,
    pub freeze_events: u32,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub seeds: Vec<SeedSummary>,
    /// Mean and population std of the final eval return across seeds that
    /// finished.
    pub final_eval_mean: Option<f64>,
    pub final_eval_std: Option<f64>,
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

/// Trains one seed, writing `seed_<n>/metrics.csv`, `checkpoint.bin` and
/// `summary.json` under `out`. A failure (for example a non-finite loss)
/// keeps the rows logged so far and is recorded in the summary.
pub fn train_seed(config: &RunConfig, seed: u64, out: &Path) -> Result<SeedSummary> {
    let dir = seed_dir(out, seed);
    std::fs::create_dir_all(&dir)?;
    let mut trainer = Trainer::new(config, seed)?;
    let outcome = trainer.run_to_end();
    write_metrics_csv(std::fs::File::create(dir.join("metrics.csv"))?, trainer.rows())?;
    trainer.checkpoint().save(dir.join("checkpoint.bin"))?;
    let capacity = config.replay_config()?.capacity as u64;
    let summary = SeedSummary {
        seed,
        steps: trainer.step_count(),
        final_eval_mean: trainer.last_eval().map(|e| e.mean),
        final_eval_std: trainer.last_eval().map(|e| e.std),
        cumulative_macs: trainer.agent().ledger().total(),
        predicted_macs: predicted_total_macs(trainer.agent().flop_model(), config, capacity),
        freeze_events: trainer.freeze_events(),
        failure: outcome.as_ref().err().map(|e| e.to_string()),
    };
    if let Err(e) = &outcome {
        log::error!("seed {seed} aborted at step {}: {e}", trainer.step_count());
    }
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// Rebuilds `summary.json` of a run directory from its seed summaries.
pub fn write_run_summary(out: &Path, mode: Mode) -> Result<RunSummary> {
    let mut seeds = Vec::new();
    for entry in std::fs::read_dir(out)? {
        let path = entry?.path().join("summary.json");
        if path.is_file() {
            seeds.push(serde_json::from_str::<SeedSummary>(&std::fs::read_to_string(path)?)?);
        }
    }
    seeds.sort_by_key(|s| s.seed);
    let finals: Vec<f64> = seeds
        .iter()
        .filter(|s| s.failure.is_none())
        .filter_map(|s| s.final_eval_mean)
        .collect();
    let (mean, std) = if finals.is_empty() {
        (None, None)
    } else {
        let r = EvalResult::from_returns(finals);
        (Some(r.mean), Some(r.std))
    };
    let summary = RunSummary {
        mode,
        seeds,
        final_eval_mean: mean,
        final_eval_std: std,
    };
    std::fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// Trains every seed of `config` into `out` and writes the run summary.
pub fn run(config: &RunConfig, out: &Path) -> Result<RunSummary> {
    config.validate()?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.json"), config.to_json())?;
    for &seed in &config.seeds {
        train_seed(config, seed, out)?;
    }
    write_run_summary(out, config.mode)
}
