//! DQN agent with a target network and the encoder-freezing lifecycle.
//!
//! Before the freeze step every update runs the full network on augmented
//! image batches. At the freeze step the encoder becomes immutable, the
//! replay buffer is re-encoded into latents, and from then on updates run
//! the head alone on stored latents. The same stored `z_{t+1}` feeds both the
//! online and the target head; the target head keeps its own delayed copy.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::accounting::{CostEvent, CostLedger, FlopModel};
use crate::augment::{crop_with_offset, AugmentConfig, CropOffset};
use crate::env::Observation;
use crate::error::{config_err, Error, Result};
use crate::nn::{
    adam_step, backward_accumulate, encode, forward_full, forward_head_cached, forward_head_only, param_flops,
    AdamConfig, AdamState, Grads, NetworkSpec, ParamStore,
};
use crate::replay::{encode_augmented, ConversionReport, ImageSample, LatentSample, LatentSet, ReplayBuffer};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub gamma: f64,
    /// Environment step at which the encoder freezes; `None` never freezes.
    pub freeze_step: Option<u64>,
    pub batch_size: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_steps: u64,
    /// Hard target copy every this many updates.
    pub target_sync_period: u64,
    pub updates_per_step: usize,
    pub learning_rate: f64,
    /// Uniform-random steps before the first update.
    pub initial_steps: u64,
    pub double_q: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            freeze_step: None,
            batch_size: 32,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_steps: 12_000,
            target_sync_period: 500,
            updates_per_step: 1,
            learning_rate: 1e-3,
            initial_steps: 1000,
            double_q: false,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return config_err(format!("gamma {} outside [0, 1)", self.gamma));
        }
        if self.batch_size == 0 {
            return config_err("batch_size must be at least 1");
        }
        if self.target_sync_period == 0 || self.updates_per_step == 0 {
            return config_err("target_sync_period and updates_per_step must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return config_err("learning_rate must be positive");
        }
        for e in [self.eps_start, self.eps_end] {
            if !(0.0..=1.0).contains(&e) {
                return config_err(format!("epsilon {e} outside [0, 1]"));
            }
        }
        if let Some(tf) = self.freeze_step {
            if tf < self.initial_steps {
                return config_err(format!(
                    "freeze step {tf} precedes the end of the {} initial random steps",
                    self.initial_steps
                ));
            }
        }
        Ok(())
    }

    /// Linear decay from `eps_start` to `eps_end` over `eps_decay_steps`.
    pub fn epsilon(&self, step: u64) -> f64 {
        if self.eps_decay_steps == 0 || step >= self.eps_decay_steps {
            return self.eps_end;
        }
        let frac = step as f64 / self.eps_decay_steps as f64;
        self.eps_start + (self.eps_end - self.eps_start) * frac
    }
}

/// `r` if `done`, else `r + gamma * max(next_q)`.
pub fn td_target<T: Scalar>(reward: T, next_q: &[T], done: bool, gamma: T) -> T {
    if done {
        return reward;
    }
    reward + gamma * max_value(next_q)
}

fn max_value<T: Scalar>(q: &[T]) -> T {
    q.iter().copied().fold(T::neg_infinity(), T::max)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: Scalar>(q: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// One latent TD item fed to the head.
struct HeadItem<'a> {
    z: Tensor<f32>,
    next_z: Tensor<f32>,
    action: usize,
    reward: f32,
    done: bool,
    _marker: std::marker::PhantomData<&'a ()>,
}

#[derive(Clone, Debug)]
pub struct DqnAgent {
    spec: NetworkSpec,
    online: ParamStore<f32>,
    target: ParamStore<f32>,
    adam: AdamState<f32>,
    config: AgentConfig,
    augment: AugmentConfig,
    model: FlopModel,
    ledger: CostLedger,
    frozen: bool,
    updates: u64,
    syncs: u64,
}

impl DqnAgent {
    pub fn new<R: Rng + ?Sized>(
        spec: NetworkSpec,
        config: AgentConfig,
        augment: AugmentConfig,
        init_rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let shape = spec.input_shape();
        augment.validate(shape[1], shape[2])?;
        let online = ParamStore::init_he_uniform(&spec, init_rng);
        let target = online.clone();
        let adam = AdamState::new(
            AdamConfig {
                lr: config.learning_rate,
                ..AdamConfig::default()
            },
            &online,
        );
        let (e, m) = param_flops(&spec);
        let model = FlopModel {
            encoder_macs: e,
            head_macs: m,
            batch_size: config.batch_size as u64,
            forwards: if config.double_q { 3 } else { 2 },
            backwards: 1,
            augmentations: augment.k as u64,
            encoders: 1,
        };
        Ok(Self {
            spec,
            online,
            target,
            adam,
            config,
            augment,
            model,
            ledger: CostLedger::new(),
            frozen: false,
            updates: 0,
            syncs: 0,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn online(&self) -> &ParamStore<f32> {
        &self.online
    }

    pub fn target(&self) -> &ParamStore<f32> {
        &self.target
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn augment(&self) -> &AugmentConfig {
        &self.augment
    }

    pub fn flop_model(&self) -> &FlopModel {
        &self.model
    }

    pub fn ledger(&self) -> &CostLedger {
        &self.ledger
    }

    pub fn ledger_mut(&mut self) -> &mut CostLedger {
        &mut self.ledger
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn target_syncs(&self) -> u64 {
        self.syncs
    }

    pub fn num_actions(&self) -> usize {
        self.spec.num_outputs()
    }

    /// Replaces the online and target parameters (checkpoint restore).
    pub fn load_params(&mut self, online: ParamStore<f32>, target: ParamStore<f32>) {
        self.online = online;
        self.target = target;
        self.adam = AdamState::new(self.adam.config, &self.online);
    }

    pub fn q_values(&self, obs: &Observation) -> Result<Vec<f32>> {
        let (q, _, _) = forward_full(&obs.to_tensor(), &self.spec, &self.online)?;
        Ok(q.into_data())
    }

    /// Argmax of `Q(f(obs))` without touching the ledger (evaluation).
    pub fn greedy_action(&self, obs: &Observation) -> Result<usize> {
        Ok(argmax(&self.q_values(obs)?))
    }

    /// Epsilon-greedy action on the unaugmented observation; charges one
    /// forward pass.
    pub fn act<R: Rng + ?Sized>(&mut self, obs: &Observation, step: u64, rng: &mut R) -> Result<usize> {
        let eps = self.config.epsilon(step);
        let explore = rng.gen::<f64>() < eps;
        let q = self.q_values(obs)?;
        self.ledger.record(CostEvent::ActionForward, &self.model);
        if explore {
            Ok(rng.gen_range(0..self.num_actions()))
        } else {
            Ok(argmax(&q))
        }
    }

    pub fn random_action<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.gen_range(0..self.num_actions())
    }

    /// Squared-TD loss and head gradients over latent items. Shared by the
    /// latent path and the frozen-encoder image path.
    fn head_loss_grads<'a>(
        &self,
        items: impl ExactSizeIterator<Item = Result<HeadItem<'a>>>,
    ) -> Result<(f32, Grads<f32>)> {
        let b = items.len();
        let gamma = self.config.gamma as f32;
        let mut grads = Grads::zeros_from(&self.online, self.spec.freeze_boundary());
        let mut loss = 0.0f32;
        let scale = 2.0 / b as f32;
        for item in items {
            let item = item?;
            let (q, cache) = forward_head_cached(&item.z, &self.spec, &self.online)?;
            let next_target = forward_head_only(&item.next_z, &self.spec, &self.target)?;
            let bootstrap = if self.config.double_q {
                let next_online = forward_head_only(&item.next_z, &self.spec, &self.online)?;
                next_target.data()[argmax(next_online.data())]
            } else {
                max_value(next_target.data())
            };
            let y = if item.done {
                item.reward
            } else {
                item.reward + gamma * bootstrap
            };
            let diff = q.data()[item.action] - y;
            loss += diff * diff;
            let mut dq = Tensor::zeros(vec![self.num_actions()]);
            dq.data_mut()[item.action] = scale * diff;
            backward_accumulate(&dq, &cache, &self.spec, &self.online, true, &mut grads)?;
        }
        Ok((loss / b as f32, grads))
    }

    /// Loss and gradients of a full-network update on already augmented
    /// `(o_t, o_{t+1})` pairs.
    pub fn image_loss_grads(&self, batch: &[ImageSample], offsets: &[CropOffset]) -> Result<(f32, Grads<f32>)> {
        if batch.is_empty() || offsets.len() != batch.len() {
            return config_err("image update needs one crop offset per transition");
        }
        let pad = self.augment.effective_pad();
        let b = batch.len();
        let gamma = self.config.gamma as f32;
        let mut grads = Grads::zeros_from(&self.online, 0);
        let mut loss = 0.0f32;
        let scale = 2.0 / b as f32;
        for (s, &off) in batch.iter().zip(offsets) {
            let obs = crop_with_offset(&s.obs, pad, off).to_tensor();
            let next = crop_with_offset(&s.next_obs, pad, off).to_tensor();
            let (q, _, cache) = forward_full(&obs, &self.spec, &self.online)?;
            let (next_target, _, _) = forward_full(&next, &self.spec, &self.target)?;
            let bootstrap = if self.config.double_q {
                let (next_online, _, _) = forward_full(&next, &self.spec, &self.online)?;
                next_target.data()[argmax(next_online.data())]
            } else {
                max_value(next_target.data())
            };
            let y = if s.done { s.reward } else { s.reward + gamma * bootstrap };
            let diff = q.data()[s.action] - y;
            loss += diff * diff;
            let mut dq = Tensor::zeros(vec![self.num_actions()]);
            dq.data_mut()[s.action] = scale * diff;
            backward_accumulate(&dq, &cache, &self.spec, &self.online, false, &mut grads)?;
        }
        Ok((loss / b as f32, grads))
    }

    /// Loss and head gradients on sampled latent transitions.
    pub fn latent_loss_grads(&self, batch: &[LatentSample]) -> Result<(f32, Grads<f32>)> {
        if batch.is_empty() {
            return config_err("empty latent batch");
        }
        let l = self.spec.latent_dim();
        self.head_loss_grads(batch.iter().map(|s| {
            if s.z.len() != l || s.next_z.len() != l {
                return config_err(format!("latent of length {} does not match L = {l}", s.z.len()));
            }
            Ok(HeadItem {
                z: Tensor::vector(s.z.clone()),
                next_z: Tensor::vector(s.next_z.clone()),
                action: s.action,
                reward: s.reward,
                done: s.done,
                _marker: std::marker::PhantomData,
            })
        }))
    }

    /// Reference path for a frozen encoder: recompute latents from images
    /// with the given crops (`o_t` offset, `o_{t+1}` offset) through the
    /// online encoder, then run the same head update as the latent path.
    pub fn frozen_image_loss_grads(
        &self,
        batch: &[ImageSample],
        offsets: &[(CropOffset, CropOffset)],
    ) -> Result<(f32, Grads<f32>)> {
        if batch.is_empty() || offsets.len() != batch.len() {
            return config_err("frozen image update needs one offset pair per transition");
        }
        let pad = self.augment.effective_pad();
        self.head_loss_grads(batch.iter().zip(offsets).map(|(s, &(o1, o2))| {
            let z = encode(&crop_with_offset(&s.obs, pad, o1).to_tensor(), &self.spec, &self.online)?;
            let next_z = encode(
                &crop_with_offset(&s.next_obs, pad, o2).to_tensor(),
                &self.spec,
                &self.online,
            )?;
            Ok(HeadItem {
                z,
                next_z,
                action: s.action,
                reward: s.reward,
                done: s.done,
                _marker: std::marker::PhantomData,
            })
        }))
    }

    fn apply(&mut self, loss: f32, grads: &Grads<f32>) -> Result<()> {
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("loss {loss} at update {}", self.updates)));
        }
        adam_step(&mut self.online, grads, &mut self.adam)?;
        self.updates += 1;
        if self.updates.is_multiple_of(self.config.target_sync_period) {
            self.target_sync();
        }
        Ok(())
    }

    /// Full-network update on an image batch; one crop draw per transition,
    /// shared by `o_t` and `o_{t+1}`.
    pub fn update_pre_freeze<R: Rng + ?Sized>(&mut self, batch: &[ImageSample], aug_rng: &mut R) -> Result<f32> {
        if self.frozen {
            return Err(Error::Usage("image update after the encoder was frozen".into()));
        }
        let pad = self.augment.effective_pad();
        let offsets: Vec<CropOffset> = batch.iter().map(|_| CropOffset::sample(pad, aug_rng)).collect();
        let (loss, grads) = self.image_loss_grads(batch, &offsets)?;
        self.apply(loss, &grads)?;
        self.ledger.record(CostEvent::PreUpdate, &self.model);
        Ok(loss)
    }

    /// Head-only update on a latent batch.
    pub fn update_post_freeze(&mut self, batch: &[LatentSample]) -> Result<f32> {
        if !self.frozen {
            return Err(Error::Usage("latent update before the encoder was frozen".into()));
        }
        let (loss, grads) = self.latent_loss_grads(batch)?;
        self.apply(loss, &grads)?;
        self.ledger.record(CostEvent::PostUpdate, &self.model);
        Ok(loss)
    }

    /// Hard copy online -> target; only the head once frozen.
    pub fn target_sync(&mut self) {
        if self.frozen {
            self.target.copy_head_from(&self.online);
        } else {
            self.target.copy_all_from(&self.online);
        }
        self.syncs += 1;
    }

    /// Freezes the encoder and converts the replay buffer to latents.
    /// `step` is the freeze step `T_f`; fires once.
    pub fn freeze<R: Rng + ?Sized>(
        &mut self,
        step: u64,
        buffer: &mut ReplayBuffer,
        aug_rng: &mut R,
    ) -> Result<ConversionReport> {
        if self.frozen {
            return Err(Error::Internal("freeze event fired twice".into()));
        }
        if step == 0 {
            log::warn!("freezing at step 0: the head trains on a random encoder");
        }
        self.online.freeze_encoder();
        self.frozen = true;
        let report = buffer.convert_to_latent(&self.spec, &self.online, &self.augment, aug_rng)?;
        self.ledger.record(
            CostEvent::Conversion {
                freeze_step: step,
                initial_capacity: buffer.config().capacity as u64,
            },
            &self.model,
        );
        Ok(report)
    }

    /// `K` augmented latents of an observation about to be stored; charges
    /// the per-step `E*K*N` term.
    pub fn encode_for_storage<R: Rng + ?Sized>(&mut self, obs: &Observation, aug_rng: &mut R) -> Result<LatentSet> {
        let set = self.encode_unmetered(obs, aug_rng)?;
        self.ledger.record(CostEvent::LatentStore, &self.model);
        Ok(set)
    }

    /// Same as [`Self::encode_for_storage`] without a ledger entry. Used for
    /// the first observation of an episode, which the per-step cost model
    /// does not count.
    pub fn encode_unmetered<R: Rng + ?Sized>(&self, obs: &Observation, aug_rng: &mut R) -> Result<LatentSet> {
        if !self.frozen {
            return Err(Error::Usage("latents are only stored after freezing".into()));
        }
        encode_augmented(obs, &self.spec, &self.online, &self.augment, aug_rng)
    }
}
