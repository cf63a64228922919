//! Dual-mode experience replay.
//!
//! Before the encoder is frozen the buffer stores grayscale frames
//! frame-wise: every transition adds one frame, and stacked observations
//! are rebuilt from frame ids. At the freeze step the buffer is converted in
//! place to latent mode, where every observation is stored once as `K`
//! augmented latent vectors of `L` 4-byte floats, and a transition references
//! the slots of `o_t` and `o_{t+1}`. In both modes the incremental cost of a
//! transition is one observation (`P` bytes or `4*K*L` bytes), which is what
//! the adaptive capacity `floor(C * P / (4*N*K*L))` trades against.
//!
//! Eviction is strict FIFO on transitions. Frames and latent slots are
//! released once no live transition (or the pending current observation)
//! references them. With a byte budget, pushes evict old transitions until
//! the stored observations fit.

use std::collections::VecDeque;

use rand::Rng;

use crate::augment::{augment_k, AugmentConfig, CropOffset};
use crate::env::Observation;
use crate::error::{config_err, Error, Result};
use crate::nn::{encode, NetworkSpec, ParamStore};

/// `floor(C * P / (4 * N * K * L))`, computed exactly.
pub fn computed_capacity(c: u64, p: u64, n: u64, k: u64, l: u64) -> u64 {
    let denom = 4u128 * n as u128 * k as u128 * l as u128;
    assert!(denom > 0, "N, K and L must be positive");
    ((c as u128 * p as u128) / denom) as u64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BufferMode {
    Image,
    Latent,
}

impl BufferMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            BufferMode::Image => "image",
            BufferMode::Latent => "latent",
        }
    }
}

/// Sizes that determine the per-transition observation cost.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ObservationCost {
    /// Bytes of one raw frame (`P`).
    pub frame_bytes: u64,
    pub latent_dim: u64,
    pub augmentations: u64,
    pub encoders: u64,
}

impl ObservationCost {
    pub fn bytes_per_transition(&self, mode: BufferMode) -> u64 {
        match mode {
            BufferMode::Image => self.frame_bytes,
            BufferMode::Latent => 4 * self.encoders * self.augmentations * self.latent_dim,
        }
    }
}

/// Whole transitions whose incremental observation bytes fit in `budget`.
pub fn capacity_for_budget(budget: u64, mode: BufferMode, cost: &ObservationCost) -> Result<usize> {
    let per = cost.bytes_per_transition(mode);
    if per == 0 {
        return config_err("observation cost is zero");
    }
    if budget < per {
        return config_err(format!(
            "byte budget {budget} is below one {} transition ({per} bytes)",
            mode.as_str()
        ));
    }
    Ok((budget / per) as usize)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplayConfig {
    /// Initial capacity `C` in transitions.
    pub capacity: usize,
    /// `(S, H, W)` of stacked observations; `P = H * W`.
    pub obs_shape: [usize; 3],
    /// `L`
    pub latent_dim: usize,
    /// `K`
    pub augmentations: usize,
    /// `N`; 1 for Q-learning.
    pub encoders: usize,
    pub byte_budget: Option<u64>,
}

impl ReplayConfig {
    pub fn frame_bytes(&self) -> usize {
        self.obs_shape[1] * self.obs_shape[2]
    }

    pub fn cost(&self) -> ObservationCost {
        ObservationCost {
            frame_bytes: self.frame_bytes() as u64,
            latent_dim: self.latent_dim as u64,
            augmentations: self.augmentations as u64,
            encoders: self.encoders as u64,
        }
    }

    /// Post-conversion capacity `C-hat`.
    pub fn latent_capacity(&self) -> usize {
        computed_capacity(
            self.capacity as u64,
            self.frame_bytes() as u64,
            self.encoders as u64,
            self.augmentations as u64,
            self.latent_dim as u64,
        ) as usize
    }

    fn validate(&self) -> Result<()> {
        if self.capacity == 0 || self.latent_dim == 0 || self.augmentations == 0 {
            return config_err("replay capacity, latent_dim and augmentations must be positive");
        }
        if self.obs_shape.contains(&0) {
            return config_err("observation shape has a zero dimension");
        }
        if self.encoders != 1 {
            return config_err("the Q-learning replay stores latents of a single encoder (N = 1)");
        }
        if self.latent_capacity() == 0 {
            return config_err("adaptive capacity rounds down to zero transitions");
        }
        if let Some(b) = self.byte_budget {
            // worst case for one transition: a fresh stack plus the next frame
            let need = ((self.obs_shape[0] + 1) * self.frame_bytes()) as u64;
            if b < need {
                return config_err(format!("byte budget {b} cannot hold one transition ({need} bytes)"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BufferState {
    pub mode: BufferMode,
    pub capacity: usize,
    pub occupancy: usize,
    pub bytes_used: u64,
}

/// `K` latents of one observation plus the crop offsets that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentSet {
    /// `K * L` floats, latent `k` at `k*L .. (k+1)*L`.
    pub data: Vec<f32>,
    pub offsets: Vec<CropOffset>,
}

impl LatentSet {
    pub fn k(&self) -> usize {
        self.offsets.len()
    }

    pub fn latent(&self, k: usize) -> &[f32] {
        let l = self.data.len() / self.offsets.len();
        &self.data[k * l..(k + 1) * l]
    }

    fn bitwise_eq(&self, other: &LatentSet) -> bool {
        self.offsets == other.offsets
            && self.data.len() == other.data.len()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// `{ f_psi(AUG_k(obs)) | k = 1..K }` with fresh crop draws.
pub fn encode_augmented<R: Rng + ?Sized>(
    obs: &Observation,
    spec: &NetworkSpec,
    params: &ParamStore<f32>,
    augment: &AugmentConfig,
    rng: &mut R,
) -> Result<LatentSet> {
    let mut data = Vec::with_capacity(augment.k * spec.latent_dim());
    let mut offsets = Vec::with_capacity(augment.k);
    for (aug, offset) in augment_k(obs, augment.k, augment.effective_pad(), rng) {
        data.extend_from_slice(encode(&aug.to_tensor(), spec, params)?.data());
        offsets.push(offset);
    }
    Ok(LatentSet { data, offsets })
}

#[derive(Clone, Copy, Debug)]
struct Meta {
    action: usize,
    reward: f32,
    done: bool,
}

#[derive(Clone, Debug)]
struct ImageRecord {
    /// `S + 1` frame ids: `o_t` is `[..S]`, `o_{t+1}` is `[1..]`.
    frames: Vec<u64>,
    meta: Meta,
}

#[derive(Clone, Debug)]
struct LatentRecord {
    current: u64,
    next: u64,
    meta: Meta,
}

/// FIFO of items addressed by monotonically increasing ids.
#[derive(Clone, Debug)]
struct IdRing<T> {
    base: u64,
    items: VecDeque<T>,
}

impl<T> IdRing<T> {
    fn new() -> Self {
        Self {
            base: 0,
            items: VecDeque::new(),
        }
    }

    fn push(&mut self, item: T) -> u64 {
        self.items.push_back(item);
        self.base + self.items.len() as u64 - 1
    }

    fn get(&self, id: u64) -> &T {
        &self.items[(id - self.base) as usize]
    }

    fn next_id(&self) -> u64 {
        self.base + self.items.len() as u64
    }

    /// Drops every item with id below `floor`.
    fn release_below(&mut self, floor: u64) {
        while self.base < floor && !self.items.is_empty() {
            self.items.pop_front();
            self.base += 1;
        }
    }

    fn len(&self) -> usize {
        self.items.len()
    }
}

#[derive(Clone, Debug)]
struct ImageStore {
    frames: IdRing<Vec<u8>>,
    records: VecDeque<ImageRecord>,
    /// Frame ids of the current observation, set by `begin_episode`.
    pending: Option<Vec<u64>>,
}

impl ImageStore {
    fn floor(&self) -> u64 {
        self.records
            .front()
            .map(|r| r.frames[0])
            .or_else(|| self.pending.as_ref().map(|p| p[0]))
            .unwrap_or_else(|| self.frames.next_id())
    }

    fn trim(&mut self) {
        let floor = self.floor();
        self.frames.release_below(floor);
    }

    fn observation(&self, ids: &[u64], shape: [usize; 3]) -> Observation {
        let mut data = Vec::with_capacity(shape.iter().product());
        for &id in ids {
            data.extend_from_slice(self.frames.get(id));
        }
        Observation::new(shape[0], shape[1], shape[2], data).expect("stored frames fit")
    }
}

#[derive(Clone, Debug)]
struct LatentStore {
    slots: IdRing<LatentSet>,
    records: VecDeque<LatentRecord>,
    /// Slot of the current observation.
    pending: Option<u64>,
}

impl LatentStore {
    fn new() -> Self {
        Self {
            slots: IdRing::new(),
            records: VecDeque::new(),
            pending: None,
        }
    }

    fn trim(&mut self, pin: Option<u64>) {
        let floor = [self.records.front().map(|r| r.current), self.pending, pin]
            .into_iter()
            .flatten()
            .min()
            .unwrap_or_else(|| self.slots.next_id());
        self.slots.release_below(floor);
    }
}

#[derive(Clone, Debug)]
enum Storage {
    Image(ImageStore),
    Latent(LatentStore),
}

/// Materialized image transition.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSample {
    /// Position in the buffer at sampling time (0 = oldest).
    pub index: usize,
    pub obs: Observation,
    pub next_obs: Observation,
    pub action: usize,
    pub reward: f32,
    pub done: bool,
}

/// Latent transition with the augmentation index `k` drawn for it. `z` and
/// `next_z` use the same `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentSample {
    pub index: usize,
    pub k: usize,
    pub z: Vec<f32>,
    pub next_z: Vec<f32>,
    pub z_offset: CropOffset,
    pub next_z_offset: CropOffset,
    pub action: usize,
    pub reward: f32,
    pub done: bool,
}

/// What a conversion did.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConversionReport {
    pub transitions: usize,
    /// Distinct observations encoded (each `K` times).
    pub observations_encoded: usize,
    pub capacity: usize,
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    config: ReplayConfig,
    capacity: usize,
    storage: Storage,
}

impl ReplayBuffer {
    pub fn new(config: ReplayConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            capacity: config.capacity,
            config,
            storage: Storage::Image(ImageStore {
                frames: IdRing::new(),
                records: VecDeque::new(),
                pending: None,
            }),
        })
    }

    pub fn config(&self) -> &ReplayConfig {
        &self.config
    }

    pub fn mode(&self) -> BufferMode {
        match self.storage {
            Storage::Image(_) => BufferMode::Image,
            Storage::Latent(_) => BufferMode::Latent,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        match &self.storage {
            Storage::Image(s) => s.records.len(),
            Storage::Latent(s) => s.records.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn slot_bytes(&self) -> u64 {
        4 * (self.config.augmentations * self.config.latent_dim) as u64
    }

    /// Bytes of stored observations: frames at 1 byte per pixel, latents at
    /// 4 bytes per float.
    pub fn bytes_used(&self) -> u64 {
        match &self.storage {
            Storage::Image(s) => s.frames.len() as u64 * self.config.frame_bytes() as u64,
            Storage::Latent(s) => s.slots.len() as u64 * self.slot_bytes(),
        }
    }

    /// Frames (image mode) or latent slots (latent mode) currently held.
    pub fn stored_observations(&self) -> usize {
        match &self.storage {
            Storage::Image(s) => s.frames.len(),
            Storage::Latent(s) => s.slots.len(),
        }
    }

    pub fn state(&self) -> BufferState {
        BufferState {
            mode: self.mode(),
            capacity: self.capacity,
            occupancy: self.len(),
            bytes_used: self.bytes_used(),
        }
    }

    fn image_store(&mut self) -> Result<&mut ImageStore> {
        match &mut self.storage {
            Storage::Image(s) => Ok(s),
            Storage::Latent(_) => Err(Error::Usage("image push after conversion to latent mode".into())),
        }
    }

    fn latent_store(&mut self) -> Result<&mut LatentStore> {
        match &mut self.storage {
            Storage::Latent(s) => Ok(s),
            Storage::Image(_) => Err(Error::Usage("latent push before conversion".into())),
        }
    }

    fn check_frame(&self, frame: &[u8]) -> Result<()> {
        if frame.len() != self.config.frame_bytes() {
            return config_err(format!(
                "frame has {} bytes, buffer expects {}",
                frame.len(),
                self.config.frame_bytes()
            ));
        }
        Ok(())
    }

    /// Makes room for `extra` observation bytes by evicting the oldest
    /// transitions.
    fn make_room_image(&mut self, extra: u64) -> Result<()> {
        let p = self.config.frame_bytes() as u64;
        let budget = self.config.byte_budget;
        let capacity = self.capacity;
        let s = self.image_store()?;
        while s.records.len() >= capacity {
            s.records.pop_front();
        }
        s.trim();
        if let Some(b) = budget {
            while s.frames.len() as u64 * p + extra > b {
                if s.records.pop_front().is_none() {
                    return config_err(format!("byte budget {b} cannot hold the current observation"));
                }
                s.trim();
            }
        }
        Ok(())
    }

    /// Starts an episode with its first frame; the stack is that frame
    /// repeated `S` times.
    pub fn begin_episode(&mut self, first_frame: &[u8]) -> Result<()> {
        self.check_frame(first_frame)?;
        let stack = self.config.obs_shape[0];
        let p = self.config.frame_bytes() as u64;
        {
            let s = self.image_store()?;
            s.pending = None;
            s.trim();
        }
        // begin_episode stores no transition, so only the budget can force eviction
        let budget = self.config.byte_budget;
        let s = self.image_store()?;
        if let Some(b) = budget {
            while s.frames.len() as u64 * p + p > b {
                if s.records.pop_front().is_none() {
                    return config_err("byte budget cannot hold one frame");
                }
                s.trim();
            }
        }
        let id = s.frames.push(first_frame.to_vec());
        s.pending = Some(vec![id; stack]);
        Ok(())
    }

    /// Stores the transition from the current observation to the one ending
    /// in `next_frame`.
    pub fn push_image(&mut self, next_frame: &[u8], action: usize, reward: f32, done: bool) -> Result<()> {
        self.check_frame(next_frame)?;
        if self.image_store()?.pending.is_none() {
            return Err(Error::Usage(
                "push_image without a current observation; call begin_episode".into(),
            ));
        }
        let p = self.config.frame_bytes() as u64;
        self.make_room_image(p)?;
        let s = self.image_store()?;
        let id = s.frames.push(next_frame.to_vec());
        let mut pending = s.pending.take().expect("checked above");
        let mut frames = pending.clone();
        frames.push(id);
        pending.remove(0);
        pending.push(id);
        s.records.push_back(ImageRecord {
            frames,
            meta: Meta { action, reward, done },
        });
        if !done {
            s.pending = Some(pending);
        }
        Ok(())
    }

    /// Image transition at position `index` (0 = oldest).
    pub fn image_transition(&self, index: usize) -> Result<ImageSample> {
        let Storage::Image(s) = &self.storage else {
            return Err(Error::Usage("buffer is in latent mode".into()));
        };
        let r = s
            .records
            .get(index)
            .ok_or_else(|| Error::Usage(format!("no transition at {index}")))?;
        let shape = self.config.obs_shape;
        let n = shape[0];
        Ok(ImageSample {
            index,
            obs: s.observation(&r.frames[..n], shape),
            next_obs: s.observation(&r.frames[1..], shape),
            action: r.meta.action,
            reward: r.meta.reward,
            done: r.meta.done,
        })
    }

    /// Uniform sampling with replacement.
    pub fn sample_image_batch<R: Rng + ?Sized>(&self, b: usize, rng: &mut R) -> Result<Vec<ImageSample>> {
        if self.mode() != BufferMode::Image {
            return Err(Error::Usage("image batch requested from a latent buffer".into()));
        }
        let n = self.len();
        if n < b || n == 0 {
            return Err(Error::NotReady {
                occupancy: n,
                requested: b,
            });
        }
        (0..b).map(|_| self.image_transition(rng.gen_range(0..n))).collect()
    }

    fn check_latents(&self, set: &LatentSet) -> Result<()> {
        let (k, l) = (self.config.augmentations, self.config.latent_dim);
        if set.offsets.len() != k || set.data.len() != k * l {
            return config_err(format!(
                "latent set has {} floats / {} offsets, expected K={k} latents of L={l}",
                set.data.len(),
                set.offsets.len()
            ));
        }
        Ok(())
    }

    fn make_room_latent(&mut self, new_slots: u64, pin: Option<u64>) -> Result<()> {
        let slot_bytes = self.slot_bytes();
        let budget = self.config.byte_budget;
        let capacity = self.capacity;
        let s = self.latent_store()?;
        while s.records.len() >= capacity {
            s.records.pop_front();
        }
        s.trim(pin);
        if let Some(b) = budget {
            while (s.slots.len() as u64 + new_slots) * slot_bytes > b {
                if s.records.pop_front().is_none() {
                    return config_err(format!("byte budget {b} cannot hold the latent slots"));
                }
                s.trim(pin);
            }
        }
        Ok(())
    }

    /// Starts an episode in latent mode with the latents of its first observation.
    pub fn begin_episode_latent(&mut self, z0: LatentSet) -> Result<()> {
        self.check_latents(&z0)?;
        {
            let s = self.latent_store()?;
            s.pending = None;
            s.trim(None);
        }
        let slot_bytes = self.slot_bytes();
        let budget = self.config.byte_budget;
        let s = self.latent_store()?;
        if let Some(b) = budget {
            while (s.slots.len() as u64 + 1) * slot_bytes > b {
                if s.records.pop_front().is_none() {
                    return config_err("byte budget cannot hold one latent slot");
                }
                s.trim(None);
            }
        }
        let id = s.slots.push(z0);
        s.pending = Some(id);
        Ok(())
    }

    /// Latents of the current observation, if an episode is in progress.
    pub fn current_latents(&self) -> Option<&LatentSet> {
        match &self.storage {
            Storage::Latent(s) => s.pending.map(|id| s.slots.get(id)),
            Storage::Image(_) => None,
        }
    }

    /// Stores a latent transition. When `z_t` is bitwise the current
    /// observation's latents its slot is shared instead of copied.
    pub fn push_latent(
        &mut self,
        z_t: &LatentSet,
        action: usize,
        reward: f32,
        z_next: &LatentSet,
        done: bool,
    ) -> Result<()> {
        self.check_latents(z_t)?;
        self.check_latents(z_next)?;
        let shared = {
            let s = self.latent_store()?;
            s.pending.filter(|&id| s.slots.get(id).bitwise_eq(z_t))
        };
        let new_slots = if shared.is_some() { 1 } else { 2 };
        self.make_room_latent(new_slots, shared)?;
        let s = self.latent_store()?;
        let current = match shared {
            Some(id) => id,
            None => s.slots.push(z_t.clone()),
        };
        let next = s.slots.push(z_next.clone());
        s.records.push_back(LatentRecord {
            current,
            next,
            meta: Meta { action, reward, done },
        });
        s.pending = (!done).then_some(next);
        s.trim(None);
        Ok(())
    }

    /// Latent sets of `(z_t, z_{t+1})` and the metadata of transition `index`.
    pub fn latent_transition(&self, index: usize) -> Result<(&LatentSet, &LatentSet, usize, f32, bool)> {
        let Storage::Latent(s) = &self.storage else {
            return Err(Error::Usage("buffer is in image mode".into()));
        };
        let r = s
            .records
            .get(index)
            .ok_or_else(|| Error::Usage(format!("no transition at {index}")))?;
        Ok((
            s.slots.get(r.current),
            s.slots.get(r.next),
            r.meta.action,
            r.meta.reward,
            r.meta.done,
        ))
    }

    /// Uniform sampling with replacement; one `k` per transition, shared by
    /// `z_t` and `z_{t+1}`.
    pub fn sample_latent_batch<R: Rng + ?Sized>(&self, b: usize, rng: &mut R) -> Result<Vec<LatentSample>> {
        if self.mode() != BufferMode::Latent {
            return Err(Error::Usage("latent batch requested from an image buffer".into()));
        }
        let n = self.len();
        if n < b || n == 0 {
            return Err(Error::NotReady {
                occupancy: n,
                requested: b,
            });
        }
        let kk = self.config.augmentations;
        (0..b)
            .map(|_| {
                let index = rng.gen_range(0..n);
                let k = rng.gen_range(0..kk);
                let (z, zn, action, reward, done) = self.latent_transition(index)?;
                Ok(LatentSample {
                    index,
                    k,
                    z: z.latent(k).to_vec(),
                    next_z: zn.latent(k).to_vec(),
                    z_offset: z.offsets[k],
                    next_z_offset: zn.offsets[k],
                    action,
                    reward,
                    done,
                })
            })
            .collect()
    }

    /// Replaces every stored image transition by its latent counterpart,
    /// encoding each distinct observation `K` times with fresh crop draws,
    /// then raises the capacity to `C-hat`. Frames are released as soon as
    /// no remaining transition needs them, so the byte budget holds
    /// throughout.
    pub fn convert_to_latent<R: Rng + ?Sized>(
        &mut self,
        spec: &NetworkSpec,
        params: &ParamStore<f32>,
        augment: &AugmentConfig,
        rng: &mut R,
    ) -> Result<ConversionReport> {
        if spec.latent_dim() != self.config.latent_dim || augment.k != self.config.augmentations {
            return config_err("encoder latent size or K does not match the replay config");
        }
        if self.mode() == BufferMode::Latent {
            return Err(Error::Usage("replay buffer converted twice".into()));
        }
        let Storage::Image(mut img) = std::mem::replace(&mut self.storage, Storage::Latent(LatentStore::new())) else {
            unreachable!("mode checked above");
        };
        let shape = self.config.obs_shape;
        let n = shape[0];
        let p = self.config.frame_bytes() as u64;
        let slot_bytes = self.slot_bytes();
        let budget = self.config.byte_budget;
        let mut lat = LatentStore::new();
        let mut encoded = 0usize;
        // (next-observation frame ids, done, next slot) of the previous record
        let mut prev: Option<(Vec<u64>, bool, u64)> = None;
        let total = img.records.len();

        // Room comes from the oldest converted records first, then from the
        // oldest image records still waiting (dropped unconverted).
        let store_slot =
            |lat: &mut LatentStore, img: &mut ImageStore, set: LatentSet, pin: Option<u64>| -> Result<u64> {
                if let Some(b) = budget {
                    while img.frames.len() as u64 * p + (lat.slots.len() as u64 + 1) * slot_bytes > b {
                        if lat.records.pop_front().is_some() {
                            lat.trim(pin);
                        } else if img.records.pop_front().is_some() {
                            img.trim();
                        } else {
                            return config_err("byte budget too small to stage the conversion");
                        }
                    }
                }
                Ok(lat.slots.push(set))
            };

        while let Some(rec) = img.records.pop_front() {
            let cur_ids = &rec.frames[..n];
            let reuse = match &prev {
                Some((ids, done, slot)) if !done && ids.as_slice() == cur_ids => Some(*slot),
                _ => None,
            };
            let cur_set = match reuse {
                Some(_) => None,
                None => Some(encode_augmented(
                    &img.observation(cur_ids, shape),
                    spec,
                    params,
                    augment,
                    rng,
                )?),
            };
            let next_set = encode_augmented(&img.observation(&rec.frames[1..], shape), spec, params, augment, rng)?;
            encoded += 1 + usize::from(cur_set.is_some());
            // frames only this record used are released before its latents are stored
            img.trim();
            let current = match (reuse, cur_set) {
                (Some(slot), _) => slot,
                (None, Some(set)) => store_slot(&mut lat, &mut img, set, None)?,
                (None, None) => unreachable!("encoded above"),
            };
            let next = store_slot(&mut lat, &mut img, next_set, Some(current))?;
            lat.records.push_back(LatentRecord {
                current,
                next,
                meta: rec.meta,
            });
            prev = Some((rec.frames[1..].to_vec(), rec.meta.done, next));
        }

        if let Some(ids) = img.pending.take() {
            lat.pending = match &prev {
                Some((prev_ids, false, slot)) if *prev_ids == ids => Some(*slot),
                _ => {
                    let set = encode_augmented(&img.observation(&ids, shape), spec, params, augment, rng)?;
                    encoded += 1;
                    let id = store_slot(&mut lat, &mut img, set, None)?;
                    Some(id)
                }
            };
        }
        drop(img);

        self.capacity = self.config.latent_capacity();
        while lat.records.len() > self.capacity {
            lat.records.pop_front();
        }
        lat.trim(None);
        let transitions = lat.records.len();
        self.storage = Storage::Latent(lat);
        debug_assert!(total >= transitions);
        Ok(ConversionReport {
            transitions,
            observations_encoded: encoded,
            capacity: self.capacity,
        })
    }
}
