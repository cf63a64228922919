//! Checks shared by the focused integration tests and the acceptance suite.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seer::agent::{AgentConfig, DqnAgent};
use seer::augment::AugmentConfig;
use seer::env::{Env, EnvConfig};
use seer::harness::{Mode, RunConfig, Trainer};
use seer::nn::gradcheck::{check_conv, check_dense, check_network, check_relu, merge_reports, GradCheckReport};
use seer::nn::{ConvLayerSpec, DenseLayerSpec, LayerSpec, NetworkSpec};
use seer::replay::{ImageSample, ReplayBuffer, ReplayConfig};

/// Finite-difference checks over `configs` random layer and network shapes
/// of every layer type.
pub fn gradient_suite(configs: usize, seed: u64) -> seer::Result<(GradCheckReport, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut reports = Vec::new();
    for i in 0..configs {
        let r = match i % 4 {
            0 => {
                let k = rng.gen_range(1..4);
                let stride = rng.gen_range(1..3);
                let pad = rng.gen_range(0..2);
                let spec = ConvLayerSpec::new(rng.gen_range(1..4), rng.gen_range(1..5), k, stride, pad);
                let side = rng.gen_range(k.max(3)..9);
                check_conv(&spec, side, side + rng.gen_range(0..2), h, &mut rng)?
            }
            1 => check_dense(
                &DenseLayerSpec::new(rng.gen_range(1..16), rng.gen_range(1..10)),
                h,
                &mut rng,
            )?,
            2 => check_relu(rng.gen_range(1..40), h, &mut rng)?,
            _ => {
                let c = rng.gen_range(1..3);
                let side = rng.gen_range(6..10);
                let conv = ConvLayerSpec::new(c, rng.gen_range(2..5), 3, rng.gen_range(1..3), rng.gen_range(0..2));
                let (oh, ow) = conv.output_size(side, side)?;
                let flat = conv.out_channels * oh * ow;
                let latent = rng.gen_range(3..8);
                let hidden = rng.gen_range(3..8);
                let spec = NetworkSpec::new(
                    [c, side, side],
                    vec![
                        LayerSpec::Conv(conv),
                        LayerSpec::Dense(DenseLayerSpec::new(flat, latent)),
                    ],
                    vec![
                        DenseLayerSpec::new(latent, hidden),
                        DenseLayerSpec::new(hidden, rng.gen_range(2..5)),
                    ],
                )?;
                check_network(&spec, h, &mut rng)?
            }
        };
        reports.push(r);
    }
    Ok((merge_reports(reports), configs))
}

pub struct EquivalenceOutcome {
    pub batches: usize,
    pub loss_mismatches: usize,
    pub grad_mismatches: usize,
}

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// Fills an image buffer from Catch, freezes the encoder and converts, then
/// compares the latent update with the image update that recomputes latents
/// from retained frames and the recorded crop offsets. The head is updated
/// between batches so the comparison runs at many parameter values.
/// `swap_offsets` feeds the wrong crops as a control.
pub fn equivalence_check(
    batches: usize,
    seed: u64,
    double_q: bool,
    swap_offsets: bool,
) -> seer::Result<EquivalenceOutcome> {
    let cfg = RunConfig::default();
    let spec = cfg.network_spec()?;
    let env_cfg = EnvConfig::catch();
    let augment = AugmentConfig {
        pad: 2,
        k: 3,
        enabled: true,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let agent_cfg = AgentConfig {
        batch_size: 16,
        target_sync_period: 7,
        initial_steps: 0,
        freeze_step: Some(600),
        double_q,
        ..AgentConfig::default()
    };
    let mut agent = DqnAgent::new(spec.clone(), agent_cfg, augment, &mut rng)?;
    let mut buffer = ReplayBuffer::new(ReplayConfig {
        capacity: 600,
        obs_shape: env_cfg.obs_shape(),
        latent_dim: spec.latent_dim(),
        augmentations: augment.k,
        encoders: 1,
        byte_budget: None,
    })?;
    let (mut env, obs) = Env::new(env_cfg, seed)?;
    buffer.begin_episode(obs.latest_frame())?;
    for _ in 0..600 {
        let a = rng.gen_range(0..3);
        let step = env.step(a)?;
        buffer.push_image(step.observation.latest_frame(), a, step.reward as f32, step.done)?;
        if step.done {
            buffer.begin_episode(env.reset().latest_frame())?;
        }
    }
    // a few full-network updates so the encoder is not at its init
    for _ in 0..5 {
        let batch = buffer.sample_image_batch(16, &mut rng)?;
        agent.update_pre_freeze(&batch, &mut rng)?;
    }
    let images = buffer.clone();
    agent.freeze(600, &mut buffer, &mut rng)?;

    // conversion keeps the newest transitions, oldest first
    let skipped = images.len() - buffer.len();
    let mut out = EquivalenceOutcome {
        batches,
        loss_mismatches: 0,
        grad_mismatches: 0,
    };
    for _ in 0..batches {
        let batch = buffer.sample_latent_batch(16, &mut rng)?;
        let image_batch: Vec<ImageSample> = batch
            .iter()
            .map(|s| images.image_transition(s.index + skipped))
            .collect::<seer::Result<_>>()?;
        let offsets: Vec<_> = batch
            .iter()
            .map(|s| {
                if swap_offsets {
                    (s.next_z_offset, s.z_offset)
                } else {
                    (s.z_offset, s.next_z_offset)
                }
            })
            .collect();
        let (l1, g1) = agent.latent_loss_grads(&batch)?;
        let (l2, g2) = agent.frozen_image_loss_grads(&image_batch, &offsets)?;
        if l1.to_bits() != l2.to_bits() {
            out.loss_mismatches += 1;
        }
        let same = g1.layers.len() == g2.layers.len()
            && g1.layers.iter().zip(&g2.layers).all(|(a, b)| match (a, b) {
                (None, None) => true,
                (Some(a), Some(b)) => {
                    bits(a.weight.data()) == bits(b.weight.data()) && bits(a.bias.data()) == bits(b.bias.data())
                }
                _ => false,
            });
        if !same {
            out.grad_mismatches += 1;
        }
        agent.update_post_freeze(&batch)?;
    }
    Ok(out)
}

pub struct FreezeContract {
    pub steps_checked: u64,
    pub changed_after_freeze: u64,
    pub freeze_events: u32,
    pub head_changed: bool,
}

/// Runs a seer config step by step and compares the encoder against its
/// snapshot taken at the freeze step after every later step.
pub fn freeze_contract(cfg: &RunConfig, seed: u64) -> seer::Result<FreezeContract> {
    let mut t = Trainer::new(cfg, seed)?;
    let boundary = t.agent().spec().freeze_boundary();
    let mut snapshot: Option<Vec<Vec<u32>>> = None;
    let mut head_at_freeze: Option<Vec<u32>> = None;
    let mut out = FreezeContract {
        steps_checked: 0,
        changed_after_freeze: 0,
        freeze_events: 0,
        head_changed: false,
    };
    let encoder_bits = |t: &Trainer| -> Vec<Vec<u32>> {
        t.agent().online().layers()[..boundary]
            .iter()
            .map(|l| {
                l.weight
                    .data()
                    .iter()
                    .chain(l.bias.data())
                    .map(|v| v.to_bits())
                    .collect()
            })
            .collect()
    };
    let head_bits = |t: &Trainer| -> Vec<u32> {
        t.agent().online().layers()[boundary..]
            .iter()
            .flat_map(|l| l.weight.data().iter().chain(l.bias.data()).map(|v| v.to_bits()))
            .collect()
    };
    while !t.is_finished() {
        t.step()?;
        if t.step_count() >= cfg.freeze_step {
            let now = encoder_bits(&t);
            match &snapshot {
                None => {
                    snapshot = Some(now);
                    head_at_freeze = Some(head_bits(&t));
                }
                Some(s) => {
                    if *s != now {
                        out.changed_after_freeze += 1;
                    }
                }
            }
            out.steps_checked += 1;
        }
    }
    out.freeze_events = t.freeze_events();
    out.head_changed = head_at_freeze.is_some_and(|h| h != head_bits(&t));
    Ok(out)
}

/// Short seer config used by the determinism and contract checks.
pub fn short_config(mode: Mode, total: u64, freeze: u64) -> RunConfig {
    RunConfig {
        mode,
        total_steps: total,
        freeze_step: freeze,
        initial_steps: 200.min(freeze),
        eps_decay_steps: freeze.max(1),
        target_sync_period: 100,
        eval_every: (total / 5).max(1),
        log_every: (total / 20).max(1),
        eval_episodes: 5,
        replay_capacity: 2000,
        ..RunConfig::default()
    }
}

pub fn csv_bytes(rows: &[seer::harness::MetricsRow]) -> Vec<u8> {
    let mut out = Vec::new();
    seer::harness::write_metrics_csv(&mut out, rows).expect("in-memory write");
    out
}
