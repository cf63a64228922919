//! Fills an image replay buffer from Catch, freezes a randomly initialized
//! encoder, converts the buffer to latents and checks a stored latent
//! against a fresh encoding of the retained image.
//!
//! Run with `cargo run --example latent_replay`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seer::augment::{crop_with_offset, AugmentConfig};
use seer::env::{Env, EnvConfig};
use seer::harness::RunConfig;
use seer::nn::{encode, ParamStore};
use seer::replay::{ReplayBuffer, ReplayConfig};

pub struct LatentReplaySummary {
    pub transitions: usize,
    pub image_bytes: u64,
    pub latent_bytes: u64,
    pub image_capacity: usize,
    pub latent_capacity: usize,
    pub bitwise_match: bool,
}

pub fn run_example(steps: usize) -> seer::Result<LatentReplaySummary> {
    let cfg = RunConfig::default();
    let spec = cfg.network_spec()?;
    let env_cfg = EnvConfig::catch();
    let augment = AugmentConfig {
        pad: 1,
        k: 2,
        enabled: true,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut params = ParamStore::init_he_uniform(&spec, &mut rng);
    params.freeze_encoder();

    let mut buffer = ReplayBuffer::new(ReplayConfig {
        capacity: 500,
        obs_shape: env_cfg.obs_shape(),
        latent_dim: spec.latent_dim(),
        augmentations: augment.k,
        encoders: 1,
        byte_budget: None,
    })?;
    let (mut env, obs) = Env::new(env_cfg, 1)?;
    buffer.begin_episode(obs.latest_frame())?;
    for _ in 0..steps {
        let step = env.step(rng.gen_range(0..3))?;
        buffer.push_image(step.observation.latest_frame(), 0, step.reward as f32, step.done)?;
        if step.done {
            buffer.begin_episode(env.reset().latest_frame())?;
        }
    }
    let images = buffer.clone();
    let image_bytes = buffer.bytes_used();
    let image_capacity = buffer.capacity();
    let report = buffer.convert_to_latent(&spec, &params, &augment, &mut rng)?;

    let last = buffer.len() - 1;
    let (z, ..) = buffer.latent_transition(last)?;
    let img = images.image_transition(last)?;
    let mut bitwise_match = true;
    for k in 0..augment.k {
        let crop = crop_with_offset(&img.obs, augment.pad, z.offsets[k]);
        let fresh = encode(&crop.to_tensor(), &spec, &params)?;
        bitwise_match &= fresh
            .data()
            .iter()
            .zip(z.latent(k))
            .all(|(a, b)| a.to_bits() == b.to_bits());
    }
    Ok(LatentReplaySummary {
        transitions: report.transitions,
        image_bytes,
        latent_bytes: buffer.bytes_used(),
        image_capacity,
        latent_capacity: buffer.capacity(),
        bitwise_match,
    })
}

#[allow(dead_code)]
fn main() -> seer::Result<()> {
    let s = run_example(800)?;
    println!("{} transitions converted", s.transitions);
    println!(
        "observation bytes: {} as frames, {} as latents",
        s.image_bytes, s.latent_bytes
    );
    println!("capacity: {} -> {} transitions", s.image_capacity, s.latent_capacity);
    println!("stored latent equals fresh encoding bit for bit: {}", s.bitwise_match);
    Ok(())
}
