//! Spatial attention map of the last encoder convolution on a Catch frame,
//! written as a plain PGM next to an upscaled copy of the input frame.
//!
//! Run with `cargo run --example attention_map -- [output-dir]`.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seer::analysis::{export_pgm, observation_attention, parse_pgm, AttentionMap};
use seer::env::{Env, EnvConfig};
use seer::harness::RunConfig;
use seer::nn::ParamStore;

pub fn run_example(out_dir: &Path) -> seer::Result<(AttentionMap, PathBuf)> {
    let spec = RunConfig::default().network_spec()?;
    let params = ParamStore::init_he_uniform(&spec, &mut ChaCha8Rng::seed_from_u64(3));
    let (_, obs) = Env::new(EnvConfig::catch(), 5)?;
    let map = observation_attention(&obs, &spec, &params, None)?;
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join("attention.pgm");
    export_pgm(&map, &path)?;
    let frame: String = obs
        .latest_frame()
        .chunks(obs.shape()[2])
        .map(|row| row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ") + "\n")
        .collect();
    std::fs::write(
        out_dir.join("frame.pgm"),
        format!("P2\n{} {}\n255\n{frame}", obs.shape()[2], obs.shape()[1]),
    )?;
    Ok((map, path))
}

#[allow(dead_code)]
fn main() -> seer::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("seer-attention"));
    let (map, path) = run_example(&dir)?;
    let sum: f64 = map.values().iter().sum();
    println!("{}x{} map, entries sum to {sum:.9}", map.width(), map.height());
    let parsed = parse_pgm(&std::fs::read_to_string(&path)?)?;
    println!(
        "wrote {} ({} pixels, max level {})",
        path.display(),
        parsed.pixels.len(),
        parsed.max_value
    );
    Ok(())
}
