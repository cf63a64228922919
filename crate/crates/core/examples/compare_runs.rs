//! Writes a baseline and a freezing run to disk and compares them at equal
//! compute and at equal environment steps.
//!
//! Run with `cargo run --release --example compare_runs -- [output-dir]`.

use std::path::{Path, PathBuf};

use seer::harness::{compare_dirs, run, Comparison, Mode, RunConfig};

pub fn run_example(out_dir: &Path, total_steps: u64, seeds: Vec<u64>) -> seer::Result<Comparison> {
    let freeze_step = total_steps * 2 / 5;
    let base = RunConfig {
        total_steps,
        freeze_step,
        initial_steps: 500.min(freeze_step),
        eps_decay_steps: freeze_step.max(1),
        eval_every: (total_steps / 10).max(1),
        log_every: (total_steps / 10).max(1),
        seeds,
        ..RunConfig::default()
    };
    let a = out_dir.join("baseline");
    let b = out_dir.join("seer");
    run(
        &RunConfig {
            mode: Mode::Baseline,
            ..base.clone()
        },
        &a,
    )?;
    run(
        &RunConfig {
            mode: Mode::Seer,
            ..base
        },
        &b,
    )?;
    let last_macs = seer::harness::load_run(&b)?
        .seeds
        .iter()
        .filter_map(|(_, rows)| rows.last().map(|r| r.cumulative_macs))
        .min()
        .unwrap_or(0);
    compare_dirs(&a, &b, last_macs as f64, total_steps as f64)
}

#[allow(dead_code)]
fn main() -> seer::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("seer-compare"));
    let c = run_example(&dir, 10_000, vec![0, 1])?;
    print!("{c}");
    println!("runs written under {}", dir.display());
    Ok(())
}
