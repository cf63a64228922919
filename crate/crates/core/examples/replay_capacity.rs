//! Adaptive replay capacity from storing latents instead of frames.
//!
//! Run with `cargo run --example replay_capacity`.

use seer::replay::{capacity_for_budget, computed_capacity, BufferMode, ObservationCost};

/// `(label, C, P, N, K, L, C-hat)`
pub fn run_example() -> Vec<(&'static str, u64, u64, u64, u64, u64, u64)> {
    [
        ("84x84 gray frame, L=576", 10_000, 7056, 1, 1, 576),
        ("84x84x3 frame, L=50, N=2, K=4", 2000, 21_168, 2, 4, 50),
        ("24x24 Catch frame, L=32", 1000, 576, 1, 1, 32),
        ("P = 4L (no gain)", 1000, 200, 1, 1, 50),
    ]
    .into_iter()
    .map(|(label, c, p, n, k, l)| (label, c, p, n, k, l, computed_capacity(c, p, n, k, l)))
    .collect()
}

#[allow(dead_code)]
fn main() -> seer::Result<()> {
    println!(
        "{:<32} {:>6} {:>6} {:>2} {:>2} {:>4} {:>8} {:>6}",
        "", "C", "P", "N", "K", "L", "C-hat", "gain"
    );
    for (label, c, p, n, k, l, hat) in run_example() {
        println!(
            "{label:<32} {c:>6} {p:>6} {n:>2} {k:>2} {l:>4} {hat:>8} {:>5.2}x",
            hat as f64 / c as f64
        );
    }
    let cost = ObservationCost {
        frame_bytes: 7056,
        latent_dim: 576,
        augmentations: 1,
        encoders: 1,
    };
    let budget = 70_000_000;
    println!(
        "a {budget}-byte budget holds {} frames or {} latents",
        capacity_for_budget(budget, BufferMode::Image, &cost)?,
        capacity_for_budget(budget, BufferMode::Latent, &cost)?
    );
    Ok(())
}
