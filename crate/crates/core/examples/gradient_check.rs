//! Finite-difference check of every layer type and of a full conv network.
//!
//! Run with `cargo run --example gradient_check`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seer::nn::gradcheck::{check_conv, check_dense, check_network, check_relu, GradCheckReport};
use seer::nn::{ConvLayerSpec, DenseLayerSpec, LayerSpec, NetworkSpec};

pub fn run_example() -> seer::Result<Vec<(&'static str, GradCheckReport)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let h = 1e-5;
    let net = NetworkSpec::new(
        [2, 9, 9],
        vec![
            LayerSpec::Conv(ConvLayerSpec::new(2, 4, 3, 2, 1)),
            LayerSpec::Conv(ConvLayerSpec::new(4, 4, 3, 1, 0)),
            LayerSpec::Dense(DenseLayerSpec::new(36, 8)),
        ],
        vec![DenseLayerSpec::new(8, 6), DenseLayerSpec::new(6, 3)],
    )?;
    Ok(vec![
        (
            "conv 3x3 stride 2 pad 1",
            check_conv(&ConvLayerSpec::new(3, 4, 3, 2, 1), 8, 8, h, &mut rng)?,
        ),
        ("dense 12 -> 5", check_dense(&DenseLayerSpec::new(12, 5), h, &mut rng)?),
        ("relu", check_relu(32, h, &mut rng)?),
        ("conv-conv-dense encoder + head", check_network(&net, h, &mut rng)?),
    ])
}

#[allow(dead_code)]
fn main() -> seer::Result<()> {
    for (name, r) in run_example()? {
        println!(
            "{name:<32} max rel error {:.2e} over {} coordinates ({} kinks skipped)",
            r.max_rel_error, r.checked, r.skipped_kinks
        );
    }
    Ok(())
}
