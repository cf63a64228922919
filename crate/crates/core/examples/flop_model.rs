//! Closed-form multiply-add accounting before and after freezing, for the
//! worked example and for the default Catch network.
//!
//! Run with `cargo run --example flop_model`.

use seer::accounting::{one_time_freeze_cost, FlopModel};
use seer::harness::RunConfig;
use seer::nn::param_flops;

pub struct FlopSummary {
    pub worked_pre: u64,
    pub worked_post: u64,
    pub catch_encoder: u64,
    pub catch_head: u64,
    pub catch_pre: u64,
    pub catch_post: u64,
}

pub fn run_example() -> seer::Result<FlopSummary> {
    let worked = FlopModel {
        encoder_macs: 1000,
        head_macs: 100,
        batch_size: 32,
        forwards: 2,
        backwards: 1,
        augmentations: 1,
        encoders: 1,
    };
    let spec = RunConfig::default().network_spec()?;
    let (e, m) = param_flops(&spec);
    let catch = FlopModel {
        encoder_macs: e,
        head_macs: m,
        ..worked
    };
    Ok(FlopSummary {
        worked_pre: worked.pre_freeze_per_iter(),
        worked_post: worked.post_freeze_per_iter(),
        catch_encoder: e,
        catch_head: m,
        catch_pre: catch.pre_freeze_per_iter(),
        catch_post: catch.post_freeze_per_iter(),
    })
}

#[allow(dead_code)]
fn main() -> seer::Result<()> {
    let s = run_example()?;
    println!("worked example (E=1000, M=100, b=32, F=2, B=1, K=N=1)");
    println!("  per step before freezing: {}", s.worked_pre);
    println!("  per step after freezing:  {}", s.worked_post);
    println!(
        "  one-time, T_f=500, C=1000, K=2: {}",
        one_time_freeze_cost(1000, 2, 1, 500, 1000)
    );
    println!("default Catch network: E={} M={}", s.catch_encoder, s.catch_head);
    println!(
        "  per step {} -> {} ({:.1}x cheaper after freezing)",
        s.catch_pre,
        s.catch_post,
        s.catch_pre as f64 / s.catch_post as f64
    );
    let (t, tf) = (30_000u64, 12_000u64);
    let baseline = t * s.catch_pre;
    let seer = tf * s.catch_pre + (t - tf) * s.catch_post + one_time_freeze_cost(s.catch_encoder, 1, 1, tf, 10_000);
    println!(
        "  {t} steps, freeze at {tf}: {:.1}% of the baseline MACs (ignoring warm-up)",
        100.0 * seer as f64 / baseline as f64
    );
    Ok(())
}
