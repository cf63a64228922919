//! Trains a baseline DQN and a freezing agent on Catch with the same seed
//! and reports eval return and cumulative multiply-adds for both.
//!
//! Run with `cargo run --release --example catch_training -- [steps] [freeze-step] [seed]`.

use seer::harness::{Mode, RunConfig, Trainer};

pub struct TrainingOutcome {
    pub mode: Mode,
    pub final_eval: Option<f64>,
    pub macs: u64,
    pub freeze_events: u32,
}

pub fn run_example(total_steps: u64, freeze_step: u64, seed: u64) -> seer::Result<Vec<TrainingOutcome>> {
    let mut out = Vec::new();
    for mode in [Mode::Baseline, Mode::Seer] {
        let cfg = RunConfig {
            mode,
            total_steps,
            freeze_step,
            initial_steps: 1000.min(freeze_step),
            eps_decay_steps: freeze_step.max(1),
            eval_every: (total_steps / 10).max(1),
            log_every: (total_steps / 10).max(1),
            ..RunConfig::default()
        };
        let mut trainer = Trainer::new(&cfg, seed)?;
        trainer.run_to_end()?;
        out.push(TrainingOutcome {
            mode,
            final_eval: trainer.last_eval().map(|e| e.mean),
            macs: trainer.agent().ledger().total(),
            freeze_events: trainer.freeze_events(),
        });
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> seer::Result<()> {
    let arg = |i: usize, default: u64| std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default);
    let (steps, tf, seed) = (arg(1, 30_000), arg(2, 12_000), arg(3, 0));
    let outcomes = run_example(steps, tf, seed)?;
    for o in &outcomes {
        println!(
            "{:<8} final eval {:>6} cumulative MACs {:.3e}",
            o.mode.as_str(),
            o.final_eval.map_or("n/a".into(), |v| format!("{v:.2}")),
            o.macs as f64
        );
    }
    println!(
        "freeze compute ratio: {:.1}%",
        100.0 * outcomes[1].macs as f64 / outcomes[0].macs as f64
    );
    Ok(())
}
