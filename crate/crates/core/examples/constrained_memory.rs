//! Trains under a fixed observation-memory budget. After freezing, the same
//! bytes hold many more latent transitions than frames.
//!
//! Run with `cargo run --release --example constrained_memory -- [steps] [freeze-step] [seed]`.

use seer::harness::{Mode, RunConfig, Trainer};

pub struct BudgetOutcome {
    pub mode: Mode,
    pub budget: u64,
    pub max_bytes_used: u64,
    pub final_capacity: usize,
    pub final_occupancy: usize,
    pub final_eval: Option<f64>,
}

/// Budget of roughly `transitions` Catch frames.
pub fn budget_for(transitions: u64) -> u64 {
    transitions * 24 * 24
}

pub fn run_example(total_steps: u64, freeze_step: u64, seed: u64) -> seer::Result<Vec<BudgetOutcome>> {
    let budget = budget_for(1000);
    let mut out = Vec::new();
    for mode in [Mode::Baseline, Mode::Seer] {
        let cfg = RunConfig {
            mode,
            total_steps,
            freeze_step,
            initial_steps: 1000.min(freeze_step),
            eps_decay_steps: freeze_step.max(1),
            memory_budget: Some(budget),
            eval_every: (total_steps / 10).max(1),
            log_every: (total_steps / 20).max(1),
            ..RunConfig::default()
        };
        let mut trainer = Trainer::new(&cfg, seed)?;
        trainer.run_to_end()?;
        out.push(BudgetOutcome {
            mode,
            budget,
            max_bytes_used: trainer.rows().iter().map(|r| r.bytes_used).max().unwrap_or(0),
            final_capacity: trainer.buffer().capacity(),
            final_occupancy: trainer.buffer().len(),
            final_eval: trainer.last_eval().map(|e| e.mean),
        });
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> seer::Result<()> {
    let arg = |i: usize, default: u64| std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default);
    for o in run_example(arg(1, 20_000), arg(2, 8000), arg(3, 0))? {
        println!(
            "{:<8} budget {} B, peak {} B, capacity {} ({} stored), final eval {}",
            o.mode.as_str(),
            o.budget,
            o.max_bytes_used,
            o.final_capacity,
            o.final_occupancy,
            o.final_eval.map_or("n/a".into(), |v| format!("{v:.2}"))
        );
    }
    Ok(())
}
