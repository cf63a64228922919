//! Closed-form compute accounting in multiply-adds (MACs).
//!
//! Per training iteration with one update per environment step:
//!
//! ```text
//! before freezing: b*F*(E+M) + 2*b*B*(E+M) + (E+M)
//! after freezing:  b*F*M     + 2*b*B*M     + (E+M) + E*K*N
//! at freezing:     E*K*N*min(T_f, C)                       (once)
//! ```
//!
//! A backward pass costs twice its forward pass. The ledger records the
//! action-selection pass `(E+M)` and the per-step latent computation `E*K*N`
//! as their own events, and update events carry only the batch terms, so the
//! totals stay exact when the update-to-step ratio is not one. The unit is
//! MACs; multiply by 2 for FLOPs.

use serde::{Deserialize, Serialize};

/// Symbols of the cost model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopModel {
    /// `E`: encoder forward MACs for one observation.
    pub encoder_macs: u64,
    /// `M`: head forward MACs for one latent.
    pub head_macs: u64,
    /// `b`
    pub batch_size: u64,
    /// `F`: forward passes per update.
    pub forwards: u64,
    /// `B`: backward passes per update.
    pub backwards: u64,
    /// `K`
    pub augmentations: u64,
    /// `N`
    pub encoders: u64,
}

impl FlopModel {
    fn full(&self) -> u64 {
        self.encoder_macs + self.head_macs
    }

    /// Batch terms of one full-network update: `bF(E+M) + 2bB(E+M)`.
    pub fn pre_update(&self) -> u64 {
        let b = self.batch_size;
        b * self.forwards * self.full() + 2 * b * self.backwards * self.full()
    }

    /// Batch terms of one head-only update: `bFM + 2bBM`.
    pub fn post_update(&self) -> u64 {
        let b = self.batch_size;
        b * self.forwards * self.head_macs + 2 * b * self.backwards * self.head_macs
    }

    /// One action-selection forward pass `E + M`.
    pub fn action_forward(&self) -> u64 {
        self.full()
    }

    /// Latents of the current observation after freezing: `E*K*N`.
    pub fn latent_store(&self) -> u64 {
        self.encoder_macs * self.augmentations * self.encoders
    }

    pub fn pre_freeze_per_iter(&self) -> u64 {
        self.pre_update() + self.action_forward()
    }

    pub fn post_freeze_per_iter(&self) -> u64 {
        self.post_update() + self.action_forward() + self.latent_store()
    }
}

/// `E*K*N*min(T_f, C)`: encoding the buffer contents at the freeze step.
pub fn one_time_freeze_cost(e: u64, k: u64, n: u64, freeze_step: u64, capacity: u64) -> u64 {
    e * k * n * freeze_step.min(capacity)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostEvent {
    ActionForward,
    PreUpdate,
    PostUpdate,
    LatentStore,
    Conversion { freeze_step: u64, initial_capacity: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostPhase {
    ActionSelection,
    PreFreeze,
    Conversion,
    PostFreeze,
}

impl CostEvent {
    pub fn phase(&self) -> CostPhase {
        match self {
            CostEvent::ActionForward => CostPhase::ActionSelection,
            CostEvent::PreUpdate => CostPhase::PreFreeze,
            CostEvent::Conversion { .. } => CostPhase::Conversion,
            CostEvent::PostUpdate | CostEvent::LatentStore => CostPhase::PostFreeze,
        }
    }

    pub fn cost(&self, model: &FlopModel) -> u64 {
        match *self {
            CostEvent::ActionForward => model.action_forward(),
            CostEvent::PreUpdate => model.pre_update(),
            CostEvent::PostUpdate => model.post_update(),
            CostEvent::LatentStore => model.latent_store(),
            CostEvent::Conversion {
                freeze_step,
                initial_capacity,
            } => one_time_freeze_cost(
                model.encoder_macs,
                model.augmentations,
                model.encoders,
                freeze_step,
                initial_capacity,
            ),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseBreakdown {
    pub action_selection: u64,
    pub pre_freeze: u64,
    pub conversion: u64,
    pub post_freeze: u64,
}

impl PhaseBreakdown {
    pub fn sum(&self) -> u64 {
        self.action_selection + self.pre_freeze + self.conversion + self.post_freeze
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub action_forward: u64,
    pub pre_update: u64,
    pub post_update: u64,
    pub latent_store: u64,
    pub conversion: u64,
}

/// Cumulative cost of one run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    total: u64,
    breakdown: PhaseBreakdown,
    counts: EventCounts,
    /// `(step, bytes_used)` samples of replay memory.
    bytes_samples: Vec<(u64, u64)>,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds the closed-form cost of `event`; returns the amount added.
    pub fn record(&mut self, event: CostEvent, model: &FlopModel) -> u64 {
        let cost = event.cost(model);
        self.total += cost;
        match event.phase() {
            CostPhase::ActionSelection => self.breakdown.action_selection += cost,
            CostPhase::PreFreeze => self.breakdown.pre_freeze += cost,
            CostPhase::Conversion => self.breakdown.conversion += cost,
            CostPhase::PostFreeze => self.breakdown.post_freeze += cost,
        }
        match event {
            CostEvent::ActionForward => self.counts.action_forward += 1,
            CostEvent::PreUpdate => self.counts.pre_update += 1,
            CostEvent::PostUpdate => self.counts.post_update += 1,
            CostEvent::LatentStore => self.counts.latent_store += 1,
            CostEvent::Conversion { .. } => self.counts.conversion += 1,
        }
        cost
    }

    pub fn sample_bytes(&mut self, step: u64, bytes_used: u64) {
        self.bytes_samples.push((step, bytes_used));
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn breakdown(&self) -> &PhaseBreakdown {
        &self.breakdown
    }

    pub fn counts(&self) -> &EventCounts {
        &self.counts
    }

    pub fn bytes_samples(&self) -> &[(u64, u64)] {
        &self.bytes_samples
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> FlopModel {
        FlopModel {
            encoder_macs: 1000,
            head_macs: 100,
            batch_size: 32,
            forwards: 2,
            backwards: 1,
            augmentations: 1,
            encoders: 1,
        }
    }

    #[test]
    fn worked_values() {
        let m = model();
        assert_eq!(m.pre_freeze_per_iter(), 141_900);
        assert_eq!(m.post_freeze_per_iter(), 14_900);
        let ratio = m.pre_freeze_per_iter() as f64 / m.post_freeze_per_iter() as f64;
        assert!((ratio - 9.5235).abs() < 1e-3);
    }

    #[test]
    fn reductions() {
        let mut m = model();
        m.batch_size = 0;
        assert_eq!(m.pre_freeze_per_iter(), 1100);
        let mut m = model();
        m.encoder_macs = 0;
        assert_eq!(m.pre_freeze_per_iter(), m.post_freeze_per_iter());
        assert_eq!(m.post_freeze_per_iter(), 32 * 2 * 100 + 2 * 32 * 100 + 100);
    }

    #[test]
    fn one_time_cost() {
        assert_eq!(one_time_freeze_cost(1000, 2, 1, 0, 1000), 0);
        assert_eq!(one_time_freeze_cost(1000, 2, 1, 500, 1000), 1_000_000);
        assert_eq!(one_time_freeze_cost(1000, 2, 1, 5000, 1000), 2_000_000);
    }

    #[test]
    fn ledger_breakdown_sums_to_total() {
        let m = model();
        let mut ledger = CostLedger::new();
        assert_eq!(ledger.total(), 0);
        let n = 7;
        for _ in 0..n {
            ledger.record(CostEvent::ActionForward, &m);
            ledger.record(CostEvent::PreUpdate, &m);
        }
        assert_eq!(ledger.total(), n * m.pre_freeze_per_iter());
        assert_eq!(ledger.breakdown().pre_freeze, n * (m.pre_freeze_per_iter() - 1100));
        ledger.record(
            CostEvent::Conversion {
                freeze_step: 7,
                initial_capacity: 100,
            },
            &m,
        );
        ledger.record(CostEvent::LatentStore, &m);
        ledger.record(CostEvent::PostUpdate, &m);
        assert_eq!(ledger.breakdown().sum(), ledger.total());
        assert_eq!(ledger.counts().conversion, 1);
    }
}
