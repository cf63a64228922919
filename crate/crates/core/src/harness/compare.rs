//! Aligns two run directories on cumulative MACs and on environment steps.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::eval::EvalResult;
use super::run::{read_metrics_csv, MetricsRow};
use crate::error::{config_err, Error, Result};

#[derive(Clone, Debug)]
pub struct RunData {
    pub config: RunConfig,
    /// `(seed, rows)` sorted by seed.
    pub seeds: Vec<(u64, Vec<MetricsRow>)>,
}

pub fn load_run(dir: impl AsRef<Path>) -> Result<RunData> {
    let dir = dir.as_ref();
    let config = RunConfig::load(dir.join("config.json"))?;
    let mut seeds = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(seed) = name.strip_prefix("seed_").and_then(|s| s.parse::<u64>().ok()) else {
            continue;
        };
        let csv = path.join("metrics.csv");
        if csv.is_file() {
            seeds.push((seed, read_metrics_csv(csv)?));
        }
    }
    if seeds.is_empty() {
        return config_err(format!("{} holds no seed_<n>/metrics.csv", dir.display()));
    }
    seeds.sort_by_key(|(s, _)| *s);
    Ok(RunData { config, seeds })
}

/// Linear interpolation of the eval return at `x`, over rows that carry an
/// eval value. `None` outside the logged range.
pub fn interpolate_eval(rows: &[MetricsRow], x: f64, axis: impl Fn(&MetricsRow) -> f64) -> Option<f64> {
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.eval_mean_return.map(|y| (axis(r), y)))
        .collect();
    interpolate(&points, x)
}

/// Piecewise-linear interpolation over points sorted by x.
pub fn interpolate(points: &[(f64, f64)], x: f64) -> Option<f64> {
    let first = points.first()?;
    let last = points.last()?;
    if x < first.0 || x > last.0 {
        return None;
    }
    for w in points.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x >= x0 && x <= x1 {
            if x1 == x0 {
                return Some(y1);
            }
            return Some(y0 + (y1 - y0) * (x - x0) / (x1 - x0));
        }
    }
    Some(last.1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedStat {
    pub mean: f64,
    pub std: f64,
    /// Seeds whose logged range covers the query point.
    pub seeds: usize,
}

fn aggregate(values: Vec<f64>) -> Option<SeedStat> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let r = EvalResult::from_returns(values);
    Some(SeedStat {
        mean: r.mean,
        std: r.std,
        seeds: n,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisComparison {
    pub at: f64,
    pub a: Option<SeedStat>,
    pub b: Option<SeedStat>,
    /// `b.mean - a.mean`
    pub delta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub mode_a: String,
    pub mode_b: String,
    pub at_macs: AxisComparison,
    pub at_steps: AxisComparison,
}

fn compare_axis(a: &RunData, b: &RunData, at: f64, axis: fn(&MetricsRow) -> f64) -> AxisComparison {
    let stat = |run: &RunData| {
        aggregate(
            run.seeds
                .iter()
                .filter_map(|(_, rows)| interpolate_eval(rows, at, axis))
                .collect(),
        )
    };
    let (sa, sb) = (stat(a), stat(b));
    let delta = match (&sa, &sb) {
        (Some(x), Some(y)) => Some(y.mean - x.mean),
        _ => None,
    };
    AxisComparison {
        at,
        a: sa,
        b: sb,
        delta,
    }
}

/// Eval return at equal compute and at equal samples, mean and std across
/// seeds. Runs on different environments are refused.
pub fn compare_runs(a: &RunData, b: &RunData, at_macs: f64, at_steps: f64) -> Result<Comparison> {
    if a.config.env_config() != b.config.env_config() {
        return Err(Error::Config(format!(
            "runs use different environments: {:?} vs {:?}",
            a.config.env_config(),
            b.config.env_config()
        )));
    }
    Ok(Comparison {
        mode_a: a.config.mode.as_str().into(),
        mode_b: b.config.mode.as_str().into(),
        at_macs: compare_axis(a, b, at_macs, |r| r.cumulative_macs as f64),
        at_steps: compare_axis(a, b, at_steps, |r| r.step as f64),
    })
}

pub fn compare_dirs(a: impl AsRef<Path>, b: impl AsRef<Path>, at_macs: f64, at_steps: f64) -> Result<Comparison> {
    compare_runs(&load_run(a)?, &load_run(b)?, at_macs, at_steps)
}

fn cell(s: &Option<SeedStat>) -> String {
    match s {
        Some(s) => format!("{:.3} ± {:.3} (n={})", s.mean, s.std, s.seeds),
        None => "n/a".into(),
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<18} {:<26} {:<26} B - A",
            "axis",
            format!("A ({})", self.mode_a),
            format!("B ({})", self.mode_b)
        )?;
        for (name, row) in [("macs", &self.at_macs), ("steps", &self.at_steps)] {
            let delta = row.delta.map_or("n/a".into(), |d| format!("{d:+.3}"));
            writeln!(
                f,
                "{:<18} {:<26} {:<26} {}",
                format!("{name}={}", row.at),
                cell(&row.a),
                cell(&row.b),
                delta
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run::Phase;

    fn row(step: u64, macs: u64, eval: Option<f64>) -> MetricsRow {
        MetricsRow {
            step,
            episode_return: None,
            eval_mean_return: eval,
            eval_std_return: eval.map(|_| 0.0),
            cumulative_macs: macs,
            bytes_used: 0,
            buffer_occupancy: 0,
            buffer_capacity: 1,
            epsilon: 0.0,
            loss: None,
            phase: Phase::PreFreeze,
        }
    }

    #[test]
    fn linear_interpolation_by_hand() {
        let rows = vec![
            row(100, 1000, Some(-1.0)),
            row(150, 1500, None),
            row(200, 3000, Some(1.0)),
        ];
        // at 2500 MACs: -1 + 2 * (1500 / 2000) = 0.5
        assert_eq!(interpolate_eval(&rows, 2500.0, |r| r.cumulative_macs as f64), Some(0.5));
        assert_eq!(interpolate_eval(&rows, 150.0, |r| r.step as f64), Some(0.0));
        assert_eq!(interpolate_eval(&rows, 100.0, |r| r.step as f64), Some(-1.0));
        assert_eq!(interpolate_eval(&rows, 99.0, |r| r.step as f64), None);
        assert_eq!(interpolate_eval(&rows, 201.0, |r| r.step as f64), None);
    }

    #[test]
    fn seed_aggregation() {
        let s = aggregate(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.seeds, 3);
        assert!(aggregate(vec![]).is_none());
    }

    #[test]
    fn self_comparison_has_zero_delta() {
        let run = RunData {
            config: RunConfig::default(),
            seeds: vec![
                (0, vec![row(0, 0, Some(0.0)), row(10, 100, Some(1.0))]),
                (1, vec![row(0, 0, Some(0.5)), row(10, 100, Some(0.5))]),
            ],
        };
        let c = compare_runs(&run, &run, 50.0, 5.0).unwrap();
        assert_eq!(c.at_macs.delta, Some(0.0));
        assert_eq!(c.at_steps.a, c.at_steps.b);
        assert_eq!(c.at_macs.a.as_ref().unwrap().mean, 0.5);
        assert!(c.to_string().contains("+0.000"));
    }

    #[test]
    fn refuses_different_envs() {
        let a = RunData {
            config: RunConfig::default(),
            seeds: vec![(0, vec![row(1, 1, Some(0.0))])],
        };
        let mut b = a.clone();
        b.config.grid_size = 10;
        assert!(matches!(compare_runs(&a, &b, 1.0, 1.0), Err(Error::Config(_))));
    }
}
