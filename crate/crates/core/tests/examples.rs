//! Each example runs as a library function with small arguments.

#[allow(dead_code)]
#[path = "../examples/attention_map.rs"]
mod attention_map;
#[allow(dead_code)]
#[path = "../examples/catch_training.rs"]
mod catch_training;
#[allow(dead_code)]
#[path = "../examples/compare_runs.rs"]
mod compare_runs;
#[allow(dead_code)]
#[path = "../examples/constrained_memory.rs"]
mod constrained_memory;
#[allow(dead_code)]
#[path = "../examples/flop_model.rs"]
mod flop_model;
#[allow(dead_code)]
#[path = "../examples/gradient_check.rs"]
mod gradient_check;
#[allow(dead_code)]
#[path = "../examples/latent_replay.rs"]
mod latent_replay;
#[allow(dead_code)]
#[path = "../examples/replay_capacity.rs"]
mod replay_capacity;

use seer::harness::Mode;

#[test]
fn gradient_check_example() {
    for (name, r) in gradient_check::run_example().unwrap() {
        assert!(r.checked > 0, "{name}");
        assert!(r.max_rel_error < 1e-4, "{name}: {r:?}");
    }
}

#[test]
fn flop_model_example() {
    let s = flop_model::run_example().unwrap();
    assert_eq!((s.catch_encoder, s.catch_head), (38_224, 2_240));
    assert!(s.catch_post < s.catch_pre);
    assert!(s.worked_post < s.worked_pre);
}

#[test]
fn replay_capacity_example() {
    for (label, c, p, n, k, l, cap) in replay_capacity::run_example() {
        assert_eq!(cap, c * p / (4 * n * k * l), "{label}");
    }
}

#[test]
fn latent_replay_example() {
    let s = latent_replay::run_example(400).unwrap();
    assert!(s.bitwise_match);
    assert!(s.latent_capacity > s.image_capacity);
    assert!(s.latent_bytes < s.image_bytes);
}

#[test]
fn attention_map_example() {
    let dir = tempfile::tempdir().unwrap();
    let (map, path) = attention_map::run_example(dir.path()).unwrap();
    let sum: f64 = map.values().iter().sum();
    assert!((sum - 1.0).abs() < 1e-9);
    assert!(path.exists());
    assert!(dir.path().join("frame.pgm").exists());
}

#[test]
fn catch_training_example() {
    let out = catch_training::run_example(1200, 600, 0).unwrap();
    assert_eq!(out[0].mode, Mode::Baseline);
    assert_eq!((out[0].freeze_events, out[1].freeze_events), (0, 1));
    assert!(out[1].macs < out[0].macs);
}

#[test]
fn constrained_memory_example() {
    let out = constrained_memory::run_example(1500, 1200, 0).unwrap();
    for o in &out {
        assert!(o.max_bytes_used <= o.budget);
    }
    assert_eq!(out[0].final_capacity, 1000);
    assert_eq!(
        out[1].final_capacity,
        (constrained_memory::budget_for(1000) / 128) as usize
    );
}

#[test]
fn compare_runs_example() {
    let dir = tempfile::tempdir().unwrap();
    let c = compare_runs::run_example(dir.path(), 800, vec![0]).unwrap();
    assert_eq!((c.mode_a.as_str(), c.mode_b.as_str()), ("baseline", "seer"));
}
