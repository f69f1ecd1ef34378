use std::collections::HashMap;

use coop_fusion::evaluation::evaluate_log;
use coop_fusion::geometry::{rotate_yaw, wrap_heading};
use coop_fusion::sim::{run_scenario, EventLog, Record, ScenarioConfig};

fn short(seed: u64) -> ScenarioConfig {
    let mut config = ScenarioConfig::drift_sweep(seed, 0.0);
    config.laps = 2;
    config.duration = 130.0;
    config
}

#[test]
fn noiseless_loop_follows_the_circle() {
    let mut config = short(4);
    config.detection_noise = 0.0;
    config.vio_noise = 0.0;
    let report = evaluate_log(&run_scenario(&config).unwrap());
    assert!(!report.failure);
    assert!(report.mean_path_deviation < 0.05, "deviation {}", report.mean_path_deviation);
}

#[test]
fn same_seed_same_log() {
    let mut config = short(9);
    config.vio_drift.x = 0.3;
    config.vio_drift.random_walk_sigma = 0.02;
    let a = run_scenario(&config).unwrap().to_text();
    let b = run_scenario(&config).unwrap().to_text();
    assert_eq!(a, b);
    config.seed = 10;
    assert_ne!(a, run_scenario(&config).unwrap().to_text());
}

#[test]
fn log_survives_text_round_trip() {
    let log = run_scenario(&short(2)).unwrap();
    let text = log.to_text();
    let parsed = EventLog::parse(&text).unwrap();
    assert_eq!(parsed, log);
    assert_eq!(parsed.to_text(), text);
}

#[test]
fn drift_transform_maps_truth_onto_vio() {
    let mut config = short(5);
    config.vio_drift.x = 0.4;
    config.vio_drift.y = -0.2;
    config.vio_drift.random_walk_sigma = 0.05;
    let log = run_scenario(&config).unwrap();

    let truth: HashMap<u64, _> = log
        .records
        .iter()
        .filter_map(|r| match r {
            Record::Truth { t, secondary, secondary_heading, translation, heading, .. } => {
                Some((t.to_bits(), (*secondary, *secondary_heading, *translation, *heading)))
            }
            _ => None,
        })
        .collect();
    let mut checked = 0;
    for r in &log.records {
        if let Record::Vio { stamp, position, heading, .. } = r {
            if let Some((p, h, translation, theta)) = truth.get(&stamp.to_bits()) {
                assert!((rotate_yaw(*theta, p) + translation - position).norm() < 1e-9);
                assert!(wrap_heading(h + theta - heading).unwrap().abs() < 1e-9);
                checked += 1;
            }
        }
    }
    assert!(checked > 1000, "only {checked} coincident samples");
}
