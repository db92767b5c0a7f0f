use std::path::Path;

use phdnet::harness::{
    aggregate, read_csv, run_monte_carlo, run_scenario, AggregateRow, FilterKind, RunRow, ScenarioConfig,
};
use phdnet::Error;

fn small(runs: usize) -> ScenarioConfig {
    ScenarioConfig {
        runs,
        seed: 11,
        steps: 16,
        ..ScenarioConfig::default()
    }
}

#[test]
fn bundled_config_file_equals_the_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.toml");
    assert_eq!(ScenarioConfig::load(&path).unwrap(), ScenarioConfig::default());
}

#[test]
fn validation_names_the_offending_field() {
    let cases: [(&str, ScenarioConfig); 4] = [
        ("runs", ScenarioConfig { runs: 0, ..Default::default() }),
        ("p_detect", ScenarioConfig { p_detect: 1.5, ..Default::default() }),
        ("sigma_r2", ScenarioConfig { sigma_r2: -0.1, ..Default::default() }),
        ("filters", ScenarioConfig { filters: Vec::new(), ..Default::default() }),
    ];
    for (field, config) in cases {
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains(field), "{field}: {err}");
    }
}

#[test]
fn unknown_keys_and_missing_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "runs = 3\nsigma = 0.1\n").unwrap();
    assert!(ScenarioConfig::load(&path).unwrap_err().to_string().contains("sigma"));

    let missing = dir.path().join("nowhere.json");
    let config = ScenarioConfig {
        layout: Some(missing.clone()),
        ..small(1)
    };
    let err = run_monte_carlo(&config).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err:?}");
    assert!(err.to_string().contains("nowhere.json"));
}

#[test]
fn step_zero_has_no_ospa_and_births_leave_a_deficit() {
    for run in 0..3 {
        let record = run_scenario(&small(1), run).unwrap();
        assert_eq!(record.steps.len(), 17);
        let first = &record.steps[0];
        for f in &first.filters {
            assert_eq!(f.ospa, None);
            assert_eq!(f.count, None);
        }
        for kind in [FilterKind::Ms, FilterKind::Dpphdf] {
            for step in [9, 14] {
                let s = &record.steps[step];
                assert!(s.filter(kind).unwrap().count.unwrap() < s.true_count(), "{kind} run {run} step {step}");
            }
            // A target is never matched before the step after it entered.
            assert!(record.first_detection(kind, 2).is_none_or(|s| s >= 10));
            assert!(record.first_detection(kind, 3).is_none_or(|s| s >= 15));
        }
    }
}

#[test]
fn runs_are_reproducible() {
    let a = run_scenario(&small(1), 4).unwrap();
    let b = run_scenario(&small(1), 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, run_scenario(&small(1), 5).unwrap());
}

#[test]
fn results_do_not_depend_on_the_worker_count() {
    let one = run_monte_carlo(&ScenarioConfig { workers: 1, ..small(3) }).unwrap();
    let four = run_monte_carlo(&ScenarioConfig { workers: 4, ..small(3) }).unwrap();
    assert_eq!(one.records, four.records);
}

#[test]
fn single_run_aggregate_equals_the_run() {
    let mc = run_monte_carlo(&small(1)).unwrap();
    let rows = mc.rows();
    let agg = mc.aggregate();
    assert_eq!(agg.len(), rows.len());
    for (a, r) in agg.iter().zip(&rows) {
        assert_eq!(a.step, r.step);
        assert_eq!(a.true_count, r.true_count as f64);
        for kind in FilterKind::ALL {
            assert_eq!(a.count_mean(kind), r.count(kind).map(|c| c as f64));
            assert_eq!(a.ospa_mean(kind), r.ospa(kind));
        }
        assert_eq!(a.dpcrlb, r.dpcrlb);
        assert!(a.ms_count_se.is_none_or(|se| se == 0.0));
    }
}

#[test]
fn persisted_outputs_round_trip() {
    let mc = run_monte_carlo(&ScenarioConfig { trace: true, ..small(2) }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    mc.write(dir.path()).unwrap();

    let rows: Vec<RunRow> = read_csv(&dir.path().join("runs.csv")).unwrap();
    assert_eq!(rows, mc.rows());
    let stored: Vec<AggregateRow> = read_csv(&dir.path().join("aggregate.csv")).unwrap();
    assert_eq!(stored, aggregate(&rows, mc.config.sigma_r2));
    assert_eq!(stored, mc.aggregate());

    let trace = std::fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(trace.lines().next().unwrap()).unwrap();
    for key in ["step", "filter", "node", "phase", "mass", "particles", "scalars"] {
        assert!(first.get(key).is_some(), "{key}");
    }
    assert!(dir.path().join("bounds.csv").exists());
}
