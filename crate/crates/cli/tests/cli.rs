use std::path::Path;
use std::process::{Command, Output};

fn phdnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phdnet")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn config_path() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs/reference.toml")
        .display()
        .to_string()
}

const HEADER: &str = "run,step,true_count,ms_count,ms_ospa,ms_scalars,dpphdf_count,dpphdf_ospa,dpphdf_scalars,\
local_count,local_ospa,local_scalars,dpcrlb,dpcrlb_per_target,bound_nodes";

#[test]
fn simulate_writes_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = phdnet(&[
        "simulate",
        "--config",
        &config_path(),
        "--runs",
        "1",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let runs = std::fs::read_to_string(out.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 31);
    assert!(runs.starts_with(HEADER));
    for name in ["aggregate.csv", "bounds.csv"] {
        assert!(out.join(name).exists(), "{name}");
    }
}

#[test]
fn simulate_rejects_bad_input_with_usage_status() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no_such_layout.json");
    let o = phdnet(&["simulate", "--layout", missing.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no_such_layout.json"), "{}", stderr(&o));

    let o = phdnet(&["simulate", "--runs", "0", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("runs"), "{}", stderr(&o));

    let o = phdnet(&["simulate", "--filters", "ms,kalman"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_lists_every_flag() {
    let o = phdnet(&["simulate", "--help"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for flag in [
        "--config",
        "--filters",
        "--sigma-r2",
        "--runs",
        "--seed",
        "--steps",
        "--workers",
        "--layout",
        "--waypoints",
        "--trace",
        "--out",
    ] {
        assert!(text.contains(flag), "{flag}");
    }
    let o = phdnet(&["--help"]);
    for cmd in ["simulate", "evaluate", "plot", "bench"] {
        assert!(stdout(&o).contains(cmd), "{cmd}");
    }
}

fn aggregate_fixture(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("aggregate.csv");
    let mut text = String::from(
        "step,sigma_r2,true_count,ms_count_mean,ms_count_se,ms_ospa_mean,ms_ospa_se,ms_ospa_n,\
dpphdf_count_mean,dpphdf_count_se,dpphdf_ospa_mean,dpphdf_ospa_se,dpphdf_ospa_n,\
local_count_mean,local_count_se,local_ospa_mean,local_ospa_se,local_ospa_n,dpcrlb,dpcrlb_per_target\n",
    );
    text.push_str("0,0.1,1,,,,,0,,,,,0,,,,,0,0.2,0.2\n");
    for step in 1..=5 {
        let truth = if step < 3 { 1 } else { 2 };
        text.push_str(&format!(
            "{step},0.1,{truth},1.1,0.1,0.5,0.05,10,1.0,0.1,0.4,0.04,10,0.9,0.1,0.6,0.05,10,0.1,0.1\n"
        ));
    }
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn plots_are_deterministic_and_show_the_true_number() {
    let dir = tempfile::tempdir().unwrap();
    let input = aggregate_fixture(dir.path());
    let mut bytes = Vec::new();
    for name in ["a.svg", "b.svg"] {
        let svg = dir.path().join(name);
        let o = phdnet(&[
            "plot",
            "--figure",
            "estimated-count",
            "--input",
            input.to_str().unwrap(),
            "--output",
            svg.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(svg.with_extension("csv").exists());
        bytes.push(std::fs::read(&svg).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
    let text = String::from_utf8(bytes.pop().unwrap()).unwrap();
    assert!(text.starts_with("<svg") || text.starts_with("<?xml"));
    assert!(text.contains("true number"));

    for figure in ["ospa-vs-bound", "ospa-zoom"] {
        let svg = dir.path().join(format!("{figure}.svg"));
        let o = phdnet(&["plot", "--figure", figure, "--input", input.to_str().unwrap(), "--output", svg.to_str().unwrap()]);
        assert!(o.status.success(), "{figure}: {}", stderr(&o));
    }
}

#[test]
fn plot_rejects_empty_or_malformed_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("x.svg");
    let full = std::fs::read_to_string(aggregate_fixture(dir.path())).unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, full.lines().next().unwrap()).unwrap();
    let o = phdnet(&["plot", "--figure", "ospa-vs-bound", "--input", empty.to_str().unwrap(), "--output", svg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let missing_columns = dir.path().join("cols.csv");
    std::fs::write(&missing_columns, "step,sigma_r2\n1,0.1\n").unwrap();
    let o = phdnet(&[
        "plot",
        "--figure",
        "ospa-vs-bound",
        "--input",
        missing_columns.to_str().unwrap(),
        "--output",
        svg.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn evaluate_reports_intervals_and_violations() {
    let dir = tempfile::tempdir().unwrap();
    let perfect = dir.path().join("perfect.csv");
    let mut text = format!("{HEADER}\n0,0,1,,,0,,,0,,,0,0.1,0.1,2\n");
    for step in 1..=30 {
        text.push_str(&format!("0,{step},1,1,0,10,1,0,20,1,0,0,0.0,0.0,2\n"));
    }
    std::fs::write(&perfect, &text).unwrap();
    let report = dir.path().join("summary.txt");
    let o = phdnet(&["evaluate", "--input", perfect.to_str().unwrap(), "--sigma-r2", "0.1", "--out", report.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("[1,30]  ms") && text.contains("0.0000"));
    assert!(text.contains("bound dominance: ok"), "{text}");
    assert_eq!(std::fs::read_to_string(&report).unwrap(), text);

    let loose = dir.path().join("loose.csv");
    let mut text = format!("{HEADER}\n");
    for step in 1..=4 {
        text.push_str(&format!("0,{step},1,1,0.01,10,1,0.01,20,1,0.01,0,0.5,0.5,2\n"));
    }
    std::fs::write(&loose, &text).unwrap();
    let o = phdnet(&["evaluate", "--input", loose.to_str().unwrap(), "--sigma-r2", "0.1"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("VIOLATION step 1"), "{}", stdout(&o));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, format!("{HEADER}\n0,zero,1\n")).unwrap();
    let o = phdnet(&["evaluate", "--input", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
