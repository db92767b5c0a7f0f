//! `phdnet`: simulate, evaluate, plot and benchmark the tracking filters.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 runtime failure.

mod evaluate;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use phdnet::harness::{
    bench_complexity, bench_ratio, read_csv, run_monte_carlo, write_bench, AggregateRow, BenchSpec, FilterKind,
    RunRow, ScenarioConfig,
};

#[derive(Parser, Debug)]
#[command(name = "phdnet", version, about = "Particle PHD multi-target tracking in sensor networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the Monte Carlo simulation and write runs.csv, aggregate.csv and bounds.csv.
    Simulate(SimulateArgs),
    /// Summarize a runs.csv: interval means and bound-dominance checks.
    Evaluate(EvaluateArgs),
    /// Render a figure from an aggregate.csv as SVG (plus its backing CSV).
    Plot(PlotArgs),
    /// Time the weighting and pre-clustering phases and check their growth.
    Bench(BenchArgs),
}

#[derive(clap::Args, Debug)]
struct SimulateArgs {
    /// TOML configuration file; defaults apply to omitted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated filters to run (ms, dpphdf, local).
    #[arg(long, value_delimiter = ',')]
    filters: Option<Vec<FilterKind>>,
    /// Measurement noise variance (m²).
    #[arg(long = "sigma-r2")]
    sigma_r2: Option<f64>,
    /// Number of Monte Carlo runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Last simulated step (steps 0..=N).
    #[arg(long)]
    steps: Option<usize>,
    /// Worker threads; 0 uses all CPUs.
    #[arg(long)]
    workers: Option<usize>,
    /// Node layout JSON file.
    #[arg(long)]
    layout: Option<PathBuf>,
    /// Target waypoint JSON file.
    #[arg(long)]
    waypoints: Option<PathBuf>,
    /// Write the phase trace of run 0 to trace.jsonl.
    #[arg(long)]
    trace: bool,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(clap::Args, Debug)]
struct EvaluateArgs {
    /// Per-run CSV written by `simulate`.
    #[arg(long)]
    input: PathBuf,
    /// Measurement noise variance for the per-target bound check.
    #[arg(long = "sigma-r2")]
    sigma_r2: Option<f64>,
    /// Relative slack of the bound-dominance check.
    #[arg(long, default_value_t = 0.1)]
    slack: f64,
    /// Also write the summary to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Figure {
    OspaVsBound,
    EstimatedCount,
    OspaZoom,
}

#[derive(clap::Args, Debug)]
struct PlotArgs {
    /// Which figure to draw.
    #[arg(long, value_enum)]
    figure: Figure,
    /// Aggregate CSV written by `simulate`.
    #[arg(long)]
    input: PathBuf,
    /// SVG output path; the backing CSV is written next to it.
    #[arg(long)]
    output: PathBuf,
}

#[derive(clap::Args, Debug)]
struct BenchArgs {
    /// Repetitions per timing (the minimum is kept).
    #[arg(long, default_value_t = 15)]
    reps: usize,
    /// CSV output path.
    #[arg(long, default_value = "bench.csv")]
    out: PathBuf,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 2,
        message: e.to_string(),
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 3,
        message: e.to_string(),
    }
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let mut cfg = match &args.config {
        Some(p) => ScenarioConfig::load(p).map_err(usage)?,
        None => ScenarioConfig::default(),
    };
    if let Some(f) = args.filters {
        cfg.filters = f;
    }
    if let Some(v) = args.sigma_r2 {
        cfg.sigma_r2 = v;
    }
    if let Some(v) = args.runs {
        cfg.runs = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.steps {
        cfg.steps = v;
    }
    if let Some(v) = args.workers {
        cfg.workers = v;
    }
    if let Some(v) = args.layout {
        cfg.layout = Some(v);
    }
    if let Some(v) = args.waypoints {
        cfg.waypoints = Some(v);
    }
    cfg.trace |= args.trace;
    cfg.validate().map_err(usage)?;
    cfg.topology().map_err(usage)?;
    cfg.tracks().map_err(usage)?;

    let mc = run_monte_carlo(&cfg).map_err(runtime)?;
    mc.write(&args.out).map_err(runtime)?;
    println!(
        "{} runs x {} steps written to {}",
        cfg.runs,
        cfg.steps + 1,
        args.out.display()
    );
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<(), Failure> {
    let rows: Vec<RunRow> = read_csv(&args.input).map_err(usage)?;
    if rows.is_empty() {
        return Err(usage(format!("{} holds no rows", args.input.display())));
    }
    let text = evaluate::summarize(&rows, args.sigma_r2, args.slack);
    print!("{text}");
    if let Some(out) = args.out {
        std::fs::write(&out, &text).map_err(|e| runtime(format!("cannot write {}: {e}", out.display())))?;
    }
    Ok(())
}

fn plot(args: PlotArgs) -> Result<(), Failure> {
    let rows: Vec<AggregateRow> = read_csv(&args.input).map_err(usage)?;
    if rows.is_empty() {
        return Err(usage(format!("{} holds no rows", args.input.display())));
    }
    let figure = plot::figure(args.figure, &rows);
    std::fs::write(&args.output, figure.svg)
        .map_err(|e| runtime(format!("cannot write {}: {e}", args.output.display())))?;
    let csv_path = args.output.with_extension("csv");
    std::fs::write(&csv_path, figure.csv).map_err(|e| runtime(format!("cannot write {}: {e}", csv_path.display())))?;
    println!("wrote {} and {}", args.output.display(), csv_path.display());
    Ok(())
}

fn bench(args: BenchArgs) -> Result<(), Failure> {
    let spec = BenchSpec {
        repetitions: args.reps,
        ..BenchSpec::default()
    };
    let rows = bench_complexity(&spec);
    write_bench(&args.out, &rows).map_err(runtime)?;
    for r in &rows {
        println!("{:<11} {:<21} {:>6} {:.3e} s", r.phase, r.variable, r.value, r.seconds);
    }
    let show = |name: &str, ratio: Option<f64>| match ratio {
        Some(v) => println!("{name}: {v:.2}"),
        None => println!("{name}: n/a"),
    };
    show(
        "weighting ratio (particles x2)",
        bench_ratio(&rows, "weighting", "particles_per_target"),
    );
    show(
        "pre-clustering ratio (measurements x2)",
        bench_ratio(&rows, "precluster", "measurements"),
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Plot(a) => plot(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

