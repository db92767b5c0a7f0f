//! Scenario configuration, the seeded Monte Carlo engine, aggregation,
//! persistence and complexity micro-benchmarks.
//!
//! Run `r` under master seed `m` draws all randomness from
//! [`StreamFactory::new(run_seed(m, r))`](crate::rng::run_seed); runs are
//! executed on a rayon pool of configurable width and collected in run order,
//! so outputs do not depend on the width.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{precluster_measurements, KmeansInit};
use crate::crlb::{BoundParams, BoundTracker};
use crate::dynamics::{active_targets, build_model, scenario_tracks, ScenarioSource, Track};
use crate::filters::{DiffusionPphdf, Exchange, FilterParams, MsPphdf, NeighborOrder, PhaseEvent, Tracker};
use crate::metrics::{matched_truth, scaled_squared_ospa, OspaParams};
use crate::network::Topology;
use crate::phd::{
    weight_update, BirthParams, DetectionRegion, LabeledMeasurement, Particle, ParticleSet, RougheningParams,
    SetKind,
};
use crate::rng::{run_seed, StreamFactory};
use crate::sensing::{sense_network, SensorParams};
use crate::{Error, Position, Result, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Ms,
    Dpphdf,
    Local,
}

impl FilterKind {
    pub const ALL: [FilterKind; 3] = [FilterKind::Ms, FilterKind::Dpphdf, FilterKind::Local];

    pub fn as_str(&self) -> &'static str {
        match self {
            FilterKind::Ms => "ms",
            FilterKind::Dpphdf => "dpphdf",
            FilterKind::Local => "local",
        }
    }

    fn tracker(&self, nodes: usize) -> Box<dyn Tracker> {
        match self {
            FilterKind::Ms => Box::new(MsPphdf::new()),
            FilterKind::Dpphdf => Box::new(DiffusionPphdf::new(nodes, Exchange::Diffusion)),
            FilterKind::Local => Box::new(DiffusionPphdf::local(nodes)),
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ms" => Ok(FilterKind::Ms),
            "dpphdf" => Ok(FilterKind::Dpphdf),
            "local" => Ok(FilterKind::Local),
            other => Err(Error::invalid(
                "filters",
                format!("unknown filter `{other}` (expected ms, dpphdf or local)"),
            )),
        }
    }
}

/// Everything a simulation needs. Field names are the keys of the TOML
/// configuration file; omitted keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Sampling interval (s).
    pub dt: f64,
    /// Number of sensor nodes; must match the layout.
    pub nodes: usize,
    /// Measurement noise variance (m²).
    pub sigma_r2: f64,
    /// Process noise variance (m²).
    pub sigma_q2: f64,
    pub r_com: f64,
    pub r_sen: f64,
    /// Roughening interval length.
    pub e_c: f64,
    /// Roughening tuning constant.
    pub k_roughen: f64,
    pub particles_per_target: usize,
    pub p_birth: f64,
    pub p_detect: f64,
    pub p_survive: f64,
    /// Mean clutter count per node and step.
    pub lambda_fa: f64,
    pub ospa_c: f64,
    pub ospa_p: f64,
    /// Node layout JSON; the bundled reference layout when absent.
    pub layout: Option<PathBuf>,
    /// Waypoint JSON; the bundled reference scenario when absent.
    pub waypoints: Option<PathBuf>,
    /// Last step index; steps `0..=steps` are simulated.
    pub steps: usize,
    pub runs: usize,
    pub seed: u64,
    pub filters: Vec<FilterKind>,
    /// Worker-pool width; 0 picks the number of CPUs.
    pub workers: usize,
    /// Write the phase trace of run 0.
    pub trace: bool,
    /// Single-linkage cut for state extraction in the diffusion filters (m).
    pub extraction_cut: f64,
    /// Pre-clustering gate in units of the measurement standard deviation.
    pub precluster_gate_sigmas: f64,
    /// Single-linkage cut for fusing node estimates (m).
    pub fusion_cut: f64,
    /// Birth position standard deviation (m); `sqrt(sigma_r2)` when absent.
    pub birth_position_std: Option<f64>,
    /// Birth velocity standard deviation (m/s).
    pub birth_velocity_std: f64,
    /// Give every birth candidate mass `p_birth` instead of sharing it.
    pub per_candidate_birth_mass: bool,
    /// Extracted clusters lighter than this produce no estimate.
    pub min_cluster_mass: f64,
    pub weighted_centroids: bool,
    /// Center seeding of the centralized filter's k-means extraction.
    pub kmeans_init: KmeansInit,
    /// Order of the per-neighbor weight updates in the diffusion filter.
    pub neighbor_order: NeighborOrder,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            dt: 1.0,
            nodes: 30,
            sigma_r2: 0.1,
            sigma_q2: 0.01,
            r_com: 12.0,
            r_sen: 6.0,
            e_c: 6.0,
            k_roughen: 0.2,
            particles_per_target: 500,
            p_birth: 0.8,
            p_detect: 0.95,
            p_survive: 0.98,
            lambda_fa: 0.1,
            ospa_c: 2.0,
            ospa_p: 2.0,
            layout: None,
            waypoints: None,
            steps: 30,
            runs: 100,
            seed: 1,
            filters: FilterKind::ALL.to_vec(),
            workers: 0,
            trace: false,
            extraction_cut: 4.0,
            precluster_gate_sigmas: 6.0,
            fusion_cut: 2.0,
            birth_position_std: None,
            birth_velocity_std: 1.0,
            per_candidate_birth_mass: false,
            min_cluster_mass: 0.5,
            weighted_centroids: true,
            kmeans_init: KmeansInit::DistanceSquared,
            neighbor_order: NeighborOrder::Ascending,
        }
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be a finite value > 0, got {v}")))
    }
}

fn probability(field: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must lie in [0, 1], got {v}")))
    }
}

impl ScenarioConfig {
    /// Reads a TOML configuration file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ScenarioConfig = toml::from_str(&text).map_err(|e| Error::MalformedFile {
            kind: "config",
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        // Relative input paths are resolved against the config file.
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: Option<PathBuf>| p.map(|p| if p.is_relative() { base.join(p) } else { p });
        Ok(ScenarioConfig {
            layout: resolve(cfg.layout),
            waypoints: resolve(cfg.waypoints),
            ..cfg
        })
    }

    pub fn validate(&self) -> Result<()> {
        positive("dt", self.dt)?;
        positive("sigma_r2", self.sigma_r2)?;
        if !(self.sigma_q2 >= 0.0) {
            return Err(Error::invalid("sigma_q2", "must be >= 0"));
        }
        positive("r_sen", self.r_sen)?;
        positive("r_com", self.r_com)?;
        positive("e_c", self.e_c)?;
        if !(self.k_roughen >= 0.0) {
            return Err(Error::invalid("k_roughen", "must be >= 0"));
        }
        if self.particles_per_target == 0 {
            return Err(Error::invalid("particles_per_target", "must be >= 1"));
        }
        probability("p_birth", self.p_birth)?;
        probability("p_detect", self.p_detect)?;
        probability("p_survive", self.p_survive)?;
        if !(self.lambda_fa >= 0.0) {
            return Err(Error::invalid("lambda_fa", "must be >= 0"));
        }
        OspaParams {
            c: self.ospa_c,
            p: self.ospa_p,
        }
        .validate()?;
        if self.runs == 0 {
            return Err(Error::invalid("runs", "must be >= 1"));
        }
        if self.nodes == 0 {
            return Err(Error::invalid("nodes", "must be >= 1"));
        }
        if self.filters.is_empty() {
            return Err(Error::invalid("filters", "select at least one filter"));
        }
        positive("extraction_cut", self.extraction_cut)?;
        positive("precluster_gate_sigmas", self.precluster_gate_sigmas)?;
        positive("fusion_cut", self.fusion_cut)?;
        if let Some(s) = self.birth_position_std {
            positive("birth_position_std", s)?;
        }
        positive("birth_velocity_std", self.birth_velocity_std)?;
        if !(self.min_cluster_mass >= 0.0) {
            return Err(Error::invalid("min_cluster_mass", "must be >= 0"));
        }
        Ok(())
    }

    pub fn ospa(&self) -> OspaParams {
        OspaParams {
            c: self.ospa_c,
            p: self.ospa_p,
        }
    }

    pub fn sensor(&self) -> SensorParams {
        SensorParams {
            sigma_r2: self.sigma_r2,
            p_detect: self.p_detect,
            clutter_rate: self.lambda_fa,
        }
    }

    pub fn filter_params(&self) -> Result<FilterParams> {
        Ok(FilterParams {
            model: build_model(self.dt, self.sigma_q2)?,
            p_survive: self.p_survive,
            p_detect: self.p_detect,
            clutter_rate: self.lambda_fa,
            sigma_r2: self.sigma_r2,
            roughening: RougheningParams {
                k: self.k_roughen,
                e_c: self.e_c,
            },
            birth: BirthParams {
                particles_per_target: self.particles_per_target,
                p_birth: self.p_birth,
                position_std: self.birth_position_std.unwrap_or(self.sigma_r2.sqrt()),
                velocity_std: self.birth_velocity_std,
                per_candidate_mass: self.per_candidate_birth_mass,
            },
            extraction_cut: self.extraction_cut,
            precluster_gate: self.precluster_gate_sigmas * self.sigma_r2.sqrt(),
            fusion_cut: self.fusion_cut,
            min_cluster_mass: self.min_cluster_mass,
            weighted_centroids: self.weighted_centroids,
            kmeans_init: self.kmeans_init,
            neighbor_order: self.neighbor_order,
        })
    }

    /// Sensor layout with the configured radii.
    pub fn topology(&self) -> Result<Topology> {
        let base = match &self.layout {
            Some(p) => Topology::from_layout_file(p)?,
            None => Topology::reference(),
        };
        if base.len() != self.nodes {
            return Err(Error::invalid(
                "nodes",
                format!("config says {} but the layout has {}", self.nodes, base.len()),
            ));
        }
        base.with_radii(self.r_sen, self.r_com)
    }

    pub fn tracks(&self) -> Result<Vec<Track>> {
        match &self.waypoints {
            Some(p) => scenario_tracks(&ScenarioSource::File(p.clone())),
            None => scenario_tracks(&ScenarioSource::Reference),
        }
    }
}

/// Output of one filter at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterStep {
    pub kind: FilterKind,
    /// Number of network estimates; absent before the filter holds a PHD.
    pub count: Option<usize>,
    /// Scaled squared OSPA; absent when no estimate set exists or both sets
    /// are empty.
    pub ospa: Option<f64>,
    pub scalars: u64,
    pub estimates: Vec<StateVector>,
    /// Ids of true targets matched by an estimate closer than the cut-off.
    pub detected: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub truth: Vec<(u32, Position)>,
    pub filters: Vec<FilterStep>,
    pub dpcrlb: Option<f64>,
    /// Network average of per-node mean per-target bounds.
    pub dpcrlb_per_target: Option<f64>,
    /// Largest per-target bound over all nodes.
    pub max_target_bound: Option<f64>,
    pub node_bounds: Vec<Option<f64>>,
}

impl StepRecord {
    pub fn true_count(&self) -> usize {
        self.truth.len()
    }

    pub fn filter(&self, kind: FilterKind) -> Option<&FilterStep> {
        self.filters.iter().find(|f| f.kind == kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub events: Vec<PhaseEvent>,
}

impl RunRecord {
    /// First step at which `target` is matched by `kind`'s estimates.
    pub fn first_detection(&self, kind: FilterKind, target: u32) -> Option<usize> {
        self.steps
            .iter()
            .find(|s| s.filter(kind).is_some_and(|f| f.detected.contains(&target)))
            .map(|s| s.step)
    }

    pub fn rows(&self) -> Vec<RunRow> {
        self.steps
            .iter()
            .map(|s| {
                let cell = |k: FilterKind| s.filter(k);
                let count = |k| cell(k).and_then(|f: &FilterStep| f.count);
                let ospa = |k| cell(k).and_then(|f: &FilterStep| f.ospa);
                let scalars = |k| cell(k).map(|f: &FilterStep| f.scalars);
                RunRow {
                    run: self.run,
                    step: s.step,
                    true_count: s.true_count(),
                    ms_count: count(FilterKind::Ms),
                    ms_ospa: ospa(FilterKind::Ms),
                    ms_scalars: scalars(FilterKind::Ms),
                    dpphdf_count: count(FilterKind::Dpphdf),
                    dpphdf_ospa: ospa(FilterKind::Dpphdf),
                    dpphdf_scalars: scalars(FilterKind::Dpphdf),
                    local_count: count(FilterKind::Local),
                    local_ospa: ospa(FilterKind::Local),
                    local_scalars: scalars(FilterKind::Local),
                    dpcrlb: s.dpcrlb,
                    dpcrlb_per_target: s.dpcrlb_per_target,
                    bound_nodes: s.node_bounds.iter().flatten().count(),
                }
            })
            .collect()
    }
}

/// One line of `runs.csv`. Empty cells are absent values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub run: usize,
    pub step: usize,
    pub true_count: usize,
    pub ms_count: Option<usize>,
    pub ms_ospa: Option<f64>,
    pub ms_scalars: Option<u64>,
    pub dpphdf_count: Option<usize>,
    pub dpphdf_ospa: Option<f64>,
    pub dpphdf_scalars: Option<u64>,
    pub local_count: Option<usize>,
    pub local_ospa: Option<f64>,
    pub local_scalars: Option<u64>,
    pub dpcrlb: Option<f64>,
    pub dpcrlb_per_target: Option<f64>,
    pub bound_nodes: usize,
}

impl RunRow {
    pub fn count(&self, kind: FilterKind) -> Option<usize> {
        match kind {
            FilterKind::Ms => self.ms_count,
            FilterKind::Dpphdf => self.dpphdf_count,
            FilterKind::Local => self.local_count,
        }
    }

    pub fn ospa(&self, kind: FilterKind) -> Option<f64> {
        match kind {
            FilterKind::Ms => self.ms_ospa,
            FilterKind::Dpphdf => self.dpphdf_ospa,
            FilterKind::Local => self.local_ospa,
        }
    }

    pub fn scalars(&self, kind: FilterKind) -> Option<u64> {
        match kind {
            FilterKind::Ms => self.ms_scalars,
            FilterKind::Dpphdf => self.dpphdf_scalars,
            FilterKind::Local => self.local_scalars,
        }
    }
}

/// Simulates one run: truth, sensing, every selected filter, OSPA and bounds
/// for steps `0..=config.steps`.
pub fn run_scenario(config: &ScenarioConfig, run: usize) -> Result<RunRecord> {
    config.validate()?;
    let topology = config.topology()?;
    let tracks = config.tracks()?;
    let params = config.filter_params()?;
    let sensor = config.sensor();
    let ospa = config.ospa();
    let seed = run_seed(config.seed, run as u64);
    let streams = StreamFactory::new(seed);
    let trace = config.trace && run == 0;

    let mut trackers: Vec<(FilterKind, Box<dyn Tracker>)> =
        config.filters.iter().map(|k| (*k, k.tracker(topology.len()))).collect();
    let mut bounds = BoundTracker::new(
        topology.len(),
        BoundParams {
            model: params.model,
            p_detect: config.p_detect,
            sigma_r2: config.sigma_r2,
            birth_velocity_var: config.birth_velocity_std.powi(2),
        },
    );

    let mut steps = Vec::with_capacity(config.steps + 1);
    let mut events = Vec::new();
    for step in 0..=config.steps {
        let targets = active_targets(&tracks, step);
        let truth: Vec<(u32, Position)> = targets.iter().map(|t| (t.id, t.state.position())).collect();
        let truth_pos: Vec<Position> = truth.iter().map(|(_, p)| *p).collect();
        let measurements = sense_network(&topology, &targets, &sensor, step, &streams);

        let mut filters = Vec::with_capacity(trackers.len());
        for (kind, tracker) in trackers.iter_mut() {
            let mut report = tracker.step(&topology, &measurements, &params, &streams, trace)?;
            events.append(&mut report.events);
            let estimates = report.estimates.clone().unwrap_or_default();
            let est_pos: Vec<Position> = estimates.iter().map(|s| Position::new(s[0], s[1])).collect();
            let score = match &report.estimates {
                Some(e) if !(e.is_empty() && truth.is_empty()) => Some(scaled_squared_ospa(&truth_pos, &est_pos, &ospa)),
                _ => None,
            };
            let detected = matched_truth(&truth_pos, &est_pos, &ospa)
                .into_iter()
                .map(|i| truth[i].0)
                .collect();
            filters.push(FilterStep {
                kind: *kind,
                count: report.count(),
                ospa: score,
                scalars: report.scalars(),
                estimates,
                detected,
            });
        }

        let b = bounds.step(&topology, &targets)?;
        let max_target_bound = b
            .target_bounds
            .iter()
            .flatten()
            .map(|(_, v)| *v)
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
        steps.push(StepRecord {
            step,
            truth,
            filters,
            dpcrlb: b.dpcrlb,
            dpcrlb_per_target: b.dpcrlb_per_target,
            max_target_bound,
            node_bounds: b.node_bounds,
        });
    }
    Ok(RunRecord {
        run,
        seed,
        steps,
        events,
    })
}

/// Per-step Monte Carlo statistics. Means and standard errors are over runs in
/// which the value is defined; `*_n` counts those runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub step: usize,
    pub sigma_r2: f64,
    pub true_count: f64,
    pub ms_count_mean: Option<f64>,
    pub ms_count_se: Option<f64>,
    pub ms_ospa_mean: Option<f64>,
    pub ms_ospa_se: Option<f64>,
    pub ms_ospa_n: usize,
    pub dpphdf_count_mean: Option<f64>,
    pub dpphdf_count_se: Option<f64>,
    pub dpphdf_ospa_mean: Option<f64>,
    pub dpphdf_ospa_se: Option<f64>,
    pub dpphdf_ospa_n: usize,
    pub local_count_mean: Option<f64>,
    pub local_count_se: Option<f64>,
    pub local_ospa_mean: Option<f64>,
    pub local_ospa_se: Option<f64>,
    pub local_ospa_n: usize,
    pub dpcrlb: Option<f64>,
    pub dpcrlb_per_target: Option<f64>,
}

impl AggregateRow {
    pub fn count_mean(&self, kind: FilterKind) -> Option<f64> {
        match kind {
            FilterKind::Ms => self.ms_count_mean,
            FilterKind::Dpphdf => self.dpphdf_count_mean,
            FilterKind::Local => self.local_count_mean,
        }
    }

    pub fn ospa_mean(&self, kind: FilterKind) -> Option<f64> {
        match kind {
            FilterKind::Ms => self.ms_ospa_mean,
            FilterKind::Dpphdf => self.dpphdf_ospa_mean,
            FilterKind::Local => self.local_ospa_mean,
        }
    }
}

/// Mean and standard error of the mean (zero for a single value).
pub fn mean_se(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (Some(mean), Some(0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some((var / n).sqrt()))
}

/// Aggregates `runs.csv` rows per step, in ascending step order.
pub fn aggregate(rows: &[RunRow], sigma_r2: f64) -> Vec<AggregateRow> {
    let mut steps: Vec<usize> = rows.iter().map(|r| r.step).collect();
    steps.sort_unstable();
    steps.dedup();
    steps
        .into_iter()
        .map(|step| {
            let at: Vec<&RunRow> = rows.iter().filter(|r| r.step == step).collect();
            let counts = |k: FilterKind| -> Vec<f64> { at.iter().filter_map(|r| r.count(k)).map(|c| c as f64).collect() };
            let ospas = |k: FilterKind| -> Vec<f64> { at.iter().filter_map(|r| r.ospa(k)).collect() };
            let (ms_count_mean, ms_count_se) = mean_se(&counts(FilterKind::Ms));
            let (ms_ospa_mean, ms_ospa_se) = mean_se(&ospas(FilterKind::Ms));
            let (dpphdf_count_mean, dpphdf_count_se) = mean_se(&counts(FilterKind::Dpphdf));
            let (dpphdf_ospa_mean, dpphdf_ospa_se) = mean_se(&ospas(FilterKind::Dpphdf));
            let (local_count_mean, local_count_se) = mean_se(&counts(FilterKind::Local));
            let (local_ospa_mean, local_ospa_se) = mean_se(&ospas(FilterKind::Local));
            let truth: Vec<f64> = at.iter().map(|r| r.true_count as f64).collect();
            let bound: Vec<f64> = at.iter().filter_map(|r| r.dpcrlb).collect();
            let per_target: Vec<f64> = at.iter().filter_map(|r| r.dpcrlb_per_target).collect();
            AggregateRow {
                step,
                sigma_r2,
                true_count: mean_se(&truth).0.unwrap_or(0.0),
                ms_count_mean,
                ms_count_se,
                ms_ospa_mean,
                ms_ospa_se,
                ms_ospa_n: ospas(FilterKind::Ms).len(),
                dpphdf_count_mean,
                dpphdf_count_se,
                dpphdf_ospa_mean,
                dpphdf_ospa_se,
                dpphdf_ospa_n: ospas(FilterKind::Dpphdf).len(),
                local_count_mean,
                local_count_se,
                local_ospa_mean,
                local_ospa_se,
                local_ospa_n: ospas(FilterKind::Local).len(),
                dpcrlb: mean_se(&bound).0,
                dpcrlb_per_target: mean_se(&per_target).0,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarlo {
    pub config: ScenarioConfig,
    pub records: Vec<RunRecord>,
}

impl MonteCarlo {
    pub fn rows(&self) -> Vec<RunRow> {
        self.records.iter().flat_map(RunRecord::rows).collect()
    }

    pub fn aggregate(&self) -> Vec<AggregateRow> {
        aggregate(&self.rows(), self.config.sigma_r2)
    }

    /// Writes `runs.csv`, `aggregate.csv`, `bounds.csv` and, if run 0 was
    /// traced, `trace.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_csv(&dir.join("runs.csv"), &self.rows())?;
        write_csv(&dir.join("aggregate.csv"), &self.aggregate())?;
        write_csv(&dir.join("bounds.csv"), &self.bound_rows())?;
        if let Some(first) = self.records.first().filter(|r| !r.events.is_empty()) {
            let path = dir.join("trace.jsonl");
            let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = BufWriter::new(file);
            for e in &first.events {
                serde_json::to_writer(&mut w, e)?;
                w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    /// Per-node bounds; they depend only on the truth, so run 0 suffices.
    pub fn bound_rows(&self) -> Vec<BoundRow> {
        let Some(first) = self.records.first() else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for s in &first.steps {
            let members = s.node_bounds.iter().flatten().count();
            for (i, b) in s.node_bounds.iter().enumerate() {
                if let (Some(bound), Some(d)) = (b, s.dpcrlb) {
                    out.push(BoundRow {
                        step: s.step,
                        node: i + 1,
                        bound: *bound,
                        members,
                        dpcrlb: d,
                    });
                }
            }
        }
        out
    }
}

/// One line of `bounds.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub step: usize,
    pub node: usize,
    pub bound: f64,
    /// Number of nodes with a bound at this step.
    pub members: usize,
    pub dpcrlb: f64,
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads any of the CSV outputs back.
pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    r.deserialize()
        .map(|row| {
            row.map_err(|e| Error::MalformedFile {
                kind: "csv",
                path: path.to_path_buf(),
                reason: e.to_string(),
            })
        })
        .collect()
}

/// Runs `config.runs` seeded runs on a pool of `config.workers` threads.
pub fn run_monte_carlo(config: &ScenarioConfig) -> Result<MonteCarlo> {
    config.validate()?;
    // Surface layout or waypoint errors before spawning work.
    config.topology()?;
    config.tracks()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::invalid("workers", e.to_string()))?;
    let records = pool.install(|| {
        (0..config.runs)
            .into_par_iter()
            .map(|r| run_scenario(config, r))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(MonteCarlo {
        config: config.clone(),
        records,
    })
}

/// One timing of [`bench_complexity`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub phase: String,
    pub variable: String,
    pub value: usize,
    /// Minimum wall time over the repetitions.
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchSpec {
    pub particles_per_target: [usize; 2],
    pub measurement_counts: [usize; 2],
    pub neighborhood_sizes: [usize; 2],
    pub targets: usize,
    pub repetitions: usize,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            particles_per_target: [500, 1000],
            measurement_counts: [50, 100],
            neighborhood_sizes: [2, 4],
            targets: 3,
            repetitions: 15,
        }
    }
}

fn time_min(reps: usize, mut f: impl FnMut()) -> f64 {
    (0..reps.max(1))
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Deterministic pseudo-random points in a 40 m square.
fn bench_points(n: usize, salt: u64) -> Vec<Position> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(salt);
    (0..n)
        .map(|_| Position::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)))
        .collect()
}

fn bench_set(n: usize) -> ParticleSet {
    let pts = bench_points(n, 17);
    ParticleSet::new(
        SetKind::Persistent,
        pts.iter()
            .map(|p| Particle::new(StateVector::new(p.x, p.y, 0.0, 0.0), 1.0 / n as f64))
            .collect(),
    )
}

/// Wall time of the weighting phase against the particle count, measurement
/// count and neighborhood size, and of measurement pre-clustering against the
/// measurement count.
pub fn bench_complexity(spec: &BenchSpec) -> Vec<BenchRow> {
    let mut rows = Vec::new();
    let labeled = |n: usize| -> Vec<LabeledMeasurement> {
        bench_points(n, 29)
            .into_iter()
            .map(|z| LabeledMeasurement::new(z, 1, 0.01))
            .collect()
    };
    let weigh = |set: &ParticleSet, meas: &[LabeledMeasurement], neighbors: usize| {
        let mut s = set.clone();
        for _ in 0..neighbors {
            s = weight_update(&s, meas, 0.95, 0.1, DetectionRegion::Everywhere).0;
        }
        std::hint::black_box(s);
    };
    let base_meas = labeled(20);
    for &np in &spec.particles_per_target {
        let set = bench_set(np * spec.targets);
        let secs = time_min(spec.repetitions, || weigh(&set, &base_meas, 1));
        rows.push(BenchRow {
            phase: "weighting".into(),
            variable: "particles_per_target".into(),
            value: np,
            seconds: secs,
        });
    }
    let set = bench_set(spec.particles_per_target[0] * spec.targets);
    for &m in &spec.measurement_counts {
        let meas = labeled(m);
        let secs = time_min(spec.repetitions, || weigh(&set, &meas, 1));
        rows.push(BenchRow {
            phase: "weighting".into(),
            variable: "measurements".into(),
            value: m,
            seconds: secs,
        });
    }
    for &nb in &spec.neighborhood_sizes {
        let secs = time_min(spec.repetitions, || weigh(&set, &base_meas, nb));
        rows.push(BenchRow {
            phase: "weighting".into(),
            variable: "neighborhood".into(),
            value: nb,
            seconds: secs,
        });
    }
    let empty: Vec<LabeledMeasurement> = Vec::new();
    let secs = time_min(spec.repetitions, || weigh(&set, &empty, 1));
    rows.push(BenchRow {
        phase: "weighting".into(),
        variable: "measurements".into(),
        value: 0,
        seconds: secs,
    });
    for &m in &spec.measurement_counts {
        let pts = bench_points(m, 41);
        let secs = time_min(spec.repetitions, || {
            std::hint::black_box(precluster_measurements(&pts, 0.5).expect("positive gate"));
        });
        rows.push(BenchRow {
            phase: "precluster".into(),
            variable: "measurements".into(),
            value: m,
            seconds: secs,
        });
    }
    rows
}

/// Ratio of the second to the first timing of `(phase, variable)`, ignoring
/// zero-valued sweep points.
pub fn bench_ratio(rows: &[BenchRow], phase: &str, variable: &str) -> Option<f64> {
    let t: Vec<&BenchRow> = rows
        .iter()
        .filter(|r| r.phase == phase && r.variable == variable && r.value > 0)
        .collect();
    (t.len() >= 2 && t[0].seconds > 0.0).then(|| t[1].seconds / t[0].seconds)
}

pub fn write_bench(path: &Path, rows: &[BenchRow]) -> Result<()> {
    write_csv(path, rows)
}
