//! Filter step orchestration: the centralized multi-sensor particle PHD filter
//! (MS-PPHDF), the diffusion particle PHD filter (D-PPHDF) with its two
//! broadcast rounds, and a local-only baseline without communication.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::clustering::{kmeans_with_init, precluster_measurements, single_linkage, KmeansInit, Linkage};
use crate::dynamics::ModelMatrices;
use crate::network::{NodeId, Topology};
use crate::phd::{
    adaptive_birth, claimed_measurements, estimate_target_count, merge, predict, resample, roughen,
    weight_update, BirthParams, DetectionRegion, LabeledMeasurement, ParticleSet, RougheningParams,
    SetKind,
};
use crate::rng::{Phase, StreamFactory};
use crate::sensing::{clutter_density, MeasurementSet};
use crate::{Position, Result, StateVector};

/// Scalars broadcast per measurement (x, y).
pub const SCALARS_PER_MEASUREMENT: u64 = 2;
/// Scalars broadcast per particle (four state components and the weight).
pub const SCALARS_PER_PARTICLE: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterParams {
    pub model: ModelMatrices,
    pub p_survive: f64,
    pub p_detect: f64,
    /// Mean clutter count per node and step.
    pub clutter_rate: f64,
    pub sigma_r2: f64,
    pub roughening: RougheningParams,
    pub birth: BirthParams,
    /// Single-linkage cut for state extraction (m).
    pub extraction_cut: f64,
    /// Single-linkage gate of the measurement pre-clustering (m).
    pub precluster_gate: f64,
    /// Single-linkage cut for fusing node estimates (m).
    pub fusion_cut: f64,
    /// Extracted clusters lighter than this produce no estimate.
    pub min_cluster_mass: f64,
    pub weighted_centroids: bool,
    /// Initialization of the centralized filter's k-means extraction.
    pub kmeans_init: KmeansInit,
    /// Order of the per-neighbor updates of the diffusion filter.
    pub neighbor_order: NeighborOrder,
}

/// Order in which a node applies the per-neighbor weight updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborOrder {
    /// Ascending node id.
    #[default]
    Ascending,
    /// Neighbors without measurements first, each group in ascending id.
    SilentFirst,
}

/// One entry of the optional phase trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseEvent {
    pub step: usize,
    pub filter: &'static str,
    /// Node id, 0 for the central filter.
    pub node: NodeId,
    pub phase: &'static str,
    pub mass: f64,
    pub particles: usize,
    pub scalars: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepReport {
    pub step: usize,
    /// Network estimate set; absent while the filter holds no PHD yet.
    pub estimates: Option<Vec<StateVector>>,
    /// Estimates of every node that produced any.
    pub node_estimates: Vec<(NodeId, Vec<StateVector>)>,
    /// Estimated target count per node (`N̂` of the central filter for MS).
    pub node_counts: Vec<usize>,
    pub round1_scalars: u64,
    pub round2_scalars: u64,
    pub events: Vec<PhaseEvent>,
}

impl StepReport {
    pub fn count(&self) -> Option<usize> {
        self.estimates.as_ref().map(Vec::len)
    }

    pub fn scalars(&self) -> u64 {
        self.round1_scalars + self.round2_scalars
    }
}

/// A multi-target filter driven one step at a time.
pub trait Tracker: Send {
    fn name(&self) -> &'static str;

    fn step(
        &mut self,
        topology: &Topology,
        measurements: &MeasurementSet,
        params: &FilterParams,
        streams: &StreamFactory,
        trace: bool,
    ) -> Result<StepReport>;
}

struct Tracer {
    on: bool,
    step: usize,
    filter: &'static str,
    node: NodeId,
    events: Vec<PhaseEvent>,
}

impl Tracer {
    fn new(on: bool, step: usize, filter: &'static str, node: NodeId) -> Self {
        Self {
            on,
            step,
            filter,
            node,
            events: Vec::new(),
        }
    }

    fn record(&mut self, phase: &'static str, set: Option<&ParticleSet>, scalars: u64) {
        if self.on {
            self.events.push(PhaseEvent {
                step: self.step,
                filter: self.filter,
                node: self.node,
                phase,
                mass: set.map_or(0.0, ParticleSet::mass),
                particles: set.map_or(0, ParticleSet::len),
                scalars,
            });
        }
    }
}

/// Centralized filter over the measurements of the whole network.
#[derive(Debug, Clone)]
pub struct MsPphdf {
    persistent: ParticleSet,
    newborn: ParticleSet,
    started: bool,
}

impl Default for MsPphdf {
    fn default() -> Self {
        Self::new()
    }
}

impl MsPphdf {
    pub fn new() -> Self {
        Self {
            persistent: ParticleSet::empty(SetKind::Persistent),
            newborn: ParticleSet::empty(SetKind::Newborn),
            started: false,
        }
    }

    pub fn persistent(&self) -> &ParticleSet {
        &self.persistent
    }
}

impl Tracker for MsPphdf {
    fn name(&self) -> &'static str {
        "ms"
    }

    fn step(
        &mut self,
        topology: &Topology,
        measurements: &MeasurementSet,
        params: &FilterParams,
        streams: &StreamFactory,
        trace: bool,
    ) -> Result<StepReport> {
        let step = measurements.step;
        let mut t = Tracer::new(trace, step, self.name(), 0);

        let total = merge(&self.persistent, &self.newborn);
        self.started |= !total.is_empty();
        t.record("merge", Some(&total), 0);
        let predicted = predict(&total, &params.model, params.p_survive);
        t.record("predict", Some(&predicted), 0);

        let all: Vec<_> = measurements.all().collect();
        let points: Vec<Position> = all.iter().map(|m| m.z).collect();
        let cardinality = precluster_measurements(&points, params.precluster_gate)?;
        let labeled: Vec<LabeledMeasurement> = all
            .iter()
            .zip(&cardinality)
            .map(|(m, &c)| {
                let r_sen = topology.node(m.origin).map_or(1.0, |n| n.r_sen);
                LabeledMeasurement::new(m.z, c, params.clutter_rate * clutter_density(r_sen))
            })
            .collect();
        t.record("precluster", None, 0);

        let (updated, matrix) = weight_update(
            &predicted,
            &labeled,
            params.p_detect,
            params.sigma_r2,
            DetectionRegion::Everywhere,
        );
        t.record("weight_update", Some(&updated), 0);
        let claimed = claimed_measurements(&matrix);
        let candidates: Vec<Position> = (0..points.len()).filter(|j| !claimed[*j]).map(|j| points[j]).collect();
        t.record("candidates", None, 0);
        let n_hat = estimate_target_count(&updated);
        t.record("count", Some(&updated), 0);

        let mut rng = streams.stream(step, 0, Phase::MsResample);
        let resampled = resample(&updated, n_hat, params.birth.particles_per_target, &mut rng)?;
        t.record("resample", Some(&resampled), 0);

        let estimates = if n_hat > 0 {
            let seed = streams.stream(step, 0, Phase::MsKmeans).random::<u64>();
            let clusters = kmeans_with_init(&resampled.positions(), n_hat, seed, params.kmeans_init)?;
            let states: Vec<StateVector> = resampled.particles.iter().map(|p| p.state).collect();
            clusters.state_means(&states, None)
        } else {
            Vec::new()
        };
        t.record("extract", Some(&resampled), 0);

        let mut rng = streams.stream(step, 0, Phase::MsRoughen);
        self.persistent = roughen(&resampled, &params.roughening, &mut rng);
        t.record("roughen", Some(&self.persistent), 0);
        let mut rng = streams.stream(step, 0, Phase::MsBirth);
        self.newborn = adaptive_birth(&candidates, &params.birth, &mut rng);
        t.record("birth", Some(&self.newborn), 0);

        Ok(StepReport {
            step,
            estimates: self.started.then(|| estimates.clone()),
            node_estimates: if estimates.is_empty() {
                Vec::new()
            } else {
                vec![(0, estimates)]
            },
            node_counts: vec![n_hat],
            round1_scalars: SCALARS_PER_MEASUREMENT * points.len() as u64,
            round2_scalars: 0,
            events: t.events,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeFilterState {
    pub node: NodeId,
    /// Roughened collective set; becomes the persistent part of the next step.
    pub collective: ParticleSet,
    /// Newborn particles, weighted for the first time at the next step.
    pub newborn: ParticleSet,
    pub last_estimates: Vec<StateVector>,
    pub last_count: usize,
}

impl NodeFilterState {
    fn new(node: NodeId) -> Self {
        Self {
            node,
            collective: ParticleSet::empty(SetKind::Collective),
            newborn: ParticleSet::empty(SetKind::Newborn),
            last_estimates: Vec::new(),
            last_count: 0,
        }
    }
}

/// Communication pattern of [`DiffusionPphdf`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exchange {
    /// Both broadcast rounds with all one-hop neighbors.
    Diffusion,
    /// No communication: every node only uses its own measurements.
    Local,
}

/// Per-node filters that share measurements and resampled particles with
/// their neighbors.
#[derive(Debug, Clone)]
pub struct DiffusionPphdf {
    exchange: Exchange,
    nodes: Vec<NodeFilterState>,
    started: bool,
}

struct LocalOutcome {
    persistent: ParticleSet,
    n_hat: usize,
    candidates: Vec<Position>,
    measurements_in: usize,
    events: Vec<PhaseEvent>,
}

impl DiffusionPphdf {
    pub fn new(node_count: usize, exchange: Exchange) -> Self {
        Self {
            exchange,
            nodes: (1..=node_count).map(NodeFilterState::new).collect(),
            started: false,
        }
    }

    /// The baseline without communication.
    pub fn local(node_count: usize) -> Self {
        Self::new(node_count, Exchange::Local)
    }

    pub fn nodes(&self) -> &[NodeFilterState] {
        &self.nodes
    }

    fn neighborhood<'a>(&self, topology: &'a Topology, k: NodeId, own: &'a [NodeId; 1]) -> Result<&'a [NodeId]> {
        match self.exchange {
            Exchange::Diffusion => topology.neighborhood(k),
            Exchange::Local => Ok(own),
        }
    }

    /// Merge, predict, weighting with the neighborhood measurements,
    /// candidate selection, count estimate and resampling at node `k`.
    #[allow(clippy::too_many_arguments)]
    fn first_round(
        &self,
        k: NodeId,
        topology: &Topology,
        measurements: &MeasurementSet,
        params: &FilterParams,
        streams: &StreamFactory,
        trace: bool,
    ) -> Result<LocalOutcome> {
        let step = measurements.step;
        let own = [k];
        let hood = self.neighborhood(topology, k, &own)?;
        let state = &self.nodes[k - 1];
        let mut t = Tracer::new(trace, step, self.name(), k);

        let total = merge(&state.collective, &state.newborn);
        let incoming: usize = hood.iter().map(|&l| measurements.of_node(l).len()).sum();
        if total.is_empty() && incoming == 0 {
            return Ok(LocalOutcome {
                persistent: ParticleSet::empty(SetKind::Persistent),
                n_hat: 0,
                candidates: Vec::new(),
                measurements_in: 0,
                events: t.events,
            });
        }
        t.record("merge", Some(&total), 0);
        let predicted = predict(&total, &params.model, params.p_survive);
        t.record("predict", Some(&predicted), 0);

        // Particles no neighbor can observe would keep their weight forever.
        let disks: Vec<DetectionRegion> = hood
            .iter()
            .map(|&l| {
                let n = topology.node(l)?;
                Ok(DetectionRegion::Disk {
                    center: n.position,
                    radius: n.r_sen,
                })
            })
            .collect::<Result<_>>()?;
        let mut set = predicted;
        set.particles.retain(|p| {
            let x = p.position();
            disks.iter().any(|d| d.contains(&x))
        });
        t.record("prune", Some(&set), 0);
        if self.exchange == Exchange::Diffusion {
            let out = SCALARS_PER_MEASUREMENT * measurements.of_node(k).len() as u64 * (hood.len() as u64 - 1);
            t.record("broadcast_measurements", None, out);
        }

        // Each neighbor's update only changes the particles inside its disk,
        // so it runs on that subset; the rest keep their weight exactly.
        let mut best: Vec<Option<(usize, f64)>> = vec![None; set.len()];
        let mut own_columns = 0..0;
        let mut column = 0;
        let mut order: Vec<usize> = (0..hood.len()).collect();
        if params.neighbor_order == NeighborOrder::SilentFirst {
            // Stable: ascending id within each group.
            order.sort_by_key(|&i| !measurements.of_node(hood[i]).is_empty());
        }
        for i in order {
            let (l, region) = (hood[i], &disks[i]);
            let node = topology.node(l)?;
            let intensity = params.clutter_rate * clutter_density(node.r_sen);
            let labeled: Vec<LabeledMeasurement> = measurements
                .of_node(l)
                .iter()
                .map(|m| LabeledMeasurement::new(m.z, 1, intensity))
                .collect();
            let inside: Vec<usize> = (0..set.len())
                .filter(|&p| region.contains(&set.particles[p].position()))
                .collect();
            let subset = ParticleSet::new(SetKind::Persistent, inside.iter().map(|&p| set.particles[p]).collect());
            let (next, matrix) = weight_update(&subset, &labeled, params.p_detect, params.sigma_r2, *region);
            for (r, &p) in inside.iter().enumerate() {
                set.particles[p].weight = next.particles[r].weight;
                // Running argmax over the concatenated rows; earlier columns win ties.
                for (j, &v) in matrix.row(r).iter().enumerate() {
                    if v > 0.0 && best[p].is_none_or(|(_, b)| v > b) {
                        best[p] = Some((column + j, v));
                    }
                }
            }
            if l == k {
                own_columns = column..column + labeled.len();
            }
            column += labeled.len();
        }
        t.record("weight_update", Some(&set), 0);

        let mut claimed = vec![false; column];
        for (j, _) in best.into_iter().flatten() {
            claimed[j] = true;
        }
        let own_meas = measurements.of_node(k);
        let candidates: Vec<Position> = own_columns
            .clone()
            .zip(own_meas)
            .filter(|(j, _)| !claimed.get(*j).copied().unwrap_or(false))
            .map(|(_, m)| m.z)
            .collect();
        t.record("candidates", None, 0);
        let n_hat = estimate_target_count(&set);
        t.record("count", Some(&set), 0);

        let mut rng = streams.stream(step, k, Phase::NodeResample);
        let persistent = resample(&set, n_hat, params.birth.particles_per_target, &mut rng)?;
        t.record("resample", Some(&persistent), 0);
        Ok(LocalOutcome {
            persistent,
            n_hat,
            candidates,
            measurements_in: incoming,
            events: t.events,
        })
    }
}

impl Tracker for DiffusionPphdf {
    fn name(&self) -> &'static str {
        match self.exchange {
            Exchange::Diffusion => "dpphdf",
            Exchange::Local => "local",
        }
    }

    fn step(
        &mut self,
        topology: &Topology,
        measurements: &MeasurementSet,
        params: &FilterParams,
        streams: &StreamFactory,
        trace: bool,
    ) -> Result<StepReport> {
        let step = measurements.step;
        let n = self.nodes.len();
        self.started |= self
            .nodes
            .iter()
            .any(|s| !s.collective.is_empty() || !s.newborn.is_empty());

        let first: Vec<LocalOutcome> = (1..=n)
            .into_par_iter()
            .map(|k| self.first_round(k, topology, measurements, params, streams, trace))
            .collect::<Result<_>>()?;

        let this = &*self;
        let collective_of = |hood: &[NodeId]| {
            let mut particles = Vec::with_capacity(hood.iter().map(|&l| first[l - 1].persistent.len()).sum());
            let mut cap = 0;
            for &l in hood {
                particles.extend_from_slice(&first[l - 1].persistent.particles);
                cap += first[l - 1].n_hat;
            }
            (ParticleSet::new(SetKind::Collective, particles), cap)
        };
        // Extraction depends only on the neighborhood, so nodes that share one
        // (as under full connectivity) share the result.
        let mut hoods: Vec<Vec<NodeId>> = (1..=n)
            .map(|k| Ok(this.neighborhood(topology, k, &[k])?.to_vec()))
            .collect::<Result<_>>()?;
        hoods.sort_unstable();
        hoods.dedup();
        let extracted: Vec<Vec<StateVector>> = hoods
            .par_iter()
            .map(|hood| {
                let (collective, cap) = collective_of(hood);
                extract_estimates(&collective, cap, params)
            })
            .collect::<Result<_>>()?;

        let second: Vec<(NodeFilterState, Vec<PhaseEvent>, u64)> = (1..=n)
            .into_par_iter()
            .map(|k| {
                let own = [k];
                let hood = this.neighborhood(topology, k, &own)?;
                let mine = &first[k - 1];
                let mut t = Tracer::new(trace, step, this.name(), k);
                let others = hood.len() as u64 - 1;
                let sent = SCALARS_PER_PARTICLE * mine.persistent.len() as u64 * others;
                if this.exchange == Exchange::Diffusion && (mine.measurements_in > 0 || !mine.persistent.is_empty()) {
                    t.record("broadcast_particles", Some(&mine.persistent), sent);
                }

                let (collective, _) = collective_of(hood);
                let slot = hoods.binary_search_by(|h| h.as_slice().cmp(hood)).expect("neighborhood was collected");
                let estimates = extracted[slot].clone();
                if !collective.is_empty() {
                    t.record("collective", Some(&collective), 0);
                    t.record("extract", Some(&collective), 0);
                }

                let mut rng = streams.stream(step, k, Phase::NodeRoughen);
                let collective = roughen(&collective, &params.roughening, &mut rng);
                let mut rng = streams.stream(step, k, Phase::NodeBirth);
                let newborn = adaptive_birth(&mine.candidates, &params.birth, &mut rng);
                if !collective.is_empty() || !newborn.is_empty() {
                    t.record("roughen", Some(&collective), 0);
                    t.record("birth", Some(&newborn), 0);
                }
                let state = NodeFilterState {
                    node: k,
                    collective,
                    newborn,
                    last_count: estimates.len(),
                    last_estimates: estimates,
                };
                Ok((state, t.events, sent))
            })
            .collect::<Result<_>>()?;

        let mut report = StepReport {
            step,
            ..Default::default()
        };
        let mut events_b = Vec::new();
        for (k, (state, events, sent)) in second.into_iter().enumerate() {
            let own = [k + 1];
            let hood = self.neighborhood(topology, k + 1, &own)?;
            let others = hood.len() as u64 - 1;
            if self.exchange == Exchange::Diffusion {
                report.round1_scalars += SCALARS_PER_MEASUREMENT * measurements.of_node(k + 1).len() as u64 * others;
                report.round2_scalars += sent;
            }
            if !state.last_estimates.is_empty() {
                report.node_estimates.push((k + 1, state.last_estimates.clone()));
            }
            report.node_counts.push(first[k].n_hat);
            events_b.push(events);
            self.nodes[k] = state;
        }
        if trace {
            for (a, b) in first.into_iter().zip(events_b) {
                report.events.extend(a.events);
                report.events.extend(b);
            }
        }
        let all: Vec<StateVector> = report.node_estimates.iter().flat_map(|(_, e)| e.iter().copied()).collect();
        report.estimates = if self.started {
            Some(fuse_network_estimates(&all, params.fusion_cut)?)
        } else {
            None
        };
        Ok(report)
    }
}

/// Single-linkage extraction over a collective set with the cluster cap
/// `cap`; clusters lighter than the minimum mass are dropped.
pub fn extract_estimates(set: &ParticleSet, cap: usize, params: &FilterParams) -> Result<Vec<StateVector>> {
    if set.is_empty() || cap == 0 {
        return Ok(Vec::new());
    }
    let weights = set.weights();
    let clusters = single_linkage(
        &set.positions(),
        Some(&weights),
        Linkage {
            max_clusters: Some(cap),
            cut: Some(params.extraction_cut),
            weighted: params.weighted_centroids,
        },
    )?;
    let states: Vec<StateVector> = set.particles.iter().map(|p| p.state).collect();
    let means = clusters.state_means(&states, params.weighted_centroids.then_some(&weights[..]));
    Ok(means
        .into_iter()
        .zip(&clusters.masses)
        .filter(|(_, m)| **m >= params.min_cluster_mass)
        .map(|(s, _)| s)
        .collect())
}

/// Joint network estimate: centroids of the single-linkage clusters of all
/// node estimates.
pub fn fuse_network_estimates(estimates: &[StateVector], cut: f64) -> Result<Vec<StateVector>> {
    if estimates.is_empty() {
        return Ok(Vec::new());
    }
    let points: Vec<Position> = estimates.iter().map(|s| Position::new(s[0], s[1])).collect();
    let clusters = single_linkage(&points, None, Linkage::cut(cut))?;
    Ok(clusters.state_means(estimates, None))
}
