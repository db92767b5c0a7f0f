//! Measurement generation: detections with probability `p_D`, additive white
//! Gaussian position noise and Poisson clutter uniform over each sensing disk.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::dynamics::ActiveTarget;
use crate::network::{Node, NodeId, Topology};
use crate::rng::{Phase, StreamFactory};
use crate::{Error, Position, Result};

/// Ground-truth origin of a measurement. Only evaluation code may read it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruthTag {
    Target(u32),
    Clutter,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub z: Position,
    pub origin: NodeId,
    pub step: usize,
    pub truth: TruthTag,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorParams {
    pub sigma_r2: f64,
    pub p_detect: f64,
    /// Mean clutter count per node and step.
    pub clutter_rate: f64,
}

impl SensorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_r2 > 0.0) {
            return Err(Error::invalid("sigma_r2", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.p_detect) {
            return Err(Error::invalid("p_d", "must lie in [0, 1]"));
        }
        if !(self.clutter_rate >= 0.0) {
            return Err(Error::invalid("lambda_fa", "must be >= 0"));
        }
        Ok(())
    }
}

/// Clutter density over a sensing disk, `1 / (π R_sen²)`.
pub fn clutter_density(r_sen: f64) -> f64 {
    1.0 / (PI * r_sen * r_sen)
}

/// Measurements of one node at one step: one detection per in-range target
/// with probability `p_D`, then `Poisson(λ_FA)` clutter points.
pub fn sense<R: Rng + ?Sized>(
    node: &Node,
    targets: &[ActiveTarget],
    params: &SensorParams,
    step: usize,
    rng: &mut R,
) -> Vec<Measurement> {
    let noise = Normal::new(0.0, params.sigma_r2.sqrt()).expect("validated sigma");
    let mut out = Vec::new();
    for t in targets {
        let pos = t.state.position();
        if !node.senses(&pos) {
            continue;
        }
        if rng.random::<f64>() < params.p_detect {
            let z = pos + Position::new(noise.sample(rng), noise.sample(rng));
            out.push(Measurement {
                z,
                origin: node.id,
                step,
                truth: TruthTag::Target(t.id),
            });
        }
    }
    if params.clutter_rate > 0.0 {
        let count = Poisson::new(params.clutter_rate)
            .expect("positive rate")
            .sample(rng) as usize;
        for _ in 0..count {
            // Uniform over the disk: radius ∝ sqrt(U).
            let r = node.r_sen * rng.random::<f64>().sqrt();
            let theta = 2.0 * PI * rng.random::<f64>();
            out.push(Measurement {
                z: node.position + Position::new(r * theta.cos(), r * theta.sin()),
                origin: node.id,
                step,
                truth: TruthTag::Clutter,
            });
        }
    }
    out
}

/// Measurements of every node at one step, indexed by `node id - 1`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeasurementSet {
    pub step: usize,
    pub per_node: Vec<Vec<Measurement>>,
}

impl MeasurementSet {
    pub fn empty(step: usize, nodes: usize) -> Self {
        Self {
            step,
            per_node: vec![Vec::new(); nodes],
        }
    }

    pub fn of_node(&self, k: NodeId) -> &[Measurement] {
        &self.per_node[k - 1]
    }

    pub fn len(&self) -> usize {
        self.per_node.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All measurements in ascending node order.
    pub fn all(&self) -> impl Iterator<Item = &Measurement> {
        self.per_node.iter().flatten()
    }

    /// Appends CSV rows `step,node,x,y,truth` (truth is a target id or `clutter`).
    pub fn write_csv<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        for m in self.all() {
            let tag = match m.truth {
                TruthTag::Target(id) => id.to_string(),
                TruthTag::Clutter => "clutter".to_string(),
            };
            w.write_record([
                m.step.to_string(),
                m.origin.to_string(),
                format!("{:.6}", m.z.x),
                format!("{:.6}", m.z.y),
                tag,
            ])?;
        }
        Ok(())
    }
}

/// Runs [`sense`] on every node with its own random stream.
pub fn sense_network(
    topology: &Topology,
    targets: &[ActiveTarget],
    params: &SensorParams,
    step: usize,
    streams: &StreamFactory,
) -> MeasurementSet {
    let per_node = topology
        .nodes()
        .iter()
        .map(|n| {
            let mut rng = streams.stream(step, n.id, Phase::Sensing);
            sense(n, targets, params, step, &mut rng)
        })
        .collect();
    MeasurementSet { step, per_node }
}
