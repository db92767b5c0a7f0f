//! Posterior Cramér-Rao bound on position error, computed per node from the
//! measurements of its two-hop neighborhood, and its network average.
//!
//! Every target carries its own 4×4 Fisher information block. Associations
//! are treated as known, so the association blocks of the joint information
//! matrix vanish and the Schur complement reduces to the per-target inverse.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix4};

use crate::dynamics::{ActiveTarget, ModelMatrices};
use crate::network::Topology;
use crate::{Error, Result};

/// One step of the information recursion without measurements:
/// `J⁻ = (F J⁻¹ Fᵀ + G Q Gᵀ)⁻¹`, evaluated as `(I + A D)⁻¹ A` with
/// `A = F⁻ᵀ J F⁻¹` and `D = G Q Gᵀ`, which stays valid for singular `J`.
pub fn pcrlb_predict(j: &Matrix4<f64>, model: &ModelMatrices) -> Matrix4<f64> {
    let f_inv = model.f.try_inverse().expect("transition matrix is invertible");
    let a = f_inv.transpose() * j * f_inv;
    let d = model.g * model.q * model.g.transpose();
    let m = Matrix4::identity() + a * d;
    let out = m.try_inverse().expect("I + A D is invertible for PSD A, D") * a;
    (out + out.transpose()) * 0.5
}

/// Adds the information of `q` sensors, each detecting with probability
/// `p_D`: `J + q p_D Hᵀ (σ_r² I)⁻¹ H`.
pub fn pcrlb_update(j: &Matrix4<f64>, q: usize, p_detect: f64, sigma_r2: f64) -> Matrix4<f64> {
    let mut out = *j;
    let gain = q as f64 * p_detect / sigma_r2;
    out[(0, 0)] += gain;
    out[(1, 1)] += gain;
    out
}

/// Inverse of the birth covariance `diag(σ_r², σ_r², σ_v², σ_v²)`.
pub fn birth_information(sigma_r2: f64, sigma_v2: f64) -> Matrix4<f64> {
    Matrix4::from_diagonal(&nalgebra::Vector4::new(
        1.0 / sigma_r2,
        1.0 / sigma_r2,
        1.0 / sigma_v2,
        1.0 / sigma_v2,
    ))
}

/// Trace of the position block of `J⁻¹`; infinite if `J` is singular.
pub fn position_trace(j: &Matrix4<f64>) -> f64 {
    match j.try_inverse() {
        Some(c) => c[(0, 0)] + c[(1, 1)],
        None => f64::INFINITY,
    }
}

/// Position bound from a joint information matrix with state block `J_Ξ`,
/// association block `J_Π` and cross block `J_ΞΠ`:
/// the trace of `(J_Ξ − J_ΞΠ J_Π⁻¹ J_ΞΠᵀ)⁻¹` over `position_indices`.
pub fn schur_position_bound(
    j_state: &DMatrix<f64>,
    j_assoc: &DMatrix<f64>,
    j_cross: &DMatrix<f64>,
    position_indices: &[usize],
) -> Option<f64> {
    let reduced = if j_assoc.is_empty() || j_cross.iter().all(|v| *v == 0.0) {
        j_state.clone()
    } else {
        let assoc_inv = j_assoc.clone().try_inverse()?;
        j_state - j_cross * assoc_inv * j_cross.transpose()
    };
    let cov = reduced.try_inverse()?;
    Some(position_indices.iter().map(|&i| cov[(i, i)]).sum())
}

/// Registry of per-target information blocks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FisherInfo {
    blocks: BTreeMap<u32, Matrix4<f64>>,
}

impl FisherInfo {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: u32) -> Option<&Matrix4<f64>> {
        self.blocks.get(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.blocks.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Removes the blocks of `deaths`, then appends `births` with their prior
    /// information.
    pub fn expand_shrink(&self, births: &[(u32, Matrix4<f64>)], deaths: &[u32]) -> Result<FisherInfo> {
        let mut out = self.clone();
        for id in deaths {
            out.blocks.remove(id);
        }
        for (id, prior) in births {
            if out.blocks.insert(*id, *prior).is_some() {
                return Err(Error::DuplicateTarget(*id));
            }
        }
        Ok(out)
    }

    fn map(&mut self, f: impl Fn(u32, &Matrix4<f64>) -> Matrix4<f64>) {
        for (id, j) in self.blocks.iter_mut() {
            *j = f(*id, j);
        }
    }

    /// Position traces per target, ascending id.
    pub fn target_traces(&self) -> Vec<(u32, f64)> {
        self.blocks.iter().map(|(id, j)| (*id, position_trace(j))).collect()
    }
}

/// Sum of position traces over all blocks; absent for an empty registry.
pub fn node_bound(info: &FisherInfo) -> Option<f64> {
    if info.is_empty() {
        None
    } else {
        Some(info.target_traces().iter().map(|(_, t)| t).sum())
    }
}

/// Network average of the bounds of the nodes that have one.
pub fn dpcrlb(bounds: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = bounds.iter().flatten().copied().collect();
    if present.is_empty() {
        None
    } else {
        Some(present.iter().sum::<f64>() / present.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub model: ModelMatrices,
    pub p_detect: f64,
    pub sigma_r2: f64,
    /// Velocity variance of the birth prior (m²/s²).
    pub birth_velocity_var: f64,
}

/// Bounds of every node at one step (vectors indexed by `node id - 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundStep {
    /// Sum over in-scope targets per node.
    pub node_bounds: Vec<Option<f64>>,
    /// Per-target position traces per node, ascending target id.
    pub target_bounds: Vec<Vec<(u32, f64)>>,
    /// Mean of `node_bounds` over the nodes that have one.
    pub dpcrlb: Option<f64>,
    /// Same average of per-node means over in-scope targets.
    pub dpcrlb_per_target: Option<f64>,
    /// Number of nodes with a bound.
    pub members: usize,
}

/// Per-node information recursions over a run.
#[derive(Debug, Clone)]
pub struct BoundTracker {
    params: BoundParams,
    nodes: Vec<FisherInfo>,
}

impl BoundTracker {
    pub fn new(node_count: usize, params: BoundParams) -> Self {
        Self {
            params,
            nodes: vec![FisherInfo::new(); node_count],
        }
    }

    pub fn info(&self, k: usize) -> &FisherInfo {
        &self.nodes[k - 1]
    }

    /// Advances every node by one step. Targets in the sensing range of some
    /// node of `N_k` are in scope at node `k`; each in-scope target receives
    /// the information of all sensing nodes of the two-hop neighborhood.
    pub fn step(&mut self, topology: &Topology, targets: &[ActiveTarget]) -> Result<BoundStep> {
        let p = self.params;
        let sensing: Vec<Vec<usize>> = targets
            .iter()
            .map(|t| topology.nodes_in_sensing_range(&t.state.position()))
            .collect();
        let mut node_bounds = Vec::with_capacity(self.nodes.len());
        let mut target_bounds = Vec::with_capacity(self.nodes.len());
        let mut means = Vec::with_capacity(self.nodes.len());
        for k in 1..=self.nodes.len() {
            let one_hop = topology.neighborhood(k)?;
            let two_hop = topology.two_hop(k)?;
            let mut q_of = BTreeMap::new();
            for (t, s) in targets.iter().zip(&sensing) {
                if s.iter().any(|l| one_hop.contains(l)) {
                    q_of.insert(t.id, s.iter().filter(|l| two_hop.contains(l)).count());
                }
            }
            let info = &mut self.nodes[k - 1];
            let deaths: Vec<u32> = info.ids().filter(|id| !q_of.contains_key(id)).collect();
            let mut next = info.expand_shrink(&[], &deaths)?;
            next.map(|_, j| pcrlb_predict(j, &p.model));
            let prior = birth_information(p.sigma_r2, p.birth_velocity_var);
            let births: Vec<(u32, Matrix4<f64>)> = q_of
                .keys()
                .filter(|id| next.get(**id).is_none())
                .map(|id| (*id, prior))
                .collect();
            next = next.expand_shrink(&births, &[])?;
            next.map(|id, j| pcrlb_update(j, q_of[&id], p.p_detect, p.sigma_r2));
            *info = next;

            let traces = info.target_traces();
            node_bounds.push(node_bound(info));
            means.push(if traces.is_empty() {
                None
            } else {
                Some(traces.iter().map(|(_, t)| t).sum::<f64>() / traces.len() as f64)
            });
            target_bounds.push(traces);
        }
        Ok(BoundStep {
            dpcrlb: dpcrlb(&node_bounds),
            dpcrlb_per_target: dpcrlb(&means),
            members: node_bounds.iter().flatten().count(),
            node_bounds,
            target_bounds,
        })
    }
}
