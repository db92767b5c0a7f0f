//! Static sensor topology: node positions, one- and two-hop neighborhoods,
//! sensing membership and coverage.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Position, Result};

/// Node identifier, contiguous in `1..=N`.
pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub position: Position,
    pub r_sen: f64,
    pub r_com: f64,
}

impl Node {
    pub fn senses(&self, p: &Position) -> bool {
        (self.position - p).norm() <= self.r_sen
    }
}

/// Region of interest used for coverage and the birth border.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Roi {
    Rect { min: Position, max: Position },
    Disk { center: Position, radius: f64 },
}

impl Roi {
    pub fn contains(&self, p: &Position) -> bool {
        match self {
            Roi::Rect { min, max } => p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y,
            Roi::Disk { center, radius } => (p - center).norm() <= *radius,
        }
    }

    fn bounds(&self) -> (Position, Position) {
        match self {
            Roi::Rect { min, max } => (*min, *max),
            Roi::Disk { center, radius } => (
                center - Position::new(*radius, *radius),
                center + Position::new(*radius, *radius),
            ),
        }
    }

    /// True when `p` lies inside the ROI but within `band` of its border.
    pub fn in_border_band(&self, p: &Position, band: f64) -> bool {
        if !self.contains(p) {
            return false;
        }
        match self {
            Roi::Rect { min, max } => {
                let d = (p.x - min.x).min(max.x - p.x).min(p.y - min.y).min(max.y - p.y);
                d <= band
            }
            Roi::Disk { center, radius } => radius - (p - center).norm() <= band,
        }
    }
}

/// Immutable network with precomputed neighborhood tables.
#[derive(Debug, Clone)]
pub struct Topology {
    nodes: Vec<Node>,
    roi: Roi,
    neighbors: Vec<Vec<NodeId>>,
    two_hop: Vec<Vec<NodeId>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayoutFile {
    nodes: Vec<LayoutNode>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayoutNode {
    id: NodeId,
    x: f64,
    y: f64,
    r_sen: f64,
    r_com: f64,
}

const REFERENCE_LAYOUT: &str = include_str!("../data/reference_layout.json");

impl Topology {
    /// Builds a topology whose ROI is the bounding box of the node positions
    /// inflated by the largest sensing radius.
    pub fn new(nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::invalid("nodes", "topology needs at least one node"));
        }
        let r = nodes.iter().map(|n| n.r_sen).fold(0.0, f64::max);
        let mut min = nodes[0].position;
        let mut max = nodes[0].position;
        for n in &nodes {
            min = min.inf(&n.position);
            max = max.sup(&n.position);
        }
        let roi = Roi::Rect {
            min: min - Position::new(r, r),
            max: max + Position::new(r, r),
        };
        Self::with_roi(nodes, roi)
    }

    pub fn with_roi(mut nodes: Vec<Node>, roi: Roi) -> Result<Self> {
        nodes.sort_by_key(|n| n.id);
        for (i, n) in nodes.iter().enumerate() {
            if n.id != i + 1 {
                return Err(Error::invalid(
                    "nodes",
                    format!("node ids must be unique and contiguous from 1, found {} at position {}", n.id, i + 1),
                ));
            }
            if !(n.r_sen > 0.0) || !(n.r_com > 0.0) {
                return Err(Error::invalid(
                    "nodes",
                    format!("node {} needs positive sensing and communication radii", n.id),
                ));
            }
            if !n.position.iter().all(|v| v.is_finite()) {
                return Err(Error::invalid("nodes", format!("node {} position is not finite", n.id)));
            }
        }
        let neighbors: Vec<Vec<NodeId>> = nodes
            .iter()
            .map(|k| {
                nodes
                    .iter()
                    .filter(|l| (l.position - k.position).norm() <= k.r_com)
                    .map(|l| l.id)
                    .collect()
            })
            .collect();
        let two_hop = neighbors
            .iter()
            .map(|nk| {
                let set: BTreeSet<NodeId> = nk
                    .iter()
                    .flat_map(|&l| neighbors[l - 1].iter().copied())
                    .collect();
                set.into_iter().collect()
            })
            .collect();
        Ok(Self {
            nodes,
            roi,
            neighbors,
            two_hop,
        })
    }

    /// The bundled 30-node reference layout.
    pub fn reference() -> Self {
        Self::from_layout_str(REFERENCE_LAYOUT, Path::new("<reference>"))
            .expect("bundled layout is valid")
    }

    pub fn from_layout_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_layout_str(&text, path)
    }

    /// Layout schema: `{"nodes": [{"id", "x", "y", "r_sen", "r_com"}, ...]}`.
    pub fn from_layout_str(text: &str, path: &Path) -> Result<Self> {
        let doc: LayoutFile = serde_json::from_str(text).map_err(|e| Error::MalformedFile {
            kind: "layout",
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let nodes = doc
            .nodes
            .into_iter()
            .map(|n| Node {
                id: n.id,
                position: Position::new(n.x, n.y),
                r_sen: n.r_sen,
                r_com: n.r_com,
            })
            .collect();
        Self::new(nodes).map_err(|e| Error::MalformedFile {
            kind: "layout",
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    /// Same positions with every node's radii replaced.
    pub fn with_radii(&self, r_sen: f64, r_com: f64) -> Result<Self> {
        let nodes = self
            .nodes
            .iter()
            .map(|n| Node { r_sen, r_com, ..*n })
            .collect();
        Self::new(nodes)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn roi(&self) -> &Roi {
        &self.roi
    }

    pub fn node(&self, k: NodeId) -> Result<&Node> {
        if k == 0 || k > self.nodes.len() {
            return Err(Error::UnknownNode(k));
        }
        Ok(&self.nodes[k - 1])
    }

    /// One-hop neighborhood `{l : |x_l - x_k| <= R_com}`, including `k`, ascending.
    pub fn neighborhood(&self, k: NodeId) -> Result<&[NodeId]> {
        self.node(k)?;
        Ok(&self.neighbors[k - 1])
    }

    /// Union of the neighborhoods of all one-hop neighbors, ascending.
    pub fn two_hop(&self, k: NodeId) -> Result<&[NodeId]> {
        self.node(k)?;
        Ok(&self.two_hop[k - 1])
    }

    pub fn nodes_in_sensing_range(&self, target: &Position) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.senses(target))
            .map(|n| n.id)
            .collect()
    }

    /// Largest pairwise node distance.
    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for a in &self.nodes {
            for b in &self.nodes {
                d = d.max((a.position - b.position).norm());
            }
        }
        d
    }

    /// Fraction of ROI grid points within sensing range of at least one node.
    ///
    /// Grid points are `min + (i, j)·resolution` for every point of the ROI's
    /// bounding box that also lies inside the ROI.
    pub fn coverage_ratio(&self, resolution: f64) -> Result<f64> {
        if !(resolution > 0.0) {
            return Err(Error::invalid("resolution", "must be > 0"));
        }
        let (min, max) = self.roi.bounds();
        let nx = ((max.x - min.x) / resolution + 1e-9).floor() as usize + 1;
        let ny = ((max.y - min.y) / resolution + 1e-9).floor() as usize + 1;
        let mut inside = 0usize;
        let mut covered = 0usize;
        for j in 0..ny {
            for i in 0..nx {
                let p = Position::new(min.x + i as f64 * resolution, min.y + j as f64 * resolution);
                if !self.roi.contains(&p) {
                    continue;
                }
                inside += 1;
                if self.nodes.iter().any(|n| n.senses(&p)) {
                    covered += 1;
                }
            }
        }
        if inside == 0 {
            return Ok(0.0);
        }
        Ok(covered as f64 / inside as f64)
    }
}
