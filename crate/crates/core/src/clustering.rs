//! Single-linkage agglomerative clustering, k-means and measurement
//! pre-clustering.
//!
//! Distances are Euclidean in the plane. Cluster ids are numbered in order of
//! the first point that belongs to each cluster.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Position, Result, StateVector};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClusterResult {
    /// Cluster id of every point.
    pub assignments: Vec<usize>,
    pub centroids: Vec<Position>,
    pub sizes: Vec<usize>,
    /// Sum of member weights (member count when unweighted).
    pub masses: Vec<f64>,
}

impl ClusterResult {
    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    /// Means of full state vectors per cluster, weighted by `weights` when
    /// given and the cluster mass is positive.
    pub fn state_means(&self, states: &[StateVector], weights: Option<&[f64]>) -> Vec<StateVector> {
        let mut sums = vec![StateVector::zeros(); self.len()];
        let mut mass = vec![0.0; self.len()];
        let mut plain = vec![StateVector::zeros(); self.len()];
        for (i, &c) in self.assignments.iter().enumerate() {
            let w = weights.map_or(1.0, |w| w[i]);
            sums[c] += states[i] * w;
            mass[c] += w;
            plain[c] += states[i];
        }
        (0..self.len())
            .map(|c| {
                if mass[c] > 0.0 {
                    sums[c] / mass[c]
                } else {
                    plain[c] / self.sizes[c] as f64
                }
            })
            .collect()
    }
}

/// Stopping rule of [`single_linkage`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linkage {
    /// Upper bound on the number of clusters.
    pub max_clusters: Option<usize>,
    /// Largest single-link distance that is merged unconditionally.
    pub cut: Option<f64>,
    /// Use point weights in centroids.
    pub weighted: bool,
}

impl Linkage {
    pub fn cut(cut: f64) -> Self {
        Self {
            max_clusters: None,
            cut: Some(cut),
            weighted: true,
        }
    }

    pub fn count(max_clusters: usize) -> Self {
        Self {
            max_clusters: Some(max_clusters),
            cut: None,
            weighted: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if let Some(c) = self.cut {
            if !(c > 0.0) {
                return Err(Error::invalid("cut_distance", "must be > 0"));
            }
        }
        match self.max_clusters {
            Some(0) => Err(Error::invalid("max_clusters", "must be >= 1")),
            None if self.cut.is_none() => Err(Error::invalid(
                "single_linkage",
                "needs a cluster cap or a cut distance",
            )),
            _ => Ok(()),
        }
    }

    /// Whether a merge at distance `d` happens while `count` clusters remain:
    /// merging continues below the cut and whenever the cap is exceeded.
    #[inline]
    fn merges(&self, d: f64, count: usize) -> bool {
        self.cut.is_some_and(|c| d <= c) || self.max_clusters.is_some_and(|m| count > m)
    }
}

/// Point count above which the grid path replaces the quadratic MST.
const GRID_THRESHOLD: usize = 256;

/// Single-linkage clustering. Clusters are merged in order of increasing
/// single-link distance until the next merge lies beyond the cut and the
/// cluster count no longer exceeds the cap.
pub fn single_linkage(points: &[Position], weights: Option<&[f64]>, linkage: Linkage) -> Result<ClusterResult> {
    linkage.validate()?;
    if let Some(w) = weights {
        if w.len() != points.len() {
            return Err(Error::invalid("weights", "length differs from points"));
        }
    }
    if points.is_empty() {
        return Ok(ClusterResult::default());
    }
    let roots = if linkage.cut.is_some() && points.len() > GRID_THRESHOLD {
        grid_linkage(points, &linkage)
    } else {
        mst_linkage(points, &linkage)
    };
    Ok(finish(points, weights, linkage.weighted, &roots))
}

struct UnionFind {
    parent: Vec<usize>,
    components: usize,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            components: n,
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        // Keep the lower index as root.
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        self.components -= 1;
        true
    }

    fn roots(&mut self) -> Vec<usize> {
        (0..self.parent.len()).map(|i| self.find(i)).collect()
    }
}

#[inline]
fn dist2(a: &Position, b: &Position) -> f64 {
    let d = a - b;
    d.x * d.x + d.y * d.y
}

/// Kruskal over sorted edges `(d, a, b)` with the linkage stopping rule.
fn kruskal(uf: &mut UnionFind, mut edges: Vec<(f64, usize, usize)>, linkage: &Linkage) {
    edges.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    for (d, a, b) in edges {
        if !linkage.merges(d, uf.components) {
            break;
        }
        uf.union(a, b);
    }
}

/// Prim's minimum spanning tree in O(n²) followed by Kruskal on its edges.
fn mst_linkage(points: &[Position], linkage: &Linkage) -> Vec<usize> {
    let n = points.len();
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let mut next = usize::MAX;
        let mut next_d = f64::INFINITY;
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let d = dist2(&points[current], &points[j]);
            if d < best[j] {
                best[j] = d;
                from[j] = current;
            }
            if best[j] < next_d || next == usize::MAX {
                next_d = best[j];
                next = j;
            }
        }
        in_tree[next] = true;
        let (a, b) = (from[next].min(next), from[next].max(next));
        edges.push((next_d.sqrt(), a, b));
        current = next;
    }
    let mut uf = UnionFind::new(n);
    kruskal(&mut uf, edges, linkage);
    uf.roots()
}

/// Textbook agglomeration on a full distance matrix: O(n³), the cost model
/// of measurement pre-clustering.
fn agglomerate(points: &[Position], linkage: &Linkage) -> Vec<usize> {
    let n = points.len();
    let mut d: Vec<f64> = (0..n * n).map(|i| dist2(&points[i / n], &points[i % n]).sqrt()).collect();
    let mut alive = vec![true; n];
    let mut uf = UnionFind::new(n);
    while uf.components > 1 {
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..n {
            if !alive[a] {
                continue;
            }
            for b in a + 1..n {
                if alive[b] && d[a * n + b] < best.0 {
                    best = (d[a * n + b], a, b);
                }
            }
        }
        let (dist, a, b) = best;
        if !linkage.merges(dist, uf.components) {
            break;
        }
        uf.union(a, b);
        alive[b] = false;
        for j in 0..n {
            let m = d[a * n + j].min(d[b * n + j]);
            d[a * n + j] = m;
            d[j * n + a] = m;
        }
    }
    uf.roots()
}

/// Connected components at the cut via a uniform grid, then component-level
/// Kruskal if the cap still binds. Equivalent to [`mst_linkage`].
fn grid_linkage(points: &[Position], linkage: &Linkage) -> Vec<usize> {
    use std::collections::HashMap;

    let cut = linkage.cut.expect("grid path requires a cut");
    let cell = cut / std::f64::consts::SQRT_2;
    let cut2 = cut * cut;
    let key = |p: &Position| ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64);

    let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        cells.entry(key(p)).or_default().push(i);
    }
    let mut keys: Vec<(i64, i64)> = cells.keys().copied().collect();
    keys.sort_unstable();

    let mut uf = UnionFind::new(points.len());
    // A cell's diagonal equals the cut, so cell members are always linked.
    for k in &keys {
        let members = &cells[k];
        for &j in &members[1..] {
            uf.union(members[0], j);
        }
    }
    for k in &keys {
        let a = &cells[k];
        for dx in -2i64..=2 {
            for dy in -2i64..=2 {
                let other = (k.0 + dx, k.1 + dy);
                if other <= *k {
                    continue;
                }
                let Some(b) = cells.get(&other) else { continue };
                if uf.find(a[0]) == uf.find(b[0]) {
                    continue;
                }
                'pairs: for &i in a {
                    for &j in b {
                        if dist2(&points[i], &points[j]) <= cut2 {
                            uf.union(i, j);
                            break 'pairs;
                        }
                    }
                }
            }
        }
    }

    let cap = linkage.max_clusters.unwrap_or(usize::MAX);
    if uf.components > cap {
        let roots = uf.roots();
        let mut comp_of_root = HashMap::new();
        let mut members: Vec<Vec<usize>> = Vec::new();
        for (i, &r) in roots.iter().enumerate() {
            let c = *comp_of_root.entry(r).or_insert_with(|| {
                members.push(Vec::new());
                members.len() - 1
            });
            members[c].push(i);
        }
        let mut edges = Vec::new();
        for a in 0..members.len() {
            for b in a + 1..members.len() {
                let mut best = f64::INFINITY;
                for &i in &members[a] {
                    for &j in &members[b] {
                        best = best.min(dist2(&points[i], &points[j]));
                    }
                }
                edges.push((best.sqrt(), members[a][0], members[b][0]));
            }
        }
        kruskal(&mut uf, edges, linkage);
    }
    uf.roots()
}

/// Relabels roots in order of first occurrence and computes cluster summaries.
fn finish(points: &[Position], weights: Option<&[f64]>, weighted: bool, roots: &[usize]) -> ClusterResult {
    let mut label = vec![usize::MAX; points.len()];
    let mut assignments = Vec::with_capacity(points.len());
    let mut next = 0;
    for &r in roots {
        if label[r] == usize::MAX {
            label[r] = next;
            next += 1;
        }
        assignments.push(label[r]);
    }
    summarize(points, weights, weighted, assignments, next)
}

fn summarize(
    points: &[Position],
    weights: Option<&[f64]>,
    weighted: bool,
    assignments: Vec<usize>,
    k: usize,
) -> ClusterResult {
    let mut sizes = vec![0usize; k];
    let mut masses = vec![0.0; k];
    let mut sums = vec![Position::zeros(); k];
    let mut plain = vec![Position::zeros(); k];
    for (i, &c) in assignments.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        sizes[c] += 1;
        masses[c] += w;
        sums[c] += points[i] * w;
        plain[c] += points[i];
    }
    let centroids = (0..k)
        .map(|c| {
            if weighted && masses[c] > 0.0 {
                sums[c] / masses[c]
            } else {
                plain[c] / sizes[c].max(1) as f64
            }
        })
        .collect();
    ClusterResult {
        assignments,
        centroids,
        sizes,
        masses,
    }
}

/// How k-means picks its initial centers. The first center is always a point
/// chosen by the seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KmeansInit {
    /// Each further center is the point farthest from all chosen centers.
    #[default]
    FarthestPoint,
    /// Each further center is drawn with probability proportional to the
    /// squared distance to the nearest chosen center.
    DistanceSquared,
}

/// Lloyd's k-means from a farthest-point initialization whose first center is
/// chosen by `seed`.
pub fn kmeans(points: &[Position], k: usize, seed: u64) -> Result<ClusterResult> {
    lloyd(points, k, seed, KmeansInit::FarthestPoint, None)
}

/// [`kmeans`] with a selectable initialization.
pub fn kmeans_with_init(points: &[Position], k: usize, seed: u64, init: KmeansInit) -> Result<ClusterResult> {
    lloyd(points, k, seed, init, None)
}

/// Like [`kmeans`], also returning the within-cluster sum of squares after
/// every assignment step.
pub fn kmeans_with_objective(points: &[Position], k: usize, seed: u64) -> Result<(ClusterResult, Vec<f64>)> {
    let mut trace = Vec::new();
    let result = lloyd(points, k, seed, KmeansInit::FarthestPoint, Some(&mut trace))?;
    Ok((result, trace))
}

const MAX_LLOYD_ITERATIONS: usize = 300;

fn lloyd(
    points: &[Position],
    k: usize,
    seed: u64,
    init: KmeansInit,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<ClusterResult> {
    if k == 0 {
        return Err(Error::invalid("k", "must be >= 1"));
    }
    if k > points.len() {
        return Err(Error::TooFewPoints { k, points: points.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![points[rng.random_range(0..points.len())]];
    let mut nearest: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = match init {
            KmeansInit::DistanceSquared if total > 0.0 => {
                let mut u = rng.random::<f64>() * total;
                let mut pick = points.len() - 1;
                for (i, d) in nearest.iter().enumerate() {
                    if u < *d {
                        pick = i;
                        break;
                    }
                    u -= d;
                }
                pick
            }
            _ => {
                let mut far = 0;
                for (i, d) in nearest.iter().enumerate() {
                    if *d > nearest[far] {
                        far = i;
                    }
                }
                far
            }
        };
        let c = points[pick];
        for (i, p) in points.iter().enumerate() {
            nearest[i] = nearest[i].min(dist2(p, &c));
        }
        centers.push(c);
    }

    let mut assignments = vec![usize::MAX; points.len()];
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut changed = false;
        let mut objective = 0.0;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = dist2(p, &centers[0]);
            for (c, center) in centers.iter().enumerate().skip(1) {
                let d = dist2(p, center);
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            objective += best_d;
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(objective);
        }
        if !changed {
            break;
        }
        let mut sums = vec![Position::zeros(); k];
        let mut counts = vec![0usize; k];
        for (i, &c) in assignments.iter().enumerate() {
            sums[c] += points[i];
            counts[c] += 1;
        }
        for c in 0..k {
            // An empty cluster keeps its previous center.
            if counts[c] > 0 {
                centers[c] = sums[c] / counts[c] as f64;
            }
        }
    }
    let mut result = summarize(points, None, false, assignments, k);
    for (c, center) in centers.iter().enumerate() {
        if result.sizes[c] == 0 {
            result.centroids[c] = *center;
        }
    }
    Ok(result)
}

/// Cardinality `C(z)` of every measurement's single-linkage cluster at
/// distance `gate`.
pub fn precluster_measurements(points: &[Position], gate: f64) -> Result<Vec<usize>> {
    if !(gate > 0.0) {
        return Err(Error::invalid("gate", "must be > 0"));
    }
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let roots = agglomerate(points, &Linkage::cut(gate));
    let result = finish(points, None, false, &roots);
    Ok(result.assignments.iter().map(|&c| result.sizes[c]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Position {
        Position::new(x, y)
    }

    #[test]
    fn trivial_linkage() {
        let r = single_linkage(&[p(1.0, 2.0)], None, Linkage::cut(1.0)).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.centroids[0], p(1.0, 2.0));
        let r = single_linkage(&[p(0.0, 0.0), p(10.0, 0.0)], None, Linkage::cut(1.0)).unwrap();
        assert_eq!(r.len(), 2);
        assert!(single_linkage(&[], None, Linkage::cut(1.0)).unwrap().is_empty());
    }

    #[test]
    fn linkage_requires_a_rule() {
        let none = Linkage {
            max_clusters: None,
            cut: None,
            weighted: true,
        };
        assert!(single_linkage(&[p(0.0, 0.0)], None, none).is_err());
        assert!(single_linkage(&[p(0.0, 0.0)], None, Linkage::count(0)).is_err());
    }

    #[test]
    fn cap_forces_merges_beyond_cut() {
        let pts = [p(0.0, 0.0), p(5.0, 0.0), p(20.0, 0.0)];
        let both = Linkage {
            max_clusters: Some(2),
            cut: Some(1.0),
            weighted: false,
        };
        let r = single_linkage(&pts, None, both).unwrap();
        assert_eq!(r.assignments, vec![0, 0, 1]);
        // Cap not binding: the cut decides.
        let r = single_linkage(&pts, None, Linkage { max_clusters: Some(5), ..both }).unwrap();
        assert_eq!(r.len(), 3);
    }

    #[test]
    fn weighted_centroid() {
        let pts = [p(0.0, 0.0), p(1.0, 0.0)];
        let r = single_linkage(&pts, Some(&[3.0, 1.0]), Linkage::cut(2.0)).unwrap();
        assert!((r.centroids[0].x - 0.25).abs() < 1e-12);
        let flat = Linkage {
            weighted: false,
            ..Linkage::cut(2.0)
        };
        let r = single_linkage(&pts, Some(&[3.0, 1.0]), flat).unwrap();
        assert!((r.centroids[0].x - 0.5).abs() < 1e-12);
    }

    #[test]
    fn kmeans_basics() {
        let pts = [p(0.0, 0.0), p(2.0, 0.0), p(1.0, 3.0)];
        let r = kmeans(&pts, 1, 5).unwrap();
        assert!((r.centroids[0] - p(1.0, 1.0)).norm() < 1e-12);
        assert!(matches!(kmeans(&pts, 4, 5), Err(Error::TooFewPoints { k: 4, points: 3 })));
        assert_eq!(kmeans(&pts, 2, 9).unwrap(), kmeans(&pts, 2, 9).unwrap());
    }

    #[test]
    fn precluster_examples() {
        assert_eq!(precluster_measurements(&[p(0.0, 0.0)], 1.0).unwrap(), vec![1]);
        let pts = [p(0.0, 0.0), p(0.5, 0.0), p(0.0, 0.5), p(9.0, 9.0)];
        assert_eq!(precluster_measurements(&pts, 1.0).unwrap(), vec![3, 3, 3, 1]);
        assert!(precluster_measurements(&pts, 0.0).is_err());
    }
}
