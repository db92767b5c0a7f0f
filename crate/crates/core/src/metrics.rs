//! OSPA distance on position sets and the minimum-cost assignment it needs.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Position, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OspaParams {
    /// Cut-off distance (m).
    pub c: f64,
    /// Order.
    pub p: f64,
}

impl Default for OspaParams {
    fn default() -> Self {
        Self { c: 2.0, p: 2.0 }
    }
}

impl OspaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(Error::invalid("ospa_c", "must be > 0"));
        }
        if !(self.p >= 1.0) {
            return Err(Error::invalid("ospa_p", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(row, column)` pairs, one per element of the smaller side, sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub cost: f64,
}

/// Minimum-cost one-to-one assignment of the smaller side of a rectangular
/// cost matrix (shortest augmenting paths with potentials, O(n²m)).
pub fn optimal_assignment(cost: &DMatrix<f64>) -> Assignment {
    let (r, c) = cost.shape();
    if r == 0 || c == 0 {
        return Assignment {
            pairs: Vec::new(),
            cost: 0.0,
        };
    }
    if r > c {
        let t = optimal_assignment(&cost.transpose());
        let mut pairs: Vec<(usize, usize)> = t.pairs.into_iter().map(|(a, b)| (b, a)).collect();
        pairs.sort_unstable();
        return Assignment { pairs, cost: t.cost };
    }

    // 1-based arrays; column 0 is the virtual start of each augmenting path.
    let (n, m) = (r, c);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut row_of = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut min_to = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let reduced = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if reduced < min_to[j] {
                    min_to[j] = reduced;
                    way[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| row_of[j] != 0)
        .map(|j| (row_of[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    let total = pairs.iter().map(|&(i, j)| cost[(i, j)]).sum();
    Assignment { pairs, cost: total }
}

/// OSPA distance of order `p` with cut-off `c` between two position sets.
pub fn ospa(x: &[Position], y: &[Position], params: &OspaParams) -> f64 {
    let (small, large) = if x.len() <= y.len() { (x, y) } else { (y, x) };
    let (m, n) = (small.len(), large.len());
    if n == 0 {
        return 0.0;
    }
    let cp = params.c.powf(params.p);
    let cost = DMatrix::from_fn(m, n, |i, j| (small[i] - large[j]).norm().min(params.c).powf(params.p));
    let matched = optimal_assignment(&cost).cost;
    let d = ((matched + cp * (n - m) as f64) / n as f64).powf(1.0 / params.p);
    d.min(params.c)
}

/// `|truth| · ospa²`, the per-step error compared against the bound.
pub fn scaled_squared_ospa(truth: &[Position], estimates: &[Position], params: &OspaParams) -> f64 {
    let d = ospa(truth, estimates, params);
    truth.len() as f64 * d * d
}

/// Truth indices matched to an estimate closer than the cut-off under the
/// OSPA-optimal assignment.
pub fn matched_truth(truth: &[Position], estimates: &[Position], params: &OspaParams) -> Vec<usize> {
    if truth.is_empty() || estimates.is_empty() {
        return Vec::new();
    }
    let cost = DMatrix::from_fn(truth.len(), estimates.len(), |i, j| {
        (truth[i] - estimates[j]).norm().min(params.c).powf(params.p)
    });
    optimal_assignment(&cost)
        .pairs
        .into_iter()
        .filter(|&(i, j)| (truth[i] - estimates[j]).norm() < params.c)
        .map(|(i, _)| i)
        .collect()
}
