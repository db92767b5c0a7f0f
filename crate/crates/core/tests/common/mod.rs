//! Independent reference implementations shared by the integration tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, Matrix4};
use phdnet::crlb::birth_information;
use phdnet::dynamics::ModelMatrices;
use phdnet::Position;

/// Exhaustive minimum over all injective maps of the smaller side.
pub fn brute_force_assignment(cost: &DMatrix<f64>) -> f64 {
    let (r, c) = cost.shape();
    let (small, transpose) = if r <= c { (r, false) } else { (c, true) };
    let large = r.max(c);
    let at = |i: usize, j: usize| if transpose { cost[(j, i)] } else { cost[(i, j)] };
    fn search(row: usize, small: usize, large: usize, used: &mut [bool], acc: f64, at: &dyn Fn(usize, usize) -> f64) -> f64 {
        if row == small {
            return acc;
        }
        let mut best = f64::INFINITY;
        for j in 0..large {
            if !used[j] {
                used[j] = true;
                best = best.min(search(row + 1, small, large, used, acc + at(row, j), at));
                used[j] = false;
            }
        }
        best
    }
    search(0, small, large, &mut vec![false; large], 0.0, &at)
}

/// Naive agglomeration: repeatedly merge the closest pair of clusters.
pub fn naive_single_linkage(points: &[Position], cut: Option<f64>, cap: Option<usize>) -> Vec<usize> {
    let mut clusters: Vec<Vec<usize>> = (0..points.len()).map(|i| vec![i]).collect();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let d = clusters[a]
                    .iter()
                    .flat_map(|&i| clusters[b].iter().map(move |&j| (points[i] - points[j]).norm()))
                    .fold(f64::INFINITY, f64::min);
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, a, b));
                }
            }
        }
        let Some((d, a, b)) = best else { break };
        let merge = cut.is_some_and(|c| d <= c) || cap.is_some_and(|m| clusters.len() > m);
        if !merge {
            break;
        }
        let moved = clusters.remove(b);
        clusters[a].extend(moved);
    }
    let mut label = vec![0; points.len()];
    for (k, c) in clusters.iter().enumerate() {
        for &i in c {
            label[i] = k;
        }
    }
    // Relabel by first occurrence.
    let mut map = std::collections::HashMap::new();
    label
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Information matrices of the Kalman covariance recursion started from the
/// birth prior, with `q` sensors of detection probability `p_d` each step.
pub fn kalman_information(model: &ModelMatrices, sigma_r2: f64, p_d: f64, q: usize, steps: usize) -> Vec<Matrix4<f64>> {
    let mut p = birth_information(sigma_r2, 1.0).try_inverse().expect("prior is invertible");
    let d = model.g * model.q * model.g.transpose();
    let r_inv = model.h.transpose() * model.h * (q as f64 * p_d / sigma_r2);
    (0..steps)
        .map(|_| {
            let prior: Matrix4<f64> = model.f * p * model.f.transpose() + d;
            p = (prior.try_inverse().expect("prior covariance") + r_inv)
                .try_inverse()
                .expect("posterior information");
            p.try_inverse().expect("posterior covariance")
        })
        .collect()
}
