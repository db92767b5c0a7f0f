use std::fmt::Write;

use phdnet::harness::{aggregate, mean_se, FilterKind, RunRow};

/// Step intervals of the summary table.
pub const INTERVALS: [(usize, usize); 4] = [(1, 30), (3, 8), (20, 24), (24, 30)];

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

/// Text report: per-interval means pooled over steps and runs, then the
/// bound-dominance checks per step.
pub fn summarize(rows: &[RunRow], sigma_r2: Option<f64>, slack: f64) -> String {
    let present: Vec<FilterKind> = FilterKind::ALL
        .into_iter()
        .filter(|k| rows.iter().any(|r| r.scalars(*k).is_some()))
        .collect();
    let runs = {
        let mut ids: Vec<usize> = rows.iter().map(|r| r.run).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    };
    let mut out = String::new();
    let _ = writeln!(out, "runs: {runs}");
    let _ = writeln!(out, "interval  filter  true_count  count_mean  ospa_mean  ospa_n");
    for (lo, hi) in INTERVALS {
        let at: Vec<&RunRow> = rows.iter().filter(|r| r.step >= lo && r.step <= hi).collect();
        if at.is_empty() {
            continue;
        }
        let truth = mean_se(&at.iter().map(|r| r.true_count as f64).collect::<Vec<_>>()).0;
        for k in &present {
            let counts: Vec<f64> = at.iter().filter_map(|r| r.count(*k)).map(|c| c as f64).collect();
            let ospa: Vec<f64> = at.iter().filter_map(|r| r.ospa(*k)).collect();
            let _ = writeln!(
                out,
                "[{lo},{hi}]  {:<6}  {:>10}  {:>10}  {:>9}  {:>6}",
                k.as_str(),
                fmt(truth),
                fmt(mean_se(&counts).0),
                fmt(mean_se(&ospa).0),
                ospa.len()
            );
        }
    }

    let agg = aggregate(rows, sigma_r2.unwrap_or(f64::NAN));
    let mut violations = 0;
    for a in &agg {
        let Some(bound) = a.dpcrlb else { continue };
        for k in &present {
            if let Some(ospa) = a.ospa_mean(*k) {
                if bound > ospa * (1.0 + slack) {
                    violations += 1;
                    let _ = writeln!(
                        out,
                        "VIOLATION step {}: dpcrlb {bound:.4} exceeds {} mean ospa {ospa:.4}",
                        a.step,
                        k.as_str()
                    );
                }
            }
        }
        if let (Some(s), Some(per)) = (sigma_r2, a.dpcrlb_per_target) {
            if per > s * 1.05 {
                violations += 1;
                let _ = writeln!(
                    out,
                    "VIOLATION step {}: per-target bound {per:.4} exceeds measurement variance {s}",
                    a.step
                );
            }
        }
    }
    if violations == 0 {
        let _ = writeln!(out, "bound dominance: ok");
    } else {
        let _ = writeln!(out, "bound dominance: {violations} violation(s)");
    }
    out
}
