//! Minimal deterministic SVG line charts.

use std::fmt::Write;

use phdnet::harness::{AggregateRow, FilterKind};

use crate::Figure;

pub struct Rendered {
    pub svg: String,
    pub csv: String,
}

struct Series {
    name: String,
    color: &'static str,
    /// Draw as a staircase instead of straight segments.
    steps: bool,
    dashed: bool,
    values: Vec<Option<f64>>,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn label(kind: FilterKind) -> &'static str {
    match kind {
        FilterKind::Ms => "MS-PPHDF",
        FilterKind::Dpphdf => "D-PPHDF",
        FilterKind::Local => "local only",
    }
}

fn color(kind: FilterKind) -> &'static str {
    match kind {
        FilterKind::Ms => "#1f77b4",
        FilterKind::Dpphdf => "#d62728",
        FilterKind::Local => "#2ca02c",
    }
}

pub fn figure(which: Figure, rows: &[AggregateRow]) -> Rendered {
    let steps: Vec<usize> = rows.iter().map(|r| r.step).collect();
    let filters: Vec<FilterKind> = FilterKind::ALL
        .into_iter()
        .filter(|k| rows.iter().any(|r| r.count_mean(*k).is_some()))
        .collect();
    let sigma = rows.first().map_or(f64::NAN, |r| r.sigma_r2);
    let mut series = Vec::new();
    let (title, y_label) = match which {
        Figure::EstimatedCount => {
            series.push(Series {
                name: "true number".into(),
                color: "#000000",
                steps: true,
                dashed: false,
                values: rows.iter().map(|r| Some(r.true_count)).collect(),
            });
            for k in &filters {
                series.push(Series {
                    name: label(*k).into(),
                    color: color(*k),
                    steps: false,
                    dashed: false,
                    values: rows.iter().map(|r| r.count_mean(*k)).collect(),
                });
            }
            ("Estimated number of targets", "targets")
        }
        Figure::OspaVsBound | Figure::OspaZoom => {
            for k in &filters {
                series.push(Series {
                    name: label(*k).into(),
                    color: color(*k),
                    steps: false,
                    dashed: false,
                    values: rows.iter().map(|r| r.ospa_mean(*k)).collect(),
                });
            }
            series.push(Series {
                name: "DPCRLB".into(),
                color: "#9467bd",
                steps: false,
                dashed: false,
                values: rows.iter().map(|r| r.dpcrlb).collect(),
            });
            if sigma.is_finite() {
                series.push(Series {
                    name: format!("variance {sigma}"),
                    color: "#7f7f7f",
                    steps: false,
                    dashed: true,
                    values: rows.iter().map(|_| Some(sigma)).collect(),
                });
            }
            if which == Figure::OspaZoom {
                ("Scaled squared OSPA (zoom)", "m²")
            } else {
                ("Scaled squared OSPA and bound", "m²")
            }
        }
    };

    let data_max = series
        .iter()
        .flat_map(|s| s.values.iter().flatten())
        .fold(0.0f64, |a, v| a.max(*v));
    let y_max = match which {
        Figure::OspaZoom if sigma.is_finite() => 4.0 * sigma,
        _ => nice_ceiling(data_max.max(1e-9)),
    };
    Rendered {
        svg: render(title, y_label, &steps, &series, y_max),
        csv: backing_csv(&steps, &series),
    }
}

fn nice_ceiling(v: f64) -> f64 {
    let mag = 10f64.powf(v.log10().floor());
    [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|c| *c >= v)
        .unwrap_or(10.0 * mag)
}

fn backing_csv(steps: &[usize], series: &[Series]) -> String {
    let mut out = String::from("step");
    for s in series {
        out.push(',');
        out.push_str(&s.name);
    }
    out.push('\n');
    for (i, step) in steps.iter().enumerate() {
        let _ = write!(out, "{step}");
        for s in series {
            out.push(',');
            if let Some(v) = s.values[i] {
                let _ = write!(out, "{v}");
            }
        }
        out.push('\n');
    }
    out
}

fn render(title: &str, y_label: &str, steps: &[usize], series: &[Series], y_max: f64) -> String {
    let x_min = *steps.first().unwrap_or(&0) as f64;
    let x_max = (*steps.last().unwrap_or(&1) as f64).max(x_min + 1.0);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let py = |y: f64| TOP + plot_h - (y.min(y_max).max(0.0) / y_max) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{title}</text>"#,
        LEFT + plot_w / 2.0
    );
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for i in 0..=5 {
        let v = y_max * i as f64 / 5.0;
        let y = py(v);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.1}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            y + 4.0,
            trim(v)
        );
    }
    let mut tick = x_min as usize;
    while tick as f64 <= x_max {
        let x = px(tick as f64);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{tick}</text>"#,
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 18.0
        );
        tick += 5;
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">time step</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{y_label}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    for (idx, ser) in series.iter().enumerate() {
        let dash = if ser.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        for segment in segments(steps, &ser.values) {
            let mut pts = String::new();
            let mut prev: Option<(f64, f64)> = None;
            for (x, y) in segment {
                let (x, y) = (px(x), py(y));
                if ser.steps {
                    if let Some((_, py0)) = prev {
                        let _ = write!(pts, "{x:.2},{py0:.2} ");
                    }
                }
                let _ = write!(pts, "{x:.2},{y:.2} ");
                prev = Some((x, y));
            }
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.8"{dash}/>"#,
                pts.trim_end(),
                ser.color
            );
        }
        let ly = TOP + 10.0 + 18.0 * idx as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{}" stroke-width="1.8"{dash}/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 24.0,
            ser.color,
            lx + 30.0,
            ly + 4.0,
            ser.name
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Runs of consecutive defined values.
fn segments(steps: &[usize], values: &[Option<f64>]) -> Vec<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for (step, v) in steps.iter().zip(values) {
        match v {
            Some(v) => cur.push((*step as f64, *v)),
            None if !cur.is_empty() => out.push(std::mem::take(&mut cur)),
            None => {}
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn trim(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() {
        "0".into()
    } else {
        s.to_string()
    }
}
