//! Linear constant-velocity target model and deterministic ground-truth tracks.

use std::path::Path;

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2, Vector2};
use serde::{Deserialize, Serialize};

use crate::{Error, Position, Result, StateVector};

/// Ground-truth kinematic state of one target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

impl TargetState {
    pub fn new(x: f64, y: f64, vx: f64, vy: f64) -> Self {
        Self { x, y, vx, vy }
    }

    pub fn from_vector(v: &StateVector) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_vector(&self) -> StateVector {
        StateVector::new(self.x, self.y, self.vx, self.vy)
    }

    pub fn position(&self) -> Position {
        Position::new(self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.vx.is_finite() && self.vy.is_finite()
    }
}

/// Time-invariant matrices of the linear state-space model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelMatrices {
    /// State transition.
    pub f: Matrix4<f64>,
    /// Process-noise gain.
    pub g: Matrix4x2<f64>,
    /// Process-noise covariance (m²).
    pub q: Matrix2<f64>,
    /// Position measurement matrix.
    pub h: Matrix2x4<f64>,
    pub dt: f64,
}

/// Builds `F = [[I, dt I], [0, I]]`, `G = [[dt²/2 I], [dt I]]`, `Q = σ_q² I` and
/// `H = [I, 0]`.
pub fn build_model(dt: f64, sigma_q2: f64) -> Result<ModelMatrices> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid("dt", format!("must be > 0, got {dt}")));
    }
    if !(sigma_q2 >= 0.0) || !sigma_q2.is_finite() {
        return Err(Error::invalid(
            "sigma_q2",
            format!("must be >= 0, got {sigma_q2}"),
        ));
    }
    let mut f = Matrix4::identity();
    f[(0, 2)] = dt;
    f[(1, 3)] = dt;
    let half = dt * dt / 2.0;
    let g = Matrix4x2::new(half, 0.0, 0.0, half, dt, 0.0, 0.0, dt);
    let q = Matrix2::identity() * sigma_q2;
    let h = Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0);
    Ok(ModelMatrices { f, g, q, h, dt })
}

/// `F·s + G·n`.
pub fn propagate(state: &TargetState, model: &ModelMatrices, noise: &Vector2<f64>) -> TargetState {
    TargetState::from_vector(&(model.f * state.to_vector() + model.g * noise))
}

/// Deterministic trajectory of one target.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u32,
    pub entry_step: usize,
    /// Last step at which the target is present (inclusive).
    pub exit_step: usize,
    pub states: Vec<TargetState>,
}

impl Track {
    pub fn is_active(&self, step: usize) -> bool {
        step >= self.entry_step && step <= self.exit_step
    }

    pub fn state_at(&self, step: usize) -> Option<&TargetState> {
        if self.is_active(step) {
            self.states.get(step - self.entry_step)
        } else {
            None
        }
    }
}

/// A target present at a given step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveTarget {
    pub id: u32,
    pub state: TargetState,
}

/// Targets active at `step`, in track order.
pub fn active_targets(tracks: &[Track], step: usize) -> Vec<ActiveTarget> {
    tracks
        .iter()
        .filter_map(|t| t.state_at(step).map(|s| ActiveTarget { id: t.id, state: *s }))
        .collect()
}

/// Where the ground truth comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "path")]
pub enum ScenarioSource {
    /// The bundled three-target reference scenario.
    Reference,
    /// A waypoint file in the documented JSON schema.
    File(std::path::PathBuf),
}

#[derive(Debug, Deserialize, Serialize)]
struct WaypointFile {
    #[serde(default)]
    dt: Option<f64>,
    targets: Vec<WaypointTarget>,
}

#[derive(Debug, Deserialize, Serialize)]
struct WaypointTarget {
    id: u32,
    entry_step: usize,
    #[serde(default)]
    exit_step: Option<usize>,
    states: Vec<[f64; 4]>,
}

const REFERENCE_TRACKS: &str = include_str!("../data/reference_tracks.json");

/// Ground-truth tracks for `source`.
pub fn scenario_tracks(source: &ScenarioSource) -> Result<Vec<Track>> {
    match source {
        ScenarioSource::Reference => parse_waypoints(REFERENCE_TRACKS, Path::new("<reference>")),
        ScenarioSource::File(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_waypoints(&text, path)
        }
    }
}

/// Parses a waypoint document. Schema:
///
/// ```json
/// { "dt": 1.0,
///   "targets": [ { "id": 1, "entry_step": 0, "exit_step": null,
///                  "states": [[x, y, vx, vy], ...] } ] }
/// ```
///
/// `states[k]` is the state at step `entry_step + k`. `exit_step`, when
/// present, must equal `entry_step + states.len() - 1`.
pub fn parse_waypoints(text: &str, path: &Path) -> Result<Vec<Track>> {
    let malformed = |reason: String| Error::MalformedFile {
        kind: "waypoint",
        path: path.to_path_buf(),
        reason,
    };
    let doc: WaypointFile = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
    if let Some(dt) = doc.dt {
        if !(dt > 0.0) {
            return Err(malformed(format!("dt must be > 0, got {dt}")));
        }
    }
    let mut tracks = Vec::with_capacity(doc.targets.len());
    for t in doc.targets {
        if t.states.is_empty() {
            return Err(malformed(format!("target {} has no states", t.id)));
        }
        let last = t.entry_step + t.states.len() - 1;
        if let Some(exit) = t.exit_step {
            if exit != last {
                return Err(malformed(format!(
                    "target {}: exit_step {exit} does not match {} states from step {}",
                    t.id,
                    t.states.len(),
                    t.entry_step
                )));
            }
        }
        if tracks.iter().any(|o: &Track| o.id == t.id) {
            return Err(malformed(format!("duplicate target id {}", t.id)));
        }
        let states: Vec<TargetState> = t
            .states
            .iter()
            .map(|s| TargetState::new(s[0], s[1], s[2], s[3]))
            .collect();
        if let Some(bad) = states.iter().position(|s| !s.is_finite()) {
            return Err(malformed(format!("target {} state {bad} is not finite", t.id)));
        }
        tracks.push(Track {
            id: t.id,
            entry_step: t.entry_step,
            exit_step: last,
            states,
        });
    }
    Ok(tracks)
}
