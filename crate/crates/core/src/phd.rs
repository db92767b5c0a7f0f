//! Sequential Monte Carlo PHD building blocks shared by the centralized and
//! the diffusion filters.
//!
//! A [`ParticleSet`] represents a PHD: weights need not sum to one, the total
//! mass is the expected number of targets. Only persistent particles take part
//! in prediction, weighting and resampling; newborn particles produced by
//! adaptive birth join the persistent population at the next step.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::dynamics::ModelMatrices;
use crate::{Error, Position, Result, StateVector};

/// Dimension of the particle state.
pub const STATE_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub state: StateVector,
    pub weight: f64,
}

impl Particle {
    pub fn new(state: StateVector, weight: f64) -> Self {
        Self { state, weight }
    }

    pub fn position(&self) -> Position {
        Position::new(self.state[0], self.state[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetKind {
    Persistent,
    Newborn,
    Total,
    Collective,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    pub kind: SetKind,
    pub particles: Vec<Particle>,
}

impl ParticleSet {
    pub fn new(kind: SetKind, particles: Vec<Particle>) -> Self {
        Self { kind, particles }
    }

    pub fn empty(kind: SetKind) -> Self {
        Self::new(kind, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Sum of weights, i.e. the expected number of targets.
    pub fn mass(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).sum()
    }

    pub fn positions(&self) -> Vec<Position> {
        self.particles.iter().map(Particle::position).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.weight).collect()
    }

    pub fn with_kind(mut self, kind: SetKind) -> Self {
        self.kind = kind;
        self
    }
}

/// Sum of two PHDs: concatenation of the particle lists.
pub fn merge(a: &ParticleSet, b: &ParticleSet) -> ParticleSet {
    let mut particles = Vec::with_capacity(a.len() + b.len());
    particles.extend_from_slice(&a.particles);
    particles.extend_from_slice(&b.particles);
    ParticleSet::new(SetKind::Total, particles)
}

/// Noise-free propagation `s ← F·s` with weights scaled by `p_S`. The process
/// noise is represented by the spread of the cloud (see [`roughen`]).
pub fn predict(set: &ParticleSet, model: &ModelMatrices, p_survive: f64) -> ParticleSet {
    let particles = set
        .particles
        .iter()
        .map(|p| Particle::new(model.f * p.state, p_survive * p.weight))
        .collect();
    ParticleSet::new(SetKind::Persistent, particles)
}

/// A measurement as seen by the weight update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledMeasurement {
    pub z: Position,
    /// Cardinality `C(z)` of the measurement's pre-cluster, `>= 1`.
    pub cardinality: usize,
    /// Clutter intensity `λ_FA·c_FA(z)` at this measurement.
    pub clutter_intensity: f64,
}

impl LabeledMeasurement {
    pub fn new(z: Position, cardinality: usize, clutter_intensity: f64) -> Self {
        Self {
            z,
            cardinality,
            clutter_intensity,
        }
    }
}

/// Where the sensor that produced a batch of measurements can detect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DetectionRegion {
    /// Constant detection probability for every particle.
    Everywhere,
    /// Detection probability `p_D` inside the disk, zero outside.
    Disk { center: Position, radius: f64 },
}

impl DetectionRegion {
    #[inline]
    pub fn contains(&self, p: &Position) -> bool {
        match self {
            DetectionRegion::Everywhere => true,
            DetectionRegion::Disk { center, radius } => {
                let d = p - center;
                d.x * d.x + d.y * d.y <= radius * radius
            }
        }
    }
}

/// Per-particle, per-measurement update terms `w^p_{j,update}` (row-major,
/// one row per particle).
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl UpdateMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, particle: usize, measurement: usize) -> f64 {
        self.values[particle * self.cols + measurement]
    }

    pub fn row(&self, particle: usize) -> &[f64] {
        &self.values[particle * self.cols..(particle + 1) * self.cols]
    }

    /// Measurement with the strictly largest update term for `particle`;
    /// the lowest index wins ties and an all-zero row claims nothing.
    pub fn argmax(&self, particle: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (j, &v) in self.row(particle).iter().enumerate() {
            if v > 0.0 && best.is_none_or(|(_, b)| v > b) {
                best = Some((j, v));
            }
        }
        best.map(|(j, _)| j)
    }

    /// Concatenates matrices with equal row counts column-wise.
    pub fn hstack(parts: &[UpdateMatrix]) -> Self {
        let rows = parts.first().map_or(0, |m| m.rows);
        assert!(parts.iter().all(|m| m.rows == rows), "row counts differ");
        let cols = parts.iter().map(|m| m.cols).sum();
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for m in parts {
                values.extend_from_slice(m.row(r));
            }
        }
        Self { rows, cols, values }
    }
}

/// Isotropic Gaussian likelihood `N(z; x, σ² I₂)`.
#[inline]
pub fn gaussian_likelihood(z: &Position, x: &Position, sigma_r2: f64) -> f64 {
    let d = z - x;
    (-(d.x * d.x + d.y * d.y) / (2.0 * sigma_r2)).exp() / (2.0 * PI * sigma_r2)
}

/// PHD weight update with cardinality-normalized measurement terms:
///
/// `w^p ← [1 − p_D(x^p) + Σ_j w^p_j] · w^p` with
/// `w^p_j = p_D(x^p) f(z_j|x^p) / ((λc(z_j) + 𝓛(z_j)) · C(z_j))` and
/// `𝓛(z_j) = Σ_q p_D(x^q) f(z_j|x^q) w^q`.
///
/// Calling this once per neighbor with `C ≡ 1` and the neighbor's detection
/// disk realizes the iterated per-neighbor update of the diffusion filter.
pub fn weight_update(
    set: &ParticleSet,
    measurements: &[LabeledMeasurement],
    p_detect: f64,
    sigma_r2: f64,
    region: DetectionRegion,
) -> (ParticleSet, UpdateMatrix) {
    let n = set.len();
    let m = measurements.len();
    let positions = set.positions();
    let pd: Vec<f64> = positions
        .iter()
        .map(|x| if region.contains(x) { p_detect } else { 0.0 })
        .collect();

    let mut matrix = UpdateMatrix::zeros(n, m);
    // Unnormalized p_D·f in place; 𝓛 accumulated per measurement first.
    let mut total_likelihood = vec![0.0; m];
    for (p, x) in positions.iter().enumerate() {
        if pd[p] == 0.0 {
            continue;
        }
        let w = set.particles[p].weight;
        let row = &mut matrix.values[p * m..(p + 1) * m];
        for (j, meas) in measurements.iter().enumerate() {
            let v = pd[p] * gaussian_likelihood(&meas.z, x, sigma_r2);
            row[j] = v;
            total_likelihood[j] += v * w;
        }
    }
    let scale: Vec<f64> = measurements
        .iter()
        .zip(&total_likelihood)
        .map(|(meas, l)| {
            let denom = (meas.clutter_intensity + l) * meas.cardinality as f64;
            if denom > 0.0 {
                1.0 / denom
            } else {
                0.0
            }
        })
        .collect();

    let mut particles = Vec::with_capacity(n);
    for (p, particle) in set.particles.iter().enumerate() {
        let row = &mut matrix.values[p * m..(p + 1) * m];
        let mut sum = 0.0;
        for (v, s) in row.iter_mut().zip(&scale) {
            *v *= s;
            sum += *v;
        }
        particles.push(Particle::new(
            particle.state,
            (1.0 - pd[p] + sum) * particle.weight,
        ));
    }
    (ParticleSet::new(SetKind::Persistent, particles), matrix)
}

/// Indices of measurements that are not the argmax of any particle's row,
/// i.e. measurements that might stem from a new target.
pub fn candidate_measurements(count: usize, update: &UpdateMatrix) -> Vec<usize> {
    let claimed = claimed_measurements(update);
    (0..count).filter(|j| !claimed.get(*j).copied().unwrap_or(false)).collect()
}

/// Per column: whether some particle's argmax selects it.
pub fn claimed_measurements(update: &UpdateMatrix) -> Vec<bool> {
    let mut claimed = vec![false; update.cols()];
    for p in 0..update.rows() {
        if let Some(j) = update.argmax(p) {
            claimed[j] = true;
        }
    }
    claimed
}

/// Rounded total mass, ties away from zero.
pub fn estimate_target_count(set: &ParticleSet) -> usize {
    set.mass().max(0.0).round() as usize
}

/// Multinomial resampling to `n_hat · n_p` particles of weight `1 / n_p`.
///
/// Particle `p` is drawn with probability `w^p / Σw`.
pub fn resample<R: Rng + ?Sized>(
    set: &ParticleSet,
    n_hat: usize,
    n_p: usize,
    rng: &mut R,
) -> Result<ParticleSet> {
    if n_hat == 0 || n_p == 0 {
        return Ok(ParticleSet::empty(SetKind::Persistent));
    }
    let total = set.mass();
    if !(total > 0.0) {
        return Err(Error::DegenerateMass { expected: n_hat });
    }
    let count = n_hat * n_p;
    let weight = n_hat as f64 / count as f64;

    let mut draws: Vec<f64> = (0..count).map(|_| rng.random::<f64>() * total).collect();
    draws.sort_by(f64::total_cmp);

    let mut out = Vec::with_capacity(count);
    let mut idx = 0;
    let mut cumulative = set.particles[0].weight;
    let last = set.len() - 1;
    for u in draws {
        while u >= cumulative && idx < last {
            idx += 1;
            cumulative += set.particles[idx].weight;
        }
        // Skip zero-weight particles that share the boundary.
        while set.particles[idx].weight <= 0.0 && idx < last {
            idx += 1;
            cumulative += set.particles[idx].weight;
        }
        out.push(Particle::new(set.particles[idx].state, weight));
    }
    Ok(ParticleSet::new(SetKind::Persistent, out))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RougheningParams {
    /// Tuning constant `K`.
    pub k: f64,
    /// Interval length `E_c`, shared by all components.
    pub e_c: f64,
}

impl RougheningParams {
    /// `K·E_c·N^(−1/d)` for a set of `n` particles.
    pub fn sigma(&self, n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        self.k * self.e_c * (n as f64).powf(-1.0 / STATE_DIM as f64)
    }
}

/// Adds independent `N(0, σ_c²)` jitter to every state component.
pub fn roughen<R: Rng + ?Sized>(
    set: &ParticleSet,
    params: &RougheningParams,
    rng: &mut R,
) -> ParticleSet {
    let sigma = params.sigma(set.len());
    if sigma == 0.0 {
        return set.clone();
    }
    let particles = set
        .particles
        .iter()
        .map(|p| {
            let jitter = StateVector::from_fn(|_, _| {
                let n: f64 = StandardNormal.sample(rng);
                sigma * n
            });
            Particle::new(p.state + jitter, p.weight)
        })
        .collect();
    ParticleSet::new(set.kind, particles)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BirthParams {
    pub particles_per_target: usize,
    pub p_birth: f64,
    /// Position standard deviation around the candidate measurement (m).
    pub position_std: f64,
    /// Velocity standard deviation (m/s).
    pub velocity_std: f64,
    /// Give every candidate mass `p_B` instead of sharing `p_B` among all.
    pub per_candidate_mass: bool,
}

/// Places `N_P` particles around each candidate measurement. With the default
/// mass rule every newborn particle weighs `p_B / N_new`.
pub fn adaptive_birth<R: Rng + ?Sized>(
    candidates: &[Position],
    params: &BirthParams,
    rng: &mut R,
) -> ParticleSet {
    let n_new = params.particles_per_target * candidates.len();
    if n_new == 0 {
        return ParticleSet::empty(SetKind::Newborn);
    }
    let weight = if params.per_candidate_mass {
        params.p_birth / params.particles_per_target as f64
    } else {
        params.p_birth / n_new as f64
    };
    let pos = Normal::new(0.0, params.position_std).expect("finite position std");
    let vel = Normal::new(0.0, params.velocity_std).expect("finite velocity std");
    let mut particles = Vec::with_capacity(n_new);
    for z in candidates {
        for _ in 0..params.particles_per_target {
            let state = StateVector::new(
                z.x + pos.sample(rng),
                z.y + pos.sample(rng),
                vel.sample(rng),
                vel.sample(rng),
            );
            particles.push(Particle::new(state, weight));
        }
    }
    ParticleSet::new(SetKind::Newborn, particles)
}
