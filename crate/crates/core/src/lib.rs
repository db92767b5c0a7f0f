//! Multi-target tracking in static sensor networks with sequential Monte Carlo
//! PHD filters.
//!
//! The crate provides a centralized multi-sensor particle PHD filter
//! ([`filters::MsPphdf`]), a distributed diffusion variant in which every node
//! runs its own filter and exchanges measurements and resampled particles with
//! its one-hop neighbors ([`filters::DiffusionPphdf`]), and everything needed to
//! evaluate them: a sensor-network simulator, the OSPA metric, a distributed
//! posterior Cramér-Rao bound and a seeded Monte Carlo harness.
//!
//! State vectors are always ordered `[x, y, vx, vy]`.

pub mod clustering;
pub mod crlb;
pub mod dynamics;
pub mod error;
pub mod filters;
pub mod harness;
pub mod metrics;
pub mod network;
pub mod phd;
pub mod rng;
pub mod sensing;

pub use error::{Error, Result};

/// Two-dimensional position (m).
pub type Position = nalgebra::Vector2<f64>;
/// Full kinematic state `[x, y, vx, vy]`.
pub type StateVector = nalgebra::Vector4<f64>;
