use thiserror::Error;

use crate::qp::QpStatus;

/// Leg kinematics failures.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum KinematicsError {
    #[error("foot target for leg {leg} is out of reach (distance {distance:.4} m)")]
    OutOfReach { leg: usize, distance: f64 },
    #[error("leg index {0} out of range 0..4")]
    BadLeg(usize),
}

/// Trajectory planning failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("command out of range: {field} = {value} not in [{min}, {max}]")]
    CommandOutOfRange {
        field: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("free-derivative block is ill-conditioned (condition estimate {0:e})")]
    IllConditioned(f64),
    #[error("invalid planner input: {0}")]
    InvalidInput(String),
}

/// Virtual-model tracker failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackError {
    #[error("no feet in contact")]
    NoContact,
    #[error("ground reaction force QP terminated with status {0:?}")]
    Qp(QpStatus),
    #[error("malformed force-distribution problem: {0}")]
    Problem(String),
}

/// Simulation failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("simulation diverged: {0}")]
    Diverged(String),
}

/// End-to-end jump failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum JumpError {
    #[error("planning failed: {0}")]
    PlanningFailed(#[from] PlanError),
    #[error("tracking failed at t = {t:.3} s: {source}")]
    TrackingFailed { t: f64, source: TrackError },
    #[error("{0}")]
    SimulationDiverged(#[from] SimError),
    #[error("no landing: {0}")]
    NoLanding(#[from] NoLanding),
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("ballistic arc never reaches the landing height (v_z = {v_z}, z = {z}, z_land = {z_land})")]
pub struct NoLanding {
    pub v_z: f64,
    pub z: f64,
    pub z_land: f64,
}

/// Configuration loading failures.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}
