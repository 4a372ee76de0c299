pub mod config;
pub mod error;
pub mod executive;
pub mod kinematics;
pub mod model;
pub mod planner;
pub mod qp;
pub mod rotation;
pub mod sim;
pub mod vmc;

pub use config::RunConfig;
pub use error::{ConfigError, JumpError, KinematicsError, NoLanding, PlanError, SimError, TrackError};
pub use executive::{
    run_jump, run_jump_from, run_jump_observed, ExecutiveConfig, JumpCommand, JumpLog, JumpSummary, LowLevelCommand, Phase,
    PhaseSchedule, TickRecord,
};
pub use model::{FootSet, RobotState, SrbModel, Vector12, LEGS, LEG_NAMES};
pub use planner::{plan_jump_trajectory, plan_trajectory, BoundaryState, CommandRanges, PiecewiseQuintic, PlannerConfig, VerticalWaypoints};
pub use qp::{QpProblem, QpSolution, QpSolver, QpStatus};
pub use sim::{SimConfig, SimState};
pub use vmc::{Tracker, TrackingReference, VmcGains};
