//! Run configuration, read from TOML. Every section and field is optional;
//! missing values take their defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::executive::ExecutiveConfig;
use crate::model::SrbModel;
use crate::planner::PlannerConfig;
use crate::sim::SimConfig;
use crate::vmc::VmcGains;

/// Everything a run needs besides the command and initial state.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: SrbModel,
    pub planner: PlannerConfig,
    pub gains: VmcGains,
    pub sim: SimConfig,
    pub executive: ExecutiveConfig,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Parses and validates.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config types serialize to TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate()?;
        let p = &self.planner;
        if !(p.v_max > 0.0 && p.a_max > 0.0 && p.duration_floor > 0.0 && p.min_total_duration >= 0.0) {
            return Err(ConfigError::Invalid(
                "planner v_max, a_max and duration_floor must be positive".into(),
            ));
        }
        if p.cost_order < 1 || p.cost_order > 5 {
            return Err(ConfigError::Invalid("planner.cost_order must be in 1..=5".into()));
        }
        self.gains.validate().map_err(ConfigError::Invalid)?;
        self.sim.validate().map_err(ConfigError::Invalid)?;
        self.executive.validate().map_err(ConfigError::Invalid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.gains.mu = 0.4;
        cfg.executive.stance_splay = 0.05;
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn partial_sections_override_defaults() {
        let cfg = RunConfig::from_toml("[sim]\ndt = 0.0005\n[planner]\nvertical_waypoints = \"line\"\n").unwrap();
        assert_eq!(cfg.sim.dt, 0.0005);
        assert_eq!(cfg.planner.vertical_waypoints, crate::planner::VerticalWaypoints::Line);
        assert_eq!(cfg.model, SrbModel::default());
    }

    #[test]
    fn rejects_unknown_fields_and_bad_values() {
        assert!(matches!(RunConfig::from_toml("[sim]\nstep = 1\n"), Err(ConfigError::Parse(_))));
        assert!(matches!(RunConfig::from_toml("[model]\nmass = -1.0\n"), Err(ConfigError::Invalid(_))));
        assert!(matches!(RunConfig::from_toml("[sim]\ndt = 0.0\n"), Err(ConfigError::Invalid(_))));
        assert!(matches!(RunConfig::from_toml("[planner]\ncost_order = 0\n"), Err(ConfigError::Invalid(_))));
    }
}
