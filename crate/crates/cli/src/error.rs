use std::path::PathBuf;

use omnijump_core::{ConfigError, JumpError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Jump(#[from] JumpError),
    #[error("landing failed: {0}")]
    Landing(String),
    #[error("chain aborted at jump {index}: {source}")]
    Chain { index: usize, source: Box<CliError> },
    #[error("writing {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// 2 configuration or usage, 3 planning, 4 tracking, simulation or
    /// landing, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Jump(JumpError::PlanningFailed(_)) => 3,
            CliError::Jump(_) | CliError::Landing(_) => 4,
            CliError::Chain { source, .. } => source.exit_code(),
            CliError::Io { .. } => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use omnijump_core::{PlanError, SimError};

    #[test]
    fn exit_codes_by_failure_class() {
        let plan = CliError::Jump(JumpError::PlanningFailed(PlanError::InvalidInput("x".into())));
        assert_eq!(plan.exit_code(), 3);
        assert_eq!(CliError::Jump(JumpError::SimulationDiverged(SimError::Diverged("x".into()))).exit_code(), 4);
        assert_eq!(CliError::Config(ConfigError::Invalid("x".into())).exit_code(), 2);
        assert_eq!(CliError::Landing("tilted".into()).exit_code(), 4);
        let chained = CliError::Chain { index: 2, source: Box::new(plan) };
        assert_eq!(chained.exit_code(), 3);
        assert!(chained.to_string().starts_with("chain aborted at jump 2"));
    }
}
