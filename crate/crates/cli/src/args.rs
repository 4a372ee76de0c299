use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;
use omnijump_core::JumpCommand;

#[derive(Debug, Parser)]
#[command(name = "omnijump", version, about = "Omnidirectional quadruped jumping: plan, track and simulate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan and simulate one jump from a standing stance.
    Jump(JumpArgs),
    /// Simulate jumps back to back, each starting from the previous settled state.
    Chain(ChainArgs),
    /// Time trajectory planning plus one tracking cycle over random commands.
    Bench(BenchArgs),
    /// Write the planned CoM trajectory for a command as CSV.
    Plan(PlanArgs),
}

/// Options shared by every command that builds a run configuration.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML run configuration; missing sections keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Simulation step, s.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Skip command range checks.
    #[arg(long)]
    pub force: bool,
}

/// End state of the preparing phase, relative to the start pose (body-heading frame).
#[derive(Debug, Clone, Copy, PartialEq, Args)]
pub struct TargetArgs {
    /// End position offset along the heading, m.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub dx: f64,
    /// Lateral end position offset, m.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub dy: f64,
    /// Vertical end position offset, m.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub dz: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub vx: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub vy: f64,
    /// Takeoff vertical velocity, m/s.
    #[arg(long, default_value_t = 2.5, allow_negative_numbers = true)]
    pub vz: f64,
    /// End vertical acceleration, m/s^2.
    #[arg(long, default_value_t = 20.0, allow_negative_numbers = true)]
    pub az: f64,
    /// Heading change applied to the command frame, rad.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub yaw: f64,
}

impl Default for TargetArgs {
    fn default() -> Self {
        Self {
            dx: 0.0,
            dy: 0.0,
            dz: 0.0,
            vx: 0.0,
            vy: 0.0,
            vz: 2.5,
            az: 20.0,
            yaw: 0.0,
        }
    }
}

impl TargetArgs {
    pub fn command(&self) -> JumpCommand {
        JumpCommand {
            yaw: self.yaw,
            ..JumpCommand::new(
                Vector3::new(self.dx, self.dy, self.dz),
                Vector3::new(self.vx, self.vy, self.vz),
                Vector3::new(0.0, 0.0, self.az),
            )
        }
    }
}

/// `key=value` pairs separated by commas, e.g. `dx=0.15,dy=0.1,vz=2.5`.
/// Keys are the `jump` flag names; missing keys take the same defaults.
impl FromStr for TargetArgs {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut t = TargetArgs::default();
        for pair in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, got `{pair}`"))?;
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|e| format!("{key}: {e}"))?;
            let slot = match key.trim() {
                "dx" => &mut t.dx,
                "dy" => &mut t.dy,
                "dz" => &mut t.dz,
                "vx" => &mut t.vx,
                "vy" => &mut t.vy,
                "vz" => &mut t.vz,
                "az" => &mut t.az,
                "yaw" => &mut t.yaw,
                other => return Err(format!("unknown key `{other}`")),
            };
            *slot = v;
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, Args)]
pub struct JumpArgs {
    #[command(flatten)]
    pub target: TargetArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Output directory for log.csv and summary.json.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ChainArgs {
    /// One jump per occurrence, as `dx=..,dy=..,vz=..` (keys as for `jump`).
    #[arg(long = "jump", required = true, value_parser = TargetArgs::from_str)]
    pub jumps: Vec<TargetArgs>,
    #[command(flatten)]
    pub run: RunArgs,
    /// Output directory for log.csv and chain.json.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Number of timed samples.
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(100..))]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Untimed iterations run first.
    #[arg(long, default_value_t = 100)]
    pub warmup: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write the report to this file as well as stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PlanArgs {
    #[command(flatten)]
    pub target: TargetArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Sample rate, Hz.
    #[arg(long, default_value_t = 1000.0)]
    pub rate: f64,
    /// CSV file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
