use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use omnijump_core::executive::{csv_header, JumpSummary};
use omnijump_core::{
    plan_jump_trajectory, plan_trajectory, run_jump_observed, BoundaryState, ConfigError, JumpLog, PiecewiseQuintic,
    RobotState, RunConfig, SimState, TickRecord,
};
use serde::{Deserialize, Serialize};

use crate::args::{ChainArgs, JumpArgs, PlanArgs, RunArgs, TargetArgs};
use crate::error::CliError;

/// Settled roll or pitch beyond this counts as a failed landing, rad.
pub const UPRIGHT_LIMIT: f64 = 0.5;

pub fn load_config(run: &RunArgs) -> Result<RunConfig, CliError> {
    let mut config = match &run.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(dt) = run.dt {
        config.sim.dt = dt;
    }
    config.executive.force |= run.force;
    config.validate()?;
    Ok(config)
}

pub fn standing_state(config: &RunConfig) -> Result<RobotState, CliError> {
    let ex = &config.executive;
    let mut robot = RobotState::standing(&config.model, ex.stance_height, ex.stance_splay)
        .map_err(|e| ConfigError::Invalid(format!("standing stance: {e}")))?;
    robot.p_com.z += config.sim.ground_height;
    Ok(robot)
}

/// A run ends upright with every foot on the ground.
pub fn check_landing(summary: &JumpSummary) -> Result<(), CliError> {
    let [roll, pitch, _] = summary.landing_attitude;
    if roll.abs() >= UPRIGHT_LIMIT || pitch.abs() >= UPRIGHT_LIMIT {
        return Err(CliError::Landing(format!(
            "settled attitude roll {roll:.3}, pitch {pitch:.3} rad exceeds {UPRIGHT_LIMIT}"
        )));
    }
    if !summary.all_feet_in_contact {
        return Err(CliError::Landing("not all feet on the ground after settling".into()));
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(CliError::io(path))
}

/// Per-tick CSV; chained runs get a leading `jump` column.
fn write_ticks<'a>(
    path: &Path,
    runs: impl IntoIterator<Item = (usize, &'a [TickRecord])>,
    with_index: bool,
) -> Result<(), CliError> {
    let csv_err = |e: csv::Error| CliError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = csv_header();
    if with_index {
        header.insert(0, "jump".into());
    }
    w.write_record(&header).map_err(csv_err)?;
    for (index, ticks) in runs {
        for tick in ticks {
            let mut row = tick.csv_row();
            if with_index {
                row.insert(0, index.to_string());
            }
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush().map_err(CliError::io(path))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    writeln!(f).and_then(|_| f.flush()).map_err(CliError::io(path))
}

/// Runs one jump from `initial`, keeping the tick trace even when the run fails.
fn run_traced(target: &TargetArgs, initial: SimState, config: &RunConfig) -> (Vec<TickRecord>, Result<JumpLog, CliError>) {
    let mut trace = Vec::new();
    let result = run_jump_observed(&target.command(), initial, config, &mut |t| trace.push(t.clone()));
    (trace, result.map_err(CliError::from))
}

/// Plans and simulates one jump, writing `<out>/log.csv` and `<out>/summary.json`.
pub fn cmd_jump(args: &JumpArgs) -> Result<JumpLog, CliError> {
    let config = load_config(&args.run)?;
    let initial = SimState::new(standing_state(&config)?, &config.model, &config.sim);
    fs::create_dir_all(&args.out).map_err(CliError::io(&args.out))?;
    let (trace, result) = run_traced(&args.target, initial, &config);
    let log_path = args.out.join("log.csv");
    match result {
        Ok(log) => {
            write_ticks(&log_path, [(0, log.ticks.as_slice())], false)?;
            write_json(&args.out.join("summary.json"), &log.summary)?;
            check_landing(&log.summary)?;
            Ok(log)
        }
        Err(e) => {
            write_ticks(&log_path, [(0, trace.as_slice())], false)?;
            Err(e)
        }
    }
}

/// `chain.json`: per-jump summaries in order plus the net CoM displacement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub jumps: Vec<JumpSummary>,
    pub net_displacement: [f64; 3],
}

/// Runs the jumps in order, each from the previous run's final state. Stops
/// at the first failure, reporting its zero-based index; the log of the
/// completed jumps and the failed one's partial trace is still written.
pub fn cmd_chain(args: &ChainArgs) -> Result<ChainSummary, CliError> {
    let config = load_config(&args.run)?;
    fs::create_dir_all(&args.out).map_err(CliError::io(&args.out))?;
    let mut state = SimState::new(standing_state(&config)?, &config.model, &config.sim);
    let start = state.robot.p_com;
    let mut traces: Vec<Vec<TickRecord>> = Vec::new();
    let mut jumps = Vec::new();
    let mut failure = None;
    for (index, target) in args.jumps.iter().enumerate() {
        let (trace, result) = run_traced(target, state.clone(), &config);
        traces.push(trace);
        match result.and_then(|log| check_landing(&log.summary).map(|_| log)) {
            Ok(log) => {
                state = log.final_state;
                jumps.push(log.summary);
            }
            Err(e) => {
                failure = Some(CliError::Chain {
                    index,
                    source: Box::new(e),
                });
                break;
            }
        }
    }
    write_ticks(
        &args.out.join("log.csv"),
        traces.iter().enumerate().map(|(i, t)| (i, t.as_slice())),
        true,
    )?;
    let net = state.robot.p_com - start;
    let summary = ChainSummary {
        jumps,
        net_displacement: net.into(),
    };
    write_json(&args.out.join("chain.json"), &summary)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(summary),
    }
}

/// Plans the preparing-phase trajectory from the standing stance.
pub fn plan(target: &TargetArgs, config: &RunConfig) -> Result<PiecewiseQuintic, CliError> {
    let p0 = standing_state(config)?.p_com;
    let start = BoundaryState::at_rest(p0);
    let end = target.command().to_world(&p0, 0.0);
    let traj = if config.executive.force {
        plan_trajectory(&start, &end, &config.planner)
    } else {
        plan_jump_trajectory(&start, &end, &config.planner)
    };
    traj.map_err(|e| CliError::Jump(e.into()))
}

pub fn cmd_plan(args: &PlanArgs) -> Result<PiecewiseQuintic, CliError> {
    if !(args.rate > 0.0 && args.rate.is_finite()) {
        return Err(CliError::Usage(format!("--rate must be positive, got {}", args.rate)));
    }
    let config = load_config(&args.run)?;
    let traj = plan(&args.target, &config)?;
    let csv_err = |path: &Path| {
        let path = path.to_path_buf();
        move |e: csv::Error| CliError::Io { path, source: e.into() }
    };
    match &args.out {
        Some(path) => traj.write_csv(create(path)?, args.rate).map_err(csv_err(path))?,
        None => traj
            .write_csv(std::io::stdout().lock(), args.rate)
            .map_err(csv_err(Path::new("<stdout>")))?,
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(roll: f64, contact: bool) -> JumpSummary {
        JumpSummary {
            duration: 1.0,
            t_prepare_end: 0.5,
            t_flight_end: 1.0,
            takeoff_time: Some(0.5),
            takeoff_velocity: [0.0; 3],
            touchdown_time: Some(1.0),
            apex_height: 0.6,
            apex_rise: 0.3,
            start_position: [0.0; 3],
            final_position: [0.0; 3],
            displacement: [0.0; 3],
            landing_attitude: [roll, 0.0, 0.0],
            max_tilt_after_landing: roll.abs(),
            peak_torque: 10.0,
            all_feet_in_contact: contact,
            latency: Default::default(),
        }
    }

    #[test]
    fn landing_check() {
        assert!(check_landing(&summary(0.1, true)).is_ok());
        assert!(matches!(check_landing(&summary(-0.6, true)), Err(CliError::Landing(_))));
        assert!(matches!(check_landing(&summary(0.0, false)), Err(CliError::Landing(_))));
    }

    #[test]
    fn run_args_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "[sim]\ndt = 0.002\n").unwrap();
        let mut run = RunArgs {
            config: Some(path.clone()),
            ..RunArgs::default()
        };
        assert_eq!(load_config(&run).unwrap().sim.dt, 0.002);
        run.dt = Some(5e-4);
        run.force = true;
        let c = load_config(&run).unwrap();
        assert_eq!(c.sim.dt, 5e-4);
        assert!(c.executive.force);
        run.dt = Some(-1.0);
        assert_eq!(load_config(&run).unwrap_err().exit_code(), 2);
        fs::write(&path, "[sim]\nbogus = 1\n").unwrap();
        run.dt = None;
        assert_eq!(load_config(&run).unwrap_err().exit_code(), 2);
    }
}
