//! Command-line front end: single and chained jumps against the simulator,
//! trajectory export, and the planning plus tracking latency benchmark.

pub mod args;
pub mod bench;
pub mod commands;
pub mod error;

pub use args::{BenchArgs, ChainArgs, Cli, Command, JumpArgs, PlanArgs, RunArgs, TargetArgs};
pub use bench::{run_bench, BenchReport, Stats};
pub use commands::{cmd_chain, cmd_jump, cmd_plan, load_config, ChainSummary};
pub use error::CliError;

/// Runs a parsed command line; the error maps to the exit code.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Jump(args) => {
            let log = cmd_jump(&args)?;
            let s = &log.summary;
            println!(
                "landed: displacement [{:.3}, {:.3}, {:.3}] m, apex rise {:.4} m, peak torque {:.2} N m; artifacts in {}",
                s.displacement[0],
                s.displacement[1],
                s.displacement[2],
                s.apex_rise,
                s.peak_torque,
                args.out.display()
            );
        }
        Command::Chain(args) => {
            let summary = cmd_chain(&args)?;
            let d = summary.net_displacement;
            println!(
                "{} jumps landed: net displacement [{:.3}, {:.3}, {:.3}] m; artifacts in {}",
                summary.jumps.len(),
                d[0],
                d[1],
                d[2],
                args.out.display()
            );
        }
        Command::Bench(args) => {
            let config = match &args.config {
                Some(path) => omnijump_core::RunConfig::load(path)?,
                None => omnijump_core::RunConfig::default(),
            };
            let report = run_bench(&config, args.samples as usize, args.seed, args.warmup as usize)?;
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            if let Some(path) = &args.out {
                std::fs::write(path, format!("{json}\n")).map_err(CliError::io(path))?;
            }
            println!("{json}");
        }
        Command::Plan(args) => {
            cmd_plan(&args)?;
        }
    }
    Ok(())
}
