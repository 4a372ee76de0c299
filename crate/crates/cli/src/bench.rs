use std::time::Instant;

use nalgebra::Vector3;
use omnijump_core::executive::prepare_tick;
use omnijump_core::{plan_jump_trajectory, BoundaryState, CommandRanges, FootSet, RunConfig, Tracker, LEGS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::commands::standing_state;
use crate::error::CliError;

pub const MIN_SAMPLES: usize = 100;

/// One benchmark input: a commanded end state (relative to the stance) and
/// the fraction of the planned horizon at which the tracker runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchInput {
    pub end: BoundaryState,
    pub phase: f64,
}

/// Inputs drawn uniformly from `ranges`; the sequence depends only on `seed`.
pub fn bench_inputs(seed: u64, n: usize, ranges: &CommandRanges) -> Vec<BenchInput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut draw = |r: &[[f64; 2]; 3]| Vector3::from_fn(|i, _| rng.random_range(r[i][0]..=r[i][1]));
            let end = BoundaryState {
                p: draw(&ranges.position),
                v: draw(&ranges.velocity),
                a: draw(&ranges.acceleration),
            };
            BenchInput {
                end,
                phase: rng.random_range(0.0..1.0),
            }
        })
        .collect()
}

/// SHA-256 over the bit patterns of every input value.
pub fn input_hash(inputs: &[BenchInput]) -> String {
    let mut h = Sha256::new();
    for input in inputs {
        let e = &input.end;
        for v in e.p.iter().chain(e.v.iter()).chain(e.a.iter()).chain([input.phase].iter()) {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    format!("{:x}", h.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub max: f64,
}

impl Stats {
    /// Nearest-rank percentiles.
    pub fn from_samples(samples: &[u64]) -> Stats {
        assert!(!samples.is_empty(), "no samples");
        let mut s = samples.to_vec();
        s.sort_unstable();
        let rank = |p: f64| s[((p * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1] as f64;
        Stats {
            mean: s.iter().map(|&v| v as f64).sum::<f64>() / s.len() as f64,
            median: rank(0.5),
            p95: rank(0.95),
            max: *s.last().unwrap() as f64,
        }
    }
}

/// Timing statistics in nanoseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n_samples: usize,
    pub warmup: usize,
    pub seed: u64,
    pub plan_ns: Stats,
    pub track_ns: Stats,
    pub total_ns: Stats,
    pub machine: String,
    pub input_hash: String,
}

pub fn machine_descriptor() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|info| {
            info.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    let threads = std::thread::available_parallelism().map_or(0, |n| n.get());
    format!("{cpu}; {threads} hw threads; {}-{}", std::env::consts::ARCH, std::env::consts::OS)
}

/// Times `plan_jump_trajectory` plus one tracking cycle (reference evaluation,
/// virtual accelerations, force QP, torque mapping) per input, on the calling
/// thread. The first `warmup` inputs are run but not recorded. Simulation
/// stepping is not timed.
pub fn run_bench(config: &RunConfig, samples: usize, seed: u64, warmup: usize) -> Result<BenchReport, CliError> {
    if samples < MIN_SAMPLES {
        return Err(CliError::Usage(format!("need at least {MIN_SAMPLES} samples, got {samples}")));
    }
    let robot = standing_state(config)?;
    let feet = FootSet::from_state(&robot, &config.model, [true; LEGS]);
    let start = BoundaryState::at_rest(robot.p_com);
    let inputs = bench_inputs(seed, warmup + samples, &config.planner.ranges);
    let omega_ref = Vector3::from(config.executive.omega_ref);
    let mut tracker = Tracker::new(config.gains.clone());
    let (mut plan_ns, mut track_ns, mut total_ns) = (Vec::new(), Vec::new(), Vec::new());

    for (i, input) in inputs.iter().enumerate() {
        let end = BoundaryState {
            p: start.p + input.end.p,
            ..input.end
        };
        let t0 = Instant::now();
        let traj = plan_jump_trajectory(&start, &end, &config.planner).map_err(|e| CliError::Jump(e.into()))?;
        let t1 = Instant::now();
        let t = input.phase * traj.end_time();
        let (cmd, _) = prepare_tick(t, &robot, &feet, &traj, 0.0, &omega_ref, &mut tracker, &config.model)
            .map_err(|source| CliError::Jump(omnijump_core::JumpError::TrackingFailed { t, source }))?;
        let t2 = Instant::now();
        std::hint::black_box(cmd);
        if i >= warmup {
            let plan = (t1 - t0).as_nanos().max(1) as u64;
            let track = (t2 - t1).as_nanos().max(1) as u64;
            plan_ns.push(plan);
            track_ns.push(track);
            total_ns.push(plan + track);
        }
    }

    Ok(BenchReport {
        n_samples: samples,
        warmup,
        seed,
        plan_ns: Stats::from_samples(&plan_ns),
        track_ns: Stats::from_samples(&track_ns),
        total_ns: Stats::from_samples(&total_ns),
        machine: machine_descriptor(),
        input_hash: input_hash(&inputs[warmup..]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_stats() {
        let s = Stats::from_samples(&(1..=100).rev().collect::<Vec<_>>());
        assert_eq!((s.mean, s.median, s.p95, s.max), (50.5, 50.0, 95.0, 100.0));
        let one = Stats::from_samples(&[7]);
        assert_eq!((one.median, one.p95, one.max), (7.0, 7.0, 7.0));
    }

    #[test]
    fn inputs_are_seeded_and_in_range() {
        let ranges = CommandRanges::default();
        let a = bench_inputs(3, 500, &ranges);
        assert_eq!(input_hash(&a), input_hash(&bench_inputs(3, 500, &ranges)));
        assert_ne!(input_hash(&a), input_hash(&bench_inputs(4, 500, &ranges)));
        // A longer run extends the sequence, so warm-up does not shift the measured inputs.
        assert_eq!(bench_inputs(3, 600, &ranges)[..500], a[..]);
        for input in &a {
            assert!(ranges.check(&input.end).is_ok());
            assert!((0.0..1.0).contains(&input.phase));
        }
    }

    #[test]
    fn too_few_samples_is_a_usage_error() {
        let err = run_bench(&RunConfig::default(), 50, 0, 0).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
