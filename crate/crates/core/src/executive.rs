//! Time-scheduled jump sequencing: prepare (track the planned CoM
//! trajectory), flight (joint PD to a landing pose), landing (hold the
//! touchdown position at stance height).

use std::io::Write;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{JumpError, NoLanding, PlanError, SimError, TrackError};
use crate::kinematics::leg_inverse_kinematics;
use crate::model::{nominal_foot, FootSet, RobotState, SrbModel, Vector12, LEGS};
pub use crate::config::RunConfig;
use crate::planner::{plan_trajectory, BoundaryState, PiecewiseQuintic};
use crate::rotation::rot_z;
use crate::sim::{step, SimState};
use crate::vmc::{clamp_torques, TrackOutput, Tracker, TrackingReference};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    Preparing,
    Flight,
    Landing,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Preparing => "preparing",
            Phase::Flight => "flight",
            Phase::Landing => "landing",
        }
    }
}

/// Phase boundaries relative to the start of the jump, s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSchedule {
    pub t_prepare_end: f64,
    pub t_flight_end: f64,
}

/// Half-open phases: `[0, t_prepare_end)`, `[t_prepare_end, t_flight_end)`, then landing.
pub fn phase_at(t: f64, schedule: &PhaseSchedule) -> Phase {
    if t < schedule.t_prepare_end {
        Phase::Preparing
    } else if t < schedule.t_flight_end {
        Phase::Flight
    } else {
        Phase::Landing
    }
}

/// Ballistic time until the CoM comes back down to `z_land`.
pub fn estimate_flight_duration(
    takeoff_v: &Vector3<f64>,
    takeoff_p: &Vector3<f64>,
    z_land: f64,
    model: &SrbModel,
) -> Result<f64, NoLanding> {
    let (v, z, g) = (takeoff_v.z, takeoff_p.z, model.g_mag);
    let no_landing = NoLanding { v_z: v, z, z_land };
    if v <= 0.0 && z <= z_land {
        return Err(no_landing);
    }
    // z + v t - g t^2 / 2 = z_land, larger root
    let disc = v * v + 2.0 * g * (z - z_land);
    if disc < 0.0 {
        return Err(no_landing);
    }
    Ok((v + disc.sqrt()) / g)
}

/// Joint torques plus the PD setpoints they were computed with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowLevelCommand {
    /// Total clamped joint torque, N m.
    pub tau: Vector12,
    pub q_des: Vector12,
    pub dq_des: Vector12,
    pub kp: Vector12,
    pub kd: Vector12,
}

impl LowLevelCommand {
    pub fn zero() -> Self {
        Self::torque_only(Vector12::zeros())
    }

    pub fn torque_only(tau: Vector12) -> Self {
        Self {
            tau,
            q_des: Vector12::zeros(),
            dq_des: Vector12::zeros(),
            kp: Vector12::zeros(),
            kd: Vector12::zeros(),
        }
    }
}

/// Body-frame jump target: displacement, velocity and acceleration of the CoM
/// at the end of the preparing phase, plus a heading offset applied on top of
/// the initial yaw.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JumpCommand {
    pub end: BoundaryState,
    pub yaw: f64,
}

impl JumpCommand {
    pub fn new(displacement: Vector3<f64>, velocity: Vector3<f64>, acceleration: Vector3<f64>) -> Self {
        Self {
            end: BoundaryState {
                p: displacement,
                v: velocity,
                a: acceleration,
            },
            yaw: 0.0,
        }
    }

    /// World-frame end state for a jump starting at `start` with heading `yaw0`.
    pub fn to_world(&self, start: &Vector3<f64>, yaw0: f64) -> BoundaryState {
        let r = rot_z(yaw0 + self.yaw);
        BoundaryState {
            p: start + r * self.end.p,
            v: r * self.end.v,
            a: r * self.end.a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecutiveConfig {
    /// CoM height of the standing and landing stance, m.
    pub stance_height: f64,
    /// Vertical hip-to-foot distance of the flight landing pose, m.
    pub landing_leg_length: f64,
    /// Outward lateral foot offset of the standing and landing stance, m.
    pub stance_splay: f64,
    pub flight_kp: f64,
    pub flight_kd: f64,
    pub landing_kp: f64,
    pub landing_kd: f64,
    /// Preparing and flight control rate, Hz.
    pub control_rate: f64,
    /// Landing control rate, Hz.
    pub landing_rate: f64,
    /// Time spent in landing before a run ends, s.
    pub settle_time: f64,
    /// Body-frame angular velocity reference while tracking, rad/s.
    pub omega_ref: [f64; 3],
    /// Skip command range checks.
    pub force: bool,
}

impl Default for ExecutiveConfig {
    fn default() -> Self {
        Self {
            stance_height: 0.30,
            landing_leg_length: 0.32,
            stance_splay: 0.08,
            flight_kp: 40.0,
            flight_kd: 1.0,
            landing_kp: 30.0,
            landing_kd: 1.5,
            control_rate: 1000.0,
            landing_rate: 500.0,
            settle_time: 1.0,
            omega_ref: [0.0; 3],
            force: false,
        }
    }
}

impl ExecutiveConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            self.stance_height,
            self.landing_leg_length,
            self.control_rate,
            self.landing_rate,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err("executive heights and rates must be positive".into());
        }
        let gains = [self.flight_kp, self.flight_kd, self.landing_kp, self.landing_kd, self.settle_time];
        if gains.iter().any(|v| !(*v >= 0.0)) {
            return Err("executive gains and settle_time must be non-negative".into());
        }
        if !(self.stance_splay >= 0.0) {
            return Err("stance_splay must be non-negative".into());
        }
        Ok(())
    }
}

/// Joint angles of the landing pose: feet `leg_length` below the hips, moved
/// `splay` outward.
pub fn landing_pose(model: &SrbModel, leg_length: f64, splay: f64) -> Result<Vector12, crate::error::KinematicsError> {
    let mut q = Vector12::zeros();
    for leg in 0..LEGS {
        let foot = nominal_foot(model, leg, leg_length, splay);
        q.fixed_rows_mut::<3>(3 * leg)
            .copy_from(&leg_inverse_kinematics(leg, &foot, model)?);
    }
    Ok(q)
}

fn joint_pd(state: &RobotState, q_des: &Vector12, kp: f64, kd: f64, tau_max: f64) -> LowLevelCommand {
    let tau = kp * (q_des - state.q) - kd * state.dq;
    LowLevelCommand {
        tau: clamp_torques(&tau, tau_max),
        q_des: *q_des,
        dq_des: Vector12::zeros(),
        kp: Vector12::repeat(kp),
        kd: Vector12::repeat(kd),
    }
}

fn heading(yaw: f64) -> Matrix3<f64> {
    rot_z(yaw)
}

/// Tracks the planned trajectory at time `t` (relative to its start).
pub fn prepare_tick(
    t: f64,
    state: &RobotState,
    feet: &FootSet,
    traj: &PiecewiseQuintic,
    yaw: f64,
    omega_ref: &Vector3<f64>,
    tracker: &mut Tracker,
    model: &SrbModel,
) -> Result<(LowLevelCommand, TrackOutput), TrackError> {
    let reference = TrackingReference {
        p: traj.evaluate(t, 0),
        v: traj.evaluate(t, 1),
        rot: heading(yaw),
        omega: *omega_ref,
    };
    let out = tracker.track(state, feet, &reference, model)?;
    Ok((LowLevelCommand::torque_only(out.tau), out))
}

/// Joint PD toward the landing pose with no feedforward.
pub fn flight_tick(state: &RobotState, pose: &Vector12, cfg: &ExecutiveConfig, model: &SrbModel) -> LowLevelCommand {
    joint_pd(state, pose, cfg.flight_kp, cfg.flight_kd, model.tau_max)
}

/// Landing control: force distribution toward `hold` (CoM position) with
/// level attitude at heading `yaw`, plus joint PD toward the joint angles the
/// stance feet would have at that pose. Legs not yet in contact keep the
/// flight PD.
pub fn landing_tick(
    state: &RobotState,
    feet: &FootSet,
    hold: &Vector3<f64>,
    yaw: f64,
    pose: &Vector12,
    cfg: &ExecutiveConfig,
    tracker: &mut Tracker,
    model: &SrbModel,
) -> Result<(LowLevelCommand, Option<TrackOutput>), TrackError> {
    let flight = flight_tick(state, pose, cfg, model);
    if feet.contact_count() == 0 {
        return Ok((flight, None));
    }
    let reference = TrackingReference::level(*hold, Vector3::zeros());
    let reference = TrackingReference {
        rot: heading(yaw),
        ..reference
    };
    let out = tracker.track(state, feet, &reference, model)?;
    let mut cmd = LowLevelCommand {
        tau: Vector12::zeros(),
        q_des: *pose,
        dq_des: Vector12::zeros(),
        kp: Vector12::repeat(cfg.flight_kp),
        kd: Vector12::repeat(cfg.flight_kd),
    };
    let rt = reference.rot.transpose();
    for leg in 0..LEGS {
        let rows = 3 * leg..3 * leg + 3;
        if !feet.contact[leg] {
            cmd.tau.rows_mut(3 * leg, 3).copy_from(&flight.tau.rows(3 * leg, 3));
            continue;
        }
        let target = rt * (feet.r[leg] + state.p_com - reference.p);
        let q_ref = leg_inverse_kinematics(leg, &target, model).unwrap_or_else(|_| state.leg_q(leg));
        let pd = cfg.landing_kp * (q_ref - state.leg_q(leg)) - cfg.landing_kd * state.leg_dq(leg);
        let tau = out.tau.fixed_rows::<3>(3 * leg) + pd;
        cmd.tau.fixed_rows_mut::<3>(3 * leg).copy_from(&tau);
        cmd.q_des.fixed_rows_mut::<3>(3 * leg).copy_from(&q_ref);
        for i in rows {
            cmd.kp[i] = cfg.landing_kp;
            cmd.kd[i] = cfg.landing_kd;
        }
    }
    cmd.tau = clamp_torques(&cmd.tau, model.tau_max);
    Ok((cmd, Some(out)))
}

/// One row of the per-tick log.
#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub t: f64,
    pub phase: Phase,
    pub p_ref: Vector3<f64>,
    pub v_ref: Vector3<f64>,
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub theta: Vector3<f64>,
    pub omega: Vector3<f64>,
    pub grf: [Vector3<f64>; LEGS],
    pub tau: Vector12,
    pub contact: [bool; LEGS],
    pub qp_iterations: usize,
    pub solve_ns: u64,
}

/// CSV header matching [`TickRecord::csv_row`].
pub fn csv_header() -> Vec<String> {
    let mut h: Vec<String> = ["t", "phase"].map(String::from).to_vec();
    for prefix in ["p_ref", "v_ref", "p", "v"] {
        h.extend(["x", "y", "z"].map(|a| format!("{prefix}_{a}")));
    }
    h.extend(["roll", "pitch", "yaw", "wx", "wy", "wz"].map(String::from));
    for leg in crate::model::LEG_NAMES {
        h.extend(["x", "y", "z"].map(|a| format!("f{a}_{leg}")));
    }
    for leg in crate::model::LEG_NAMES {
        h.extend(["abad", "hip", "knee"].map(|j| format!("tau_{leg}_{j}")));
    }
    for leg in crate::model::LEG_NAMES {
        h.push(format!("contact_{leg}"));
    }
    h.extend(["qp_iterations", "solve_ns"].map(String::from));
    h
}

impl TickRecord {
    pub fn csv_row(&self) -> Vec<String> {
        let mut row = vec![format!("{:.6}", self.t), self.phase.name().to_string()];
        for v in [&self.p_ref, &self.v_ref, &self.p, &self.v, &self.theta, &self.omega] {
            row.extend(v.iter().map(|x| x.to_string()));
        }
        for f in &self.grf {
            row.extend(f.iter().map(|x| x.to_string()));
        }
        row.extend(self.tau.iter().map(|x| x.to_string()));
        row.extend(self.contact.iter().map(|&c| u8::from(c).to_string()));
        row.push(self.qp_iterations.to_string());
        row.push(self.solve_ns.to_string());
        row
    }
}

/// Tracking-cycle latency statistics, ns.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Latency {
    pub samples: usize,
    pub mean_ns: f64,
    pub p95_ns: f64,
}

/// End-of-run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpSummary {
    pub duration: f64,
    pub t_prepare_end: f64,
    pub t_flight_end: f64,
    /// Time the last foot left the ground, s.
    pub takeoff_time: Option<f64>,
    pub takeoff_velocity: [f64; 3],
    /// Time of the first touchdown after takeoff, s.
    pub touchdown_time: Option<f64>,
    pub apex_height: f64,
    /// Apex height above the CoM height at takeoff, m.
    pub apex_rise: f64,
    pub start_position: [f64; 3],
    pub final_position: [f64; 3],
    pub displacement: [f64; 3],
    /// Final `[roll, pitch, yaw]`, rad.
    pub landing_attitude: [f64; 3],
    pub max_tilt_after_landing: f64,
    pub peak_torque: f64,
    pub all_feet_in_contact: bool,
    pub latency: Latency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpLog {
    pub ticks: Vec<TickRecord>,
    pub summary: JumpSummary,
    pub trajectory: PiecewiseQuintic,
    /// Simulation state at the end of the run, for chaining.
    pub final_state: SimState,
}

impl JumpLog {
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(csv_header())?;
        for tick in &self.ticks {
            w.write_record(tick.csv_row())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes")
    }

    pub fn phases(&self) -> Vec<Phase> {
        let mut seq: Vec<Phase> = Vec::new();
        for t in &self.ticks {
            if seq.last() != Some(&t.phase) {
                seq.push(t.phase);
            }
        }
        seq
    }
}

fn steps_per_tick(rate: f64, dt: f64) -> usize {
    ((1.0 / (rate * dt)).round() as usize).max(1)
}

/// Plans and executes one jump from a four-foot stance.
pub fn run_jump(command: &JumpCommand, initial: &RobotState, config: &RunConfig) -> Result<JumpLog, JumpError> {
    run_jump_from(command, SimState::new(initial.clone(), &config.model, &config.sim), config)
}

/// Plans and executes one jump starting from an arbitrary simulation state.
pub fn run_jump_from(command: &JumpCommand, initial: SimState, config: &RunConfig) -> Result<JumpLog, JumpError> {
    run_jump_observed(command, initial, config, &mut |_| {})
}

/// As [`run_jump_from`], handing every tick to `observer` as it is produced,
/// so a trace survives a failed run.
pub fn run_jump_observed(
    command: &JumpCommand,
    initial: SimState,
    config: &RunConfig,
    observer: &mut dyn FnMut(&TickRecord),
) -> Result<JumpLog, JumpError> {
    let model = &config.model;
    let ex = &config.executive;
    let dt = config.sim.dt;
    let t0 = initial.t;
    let yaw = initial.robot.theta.z;
    let p0 = initial.robot.p_com;

    if !ex.force {
        config.planner.ranges.check(&command.end)?;
    }
    let start = BoundaryState {
        p: p0,
        v: initial.robot.v_com,
        a: Vector3::zeros(),
    };
    let end = command.to_world(&p0, yaw);
    let traj = plan_trajectory(&start, &end, &config.planner)?;
    let pose = landing_pose(model, ex.landing_leg_length, ex.stance_splay)
        .map_err(|e| PlanError::InvalidInput(format!("landing pose: {e}")))?;
    let yaw_ref = yaw + command.yaw;
    let omega_ref = Vector3::from(ex.omega_ref);

    let mut schedule = PhaseSchedule {
        t_prepare_end: traj.end_time(),
        t_flight_end: f64::INFINITY,
    };
    let control_every = steps_per_tick(ex.control_rate, dt);
    let landing_every = steps_per_tick(ex.landing_rate, dt);
    let z_land = config.sim.ground_height + ex.landing_leg_length;

    let mut tracker = Tracker::new(config.gains.clone());
    let mut sim = initial;
    let mut ticks = Vec::new();
    let mut cmd = LowLevelCommand::zero();
    let mut hold: Option<Vector3<f64>> = None;
    let mut latencies = Vec::new();
    let mut phase = Phase::Preparing;
    let mut k = 0usize;
    let mut takeoff: Option<(f64, Vector3<f64>, f64)> = None;
    let mut touchdown: Option<f64> = None;
    let mut apex = f64::NEG_INFINITY;
    let mut max_tilt_after_landing: f64 = 0.0;
    let mut was_airborne = false;

    loop {
        let t = sim.t - t0;
        let new_phase = phase_at(t, &schedule);
        if new_phase == Phase::Flight && phase == Phase::Preparing {
            let duration = estimate_flight_duration(&sim.robot.v_com, &sim.robot.p_com, z_land, model)?;
            schedule.t_flight_end = t + duration;
        }
        let entering = new_phase != phase;
        phase = phase_at(t, &schedule);
        if phase == Phase::Landing && t >= schedule.t_flight_end + ex.settle_time {
            break;
        }

        let feet = sim.foot_set();
        let mut track: Option<TrackOutput> = None;
        let (p_ref, v_ref) = match phase {
            Phase::Preparing => (traj.evaluate(t, 0), traj.evaluate(t, 1)),
            _ => {
                let h = hold.unwrap_or(sim.robot.p_com);
                (Vector3::new(h.x, h.y, config.sim.ground_height + ex.stance_height), Vector3::zeros())
            }
        };
        match phase {
            Phase::Preparing => {
                if k % control_every == 0 {
                    let (c, out) = prepare_tick(t, &sim.robot, &feet, &traj, yaw_ref, &omega_ref, &mut tracker, model)
                        .map_err(|source| JumpError::TrackingFailed { t, source })?;
                    cmd = c;
                    track = Some(out);
                }
            }
            Phase::Flight => {
                if k % control_every == 0 || entering {
                    cmd = flight_tick(&sim.robot, &pose, ex, model);
                }
            }
            Phase::Landing => {
                if hold.is_none() && sim.any_contact() {
                    hold = Some(sim.robot.p_com);
                }
                if k % landing_every == 0 || entering {
                    let target = Vector3::new(
                        hold.map_or(sim.robot.p_com.x, |h| h.x),
                        hold.map_or(sim.robot.p_com.y, |h| h.y),
                        config.sim.ground_height + ex.stance_height,
                    );
                    let (c, out) = landing_tick(&sim.robot, &feet, &target, yaw_ref, &pose, ex, &mut tracker, model)
                        .map_err(|source| JumpError::TrackingFailed { t, source })?;
                    cmd = c;
                    track = out;
                }
            }
        }
        if let Some(out) = &track {
            latencies.push(out.solve_ns);
        }

        let next = step(&sim, &cmd, &config.sim, model).map_err(|e| match e {
            SimError::Diverged(msg) => SimError::Diverged(format!("{msg} (phase {})", phase.name())),
        })?;

        let record = TickRecord {
            t,
            phase,
            p_ref,
            v_ref,
            p: sim.robot.p_com,
            v: sim.robot.v_com,
            theta: sim.robot.theta,
            omega: sim.robot.omega_b,
            grf: next.grf,
            tau: cmd.tau,
            contact: sim.contact,
            qp_iterations: track.map_or(0, |o| o.iterations),
            solve_ns: track.map_or(0, |o| o.solve_ns),
        };
        observer(&record);
        ticks.push(record);

        let t_next = next.t - t0;
        if sim.any_contact() && !next.any_contact() && touchdown.is_none() {
            takeoff = Some((t_next, next.robot.v_com, next.robot.p_com.z));
        }
        if !next.any_contact() {
            was_airborne = true;
            apex = apex.max(next.robot.p_com.z);
        } else if was_airborne && touchdown.is_none() {
            touchdown = Some(t_next);
            // Early touchdown ends the flight phase.
            if phase == Phase::Flight {
                schedule.t_flight_end = schedule.t_flight_end.min(t_next);
            }
            if hold.is_none() && phase == Phase::Landing {
                hold = Some(next.robot.p_com);
            }
        }
        if touchdown.is_some() {
            max_tilt_after_landing = max_tilt_after_landing.max(next.robot.theta.x.abs()).max(next.robot.theta.y.abs());
        }
        sim = next;
        k += 1;
    }

    let takeoff_z = takeoff.map_or(p0.z, |(_, _, z)| z);
    let final_p = sim.robot.p_com;
    let summary = JumpSummary {
        duration: sim.t - t0,
        t_prepare_end: schedule.t_prepare_end,
        t_flight_end: schedule.t_flight_end,
        takeoff_time: takeoff.map(|(t, _, _)| t),
        takeoff_velocity: takeoff.map_or([0.0; 3], |(_, v, _)| v.into()),
        touchdown_time: touchdown,
        apex_height: if apex.is_finite() { apex } else { p0.z },
        apex_rise: if apex.is_finite() { apex - takeoff_z } else { 0.0 },
        start_position: p0.into(),
        final_position: final_p.into(),
        displacement: (final_p - p0).into(),
        landing_attitude: sim.robot.theta.into(),
        max_tilt_after_landing,
        peak_torque: ticks.iter().map(|t| t.tau.amax()).fold(0.0, f64::max),
        all_feet_in_contact: sim.contact.iter().all(|&c| c),
        latency: latency(&latencies),
    };
    Ok(JumpLog {
        ticks,
        summary,
        trajectory: traj,
        final_state: sim,
    })
}

fn latency(samples: &[u64]) -> Latency {
    if samples.is_empty() {
        return Latency::default();
    }
    let mut s = samples.to_vec();
    s.sort_unstable();
    let idx = ((s.len() as f64 * 0.95).ceil() as usize).clamp(1, s.len()) - 1;
    Latency {
        samples: s.len(),
        mean_ns: s.iter().sum::<u64>() as f64 / s.len() as f64,
        p95_ns: s[idx] as f64,
    }
}
