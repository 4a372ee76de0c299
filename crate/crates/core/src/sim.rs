//! Single-rigid-body simulator with massless stance legs and a compliant
//! ground.
//!
//! Stance feet are pinned in the world; their ground forces are recovered from
//! the commanded joint torques through the leg Jacobians. Swing legs are
//! integrated as independent joints with a small reflected inertia so that
//! joint PD commands move them.

use log::warn;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::executive::LowLevelCommand;
use crate::kinematics::{leg_forward_kinematics, leg_inverse_kinematics, leg_jacobian};
use crate::model::{FootSet, RobotState, SrbModel, Vector12, LEGS};
use crate::rotation::so3_exp;

/// Jacobians with `|det J|` below this transmit no force.
const SINGULAR_DET: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Integration step, s.
    pub dt: f64,
    pub ground_height: f64,
    /// Ground stiffness, N/m.
    pub k_g: f64,
    /// Ground damping, N s/m.
    pub d_g: f64,
    pub mu_sim: f64,
    /// Reflected inertia of each swing-leg joint, kg m^2.
    pub joint_inertia: f64,
    /// Speeds beyond this count as divergence, m/s and rad/s.
    pub max_speed: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            ground_height: 0.0,
            k_g: 1e4,
            d_g: 100.0,
            mu_sim: 0.6,
            joint_inertia: 0.01,
            max_speed: 100.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err("sim.dt must be positive".into());
        }
        if !(self.k_g >= 0.0 && self.d_g >= 0.0) {
            return Err("sim.k_g and sim.d_g must be non-negative".into());
        }
        if !(self.mu_sim >= 0.0 && self.joint_inertia > 0.0 && self.max_speed > 0.0) {
            return Err("sim.mu_sim, sim.joint_inertia and sim.max_speed out of range".into());
        }
        Ok(())
    }
}

/// Robot state plus world foot positions, contact flags and the ground forces
/// applied during the last step.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub robot: RobotState,
    pub feet: [Vector3<f64>; LEGS],
    pub contact: [bool; LEGS],
    pub grf: [Vector3<f64>; LEGS],
}

impl SimState {
    /// Places the feet where the joint angles put them and marks those on or
    /// below the ground as in contact.
    pub fn new(robot: RobotState, model: &SrbModel, config: &SimConfig) -> Self {
        let feet = world_feet(&robot, model);
        let contact = feet.map(|f| f.z <= config.ground_height + 1e-9);
        Self {
            t: 0.0,
            robot,
            feet,
            contact,
            grf: [Vector3::zeros(); LEGS],
        }
    }

    pub fn foot_set(&self) -> FootSet {
        FootSet::new(self.feet.map(|f| f - self.robot.p_com), self.contact)
    }

    pub fn any_contact(&self) -> bool {
        self.contact.iter().any(|&c| c)
    }

    /// Translational plus rotational kinetic energy and potential energy, J.
    pub fn energy(&self, model: &SrbModel) -> f64 {
        let r = &self.robot;
        let w = r.omega_b;
        0.5 * model.mass * r.v_com.norm_squared()
            + 0.5 * w.dot(&(model.inertia() * w))
            + model.mass * model.g_mag * r.p_com.z
    }
}

/// World-frame foot positions implied by the joint angles.
pub fn world_feet(robot: &RobotState, model: &SrbModel) -> [Vector3<f64>; LEGS] {
    robot.feet_body(model).map(|f| robot.p_com + robot.rot * f)
}

/// Spring-damper ground force on a point; zero above the ground.
pub fn apply_contact(foot_p: &Vector3<f64>, foot_v: &Vector3<f64>, config: &SimConfig) -> Vector3<f64> {
    let pen = config.ground_height - foot_p.z;
    if pen <= 0.0 {
        return Vector3::zeros();
    }
    let fz = config.k_g * pen + config.d_g * (-foot_v.z).max(0.0);
    let mut ft = Vector3::new(-config.d_g * foot_v.x, -config.d_g * foot_v.y, 0.0);
    let cap = config.mu_sim * fz;
    if ft.norm() > cap {
        ft *= cap / ft.norm();
    }
    Vector3::new(ft.x, ft.y, fz)
}

/// Ground force a stance leg transmits for joint torques `tau`, world frame:
/// `f = -R J^-T tau`. `None` at a kinematic singularity.
pub fn stance_force(robot: &RobotState, leg: usize, tau: &Vector3<f64>, model: &SrbModel) -> Option<Vector3<f64>> {
    let jac = leg_jacobian(leg, &robot.leg_q(leg), model);
    if jac.determinant().abs() < SINGULAR_DET {
        return None;
    }
    let f_body = -jac.transpose().lu().solve(tau)?;
    Some(robot.rot * f_body)
}

/// Advances the simulation by one step of `config.dt` under `cmd.tau`.
pub fn step(sim: &SimState, cmd: &LowLevelCommand, config: &SimConfig, model: &SrbModel) -> Result<SimState, SimError> {
    let dt = config.dt;
    let robot = &sim.robot;
    if !cmd.tau.iter().all(|t| t.is_finite()) {
        return Err(SimError::Diverged("non-finite torque command".into()));
    }
    let tau = cmd.tau.map(|t| t.clamp(-model.tau_max, model.tau_max));

    let mut contact = sim.contact;
    let mut feet = sim.feet;
    let mut grf = [Vector3::zeros(); LEGS];
    let mut slipping = [false; LEGS];
    let feet_body = robot.feet_body(model);
    for leg in 0..LEGS {
        let tau_leg = tau.fixed_rows::<3>(3 * leg).into_owned();
        if contact[leg] {
            let Some(mut f) = stance_force(robot, leg, &tau_leg, model) else {
                warn!("leg {leg} singular at t = {:.4}; no stance force this step", sim.t);
                continue;
            };
            if f.z < 0.0 {
                contact[leg] = false;
                continue;
            }
            let ft = f.xy().norm();
            let cap = config.mu_sim * f.z;
            if ft > cap {
                let s = cap / ft;
                f.x *= s;
                f.y *= s;
                slipping[leg] = true;
            }
            grf[leg] = f;
        } else {
            let jac = leg_jacobian(leg, &robot.leg_q(leg), model);
            let v_rel = jac * robot.leg_dq(leg);
            let foot_v = robot.v_com + robot.rot * (robot.omega_b.cross(&feet_body[leg]) + v_rel);
            grf[leg] = apply_contact(&feet[leg], &foot_v, config);
        }
    }

    // Floating base.
    let force: Vector3<f64> = grf.iter().sum::<Vector3<f64>>() + model.weight();
    let torque: Vector3<f64> = (0..LEGS).map(|l| (feet[l] - robot.p_com).cross(&grf[l])).sum();
    let acc = force / model.mass;
    let mut next = robot.clone();
    next.p_com = robot.p_com + robot.v_com * dt + 0.5 * acc * dt * dt;
    next.v_com = robot.v_com + acc * dt;

    let inertia = model.inertia();
    let inertia_inv = inertia.try_inverse().expect("validated inertia");
    let momentum = robot.rot * (inertia * robot.omega_b) + torque * dt;
    let omega_mid = inertia_inv * (robot.rot.transpose() * momentum);
    next.set_rotation(robot.rot * so3_exp(&(omega_mid * dt)));
    next.omega_b = inertia_inv * (next.rot.transpose() * momentum);

    // Legs.
    for leg in 0..LEGS {
        if contact[leg] {
            if slipping[leg] {
                let v = next.v_com + next.rot * next.omega_b.cross(&feet_body[leg]);
                feet[leg].x += v.x * dt;
                feet[leg].y += v.y * dt;
            }
            let target = next.rot.transpose() * (feet[leg] - next.p_com);
            match leg_inverse_kinematics(leg, &target, model) {
                Ok(q) => {
                    let dq = (q - robot.leg_q(leg)) / dt;
                    next.set_leg_q(leg, &q);
                    next.set_leg_dq(leg, &dq);
                }
                Err(_) => {
                    // Leg fully stretched: the foot leaves the ground.
                    contact[leg] = false;
                    next.set_leg_dq(leg, &Vector3::zeros());
                }
            }
        } else {
            let tau_leg = tau.fixed_rows::<3>(3 * leg).into_owned();
            let dq = robot.leg_dq(leg) + tau_leg * (dt / config.joint_inertia);
            let q = robot.leg_q(leg) + dq * dt;
            next.set_leg_q(leg, &q);
            next.set_leg_dq(leg, &dq);
        }
    }

    // Touchdown.
    for leg in 0..LEGS {
        if contact[leg] {
            continue;
        }
        let foot = next.p_com + next.rot * leg_forward_kinematics(leg, &next.leg_q(leg), model);
        if foot.z <= config.ground_height && foot.z < feet[leg].z {
            let placed = Vector3::new(foot.x, foot.y, config.ground_height);
            let target = next.rot.transpose() * (placed - next.p_com);
            if let Ok(q) = leg_inverse_kinematics(leg, &target, model) {
                contact[leg] = true;
                next.set_leg_q(leg, &q);
                feet[leg] = placed;
                continue;
            }
        }
        feet[leg] = foot;
    }

    let out = SimState {
        t: sim.t + dt,
        robot: next,
        feet,
        contact,
        grf,
    };
    check(&out, config)?;
    Ok(out)
}

fn check(sim: &SimState, config: &SimConfig) -> Result<(), SimError> {
    let r = &sim.robot;
    if !r.is_finite() {
        return Err(SimError::Diverged(format!("non-finite state at t = {:.4}", sim.t)));
    }
    if r.p_com.z < config.ground_height {
        return Err(SimError::Diverged(format!(
            "CoM below ground (z = {:.4}) at t = {:.4}",
            r.p_com.z, sim.t
        )));
    }
    if r.v_com.norm() > config.max_speed || r.omega_b.norm() > config.max_speed {
        return Err(SimError::Diverged(format!("speed limit exceeded at t = {:.4}", sim.t)));
    }
    Ok(())
}

/// Joint torques that make every stance leg transmit `forces` (world frame).
pub fn torques_for_forces(robot: &RobotState, forces: &[Vector3<f64>; LEGS], model: &SrbModel) -> Vector12 {
    let mut tau = Vector12::zeros();
    for leg in 0..LEGS {
        let jac: Matrix3<f64> = leg_jacobian(leg, &robot.leg_q(leg), model);
        let t = -jac.transpose() * (robot.rot.transpose() * forces[leg]);
        tau.fixed_rows_mut::<3>(3 * leg).copy_from(&t);
    }
    tau
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::QpSolver;
    use crate::vmc::{solve_grf, VmcGains};
    use proptest::prelude::*;

    fn airborne(model: &SrbModel, z: f64) -> SimState {
        let mut robot = RobotState::standing(model, 0.25, 0.0).unwrap();
        robot.p_com.z = z;
        SimState::new(robot, model, &SimConfig::default())
    }

    fn run(mut sim: SimState, cmd: &LowLevelCommand, steps: usize, cfg: &SimConfig, model: &SrbModel) -> SimState {
        for _ in 0..steps {
            sim = step(&sim, cmd, cfg, model).unwrap();
        }
        sim
    }

    #[test]
    fn contact_spring_law() {
        let cfg = SimConfig::default();
        let f = apply_contact(&Vector3::new(0.0, 0.0, -1e-3), &Vector3::zeros(), &cfg);
        assert!((f - Vector3::new(0.0, 0.0, 10.0)).amax() < 1e-12);
        assert_eq!(apply_contact(&Vector3::new(0.0, 0.0, 0.01), &Vector3::zeros(), &cfg), Vector3::zeros());
    }

    proptest! {
        #[test]
        fn sliding_foot_obeys_coulomb(pen in 0.0..0.01f64, vx in -5.0..5.0f64, vy in -5.0..5.0f64, vz in -3.0..3.0f64) {
            let cfg = SimConfig::default();
            let f = apply_contact(&Vector3::new(0.0, 0.0, -pen), &Vector3::new(vx, vy, vz), &cfg);
            prop_assert!(f.z >= 0.0);
            prop_assert!(f.xy().norm() <= cfg.mu_sim * f.z + 1e-12);
        }
    }

    #[test]
    fn free_fall() {
        let model = SrbModel::default();
        let cfg = SimConfig::default();
        let mut sim = airborne(&model, 2.0);
        sim.robot.v_com = Vector3::new(0.3, -0.2, 1.0);
        let v0 = sim.robot.v_com;
        let steps = 500;
        let out = run(sim, &LowLevelCommand::zero(), steps, &cfg, &model);
        let t = steps as f64 * cfg.dt;
        assert!((out.robot.v_com.z - (v0.z - model.g_mag * t)).abs() < 1e-9);
        assert!((out.robot.v_com.xy() - v0.xy()).amax() < 1e-12);
        assert!(!out.any_contact());
    }

    #[test]
    fn principal_axis_spin_keeps_momentum() {
        let model = SrbModel::default();
        let cfg = SimConfig::default();
        let mut sim = airborne(&model, 50.0);
        sim.robot.omega_b = Vector3::new(0.0, 3.0, 0.0);
        let l0 = (model.inertia() * sim.robot.omega_b).norm();
        let out = run(sim, &LowLevelCommand::zero(), 1000, &cfg, &model);
        assert!(((model.inertia() * out.robot.omega_b).norm() - l0).abs() < 1e-6);
    }

    #[test]
    fn tumbling_spin_keeps_momentum() {
        let model = SrbModel::default();
        let cfg = SimConfig::default();
        let mut sim = airborne(&model, 50.0);
        sim.robot.omega_b = Vector3::new(1.0, 4.0, -2.0);
        let l0 = (model.inertia() * sim.robot.omega_b).norm();
        let out = run(sim, &LowLevelCommand::zero(), 1000, &cfg, &model);
        assert!(((model.inertia() * out.robot.omega_b).norm() - l0).abs() < 1e-6);
        let r = out.robot.rot;
        assert!((r.transpose() * r - Matrix3::identity()).amax() < 1e-9);
    }

    #[test]
    fn flight_energy_drift_is_small() {
        let model = SrbModel::default();
        let cfg = SimConfig::default();
        let mut sim = airborne(&model, 10.0);
        sim.robot.v_com = Vector3::new(0.3, 0.1, 2.5);
        let e0 = sim.energy(&model);
        let out = run(sim, &LowLevelCommand::zero(), 1000, &cfg, &model);
        assert!(((out.energy(&model) - e0) / e0).abs() < 1e-3);
    }

    #[test]
    fn ballistic_apex() {
        let model = SrbModel::default();
        for (dt, tol) in [(1e-3, 0.05), (1e-4, 0.005)] {
            let cfg = SimConfig { dt, ..SimConfig::default() };
            let mut sim = airborne(&model, 1.0);
            sim.robot.v_com.z = 2.5;
            let z0 = sim.robot.p_com.z;
            let mut apex = z0;
            while sim.robot.v_com.z > -0.1 {
                sim = step(&sim, &LowLevelCommand::zero(), &cfg, &model).unwrap();
                apex = apex.max(sim.robot.p_com.z);
            }
            let expected = 2.5f64.powi(2) / (2.0 * model.g_mag);
            assert!(((apex - z0) - expected).abs() / expected < tol);
        }
    }

    #[test]
    fn weight_supporting_stance_is_static() {
        let model = SrbModel::default();
        let cfg = SimConfig::default();
        let robot = RobotState::standing(&model, 0.30, 0.0).unwrap();
        let sim = SimState::new(robot.clone(), &model, &cfg);
        assert_eq!(sim.contact, [true; LEGS]);
        let feet = sim.foot_set();
        let grf = solve_grf(&robot, &feet, &Vector3::zeros(), &Vector3::zeros(), &VmcGains::default(), &model, &mut QpSolver::new())
            .unwrap()
            .grf;
        let cmd = LowLevelCommand::torque_only(torques_for_forces(&robot, &grf.f, &model));
        let out = run(sim.clone(), &cmd, 1000, &cfg, &model);
        // The torque-effort term leaves a wrench residual of ~1e-5 N.
        assert!((out.robot.p_com - robot.p_com).amax() < 1e-5, "{}", out.robot.p_com - robot.p_com);
        assert_eq!(out.contact, [true; LEGS]);

        let share = [Vector3::new(0.0, 0.0, model.mass * model.g_mag / 4.0); LEGS];
        let cmd = LowLevelCommand::torque_only(torques_for_forces(&robot, &share, &model));
        let out = run(sim, &cmd, 1000, &cfg, &model);
        assert!((out.robot.p_com - robot.p_com).amax() < 1e-6, "{}", out.robot.p_com - robot.p_com);
    }

    #[test]
    fn pulling_legs_lift_off() {
        let model = SrbModel::default();
        let cfg = SimConfig::default();
        let robot = RobotState::standing(&model, 0.30, 0.0).unwrap();
        let sim = SimState::new(robot.clone(), &model, &cfg);
        let down = [Vector3::new(0.0, 0.0, -10.0); LEGS];
        let cmd = LowLevelCommand::torque_only(torques_for_forces(&robot, &down, &model));
        let out = step(&sim, &cmd, &cfg, &model).unwrap();
        assert_eq!(out.contact, [false; LEGS]);
        assert_eq!(out.grf, [Vector3::zeros(); LEGS]);
    }

    #[test]
    fn falling_robot_touches_down() {
        let model = SrbModel::default();
        let cfg = SimConfig::default();
        let mut sim = airborne(&model, 0.27);
        sim.robot.v_com.z = -1.0;
        let mut touched = false;
        for _ in 0..100 {
            sim = step(&sim, &LowLevelCommand::zero(), &cfg, &model).unwrap();
            if sim.contact.iter().all(|&c| c) {
                touched = true;
                break;
            }
        }
        assert!(touched);
        for f in sim.feet {
            assert_eq!(f.z, cfg.ground_height);
        }
    }

    #[test]
    fn stepping_is_deterministic() {
        let model = SrbModel::default();
        let cfg = SimConfig::default();
        let mut sim = airborne(&model, 1.0);
        sim.robot.omega_b = Vector3::new(0.2, -0.1, 0.3);
        let cmd = LowLevelCommand::torque_only(Vector12::from_fn(|i, _| (i as f64 - 6.0) * 0.1));
        let a = run(sim.clone(), &cmd, 300, &cfg, &model);
        let b = run(sim, &cmd, 300, &cfg, &model);
        assert_eq!(a, b);
    }

    #[test]
    fn nan_torque_is_rejected() {
        let model = SrbModel::default();
        let sim = airborne(&model, 1.0);
        let mut cmd = LowLevelCommand::zero();
        cmd.tau[0] = f64::NAN;
        assert!(step(&sim, &cmd, &SimConfig::default(), &model).is_err());
    }
}
