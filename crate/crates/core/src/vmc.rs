//! Virtual-model CoM and attitude tracking.
//!
//! Reference errors become desired accelerations through PD laws; a small QP
//! distributes the resulting body wrench over the stance feet inside a
//! linearized friction cone, and the forces are mapped to joint torques by the
//! leg Jacobians.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::TrackError;
use crate::kinematics::leg_jacobian;
use crate::model::{FootSet, RobotState, SrbModel, Vector12, LEGS};
use crate::qp::{QpProblem, QpSolver, INFINITE_BOUND};
use crate::rotation::{skew, so3_log};

pub type Matrix6x12 = SMatrix<f64, 6, 12>;

/// Friction rows per contact foot.
pub const CONE_ROWS: usize = 5;

/// Diagonal gains and QP weights. Each 3-array is the diagonal of the
/// corresponding matrix; `r_w` and the Cartesian gains repeat per leg.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VmcGains {
    pub kp_p: [f64; 3],
    pub kd_p: [f64; 3],
    pub kp_w: [f64; 3],
    pub kd_w: [f64; 3],
    /// Wrench weights along body axes, force rows first.
    pub q_w: [f64; 6],
    /// Joint-torque weights `[abad, hip, knee]`.
    pub r_w: [f64; 3],
    pub kcp: [f64; 3],
    pub kcd: [f64; 3],
    pub mu: f64,
    pub f_min: f64,
    pub f_max: f64,
}

impl Default for VmcGains {
    fn default() -> Self {
        Self {
            kp_p: [1070.0; 3],
            kd_p: [12.0, 12.0, 10.0],
            kp_w: [800.0; 3],
            kd_w: [20.0, 10.0, 20.0],
            q_w: [1.0, 1.0, 10.0, 20.0, 10.0, 25.0],
            r_w: [5e-5, 50e-5, 2e-5],
            kcp: [0.0; 3],
            kcd: [15.0; 3],
            mu: 0.5,
            f_min: 5.0,
            f_max: 250.0,
        }
    }
}

impl VmcGains {
    pub fn validate(&self) -> Result<(), String> {
        let gains = self
            .kp_p
            .iter()
            .chain(&self.kd_p)
            .chain(&self.kp_w)
            .chain(&self.kd_w)
            .chain(&self.q_w)
            .chain(&self.r_w)
            .chain(&self.kcp)
            .chain(&self.kcd);
        for &g in gains {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(format!("gain {g} must be finite and non-negative"));
            }
        }
        if !(self.mu > 0.0) {
            return Err("mu must be positive".into());
        }
        if !(0.0 <= self.f_min && self.f_min < self.f_max) {
            return Err("need 0 <= f_min < f_max".into());
        }
        Ok(())
    }
}

fn diag(d: &[f64; 3]) -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vector3::from_column_slice(d))
}

/// Desired CoM and body motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingReference {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub rot: Matrix3<f64>,
    /// Body frame.
    pub omega: Vector3<f64>,
}

impl TrackingReference {
    /// Level attitude, zero rates.
    pub fn level(p: Vector3<f64>, v: Vector3<f64>) -> Self {
        Self {
            p,
            v,
            rot: Matrix3::identity(),
            omega: Vector3::zeros(),
        }
    }

    pub fn from_state(state: &RobotState) -> Self {
        Self {
            p: state.p_com,
            v: state.v_com,
            rot: state.rot,
            omega: state.omega_b,
        }
    }
}

/// Desired CoM acceleration (world) and angular acceleration (body).
pub fn virtual_accelerations(
    state: &RobotState,
    reference: &TrackingReference,
    gains: &VmcGains,
) -> (Vector3<f64>, Vector3<f64>) {
    let a = diag(&gains.kp_p) * (reference.p - state.p_com) + diag(&gains.kd_p) * (reference.v - state.v_com);
    let e_r = so3_log(&(state.rot.transpose() * reference.rot));
    let alpha = diag(&gains.kp_w) * e_r + diag(&gains.kd_w) * (reference.omega - state.omega_b);
    (a, alpha)
}

/// Wrench map `M` (force rows, then world-frame torque rows; zero columns for
/// swing feet) and the desired wrench `N`.
pub fn build_srb_constraint(
    state: &RobotState,
    feet: &FootSet,
    a_ref: &Vector3<f64>,
    alpha_ref: &Vector3<f64>,
    model: &SrbModel,
) -> Result<(Matrix6x12, Vector6<f64>), TrackError> {
    if feet.contact_count() == 0 {
        return Err(TrackError::NoContact);
    }
    let mut m = Matrix6x12::zeros();
    for leg in feet.contact_legs() {
        m.fixed_view_mut::<3, 3>(0, 3 * leg).copy_from(&Matrix3::identity());
        m.fixed_view_mut::<3, 3>(3, 3 * leg).copy_from(&skew(&feet.r[leg]));
    }
    let force = model.mass * a_ref - model.weight();
    let torque = state.rot * (model.inertia() * alpha_ref);
    let mut n = Vector6::zeros();
    n.fixed_rows_mut::<3>(0).copy_from(&force);
    n.fixed_rows_mut::<3>(3).copy_from(&torque);
    Ok((m, n))
}

/// Five-row friction pyramid and normal-force bounds per contact foot, over the
/// stacked contact forces.
pub fn build_friction_cone(feet: &FootSet, gains: &VmcGains) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let nc = feet.contact_count();
    let mut g = DMatrix::zeros(CONE_ROWS * nc, 3 * nc);
    let mut lo = DVector::zeros(CONE_ROWS * nc);
    let mut hi = DVector::zeros(CONE_ROWS * nc);
    let mu = gains.mu;
    for k in 0..nc {
        let (r, c) = (CONE_ROWS * k, 3 * k);
        // f_t - mu f_z <= 0 and f_t + mu f_z >= 0 for t in {x, y}
        for (i, t) in [0, 1].into_iter().enumerate() {
            g[(r + 2 * i, c + t)] = 1.0;
            g[(r + 2 * i, c + 2)] = -mu;
            lo[r + 2 * i] = -INFINITE_BOUND;
            hi[r + 2 * i] = 0.0;
            g[(r + 2 * i + 1, c + t)] = 1.0;
            g[(r + 2 * i + 1, c + 2)] = mu;
            lo[r + 2 * i + 1] = 0.0;
            hi[r + 2 * i + 1] = INFINITE_BOUND;
        }
        g[(r + 4, c + 2)] = 1.0;
        lo[r + 4] = gains.f_min;
        hi[r + 4] = gains.f_max;
    }
    (g, lo, hi)
}

/// World-frame ground reaction forces; zero for swing feet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrfCommand {
    pub f: [Vector3<f64>; LEGS],
    pub contact: [bool; LEGS],
}

impl GrfCommand {
    pub fn zero() -> Self {
        Self {
            f: [Vector3::zeros(); LEGS],
            contact: [false; LEGS],
        }
    }

    pub fn total_force(&self) -> Vector3<f64> {
        self.f.iter().sum()
    }

    /// Net wrench `[force; world torque]` about the CoM.
    pub fn wrench(&self, feet: &FootSet) -> Vector6<f64> {
        let mut w = Vector6::zeros();
        for leg in 0..LEGS {
            let t = feet.r[leg].cross(&self.f[leg]);
            w += Vector6::new(self.f[leg].x, self.f[leg].y, self.f[leg].z, t.x, t.y, t.z);
        }
        w
    }

    pub fn stacked(&self) -> Vector12 {
        let mut v = Vector12::zeros();
        for leg in 0..LEGS {
            v.fixed_rows_mut::<3>(3 * leg).copy_from(&self.f[leg]);
        }
        v
    }
}

/// QP outcome for one tracking cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrfSolve {
    pub grf: GrfCommand,
    pub iterations: usize,
}

/// Joint torque per unit foot force for leg `leg`: `J' R'`.
fn force_to_torque(state: &RobotState, leg: usize, model: &SrbModel) -> Matrix3<f64> {
    leg_jacobian(leg, &state.leg_q(leg), model).transpose() * state.rot.transpose()
}

/// Assembles the force-distribution QP over the contact feet.
pub fn build_grf_problem(
    state: &RobotState,
    feet: &FootSet,
    a_ref: &Vector3<f64>,
    alpha_ref: &Vector3<f64>,
    gains: &VmcGains,
    model: &SrbModel,
) -> Result<QpProblem, TrackError> {
    let (m_full, n) = build_srb_constraint(state, feet, a_ref, alpha_ref, model)?;
    let legs: Vec<usize> = feet.contact_legs().collect();
    let nv = 3 * legs.len();
    let mut m = DMatrix::zeros(6, nv);
    for (k, &leg) in legs.iter().enumerate() {
        m.view_mut((0, 3 * k), (6, 3)).copy_from(&m_full.fixed_view::<6, 3>(0, 3 * leg));
    }
    // Wrench errors are weighted along body axes.
    let mut rot6 = DMatrix::zeros(6, 6);
    rot6.view_mut((0, 0), (3, 3)).copy_from(&state.rot);
    rot6.view_mut((3, 3), (3, 3)).copy_from(&state.rot);
    let q = &rot6 * DMatrix::from_diagonal(&DVector::from_column_slice(&gains.q_w)) * rot6.transpose();
    let r = diag(&gains.r_w);
    let qm = &q * &m;
    let mut h = m.transpose() * &qm;
    for (k, &leg) in legs.iter().enumerate() {
        let a = force_to_torque(state, leg, model);
        let block = a.transpose() * r * a;
        let mut hb = h.view_mut((3 * k, 3 * k), (3, 3));
        hb += block;
    }
    let h = (&h + h.transpose()) * 0.5;
    let g = -qm.transpose() * DVector::from_column_slice(n.as_slice());
    let (cone, lo, hi) = build_friction_cone(feet, gains);
    // Joint torque limits, so the commanded forces are ones the legs can produce.
    let rows = cone.nrows();
    let mut a_all = DMatrix::zeros(rows + nv, nv);
    a_all.view_mut((0, 0), (rows, nv)).copy_from(&cone);
    let mut lo_all = DVector::from_element(rows + nv, -model.tau_max);
    let mut hi_all = DVector::from_element(rows + nv, model.tau_max);
    lo_all.rows_mut(0, rows).copy_from(&lo);
    hi_all.rows_mut(0, rows).copy_from(&hi);
    for (k, &leg) in legs.iter().enumerate() {
        let a = force_to_torque(state, leg, model);
        a_all.view_mut((rows + 3 * k, 3 * k), (3, 3)).copy_from(&a);
    }
    QpProblem::new(h, g, a_all, lo_all, hi_all).map_err(|e| TrackError::Problem(e.to_string()))
}

/// Minimizes the weighted wrench error plus joint-torque effort inside the
/// friction cone.
pub fn solve_grf(
    state: &RobotState,
    feet: &FootSet,
    a_ref: &Vector3<f64>,
    alpha_ref: &Vector3<f64>,
    gains: &VmcGains,
    model: &SrbModel,
    solver: &mut QpSolver,
) -> Result<GrfSolve, TrackError> {
    let problem = build_grf_problem(state, feet, a_ref, alpha_ref, gains, model)?;
    let sol = solver
        .solve(&problem)
        .map_err(|e| TrackError::Problem(e.to_string()))?;
    if !sol.is_optimal() {
        return Err(TrackError::Qp(sol.status));
    }
    let mut grf = GrfCommand {
        f: [Vector3::zeros(); LEGS],
        contact: feet.contact,
    };
    for (k, leg) in feet.contact_legs().enumerate() {
        grf.f[leg] = sol.x.fixed_rows::<3>(3 * k).into_owned();
    }
    Ok(GrfSolve {
        grf,
        iterations: sol.iterations,
    })
}

/// Body-frame foot position and velocity targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootReference {
    pub p: [Vector3<f64>; LEGS],
    pub v: [Vector3<f64>; LEGS],
}

impl FootReference {
    /// Where world-fixed feet would sit, relative to the body, if the body
    /// followed `reference` exactly.
    pub fn stance(state: &RobotState, feet: &FootSet, reference: &TrackingReference) -> Self {
        let rt = reference.rot.transpose();
        let p: [Vector3<f64>; LEGS] = std::array::from_fn(|leg| rt * (feet.r[leg] + state.p_com - reference.p));
        let v = std::array::from_fn(|leg| -rt * reference.v - reference.omega.cross(&p[leg]));
        Self { p, v }
    }
}

/// `tau = -J' R' f` for stance legs plus the Cartesian PD through `J'` on every
/// leg, clamped to the torque limit.
pub fn grf_to_torques(
    state: &RobotState,
    grf: &GrfCommand,
    foot_ref: &FootReference,
    gains: &VmcGains,
    model: &SrbModel,
) -> Vector12 {
    let kcp = diag(&gains.kcp);
    let kcd = diag(&gains.kcd);
    let mut tau = Vector12::zeros();
    for leg in 0..LEGS {
        let q = state.leg_q(leg);
        let jac = leg_jacobian(leg, &q, model);
        let p = crate::kinematics::leg_forward_kinematics(leg, &q, model);
        let v = jac * state.leg_dq(leg);
        let cart = kcp * (foot_ref.p[leg] - p) + kcd * (foot_ref.v[leg] - v);
        let mut t = jac.transpose() * cart;
        if grf.contact[leg] {
            t += feedforward_torque(&jac, &(state.rot.transpose() * grf.f[leg]));
        }
        tau.fixed_rows_mut::<3>(3 * leg).copy_from(&t);
    }
    clamp_torques(&tau, model.tau_max)
}

/// Joint torques that make the foot push on the ground so that the ground
/// returns `f_body` (body frame) to the leg.
pub fn feedforward_torque(jac: &Matrix3<f64>, f_body: &Vector3<f64>) -> Vector3<f64> {
    -jac.transpose() * f_body
}

/// Scales each leg's torques down by a common factor so every joint is
/// within `limit`. Unlike per-joint clipping this keeps the direction of the
/// foot force. Non-finite entries are clipped.
pub fn clamp_torques(tau: &Vector12, limit: f64) -> Vector12 {
    let mut out = tau.map(|t| if t.is_finite() { t } else { t.clamp(-limit, limit) });
    for leg in 0..LEGS {
        let mut rows = out.fixed_rows_mut::<3>(3 * leg);
        let peak = rows.amax();
        if peak > limit {
            // The product can round one ulp past the limit.
            rows.apply(|t| *t = (*t * (limit / peak)).clamp(-limit, limit));
        }
    }
    out
}

/// Everything one tracking cycle produces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackOutput {
    pub a_ref: Vector3<f64>,
    pub alpha_ref: Vector3<f64>,
    pub grf: GrfCommand,
    pub tau: Vector12,
    pub iterations: usize,
    pub solve_ns: u64,
}

/// Holds the QP workspace for one control loop.
#[derive(Debug, Clone, Default)]
pub struct Tracker {
    pub gains: VmcGains,
    solver: QpSolver,
}

impl Tracker {
    pub fn new(gains: VmcGains) -> Self {
        Self {
            gains,
            solver: QpSolver::new(),
        }
    }

    /// Reference in, clamped joint torques out.
    pub fn track(
        &mut self,
        state: &RobotState,
        feet: &FootSet,
        reference: &TrackingReference,
        model: &SrbModel,
    ) -> Result<TrackOutput, TrackError> {
        let start = Instant::now();
        let (a_ref, alpha_ref) = virtual_accelerations(state, reference, &self.gains);
        let solve = solve_grf(state, feet, &a_ref, &alpha_ref, &self.gains, model, &mut self.solver)?;
        let foot_ref = FootReference::stance(state, feet, reference);
        let tau = grf_to_torques(state, &solve.grf, &foot_ref, &self.gains, model);
        Ok(TrackOutput {
            a_ref,
            alpha_ref,
            grf: solve.grf,
            tau,
            iterations: solve.iterations,
            solve_ns: start.elapsed().as_nanos() as u64,
        })
    }
}
