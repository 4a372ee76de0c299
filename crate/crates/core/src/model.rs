//! Robot state and single-rigid-body model parameters.

use nalgebra::{Matrix3, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::kinematics;
use crate::rotation::{euler_to_rotation, orthonormalize, rotation_to_euler};

pub type Vector12 = SVector<f64, 12>;

/// Number of legs.
pub const LEGS: usize = 4;

/// Leg order used throughout: front-right, front-left, hind-right, hind-left.
pub const LEG_NAMES: [&str; LEGS] = ["FR", "FL", "HR", "HL"];

/// Mass, inertia, leg geometry and actuator limits of the single-rigid-body model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SrbModel {
    /// kg
    pub mass: f64,
    /// Body-frame inertia tensor, kg m^2, row-major.
    pub inertia: [[f64; 3]; 3],
    /// Abduction joint location of each leg in the body frame, m.
    pub hip_offsets: [[f64; 3]; LEGS],
    /// Lateral offset from the abduction axis to the thigh, m.
    pub l1: f64,
    /// Thigh length, m.
    pub l2: f64,
    /// Shank length, m.
    pub l3: f64,
    /// Symmetric joint torque limit, N m.
    pub tau_max: f64,
    /// Gravitational acceleration magnitude, m/s^2, acting along world -z.
    pub g_mag: f64,
}

impl Default for SrbModel {
    fn default() -> Self {
        Self {
            mass: 9.0,
            inertia: [[0.07, 0.0, 0.0], [0.0, 0.26, 0.0], [0.0, 0.0, 0.242]],
            hip_offsets: [
                [0.19, -0.049, 0.0],
                [0.19, 0.049, 0.0],
                [-0.19, -0.049, 0.0],
                [-0.19, 0.049, 0.0],
            ],
            l1: 0.062,
            l2: 0.209,
            l3: 0.195,
            tau_max: 24.0,
            g_mag: 9.81,
        }
    }
}

impl SrbModel {
    pub fn inertia(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.inertia[r][c])
    }

    pub fn hip_offset(&self, leg: usize) -> Vector3<f64> {
        Vector3::from(self.hip_offsets[leg])
    }

    /// +1 for left legs, -1 for right legs (sign of the hip y offset).
    pub fn side_sign(&self, leg: usize) -> f64 {
        if self.hip_offsets[leg][1] >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Weight vector `m g` pointing along world -z.
    pub fn weight(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, -self.mass * self.g_mag)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: &str| Err(ConfigError::Invalid(msg.to_string()));
        if !(self.mass > 0.0) {
            return bad("model.mass must be positive");
        }
        if !(self.l2 > 0.0 && self.l3 > 0.0 && self.l1 >= 0.0) {
            return bad("model link lengths must be positive");
        }
        if !(self.tau_max > 0.0) {
            return bad("model.tau_max must be positive");
        }
        if !(self.g_mag > 0.0) {
            return bad("model.g_mag must be positive");
        }
        let i = self.inertia();
        if (i - i.transpose()).amax() > 1e-12 {
            return bad("model.inertia must be symmetric");
        }
        if i.cholesky().is_none() {
            return bad("model.inertia must be positive definite");
        }
        Ok(())
    }
}

/// Floating-base and joint state.
///
/// `rot` and `theta` describe the same body-to-world rotation; use the setters
/// to keep them in sync.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    /// CoM position, world frame, m.
    pub p_com: Vector3<f64>,
    /// `[roll, pitch, yaw]`, rad.
    pub theta: Vector3<f64>,
    /// Body-to-world rotation.
    pub rot: Matrix3<f64>,
    /// CoM velocity, world frame, m/s.
    pub v_com: Vector3<f64>,
    /// Angular velocity, body frame, rad/s.
    pub omega_b: Vector3<f64>,
    /// Joint angles, three per leg in leg order, rad.
    pub q: Vector12,
    /// Joint velocities, rad/s.
    pub dq: Vector12,
}

impl Default for RobotState {
    fn default() -> Self {
        Self {
            p_com: Vector3::zeros(),
            theta: Vector3::zeros(),
            rot: Matrix3::identity(),
            v_com: Vector3::zeros(),
            omega_b: Vector3::zeros(),
            q: Vector12::zeros(),
            dq: Vector12::zeros(),
        }
    }
}

impl RobotState {
    pub fn set_euler(&mut self, theta: Vector3<f64>) {
        self.rot = euler_to_rotation(&theta);
        self.theta = theta;
    }

    pub fn set_rotation(&mut self, rot: Matrix3<f64>) {
        self.rot = orthonormalize(&rot);
        self.theta = rotation_to_euler(&self.rot);
    }

    pub fn leg_q(&self, leg: usize) -> Vector3<f64> {
        self.q.fixed_rows::<3>(3 * leg).into_owned()
    }

    pub fn leg_dq(&self, leg: usize) -> Vector3<f64> {
        self.dq.fixed_rows::<3>(3 * leg).into_owned()
    }

    pub fn set_leg_q(&mut self, leg: usize, q: &Vector3<f64>) {
        self.q.fixed_rows_mut::<3>(3 * leg).copy_from(q);
    }

    pub fn set_leg_dq(&mut self, leg: usize, dq: &Vector3<f64>) {
        self.dq.fixed_rows_mut::<3>(3 * leg).copy_from(dq);
    }

    /// Level stance with the CoM at `height` above a ground at z = 0 and the
    /// feet at [`nominal_foot`] with lateral offset `splay`.
    pub fn standing(model: &SrbModel, height: f64, splay: f64) -> Result<Self, crate::error::KinematicsError> {
        let mut state = Self {
            p_com: Vector3::new(0.0, 0.0, height),
            ..Self::default()
        };
        for leg in 0..LEGS {
            let foot = nominal_foot(model, leg, height, splay);
            let q = kinematics::leg_inverse_kinematics(leg, &foot, model)?;
            state.set_leg_q(leg, &q);
        }
        Ok(state)
    }

    /// Body-frame foot position of each leg from the joint angles.
    pub fn feet_body(&self, model: &SrbModel) -> [Vector3<f64>; LEGS] {
        std::array::from_fn(|leg| kinematics::leg_forward_kinematics(leg, &self.leg_q(leg), model))
    }

    pub fn is_finite(&self) -> bool {
        self.p_com.iter().all(|v| v.is_finite())
            && self.v_com.iter().all(|v| v.is_finite())
            && self.omega_b.iter().all(|v| v.is_finite())
            && self.rot.iter().all(|v| v.is_finite())
            && self.q.iter().all(|v| v.is_finite())
            && self.dq.iter().all(|v| v.is_finite())
    }
}

/// Body-frame foot position at `height` below leg `leg`'s hip joint, moved
/// `splay` outward. Zero splay means zero abduction angle.
pub fn nominal_foot(model: &SrbModel, leg: usize, height: f64, splay: f64) -> Vector3<f64> {
    model.hip_offset(leg) + Vector3::new(0.0, model.side_sign(leg) * (model.l1 + splay), -height)
}

/// CoM-to-foot vectors (world frame) and contact flags.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootSet {
    pub r: [Vector3<f64>; LEGS],
    pub contact: [bool; LEGS],
}

impl FootSet {
    pub fn new(r: [Vector3<f64>; LEGS], contact: [bool; LEGS]) -> Self {
        Self { r, contact }
    }

    /// All four feet in contact at the body-frame positions implied by the state.
    pub fn from_state(state: &RobotState, model: &SrbModel, contact: [bool; LEGS]) -> Self {
        let feet = state.feet_body(model);
        Self {
            r: feet.map(|f| state.rot * f),
            contact,
        }
    }

    pub fn contact_count(&self) -> usize {
        self.contact.iter().filter(|&&c| c).count()
    }

    pub fn contact_legs(&self) -> impl Iterator<Item = usize> + '_ {
        (0..LEGS).filter(|&i| self.contact[i])
    }
}
