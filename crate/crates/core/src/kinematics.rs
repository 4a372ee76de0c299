//! Three-joint leg kinematics: abduction about body x, then hip and knee
//! about the rotated y axis.
//!
//! With all joints at zero the leg points straight down and the foot sits at
//! `hip_offset + (0, side * l1, -(l2 + l3))`. Positive hip/knee angles swing
//! the distal link backward (toward -x).

use nalgebra::{Matrix3, Vector3};

use crate::error::KinematicsError;
use crate::model::SrbModel;

/// Leg-local planar quantities shared by FK and the Jacobian.
struct Planar {
    x: f64,
    y: f64,
    z: f64,
    sin_a: f64,
    cos_a: f64,
    sin_bc: f64,
    cos_bc: f64,
}

fn planar(leg: usize, q: &Vector3<f64>, model: &SrbModel) -> Planar {
    let (sin_a, cos_a) = q.x.sin_cos();
    let (sin_b, cos_b) = q.y.sin_cos();
    let (sin_bc, cos_bc) = (q.y + q.z).sin_cos();
    Planar {
        x: -model.l2 * sin_b - model.l3 * sin_bc,
        y: model.side_sign(leg) * model.l1,
        z: -model.l2 * cos_b - model.l3 * cos_bc,
        sin_a,
        cos_a,
        sin_bc,
        cos_bc,
    }
}

/// Foot position in the body frame.
pub fn leg_forward_kinematics(leg: usize, q: &Vector3<f64>, model: &SrbModel) -> Vector3<f64> {
    let p = planar(leg, q, model);
    model.hip_offset(leg)
        + Vector3::new(
            p.x,
            p.y * p.cos_a - p.z * p.sin_a,
            p.y * p.sin_a + p.z * p.cos_a,
        )
}

/// `d foot / d q` in the body frame; columns are abduction, hip, knee.
pub fn leg_jacobian(leg: usize, q: &Vector3<f64>, model: &SrbModel) -> Matrix3<f64> {
    let p = planar(leg, q, model);
    let (sa, ca) = (p.sin_a, p.cos_a);
    let l3 = model.l3;
    Matrix3::new(
        0.0,
        p.z,
        -l3 * p.cos_bc,
        -p.y * sa - p.z * ca,
        p.x * sa,
        -l3 * p.sin_bc * sa,
        p.y * ca - p.z * sa,
        -p.x * ca,
        l3 * p.sin_bc * ca,
    )
}

/// Joint angles placing the foot at `foot` (body frame), knee-backward branch
/// (knee angle <= 0) with the foot below the abduction axis.
pub fn leg_inverse_kinematics(
    leg: usize,
    foot: &Vector3<f64>,
    model: &SrbModel,
) -> Result<Vector3<f64>, KinematicsError> {
    if leg >= crate::model::LEGS {
        return Err(KinematicsError::BadLeg(leg));
    }
    let rel = foot - model.hip_offset(leg);
    let side_y = model.side_sign(leg) * model.l1;

    // Abduction: rotate (side_y, z_local) onto (rel.y, rel.z).
    let yz2 = rel.y * rel.y + rel.z * rel.z;
    let z2 = yz2 - side_y * side_y;
    if z2 < 0.0 {
        return Err(KinematicsError::OutOfReach {
            leg,
            distance: rel.norm(),
        });
    }
    let z_local = -z2.sqrt();
    let abad = rel.z.atan2(rel.y) - z_local.atan2(side_y);

    // Sagittal two-link problem on (rel.x, z_local).
    let (l2, l3) = (model.l2, model.l3);
    let d2 = rel.x * rel.x + z2;
    let d = d2.sqrt();
    let slack = 1e-12 * (l2 + l3);
    if d > l2 + l3 + slack || d < (l2 - l3).abs() - slack {
        return Err(KinematicsError::OutOfReach { leg, distance: d });
    }
    let cos_knee = ((d2 - l2 * l2 - l3 * l3) / (2.0 * l2 * l3)).clamp(-1.0, 1.0);
    let knee = -cos_knee.acos();
    let (k1, k2) = (l2 + l3 * knee.cos(), l3 * knee.sin());
    let hip = (-rel.x).atan2(-z_local) - k2.atan2(k1);

    Ok(Vector3::new(wrap_angle(abad), wrap_angle(hip), knee))
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut a = a % two_pi;
    if a > std::f64::consts::PI {
        a -= two_pi;
    } else if a < -std::f64::consts::PI {
        a += two_pi;
    }
    a
}
