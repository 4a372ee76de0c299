//! Rotation utilities: ZYX Euler angles and the SO(3) exponential/logarithm.
//!
//! Euler vectors are ordered `[roll, pitch, yaw]` and compose as
//! `R = Rz(yaw) * Ry(pitch) * Rx(roll)` (body to world).

use nalgebra::{Matrix3, Vector3};

/// Cross-product matrix: `skew(a) * b == a.cross(&b)`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`] on the skew-symmetric part.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

pub fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// `[roll, pitch, yaw]` to a body-to-world rotation matrix.
pub fn euler_to_rotation(theta: &Vector3<f64>) -> Matrix3<f64> {
    rot_z(theta.z) * rot_y(theta.y) * rot_x(theta.x)
}

/// Inverse of [`euler_to_rotation`]; pitch is returned in `[-pi/2, pi/2]`.
pub fn rotation_to_euler(r: &Matrix3<f64>) -> Vector3<f64> {
    let roll = r[(2, 1)].atan2(r[(2, 2)]);
    let pitch = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
    let yaw = r[(1, 0)].atan2(r[(0, 0)]);
    Vector3::new(roll, pitch, yaw)
}

/// Exponential map from an axis-angle vector to a rotation matrix.
pub fn so3_exp(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let k = skew(w);
    let (a, b) = if theta2 < 1e-16 {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Matrix3::identity() + k * a + k * k * b
}

/// Logarithm map of a rotation matrix; the result has norm in `[0, pi]`.
///
/// Near an angle of pi the axis is recovered from the symmetric part, which
/// avoids dividing by `sin(theta)`.
pub fn so3_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let skew_part = vee(r);
    let sin_theta = skew_part.norm();
    let cos_theta = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = sin_theta.atan2(cos_theta);

    if cos_theta > 0.0 {
        // theta / sin(theta), series for small angles
        let scale = if theta < 1e-6 {
            1.0 + theta * theta / 6.0
        } else {
            theta / sin_theta
        };
        return skew_part * scale;
    }

    // (R + R^T)/2 = cos(theta) I + (1 - cos(theta)) n n^T
    let sym = (r + r.transpose()) * 0.5;
    let nn = (sym - Matrix3::identity() * cos_theta) / (1.0 - cos_theta);
    let k = (0..3)
        .max_by(|&a, &b| nn[(a, a)].total_cmp(&nn[(b, b)]))
        .unwrap_or(0);
    let nk = nn[(k, k)].max(0.0).sqrt();
    let mut axis = Vector3::new(nn[(0, k)], nn[(1, k)], nn[(2, k)]) / nk;
    axis.normalize_mut();
    if axis.dot(&skew_part) < 0.0 {
        axis = -axis;
    }
    axis * theta
}

/// Re-orthonormalize a nearly orthonormal matrix (closest rotation via SVD).
pub fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut out = u * v_t;
    if out.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        out = u * v_t;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    /// Exponential by truncated power series, independent of Rodrigues.
    fn exp_series(w: &Vector3<f64>) -> Matrix3<f64> {
        let a = skew(w);
        let mut term = Matrix3::identity();
        let mut sum = Matrix3::identity();
        for k in 1..40 {
            term = term * a / k as f64;
            sum += term;
        }
        sum
    }

    fn random_rotation(rng: &mut ChaCha8Rng, max_angle: f64) -> (Vector3<f64>, Matrix3<f64>) {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
        .normalize();
        let w = axis * rng.random_range(0.0..max_angle);
        (w, exp_series(&w))
    }

    #[test]
    fn euler_zero_is_identity() {
        assert_eq!(euler_to_rotation(&Vector3::zeros()), Matrix3::identity());
    }

    #[test]
    fn euler_yaw_quarter_turn_maps_x_to_y() {
        let r = euler_to_rotation(&Vector3::new(0.0, 0.0, FRAC_PI_2));
        let y = r * Vector3::x();
        assert!((y - Vector3::y()).norm() < 1e-15);
    }

    #[test]
    fn euler_orthonormal_and_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let theta = Vector3::new(
                rng.random_range(-PI..PI),
                rng.random_range(-(FRAC_PI_2 - 0.01)..(FRAC_PI_2 - 0.01)),
                rng.random_range(-PI..PI),
            );
            let r = euler_to_rotation(&theta);
            assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-12);
            assert!((r.determinant() - 1.0).abs() < 1e-12);
            let back = rotation_to_euler(&r);
            assert!((back - theta).amax() < 1e-9, "{theta:?} -> {back:?}");
        }
    }

    #[test]
    fn log_of_identity_and_small_z() {
        assert_eq!(so3_log(&Matrix3::identity()), Vector3::zeros());
        let w = so3_log(&rot_z(0.1));
        assert!((w - Vector3::new(0.0, 0.0, 0.1)).amax() < 1e-12);
    }

    #[test]
    fn exp_matches_series_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let (w, r_oracle) = random_rotation(&mut rng, PI);
            assert!((so3_exp(&w) - r_oracle).amax() < 1e-12);
        }
    }

    #[test]
    fn log_exp_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let (w, r) = random_rotation(&mut rng, PI - 1e-3);
            let l = so3_log(&r);
            assert!(l.norm() <= PI + 1e-12);
            assert!((exp_series(&l) - r).amax() < 1e-9);
            assert!((l - w).amax() < 1e-9);
        }
    }

    #[test]
    fn log_near_pi_uses_stable_branch() {
        for angle in [PI - 1e-3, PI - 1e-7, PI] {
            let axis = Vector3::new(1.0, 2.0, -0.5).normalize();
            let r = exp_series(&(axis * angle));
            let l = so3_log(&r);
            assert!((l.norm() - angle).abs() < 1e-9);
            assert!((so3_exp(&l) - r).amax() < 1e-9);
        }
    }

    #[test]
    fn skew_matches_cross() {
        let a = Vector3::new(0.3, -1.2, 2.0);
        let b = Vector3::new(-0.7, 0.1, 0.4);
        assert!((skew(&a) * b - a.cross(&b)).norm() < 1e-15);
        assert_eq!(vee(&skew(&a)), a);
    }
}
