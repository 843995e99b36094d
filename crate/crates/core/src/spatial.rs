//! Rotation and kinematics primitives shared by the dynamics modules.
//!
//! Attitude is represented by a full direction-cosine matrix and integrated
//! through `Rdot = R * hat(omega)`, with a reprojection onto the nearest
//! rotation after every integration step. Euler angles use the Z-Y-X
//! (yaw-pitch-roll) convention and exist for configuration, control error
//! terms, and logging only.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpatialError {
    #[error("pitch {0} rad is at or beyond the +/- pi/2 singularity")]
    SingularPitch(f64),
    #[error("matrix is numerically rank deficient (smallest singular value {0:.3e})")]
    Degenerate(f64),
}

/// Z-Y-X Euler angles in radians. `pitch` must stay inside (-pi/2, pi/2).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EulerAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl EulerAngles {
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self { roll, pitch, yaw }
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.roll, self.pitch, self.yaw)
    }
}

/// Rotation about the body x-axis.
pub fn rot_x(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

/// Rotation about the body y-axis.
pub fn rot_y(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Rotation about the body z-axis.
pub fn rot_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Derivative of [`rot_x`] with respect to its angle.
pub fn drot_x(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(0.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s)
}

/// Derivative of [`rot_y`] with respect to its angle.
pub fn drot_y(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(-s, 0.0, c, 0.0, 0.0, 0.0, -c, 0.0, -s)
}

/// Body-to-world rotation from Z-Y-X Euler angles: `R = Rz(yaw) Ry(pitch) Rx(roll)`.
pub fn euler_to_rotation(angles: &EulerAngles) -> Result<Matrix3<f64>, SpatialError> {
    if angles.pitch.abs() >= std::f64::consts::FRAC_PI_2 {
        return Err(SpatialError::SingularPitch(angles.pitch));
    }
    Ok(rot_z(angles.yaw) * rot_y(angles.pitch) * rot_x(angles.roll))
}

/// Recover Z-Y-X Euler angles from a rotation matrix (logging path).
pub fn rotation_to_euler(r: &Matrix3<f64>) -> EulerAngles {
    let pitch = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
    let roll = r[(2, 1)].atan2(r[(2, 2)]);
    let yaw = r[(1, 0)].atan2(r[(0, 0)]);
    EulerAngles { roll, pitch, yaw }
}

/// Skew-symmetric cross-product matrix: `hat(w) * v == w x v`.
pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Project a drifted matrix back onto the nearest rotation (polar factor).
///
/// Intended for integrator drift repair: the input is expected to be within
/// Frobenius distance 0.1 of a rotation. Rank-deficient inputs are rejected.
pub fn reorthonormalize(r: &Matrix3<f64>) -> Result<Matrix3<f64>, SpatialError> {
    let svd = r.svd(true, true);
    let min_sv = svd.singular_values.min();
    if min_sv < 1e-6 {
        return Err(SpatialError::Degenerate(min_sv));
    }
    let u = svd.u.expect("svd computed with u");
    let v_t = svd.v_t.expect("svd computed with v_t");
    let mut q = u * v_t;
    // Flip the weakest direction if the polar factor landed on det = -1.
    if q.determinant() < 0.0 {
        let mut u_fix = u;
        u_fix.column_mut(2).neg_mut();
        q = u_fix * v_t;
    }
    Ok(q)
}

/// Frobenius norm of `R^T R - I`; zero for an exactly orthonormal matrix.
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn euler_identity() {
        let r = euler_to_rotation(&EulerAngles::new(0.0, 0.0, 0.0)).unwrap();
        assert_relative_eq!(r, Matrix3::identity(), epsilon = 1e-15);
    }

    #[test]
    fn euler_yaw_quarter_turn_maps_x_to_y() {
        let r = euler_to_rotation(&EulerAngles::new(0.0, 0.0, std::f64::consts::FRAC_PI_2))
            .unwrap();
        let mapped = r * Vector3::x();
        assert_relative_eq!(mapped, Vector3::y(), epsilon = 1e-15);
    }

    #[test]
    fn euler_matches_axis_rotation_product() {
        // Oracle: multiply the three axis rotations directly.
        let (roll, pitch, yaw) = (0.1, 0.2, 0.3);
        let r = euler_to_rotation(&EulerAngles::new(roll, pitch, yaw)).unwrap();
        let oracle = rot_z(yaw) * rot_y(pitch) * rot_x(roll);
        assert_relative_eq!(r, oracle, epsilon = 1e-15);
        // Spot-check one entry against a scalar expansion.
        assert_relative_eq!(r[(2, 0)], -pitch.sin(), epsilon = 1e-15);
    }

    #[test]
    fn euler_rejects_singular_pitch() {
        let res = euler_to_rotation(&EulerAngles::new(0.0, std::f64::consts::FRAC_PI_2, 0.0));
        assert!(matches!(res, Err(SpatialError::SingularPitch(_))));
    }

    #[test]
    fn euler_round_trip() {
        let angles = EulerAngles::new(-0.4, 0.7, 2.1);
        let r = euler_to_rotation(&angles).unwrap();
        let back = rotation_to_euler(&r);
        assert_relative_eq!(back.roll, angles.roll, epsilon = 1e-12);
        assert_relative_eq!(back.pitch, angles.pitch, epsilon = 1e-12);
        assert_relative_eq!(back.yaw, angles.yaw, epsilon = 1e-12);
    }

    #[test]
    fn euler_orthonormal_over_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let angles = EulerAngles::new(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-3.0..3.0),
            );
            let r = euler_to_rotation(&angles).unwrap();
            assert!(orthonormality_error(&r) < 1e-12);
            assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hat_zero_is_zero() {
        assert_eq!(hat(&Vector3::zeros()), Matrix3::zeros());
    }

    #[test]
    fn hat_unit_cross_product() {
        let v = hat(&Vector3::x()) * Vector3::y();
        assert_relative_eq!(v, Vector3::z(), epsilon = 1e-15);
    }

    #[test]
    fn hat_matches_cross_product() {
        let w = Vector3::new(1.0, 2.0, 3.0);
        let v = Vector3::new(4.0, 5.0, 6.0);
        // (1,2,3) x (4,5,6) = (-3, 6, -3), evaluated by hand.
        assert_relative_eq!(hat(&w) * v, Vector3::new(-3.0, 6.0, -3.0), epsilon = 1e-15);
        assert_relative_eq!(hat(&w) * v, w.cross(&v), epsilon = 1e-15);
    }

    #[test]
    fn hat_is_antisymmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let w = Vector3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()) * 10.0;
            let h = hat(&w);
            assert_eq!(h + h.transpose(), Matrix3::zeros());
        }
    }

    #[test]
    fn reorthonormalize_identity_fixed_point() {
        let q = reorthonormalize(&Matrix3::identity()).unwrap();
        assert_relative_eq!(q, Matrix3::identity(), epsilon = 1e-14);
    }

    #[test]
    fn reorthonormalize_removes_scaling() {
        let q = reorthonormalize(&(Matrix3::identity() * 1.001)).unwrap();
        assert_relative_eq!(q, Matrix3::identity(), epsilon = 1e-14);
    }

    #[test]
    fn reorthonormalize_perturbed_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let base = euler_to_rotation(&EulerAngles::new(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-1.4..1.4),
                rng.gen_range(-3.0..3.0),
            ))
            .unwrap();
            let noise = Matrix3::from_fn(|_, _| rng.gen_range(-1e-3..1e-3));
            let q = reorthonormalize(&(base + noise)).unwrap();
            assert!(orthonormality_error(&q) < 1e-12);
            assert!((q.determinant() - 1.0).abs() < 1e-12);
            // Idempotence.
            let q2 = reorthonormalize(&q).unwrap();
            assert!((q2 - q).norm() < 1e-14);
        }
    }

    #[test]
    fn reorthonormalize_rejects_rank_deficient() {
        let mut m = Matrix3::identity();
        m[(2, 2)] = 0.0;
        assert!(matches!(
            reorthonormalize(&m),
            Err(SpatialError::Degenerate(_))
        ));
    }
}
