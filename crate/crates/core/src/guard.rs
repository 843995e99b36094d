//! Guard rigid-body dynamics: thruster mixing to a body wrench and
//! Newton-Euler equations of motion.
//!
//! Six thrusters all push along body +z. Thrusters 2/4 sit on the y-axis arms
//! and differ for roll, 1/3 on the x-axis arms for pitch, and 5/6 at the ends
//! of the long axis for yaw.

use crate::spatial::hat;
use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GuardError {
    #[error("thruster {index} command {value} N outside [0, {max}] N")]
    ThrustOutOfRange { index: usize, value: f64, max: f64 },
}

/// Guard physical parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GuardParams {
    /// Cage + electronics mass, kg.
    pub mass: f64,
    /// Body-frame inertia, kg m^2.
    pub inertia: Matrix3<f64>,
    /// Roll moment arm (thrusters 2/4), m.
    pub arm_x: f64,
    /// Pitch moment arm (thrusters 1/3), m.
    pub arm_y: f64,
    /// Yaw moment arm (thrusters 5/6), m.
    pub arm_z: f64,
    /// Gravitational acceleration, m/s^2.
    pub gravity: f64,
    /// Per-thruster saturation, N.
    pub f_max: f64,
}

impl Default for GuardParams {
    fn default() -> Self {
        Self {
            mass: 0.150,
            inertia: Matrix3::from_diagonal(&Vector3::new(2.0e-3, 2.0e-3, 3.0e-3)),
            arm_x: 0.15,
            arm_y: 0.15,
            arm_z: 0.25,
            gravity: 9.8,
            f_max: 0.6,
        }
    }
}

/// Guard rigid-body state. `attitude` is the body-to-world rotation.
#[derive(Debug, Clone, PartialEq)]
pub struct GuardState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: Matrix3<f64>,
    /// Body-frame angular velocity, rad/s.
    pub omega: Vector3<f64>,
}

impl GuardState {
    pub fn at_rest() -> Self {
        Self {
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            attitude: Matrix3::identity(),
            omega: Vector3::zeros(),
        }
    }
}

/// Six thruster forces plus the passthrough elastic wrench from the bands,
/// both expressed in the guard body frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ThrustCommand {
    pub thrusts: [f64; 6],
    pub elastic_force: Vector3<f64>,
    pub elastic_moment: Vector3<f64>,
}

impl ThrustCommand {
    pub fn thrusters_only(thrusts: [f64; 6]) -> Self {
        Self {
            thrusts,
            elastic_force: Vector3::zeros(),
            elastic_moment: Vector3::zeros(),
        }
    }

    pub fn collective(&self) -> f64 {
        self.thrusts.iter().sum()
    }

    pub fn validate(&self, params: &GuardParams) -> Result<(), GuardError> {
        for (index, &value) in self.thrusts.iter().enumerate() {
            if !(0.0..=params.f_max).contains(&value) {
                return Err(GuardError::ThrustOutOfRange {
                    index: index + 1,
                    value,
                    max: params.f_max,
                });
            }
        }
        Ok(())
    }
}

/// Map a command to the scalar body-z force and body moment:
///
/// ```text
/// f   = f1 + f2 + f3 + f4 + f5 + f6 + f_e,z
/// m_x = L_x (f4 - f2) + m_e,x
/// m_y = L_y (f3 - f1) + m_e,y
/// m_z = L_z (f6 - f5) + m_e,z
/// ```
///
/// The scalar sum carries only the body-z component of the elastic force; the
/// full elastic force vector enters the translational dynamics separately
/// (see the harness), so nothing is counted twice.
pub fn mix(cmd: &ThrustCommand, params: &GuardParams) -> (f64, Vector3<f64>) {
    let [f1, f2, f3, f4, f5, f6] = cmd.thrusts;
    let f = f1 + f2 + f3 + f4 + f5 + f6 + cmd.elastic_force.z;
    let m = Vector3::new(
        params.arm_x * (f4 - f2),
        params.arm_y * (f3 - f1),
        params.arm_z * (f6 - f5),
    ) + cmd.elastic_moment;
    (f, m)
}

/// World-frame force from the collective body-z thrust: `F = R [0, 0, f]^T`.
pub fn body_to_world_force(attitude: &Matrix3<f64>, f: f64) -> Vector3<f64> {
    attitude * Vector3::new(0.0, 0.0, f)
}

/// Rate of change of a [`GuardState`].
#[derive(Debug, Clone, PartialEq)]
pub struct GuardDerivative {
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub attitude_rate: Matrix3<f64>,
    pub omega_dot: Vector3<f64>,
}

/// Newton-Euler equations of the guard:
///
/// ```text
/// pddot = -g zhat + F / m
/// Rdot  = R hat(omega)
/// J omegadot = m - omega x J omega
/// ```
///
/// `world_force` is the total applied force in the world frame excluding
/// gravity; `body_moment` is the total moment in the body frame.
pub fn guard_derivative(
    state: &GuardState,
    world_force: &Vector3<f64>,
    body_moment: &Vector3<f64>,
    params: &GuardParams,
) -> GuardDerivative {
    let acceleration =
        Vector3::new(0.0, 0.0, -params.gravity) + world_force / params.mass;
    let attitude_rate = state.attitude * hat(&state.omega);
    let j_omega = params.inertia * state.omega;
    let omega_dot = params
        .inertia
        .try_inverse()
        .expect("inertia is SPD")
        * (body_moment - state.omega.cross(&j_omega));
    GuardDerivative {
        velocity: state.velocity,
        acceleration,
        attitude_rate,
        omega_dot,
    }
}

/// World-frame angular momentum `R J omega`; conserved in torque-free motion.
pub fn angular_momentum(state: &GuardState, params: &GuardParams) -> Vector3<f64> {
    state.attitude * (params.inertia * state.omega)
}

/// Kinetic energy `1/2 m |v|^2 + 1/2 omega^T J omega`.
pub fn kinetic_energy(state: &GuardState, params: &GuardParams) -> f64 {
    0.5 * params.mass * state.velocity.norm_squared()
        + 0.5 * state.omega.dot(&(params.inertia * state.omega))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::{euler_to_rotation, EulerAngles};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> GuardParams {
        GuardParams::default()
    }

    #[test]
    fn mix_symmetric_thrust_cancels_moments() {
        let cmd = ThrustCommand::thrusters_only([1.0; 6]);
        let (f, m) = mix(&cmd, &params());
        assert_relative_eq!(f, 6.0, epsilon = 1e-15);
        assert_eq!(m, Vector3::zeros());
    }

    #[test]
    fn mix_pitch_pair_moment() {
        let mut p = params();
        p.arm_y = 0.3;
        let cmd = ThrustCommand::thrusters_only([1.0, 0.0, 2.0, 0.0, 0.0, 0.0]);
        let (_, m) = mix(&cmd, &p);
        assert_relative_eq!(m.y, 0.3, epsilon = 1e-15);
        assert_eq!(m.x, 0.0);
        assert_eq!(m.z, 0.0);
    }

    #[test]
    fn mix_zero_command_zero_wrench() {
        let (f, m) = mix(&ThrustCommand::thrusters_only([0.0; 6]), &params());
        assert_eq!(f, 0.0);
        assert_eq!(m, Vector3::zeros());
    }

    #[test]
    fn mix_is_linear_in_thrusts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = params();
        for _ in 0..50 {
            let u: [f64; 6] = std::array::from_fn(|_| rng.gen_range(0.0..0.6));
            let v: [f64; 6] = std::array::from_fn(|_| rng.gen_range(0.0..0.6));
            let (alpha, beta) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
            let combo: [f64; 6] = std::array::from_fn(|i| alpha * u[i] + beta * v[i]);
            let (fu, mu) = mix(&ThrustCommand::thrusters_only(u), &p);
            let (fv, mv) = mix(&ThrustCommand::thrusters_only(v), &p);
            let (fc, mc) = mix(&ThrustCommand::thrusters_only(combo), &p);
            assert_relative_eq!(fc, alpha * fu + beta * fv, epsilon = 1e-12);
            assert_relative_eq!(mc, alpha * mu + beta * mv, epsilon = 1e-12);
        }
    }

    #[test]
    fn mix_differential_pair_symmetry() {
        let p = params();
        let u = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let (f0, m0) = mix(&ThrustCommand::thrusters_only(u), &p);

        let mut roll_swapped = u;
        roll_swapped.swap(1, 3); // f2 <-> f4
        let (f1, m1) = mix(&ThrustCommand::thrusters_only(roll_swapped), &p);
        assert_relative_eq!(f1, f0, epsilon = 1e-15);
        assert_relative_eq!(m1.x, -m0.x, epsilon = 1e-15);
        assert_relative_eq!(m1.y, m0.y, epsilon = 1e-15);
        assert_relative_eq!(m1.z, m0.z, epsilon = 1e-15);

        let mut pitch_swapped = u;
        pitch_swapped.swap(0, 2); // f1 <-> f3
        let (f2, m2) = mix(&ThrustCommand::thrusters_only(pitch_swapped), &p);
        assert_relative_eq!(f2, f0, epsilon = 1e-15);
        assert_relative_eq!(m2.y, -m0.y, epsilon = 1e-15);

        let mut yaw_swapped = u;
        yaw_swapped.swap(4, 5); // f5 <-> f6
        let (f3, m3) = mix(&ThrustCommand::thrusters_only(yaw_swapped), &p);
        assert_relative_eq!(f3, f0, epsilon = 1e-15);
        assert_relative_eq!(m3.z, -m0.z, epsilon = 1e-15);
    }

    #[test]
    fn body_to_world_level() {
        let f = body_to_world_force(&Matrix3::identity(), 5.0);
        assert_relative_eq!(f, Vector3::new(0.0, 0.0, 5.0), epsilon = 1e-15);
    }

    #[test]
    fn body_to_world_rolled_preserves_norm() {
        let r = euler_to_rotation(&EulerAngles::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0))
            .unwrap();
        let f = body_to_world_force(&r, 1.0);
        assert_relative_eq!(f.norm(), 1.0, epsilon = 1e-15);
        // 90 deg roll tips body z onto world -y.
        assert_relative_eq!(f, Vector3::new(0.0, -1.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn body_to_world_is_third_column() {
        let r = euler_to_rotation(&EulerAngles::new(0.1, 0.2, 0.3)).unwrap();
        let f = body_to_world_force(&r, 2.0);
        assert_relative_eq!(f, r.column(2) * 2.0, epsilon = 1e-15);
    }

    #[test]
    fn free_fall() {
        let d = guard_derivative(
            &GuardState::at_rest(),
            &Vector3::zeros(),
            &Vector3::zeros(),
            &params(),
        );
        assert_relative_eq!(d.acceleration, Vector3::new(0.0, 0.0, -9.8), epsilon = 1e-15);
        assert_eq!(d.omega_dot, Vector3::zeros());
    }

    #[test]
    fn hover_equilibrium() {
        let p = params();
        let weight = p.mass * p.gravity;
        let d = guard_derivative(
            &GuardState::at_rest(),
            &Vector3::new(0.0, 0.0, weight),
            &Vector3::zeros(),
            &p,
        );
        assert!(d.acceleration.norm() < 1e-12);
    }

    #[test]
    fn euler_gyroscopic_term() {
        // J = diag(1,2,3), omega = (1,1,0), m = 0:
        // omega x J omega = (1,1,0) x (1,2,0) = (0, 0, 1)
        // omegadot = -J^-1 (0,0,1) = (0, 0, -1/3).
        let mut p = params();
        p.inertia = Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0));
        let mut state = GuardState::at_rest();
        state.omega = Vector3::new(1.0, 1.0, 0.0);
        let d = guard_derivative(&state, &Vector3::zeros(), &Vector3::zeros(), &p);
        assert_relative_eq!(
            d.omega_dot,
            Vector3::new(0.0, 0.0, -1.0 / 3.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn validate_rejects_out_of_range() {
        let p = params();
        let cmd = ThrustCommand::thrusters_only([0.0, 0.0, 0.7, 0.0, 0.0, 0.0]);
        assert!(matches!(
            cmd.validate(&p),
            Err(GuardError::ThrustOutOfRange { index: 3, .. })
        ));
        let cmd = ThrustCommand::thrusters_only([0.0, -0.1, 0.0, 0.0, 0.0, 0.0]);
        assert!(cmd.validate(&p).is_err());
        let cmd = ThrustCommand::thrusters_only([0.1; 6]);
        assert!(cmd.validate(&p).is_ok());
    }
}
