//! Cascaded position/attitude control and thrust allocation.
//!
//! The outer position loop turns pose error into a desired acceleration,
//! which maps to a collective thrust plus roll/pitch tilt targets. The inner
//! attitude loop turns attitude error into moment demands. Allocation then
//! distributes the collective and moments over the six thrusters by
//! minimum-norm least squares, re-solving on the active constraint set when
//! a thruster saturates.

use super::pid::{Pid, PidGains};
use crate::guard::GuardParams;
use crate::spatial::EulerAngles;
use nalgebra::{DMatrix, DVector, SMatrix, Vector3, Vector4};

/// Position-loop gains, one PID per world axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisGains {
    pub x: PidGains,
    pub y: PidGains,
    pub z: PidGains,
}

/// Attitude-loop gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeGains {
    pub roll: PidGains,
    pub pitch: PidGains,
    pub yaw: PidGains,
}

impl Default for AttitudeGains {
    fn default() -> Self {
        let xy = PidGains::new(0.6, 0.05, 0.06).with_limits(0.05, -0.18, 0.18);
        let yaw = PidGains::new(0.9, 0.05, 0.09).with_limits(0.05, -0.30, 0.30);
        Self {
            roll: xy,
            pitch: xy,
            yaw,
        }
    }
}

/// Named position-gain presets from the five tuning tests.
///
/// The z-axis triple is shared by every test; x and y vary per test.
pub fn position_preset(name: &str) -> Option<AxisGains> {
    let (x, y) = match name {
        "test1" => ((15.900, 0.300, 31.000), (15.900, 0.300, 35.000)),
        "test2" => ((15.900, 0.300, 31.000), (15.900, 0.300, 35.000)),
        "test3" => ((18.264, 0.648, 40.691), (17.617, 0.631, 36.304)),
        "test4" => ((18.727, 0.535, 39.305), (18.028, 0.497, 35.000)),
        "test5" => ((17.900, 0.450, 36.000), (15.900, 1.282, 35.000)),
        _ => return None,
    };
    let z = (36.000, 3.500, 30.000);
    let lateral = |(kp, ki, kd): (f64, f64, f64)| {
        PidGains::new(kp, ki, kd).with_limits(2.0, -6.0, 6.0)
    };
    Some(AxisGains {
        x: lateral(x),
        y: lateral(y),
        z: PidGains::new(z.0, z.1, z.2).with_limits(3.0, -9.0, 20.0),
    })
}

pub const PRESET_NAMES: [&str; 5] = ["test1", "test2", "test3", "test4", "test5"];

/// Controller configuration beyond the raw gains.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeConfig {
    pub position: AxisGains,
    pub attitude: AttitudeGains,
    /// Total suspended mass the collective must carry, kg.
    pub total_mass: f64,
    pub gravity: f64,
    /// Tilt target clamp, rad.
    pub max_tilt: f64,
}

/// Pose as the controller sees it (decoded from the telemetry stream).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseMeasurement {
    pub position: Vector3<f64>,
    pub attitude: EulerAngles,
}

/// One controller tick's worth of outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeOutput {
    pub thrusts: [f64; 6],
    pub collective: f64,
    pub moments: Vector3<f64>,
    pub desired_attitude: EulerAngles,
    pub saturated: bool,
}

/// Cascaded position + attitude controller with internal PID state.
#[derive(Debug, Clone)]
pub struct Cascade {
    pub config: CascadeConfig,
    guard: GuardParams,
    x: Pid,
    y: Pid,
    z: Pid,
    roll: Pid,
    pitch: Pid,
    yaw: Pid,
}

impl Cascade {
    pub fn new(config: CascadeConfig, guard: GuardParams) -> Self {
        Self {
            x: Pid::new(config.position.x),
            y: Pid::new(config.position.y),
            z: Pid::new(config.position.z),
            roll: Pid::new(config.attitude.roll),
            pitch: Pid::new(config.attitude.pitch),
            yaw: Pid::new(config.attitude.yaw),
            config,
            guard,
        }
    }

    pub fn reset(&mut self) {
        self.x.reset();
        self.y.reset();
        self.z.reset();
        self.roll.reset();
        self.pitch.reset();
        self.yaw.reset();
    }

    /// One 200 Hz controller tick: pose in, thruster commands out.
    pub fn step(
        &mut self,
        meas: &PoseMeasurement,
        setpoint: &Vector3<f64>,
        yaw_ref: f64,
        dt: f64,
    ) -> CascadeOutput {
        let g = self.config.gravity;
        let err = setpoint - meas.position;
        let ax = self.x.step(err.x, dt);
        let ay = self.y.step(err.y, dt);
        let az = self.z.step(err.z, dt);

        // World acceleration demand to tilt targets, compensated for heading.
        let (sy, cy) = meas.attitude.yaw.sin_cos();
        let tilt = self.config.max_tilt;
        let pitch_des = ((cy * ax + sy * ay) / g).clamp(-tilt, tilt);
        let roll_des = ((sy * ax - cy * ay) / g).clamp(-tilt, tilt);

        // Collective from the vertical channel with gravity feedforward.
        let r33 = (meas.attitude.pitch.cos() * meas.attitude.roll.cos()).max(0.5);
        let collective = (self.config.total_mass * (g + az) / r33)
            .clamp(0.0, 6.0 * self.guard.f_max);

        let m_roll = self.roll.step(roll_des - meas.attitude.roll, dt);
        let m_pitch = self.pitch.step(pitch_des - meas.attitude.pitch, dt);
        let m_yaw = self.yaw.step(wrap_angle(yaw_ref - meas.attitude.yaw), dt);
        let moments = Vector3::new(m_roll, m_pitch, m_yaw);

        let (thrusts, saturated) = allocate(collective, &moments, &self.guard);
        CascadeOutput {
            thrusts,
            collective,
            moments,
            desired_attitude: EulerAngles::new(roll_des, pitch_des, yaw_ref),
            saturated,
        }
    }
}

fn wrap_angle(a: f64) -> f64 {
    let mut x = a % std::f64::consts::TAU;
    if x > std::f64::consts::PI {
        x -= std::f64::consts::TAU;
    } else if x < -std::f64::consts::PI {
        x += std::f64::consts::TAU;
    }
    x
}

/// Wrench map of the six thrusters: rows are collective, roll, pitch, yaw.
pub fn mixing_matrix(guard: &GuardParams) -> SMatrix<f64, 4, 6> {
    let (lx, ly, lz) = (guard.arm_x, guard.arm_y, guard.arm_z);
    SMatrix::<f64, 4, 6>::from_row_slice(&[
        1.0, 1.0, 1.0, 1.0, 1.0, 1.0, //
        0.0, -lx, 0.0, lx, 0.0, 0.0, //
        -ly, 0.0, ly, 0.0, 0.0, 0.0, //
        0.0, 0.0, 0.0, 0.0, -lz, lz,
    ])
}

/// Distribute a demanded wrench over the thrusters.
///
/// Unsaturated demands get the exact minimum-norm solution, so running the
/// result back through the mixing map reproduces the wrench. Outside the
/// feasible box the violators are pinned to their bounds and the remaining
/// thrusters re-solve the reduced least-squares problem; the flag reports
/// that the command is best-effort.
pub fn allocate(collective: f64, moments: &Vector3<f64>, guard: &GuardParams) -> ([f64; 6], bool) {
    let a = mixing_matrix(guard);
    let w = Vector4::new(collective, moments.x, moments.y, moments.z);

    // Minimum-norm solution u = A^T (A A^T)^-1 w; A A^T is diagonal here.
    let gram_inv = Vector4::new(
        1.0 / 6.0,
        1.0 / (2.0 * guard.arm_x * guard.arm_x),
        1.0 / (2.0 * guard.arm_y * guard.arm_y),
        1.0 / (2.0 * guard.arm_z * guard.arm_z),
    );
    let u0 = a.transpose() * gram_inv.component_mul(&w);
    let mut u = [0.0; 6];
    for i in 0..6 {
        u[i] = u0[i];
    }

    let in_bounds = |v: f64| (0.0..=guard.f_max).contains(&v);
    if u.iter().all(|&v| in_bounds(v)) {
        return (u, false);
    }

    // Active-set style repair: pin violators, re-solve the free subset.
    let mut fixed = [false; 6];
    for _ in 0..6 {
        let mut changed = false;
        for i in 0..6 {
            if !fixed[i] && !in_bounds(u[i]) {
                u[i] = u[i].clamp(0.0, guard.f_max);
                fixed[i] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let free: Vec<usize> = (0..6).filter(|&i| !fixed[i]).collect();
        if free.is_empty() {
            break;
        }
        let mut residual = w;
        for i in 0..6 {
            if fixed[i] {
                residual -= a.column(i) * u[i];
            }
        }
        let a_free = DMatrix::from_fn(4, free.len(), |r, c| a[(r, free[c])]);
        let rhs = DVector::from_column_slice(residual.as_slice());
        if let Ok(pinv) = a_free.pseudo_inverse(1e-12) {
            let u_free = pinv * rhs;
            for (c, &i) in free.iter().enumerate() {
                u[i] = u_free[c];
            }
        } else {
            break;
        }
    }
    for v in &mut u {
        *v = v.clamp(0.0, guard.f_max);
    }
    (u, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guard::{mix, ThrustCommand};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn guard() -> GuardParams {
        GuardParams::default()
    }

    fn config(preset: &str) -> CascadeConfig {
        CascadeConfig {
            position: position_preset(preset).unwrap(),
            attitude: AttitudeGains::default(),
            total_mass: 0.190,
            gravity: 9.8,
            max_tilt: 0.35,
        }
    }

    #[test]
    fn presets_cover_all_tests() {
        for name in PRESET_NAMES {
            assert!(position_preset(name).is_some());
        }
        assert!(position_preset("test9").is_none());
        // Spot values straight from the gain tables.
        let p1 = position_preset("test1").unwrap();
        assert_eq!(p1.x.kp, 15.900);
        assert_eq!(p1.x.kd, 31.000);
        assert_eq!(p1.y.kd, 35.000);
        assert_eq!(p1.z.kp, 36.000);
        let p5 = position_preset("test5").unwrap();
        assert_eq!(p5.y.ki, 1.282);
        assert_eq!(p5.x.kp, 17.900);
    }

    #[test]
    fn hover_trim_collective_only() {
        let mut cascade = Cascade::new(config("test1"), guard());
        let meas = PoseMeasurement {
            position: Vector3::new(0.0, 0.0, 0.2),
            attitude: EulerAngles::default(),
        };
        let out = cascade.step(&meas, &Vector3::new(0.0, 0.0, 0.2), 0.0, 0.005);
        let weight = 0.190 * 9.8;
        assert_relative_eq!(out.thrusts.iter().sum::<f64>(), weight, epsilon = 1e-9);
        // Zero differential between the paired thrusters.
        assert_relative_eq!(out.thrusts[3] - out.thrusts[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(out.thrusts[2] - out.thrusts[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(out.thrusts[5] - out.thrusts[4], 0.0, epsilon = 1e-12);
        assert!(!out.saturated);
    }

    #[test]
    fn roll_error_drives_matching_pair() {
        let mut cascade = Cascade::new(config("test1"), guard());
        let meas = PoseMeasurement {
            position: Vector3::new(0.0, 0.0, 0.2),
            attitude: EulerAngles::new(-0.1, 0.0, 0.0), // rolled negative
        };
        let out = cascade.step(&meas, &Vector3::new(0.0, 0.0, 0.2), 0.0, 0.005);
        // Positive roll demand: f4 > f2, other pairs stay balanced.
        assert!(out.moments.x > 0.0);
        assert!(out.thrusts[3] > out.thrusts[1]);
        assert_relative_eq!(out.thrusts[2], out.thrusts[0], epsilon = 1e-9);
        assert_relative_eq!(out.thrusts[5], out.thrusts[4], epsilon = 1e-9);
    }

    #[test]
    fn allocation_round_trip_identity() {
        let g = guard();
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let mut checked = 0;
        while checked < 1000 {
            let collective = rng.gen_range(0.3..3.0);
            let m = Vector3::new(
                rng.gen_range(-0.05..0.05),
                rng.gen_range(-0.05..0.05),
                rng.gen_range(-0.08..0.08),
            );
            let (u, saturated) = allocate(collective, &m, &g);
            if saturated {
                continue; // only unsaturated demands obey the exact identity
            }
            checked += 1;
            let (f, moments) = mix(&ThrustCommand::thrusters_only(u), &g);
            assert_relative_eq!(f, collective, epsilon = 1e-9);
            assert_relative_eq!(moments, m, epsilon = 1e-9);
        }
    }

    #[test]
    fn allocation_saturates_gracefully() {
        let g = guard();
        let (u, saturated) = allocate(10.0, &Vector3::new(0.5, 0.0, 0.0), &g);
        assert!(saturated);
        for v in u {
            assert!((0.0..=g.f_max).contains(&v));
        }
    }

    #[test]
    fn allocation_pure_collective_splits_evenly() {
        let g = guard();
        let (u, saturated) = allocate(1.8, &Vector3::zeros(), &g);
        assert!(!saturated);
        for v in u {
            assert_relative_eq!(v, 0.3, epsilon = 1e-12);
        }
    }

    #[test]
    fn yaw_error_wraps() {
        assert_relative_eq!(
            wrap_angle(3.0 * std::f64::consts::PI),
            std::f64::consts::PI,
            epsilon = 1e-12
        );
        assert_relative_eq!(wrap_angle(-3.5 * std::f64::consts::PI), 0.5 * std::f64::consts::PI, epsilon = 1e-12);
    }
}
