//! The multirate simulation loop.
//!
//! Physics steps at `dt` under RK4. Pose samples leave at the mocap rate
//! through the pose link (as encoded packets, so the controller sees the
//! 32-bit wire precision), the controller and observer step at the control
//! rate on delivered packets, and commands reach the actuators through the
//! command link with 16-bit PWM quantization at the PWM rate.

use super::clock::{RateSchedule, SimClock};
use super::log::{LogRow, RunLog};
use super::rk4::rk4_step;
use super::scenario::Scenario;
use crate::aero::{AeroModel, AeroState, BladeGeometry};
use crate::aerobat::{
    aerobat_accel, elastic_wrench, partitioned_dynamics, strip_jacobian, strip_normal,
    strip_span_direction, strip_world_velocity, wing_gait, AerobatParams, AerobatState,
    ElasticParams, GuardMotion, WingGait,
};
use crate::control::{
    mixing_matrix, observer_error_matrix, position_preset, AttitudeGains, AxisGains, Cascade,
    CascadeConfig, ModelTerms, Observer, ObserverGains, PidGains, PoseMeasurement,
};
use crate::guard::{guard_derivative, GuardParams, GuardState};
use crate::spatial::{reorthonormalize, rotation_to_euler, EulerAngles};
use crate::telemetry::{
    decode_command, decode_pose, encode_command, encode_pose, pwm_quantize, CommandPacket, Link,
    PosePacket, COMMAND_PACKET_LEN, POSE_PACKET_LEN,
};
use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scenario(#[from] super::scenario::ScenarioError),
    #[error("aero model: {0}")]
    Aero(#[from] crate::aero::AeroError),
    #[error("observer gains rejected: error dynamics not Hurwitz (abscissa {0:.3})")]
    NotHurwitz(f64),
}

/// Result of a run: the log plus whether the state left the divergence bound.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub log: RunLog,
    pub diverged: bool,
}

/// Rotation matrix to quaternion (w, x, y, z).
pub fn rotation_to_quaternion(r: &Matrix3<f64>) -> [f64; 4] {
    let trace = r[(0, 0)] + r[(1, 1)] + r[(2, 2)];
    if trace > 0.0 {
        let s = (trace + 1.0).sqrt() * 2.0;
        [
            0.25 * s,
            (r[(2, 1)] - r[(1, 2)]) / s,
            (r[(0, 2)] - r[(2, 0)]) / s,
            (r[(1, 0)] - r[(0, 1)]) / s,
        ]
    } else if r[(0, 0)] > r[(1, 1)] && r[(0, 0)] > r[(2, 2)] {
        let s = (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt() * 2.0;
        [
            (r[(2, 1)] - r[(1, 2)]) / s,
            0.25 * s,
            (r[(0, 1)] + r[(1, 0)]) / s,
            (r[(0, 2)] + r[(2, 0)]) / s,
        ]
    } else if r[(1, 1)] > r[(2, 2)] {
        let s = (1.0 + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt() * 2.0;
        [
            (r[(0, 2)] - r[(2, 0)]) / s,
            (r[(0, 1)] + r[(1, 0)]) / s,
            0.25 * s,
            (r[(1, 2)] + r[(2, 1)]) / s,
        ]
    } else {
        let s = (1.0 + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt() * 2.0;
        [
            (r[(1, 0)] - r[(0, 1)]) / s,
            (r[(0, 2)] + r[(2, 0)]) / s,
            (r[(1, 2)] + r[(2, 1)]) / s,
            0.25 * s,
        ]
    }
}

/// Quaternion (w, x, y, z) to rotation matrix.
pub fn quaternion_to_rotation(q: &[f64; 4]) -> Matrix3<f64> {
    let [w, x, y, z] = *q;
    let n = (w * w + x * x + y * y + z * z).sqrt();
    let (w, x, y, z) = (w / n, x / n, y / n, z / n);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - z * w),
        2.0 * (x * z + y * w),
        2.0 * (x * y + z * w),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - x * w),
        2.0 * (x * z - y * w),
        2.0 * (y * z + x * w),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Full coupled state of the simulated system.
#[derive(Debug, Clone)]
pub struct SimState {
    pub guard: GuardState,
    pub aerobat: AerobatState,
    /// Aerodynamic states, right wing then left wing. Empty when aero is off.
    pub aero: Vec<AeroState>,
}

impl SimState {
    pub fn dim(&self, strips: usize) -> usize {
        28 + self.aero.len() * 3 * strips
    }

    pub fn to_vector(&self, strips: usize) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim(strips));
        v.fixed_rows_mut::<3>(0).copy_from(&self.guard.position);
        v.fixed_rows_mut::<3>(3).copy_from(&self.guard.velocity);
        for r in 0..3 {
            for c in 0..3 {
                v[6 + 3 * r + c] = self.guard.attitude[(r, c)];
            }
        }
        v.fixed_rows_mut::<3>(15).copy_from(&self.guard.omega);
        v.fixed_rows_mut::<3>(18)
            .copy_from(&self.aerobat.rel_position);
        v.fixed_rows_mut::<3>(21)
            .copy_from(&self.aerobat.rel_velocity);
        v[24] = self.aerobat.alpha.x;
        v[25] = self.aerobat.alpha.y;
        v[26] = self.aerobat.alpha_rate.x;
        v[27] = self.aerobat.alpha_rate.y;
        let mut offset = 28;
        for state in &self.aero {
            let flat = state.to_vector();
            v.rows_mut(offset, flat.len()).copy_from(&flat);
            offset += flat.len();
        }
        v
    }

    pub fn from_vector(v: &DVector<f64>, strips: usize, wings: usize, rel_yaw: f64) -> Self {
        let guard = GuardState {
            position: Vector3::new(v[0], v[1], v[2]),
            velocity: Vector3::new(v[3], v[4], v[5]),
            attitude: Matrix3::from_fn(|r, c| v[6 + 3 * r + c]),
            omega: Vector3::new(v[15], v[16], v[17]),
        };
        let aerobat = AerobatState {
            rel_position: Vector3::new(v[18], v[19], v[20]),
            rel_velocity: Vector3::new(v[21], v[22], v[23]),
            alpha: Vector2::new(v[24], v[25]),
            alpha_rate: Vector2::new(v[26], v[27]),
            rel_yaw,
        };
        let mut aero = Vec::with_capacity(wings);
        let mut offset = 28;
        for _ in 0..wings {
            let flat = DVector::from_iterator(
                3 * strips,
                v.iter().skip(offset).take(3 * strips).copied(),
            );
            aero.push(AeroState::from_vector(&flat, strips));
            offset += 3 * strips;
        }
        Self {
            guard,
            aerobat,
            aero,
        }
    }
}

/// Everything fixed over a run that the physics derivative needs.
pub struct PlantModel {
    pub guard: GuardParams,
    pub aerobat: AerobatParams,
    pub elastic: ElasticParams,
    pub gait: WingGait,
    pub aero_model: Option<AeroModel>,
    pub air_density: f64,
    pub disturbance: super::scenario::DisturbanceSettings,
    pub strips: usize,
}

impl PlantModel {
    pub fn from_scenario(scenario: &Scenario) -> Result<Self, HarnessError> {
        let aero_model = if scenario.aero.enabled {
            let geom = BladeGeometry::cosine_spaced(
                scenario.aero.strips,
                scenario.aerobat.params().semispan(),
                scenario.aero.chord,
            )?;
            Some(AeroModel::new(
                geom,
                scenario.aero.coefficients(),
                scenario.aero.forcing,
            )?)
        } else {
            None
        };
        Ok(Self {
            guard: scenario.guard.params(),
            aerobat: scenario.aerobat.params(),
            elastic: scenario.elastic.params(&scenario.aerobat),
            gait: scenario.gait.gait(),
            aero_model,
            air_density: scenario.aero.air_density,
            disturbance: scenario.disturbance.clone(),
            strips: scenario.aero.strips,
        })
    }

    pub fn wings(&self) -> usize {
        if self.aero_model.is_some() {
            2
        } else {
            0
        }
    }

    /// Coupled state derivative under the currently applied thrusts.
    pub fn derivative(&self, t: f64, state: &SimState, thrusts: &[f64; 6]) -> SimState {
        let (a, a_rate, a_accel) = wing_gait(&self.gait, t);

        // Band wrench on the guard (world force, world moment).
        let x_a = state.guard.position + state.aerobat.rel_position;
        let r_a = state.aerobat.attitude();
        let (f_e, m_e) = elastic_wrench(
            &state.guard.position,
            &state.guard.attitude,
            &x_a,
            &r_a,
            &self.elastic,
        );

        // Guard equations of motion.
        let collective: f64 = thrusts.iter().sum();
        let thrust_world = state.guard.attitude * Vector3::new(0.0, 0.0, collective);
        let (d_force, d_torque) = self.disturbance.evaluate(t);
        let world_force = thrust_world + f_e + d_force;
        let thrust_moment = Vector3::new(
            self.guard.arm_x * (thrusts[3] - thrusts[1]),
            self.guard.arm_y * (thrusts[2] - thrusts[0]),
            self.guard.arm_z * (thrusts[5] - thrusts[4]),
        );
        let body_moment =
            thrust_moment + state.guard.attitude.transpose() * (m_e + d_torque);
        let guard_rate = guard_derivative(&state.guard, &world_force, &body_moment, &self.guard);

        // Robot equations of motion, fed the guard acceleration.
        let guard_motion = GuardMotion {
            position: state.guard.position,
            velocity: state.guard.velocity,
            attitude: state.guard.attitude,
            acceleration: guard_rate.acceleration,
        };
        let blocks = partitioned_dynamics(
            &state.aerobat,
            &a,
            &a_rate,
            &guard_motion,
            &self.aerobat,
            &self.elastic,
        );

        let mut aero_rates = Vec::with_capacity(state.aero.len());
        let (jacobian, y_flow) = if let Some(model) = &self.aero_model {
            let geom = model.geometry();
            let n = geom.strip_count();
            let mut y_flow = DVector::zeros(6 * n);
            let r_rel = state.aerobat.attitude();
            for (wing_idx, &side) in [1.0f64, -1.0].iter().enumerate() {
                let aero_state = &state.aero[wing_idx];
                let mut raw = DVector::zeros(n);
                let mut u_rels = Vec::with_capacity(n);
                for (i, &station) in geom.stations().iter().enumerate() {
                    let v_strip = strip_world_velocity(
                        &state.aerobat,
                        &state.guard.velocity,
                        &self.aerobat,
                        &a,
                        &a_rate,
                        station,
                        side,
                    );
                    let u_rel = -v_strip;
                    let normal = r_rel * strip_normal(&self.aerobat, &a, station, side);
                    raw[i] = u_rel.dot(&normal);
                    u_rels.push(u_rel);
                }
                aero_rates.push(model.derivative(aero_state, &raw, t));
                let gammas = model.circulations(aero_state);
                for (i, &station) in geom.stations().iter().enumerate() {
                    let span = r_rel * strip_span_direction(&self.aerobat, &a, station, side);
                    let force = crate::aero::strip_force(
                        gammas[i],
                        &u_rels[i],
                        &span,
                        geom.widths()[i],
                        self.air_density,
                    );
                    // The partitioned equations take the flow-side reaction;
                    // negate the force felt by the wing.
                    let row = 3 * (wing_idx * n + i);
                    y_flow[row] = -force.x;
                    y_flow[row + 1] = -force.y;
                    y_flow[row + 2] = -force.z;
                }
            }
            let jac = strip_jacobian(
                &state.aerobat,
                &state.guard.position,
                &self.aerobat,
                &a,
                geom.stations(),
            );
            (jac, y_flow)
        } else {
            (DMatrix::zeros(0, 5), DVector::zeros(0))
        };

        let (rel_accel, alpha_accel) = aerobat_accel(&blocks, &jacobian, &y_flow, &a_accel)
            .unwrap_or((Vector3::zeros(), Vector2::zeros()));

        SimState {
            guard: GuardState {
                position: guard_rate.velocity,
                velocity: guard_rate.acceleration,
                attitude: guard_rate.attitude_rate,
                omega: guard_rate.omega_dot,
            },
            aerobat: AerobatState {
                rel_position: state.aerobat.rel_velocity,
                rel_velocity: rel_accel,
                alpha: state.aerobat.alpha_rate,
                alpha_rate: alpha_accel,
                rel_yaw: 0.0,
            },
            aero: aero_rates,
        }
    }
}

fn cascade_from_scenario(scenario: &Scenario) -> CascadeConfig {
    let c = &scenario.control;
    let scale = c.accel_scale;
    let scale_gains = |g: PidGains| PidGains {
        kp: g.kp * scale,
        ki: g.ki * scale,
        kd: g.kd * scale,
        integral_limit: g.integral_limit,
        out_min: g.out_min,
        out_max: g.out_max,
    };
    let base = match &c.position {
        Some(p) => AxisGains {
            x: PidGains::new(p.x[0], p.x[1], p.x[2]).with_limits(2.0, -6.0, 6.0),
            y: PidGains::new(p.y[0], p.y[1], p.y[2]).with_limits(2.0, -6.0, 6.0),
            z: PidGains::new(p.z[0], p.z[1], p.z[2]).with_limits(3.0, -9.0, 20.0),
        },
        None => position_preset(&c.preset).expect("preset validated"),
    };
    let position = AxisGains {
        x: scale_gains(base.x),
        y: scale_gains(base.y),
        z: scale_gains(base.z),
    };
    let rp = c.attitude_roll_pitch;
    let yaw = c.attitude_yaw;
    let attitude = AttitudeGains {
        roll: PidGains::new(rp[0], rp[1], rp[2]).with_limits(0.05, -0.18, 0.18),
        pitch: PidGains::new(rp[0], rp[1], rp[2]).with_limits(0.05, -0.18, 0.18),
        yaw: PidGains::new(yaw[0], yaw[1], yaw[2]).with_limits(0.05, -0.30, 0.30),
    };
    CascadeConfig {
        position,
        attitude,
        total_mass: scenario.guard.mass + scenario.aerobat.total_mass,
        gravity: scenario.guard.gravity,
        max_tilt: c.max_tilt,
    }
}

/// Observer gain blocks plus the load map `g3 = M^-1`.
///
/// `beta3` from the settings is the effective constant of the per-axis error
/// polynomial; the gain matrix itself is `beta3 * g3^-1` so the polynomial is
/// the same on every axis despite the mass/inertia spread.
pub fn observer_model(scenario: &Scenario) -> (ObserverGains, DMatrix<f64>) {
    let o = &scenario.observer;
    let m_tot = scenario.guard.mass + scenario.aerobat.total_mass;
    let mut g3 = DMatrix::zeros(6, 6);
    let mut beta3 = DMatrix::zeros(6, 6);
    for i in 0..3 {
        g3[(i, i)] = 1.0 / m_tot;
        g3[(3 + i, 3 + i)] = 1.0 / scenario.guard.inertia[i];
        beta3[(i, i)] = o.beta3 / g3[(i, i)];
        beta3[(3 + i, 3 + i)] = o.beta3 / g3[(3 + i, 3 + i)];
    }
    let gains = ObserverGains {
        beta1: DMatrix::identity(6, 6) * o.beta1,
        beta2: DMatrix::identity(6, 6) * o.beta2,
        beta3,
    };
    (gains, g3)
}

/// Execute a scenario.
pub fn run(scenario: &Scenario) -> Result<RunOutcome, HarnessError> {
    scenario.validate()?;
    let plant = PlantModel::from_scenario(scenario)?;

    // Observer setup plus the startup stability check on its error dynamics.
    let (obs_gains, g3) = observer_model(scenario);
    let (_, abscissa) =
        observer_error_matrix(&obs_gains, &g3).expect("observer blocks share dimension");
    if abscissa >= 0.0 {
        return Err(HarnessError::NotHurwitz(abscissa));
    }
    let mut observer = Observer::new(obs_gains);
    let mut cascade = Cascade::new(cascade_from_scenario(scenario), plant.guard.clone());

    let dt = scenario.run.dt;
    let tps = scenario.ticks_per_second();
    let total_ticks = scenario.total_ticks();
    let mut clock = SimClock::new(dt);
    let mut mocap_sched = RateSchedule::new(scenario.links.pose.rate_hz, tps);
    let mut control_sched = RateSchedule::new(scenario.control.rate_hz, tps);
    let mut pwm_sched = RateSchedule::new(scenario.links.pwm_rate_hz, tps);
    let control_dt = 1.0 / scenario.control.rate_hz as f64;

    let mut pose_link: Link<[u8; POSE_PACKET_LEN]> =
        Link::new(scenario.links.pose, scenario.run.seed ^ 0x706f7365);
    let mut command_link: Link<[u8; COMMAND_PACKET_LEN]> =
        Link::new(scenario.links.command, scenario.run.seed ^ 0x636d6421);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(scenario.run.seed ^ 0x6e6f6973);

    // Initial conditions: guard at the setpoint, robot hanging at its sag.
    let setpoint = Vector3::from_column_slice(&scenario.run.setpoint);
    let mut state = SimState {
        guard: GuardState {
            position: setpoint,
            velocity: Vector3::zeros(),
            attitude: Matrix3::identity(),
            omega: Vector3::zeros(),
        },
        aerobat: AerobatState::at_equilibrium(&plant.aerobat, &plant.elastic),
        aero: (0..plant.wings())
            .map(|_| AeroState::zeros(plant.strips))
            .collect(),
    };
    let total_mass = plant.guard.mass + plant.aerobat.total_mass;
    let mut thrusts: [f64; 6] = if scenario.run.trim_start {
        [total_mass * plant.guard.gravity / 6.0; 6]
    } else {
        [0.0; 6]
    };

    observer.estimate.x1 = DVector::from_vec(vec![
        setpoint.x, setpoint.y, setpoint.z, 0.0, 0.0, 0.0,
    ]);

    let mut meas = PoseMeasurement {
        position: setpoint,
        attitude: EulerAngles::default(),
    };
    let mut saturated = false;
    let mut gen_inertial = [0.0; 6];
    let mut gen_aero = [0.0; 6];

    let mut log = RunLog {
        setpoint: scenario.run.setpoint,
        sample_period: scenario.run.log_decimation as f64 * dt,
        complete: true,
        rows: Vec::with_capacity((total_ticks / scenario.run.log_decimation + 1) as usize),
    };
    let mut diverged = false;

    let log_row = |state: &SimState,
                   t: f64,
                   thrusts: &[f64; 6],
                   observer: &Observer,
                   saturated: bool,
                   gen_inertial: &[f64; 6],
                   gen_aero: &[f64; 6]| {
        let euler = rotation_to_euler(&state.guard.attitude);
        let take6 = |v: &DVector<f64>| -> [f64; 6] {
            [v[0], v[1], v[2], v[3], v[4], v[5]]
        };
        LogRow {
            t,
            position: [
                state.guard.position.x,
                state.guard.position.y,
                state.guard.position.z,
            ],
            attitude: [euler.roll, euler.pitch, euler.yaw],
            setpoint: scenario.run.setpoint,
            xhat1: take6(&observer.estimate.x1),
            xhat2: take6(&observer.estimate.x2),
            xhat3: take6(&observer.estimate.x3),
            thrusts: *thrusts,
            saturated,
            gen_inertial: *gen_inertial,
            gen_aero: *gen_aero,
        }
    };

    for tick in 0..total_ticks {
        let t = clock.time();

        if mocap_sched.due(tick) {
            let mut p = state.guard.position;
            if scenario.links.pose_noise_std > 0.0 {
                for i in 0..3 {
                    // Box-Muller pair; one draw per axis keeps it simple.
                    let u1: f64 = noise_rng.gen_range(f64::EPSILON..1.0);
                    let u2: f64 = noise_rng.gen();
                    let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                    p[i] += scenario.links.pose_noise_std * z;
                }
            }
            let q = rotation_to_quaternion(&state.guard.attitude);
            let packet = PosePacket {
                x: p.x as f32,
                y: p.y as f32,
                z: p.z as f32,
                qw: q[0] as f32,
                qx: q[1] as f32,
                qy: q[2] as f32,
                qz: q[3] as f32,
            };
            pose_link.send(encode_pose(&packet), t);
        }

        if control_sched.due(tick) {
            for bytes in pose_link.poll(t) {
                if let Ok(packet) = decode_pose(&bytes) {
                    let r = quaternion_to_rotation(&[
                        packet.qw as f64,
                        packet.qx as f64,
                        packet.qy as f64,
                        packet.qz as f64,
                    ]);
                    meas = PoseMeasurement {
                        position: Vector3::new(packet.x as f64, packet.y as f64, packet.z as f64),
                        attitude: rotation_to_euler(&r),
                    };
                }
            }

            // Observer on the measured pose and the currently applied input.
            let r_meas = crate::spatial::euler_to_rotation(&meas.attitude)
                .unwrap_or_else(|_| Matrix3::identity());
            let mut g2 = DMatrix::zeros(6, 6);
            let thrust_dir = r_meas * Vector3::z() / total_mass;
            for col in 0..6 {
                for row in 0..3 {
                    g2[(row, col)] = thrust_dir[row];
                }
            }
            let mix = mixing_matrix(&plant.guard);
            for col in 0..6 {
                for row in 0..3 {
                    // Moment rows of the wrench map through the inertia.
                    g2[(3 + row, col)] = mix[(1 + row, col)] / scenario.guard.inertia[row];
                }
            }
            let model = ModelTerms {
                g1: DVector::from_vec(vec![0.0, 0.0, -plant.guard.gravity, 0.0, 0.0, 0.0]),
                g2: g2.clone(),
                g3: g3.clone(),
            };
            let meas_x1 = DVector::from_vec(vec![
                meas.position.x,
                meas.position.y,
                meas.position.z,
                meas.attitude.roll,
                meas.attitude.pitch,
                meas.attitude.yaw,
            ]);
            let u_vec = DVector::from_column_slice(&thrusts);
            observer.step(&meas_x1, &u_vec, &model, control_dt);

            // Generalized contribution diagnostics through the pseudo-inverse
            // (the 6x6 input map is rank deficient: all thrusters share one
            // translational direction).
            if let Ok(pinv) = g2.pseudo_inverse(1e-9) {
                let gi = &pinv * &model.g1;
                let ga = &pinv * (&model.g3 * &observer.estimate.x3);
                for i in 0..6 {
                    gen_inertial[i] = gi[i];
                    gen_aero[i] = ga[i];
                }
            }

            let out = cascade.step(&meas, &setpoint, scenario.run.yaw_setpoint, control_dt);
            saturated = out.saturated;
            let packet = CommandPacket {
                roll: out.desired_attitude.roll as f32,
                pitch: out.desired_attitude.pitch as f32,
                yaw: out.desired_attitude.yaw as f32,
                thrusts: out.thrusts.map(|v| v as f32),
            };
            command_link.send(encode_command(&packet), t);
        }

        if pwm_sched.due(tick) {
            for bytes in command_link.poll(t) {
                if let Ok(packet) = decode_command(&bytes) {
                    for i in 0..6 {
                        thrusts[i] = pwm_quantize(packet.thrusts[i] as f64, plant.guard.f_max);
                    }
                }
            }
        }

        if tick % scenario.run.log_decimation == 0 {
            log.rows.push(log_row(
                &state,
                t,
                &thrusts,
                &observer,
                saturated,
                &gen_inertial,
                &gen_aero,
            ));
        }

        // Physics step.
        let flat = state.to_vector(plant.strips);
        let wings = plant.wings();
        let f = |t: f64, y: &DVector<f64>| {
            let s = SimState::from_vector(y, plant.strips, wings, 0.0);
            plant.derivative(t, &s, &thrusts).to_vector(plant.strips)
        };
        let next = match rk4_step(&f, t, &flat, dt) {
            Ok(v) => v,
            Err(_) => {
                diverged = true;
                break;
            }
        };
        state = SimState::from_vector(&next, plant.strips, wings, 0.0);
        state.guard.attitude = match reorthonormalize(&state.guard.attitude) {
            Ok(r) => r,
            Err(_) => {
                diverged = true;
                break;
            }
        };
        clock.advance();

        let bound = scenario.run.divergence_bound;
        let finite = state.guard.position.iter().all(|v| v.is_finite())
            && state.guard.velocity.iter().all(|v| v.is_finite())
            && state.aerobat.rel_position.iter().all(|v| v.is_finite());
        if !finite
            || state.guard.position.norm() > bound
            || state.guard.velocity.norm() > bound
            || state.aerobat.rel_position.norm() > bound
        {
            diverged = true;
            break;
        }
    }

    if diverged {
        log.complete = false;
    } else {
        log.rows.push(log_row(
            &state,
            clock.time(),
            &thrusts,
            &observer,
            saturated,
            &gen_inertial,
            &gen_aero,
        ));
    }

    Ok(RunOutcome { log, diverged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quaternion_round_trip() {
        let angles = EulerAngles::new(0.3, -0.5, 1.2);
        let r = crate::spatial::euler_to_rotation(&angles).unwrap();
        let q = rotation_to_quaternion(&r);
        let norm: f64 = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert_relative_eq!(norm, 1.0, epsilon = 1e-12);
        let back = quaternion_to_rotation(&q);
        assert_relative_eq!(r, back, epsilon = 1e-12);
    }

    #[test]
    fn quaternion_handles_large_rotations() {
        for angles in [
            EulerAngles::new(3.0, 0.2, -2.8),
            EulerAngles::new(-3.1, -1.2, 0.1),
            EulerAngles::new(0.0, 1.5, 3.1),
        ] {
            let r = crate::spatial::euler_to_rotation(&angles).unwrap();
            let back = quaternion_to_rotation(&rotation_to_quaternion(&r));
            assert_relative_eq!(r, back, epsilon = 1e-10);
        }
    }

    #[test]
    fn trim_scenario_holds_position() {
        // Gains at zero, aero off, gait off: the trim collective alone must
        // hold the hover within integrator tolerance.
        let mut s = Scenario::default();
        s.run.duration = 2.0;
        s.run.seed = 7;
        s.aero.enabled = false;
        s.gait.amplitude = [0.0, 0.0];
        s.control.position = Some(super::super::scenario::PositionGainsConfig {
            x: [0.0; 3],
            y: [0.0; 3],
            z: [0.0; 3],
        });
        s.control.attitude_roll_pitch = [0.0; 3];
        s.control.attitude_yaw = [0.0; 3];
        let outcome = run(&s).unwrap();
        assert!(!outcome.diverged);
        let last = outcome.log.rows.last().unwrap();
        let err = ((last.position[0] - 0.0).powi(2)
            + (last.position[1] - 0.0).powi(2)
            + (last.position[2] - 0.2).powi(2))
        .sqrt();
        assert!(err < 1e-4, "drift {err}");
    }

    #[test]
    fn run_produces_expected_row_count() {
        let mut s = Scenario::default();
        s.run.duration = 0.5;
        s.run.log_decimation = 50;
        s.aero.strips = 2;
        let outcome = run(&s).unwrap();
        assert!(!outcome.diverged);
        assert_eq!(outcome.log.rows.len(), 101); // 5000 ticks / 50 + 1
    }

    #[test]
    fn closed_loop_hover_stays_bounded() {
        let mut s = Scenario::default();
        s.run.duration = 3.0;
        s.aero.strips = 2;
        let outcome = run(&s).unwrap();
        assert!(!outcome.diverged);
        for row in &outcome.log.rows {
            let dz = row.position[2] - 0.2;
            assert!(dz.abs() < 0.15, "z excursion {dz} at t={}", row.t);
        }
    }
}
