//! Reduced-order dynamics of the suspended flapping robot.
//!
//! The robot hangs inside the guard on four elastic bands. Its underactuated
//! coordinates are `q_u = [p_A, alpha3, alpha4]`: the world-frame offset of
//! the body mass from the guard center plus two suspension angles. The two
//! wing joint angles `a(t)` are prescribed by the gait and enter only through
//! the inertial coupling block `D_ua`.
//!
//! The mass model is deliberately minimal: one body point mass plus one point
//! mass per wing, lumped at the proximal/distal junction plus half the distal
//! segment. All rotational inertia of the robot emerges from those lever
//! arms, which is exactly the coupling the gait excites.
//!
//! Frames: the suspension angles are measured against the world axes, so the
//! guard and the robot interact *only* through the band potential. The guard
//! receives the band wrench, the robot receives the equal and opposite
//! generalized forces, and the coupled system is conservative when thrusters,
//! aerodynamics, and gait drive are off.

use crate::spatial::{drot_x, drot_y, rot_x, rot_y, rot_z};
use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, Vector2, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AerobatError {
    #[error("inertia block D_u is not positive definite (1/cond ~ {rcond:.3e})")]
    IllConditioned { rcond: f64 },
}

/// Elastic suspension parameters.
///
/// Four bands run from anchors on the guard frame to attachment points on the
/// robot body, rest length zero. With the default aligned, zero-mean layouts
/// the net translational stiffness is exactly `stiffness`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElasticParams {
    /// Net linear stiffness of the four-band suspension, N/m.
    pub stiffness: f64,
    /// Total robot mass (body plus both wing masses), kg.
    pub aerobat_mass: f64,
    /// Band anchors in the guard body frame, m.
    pub anchors: [Vector3<f64>; 4],
    /// Band attachments in the robot body frame, m.
    pub attachments: [Vector3<f64>; 4],
}

impl Default for ElasticParams {
    fn default() -> Self {
        let anchors = [
            Vector3::new(0.12, 0.12, 0.0),
            Vector3::new(-0.12, 0.12, 0.0),
            Vector3::new(-0.12, -0.12, 0.0),
            Vector3::new(0.12, -0.12, 0.0),
        ];
        let attachments = anchors.map(|a| a * 0.25);
        Self {
            stiffness: 60.0,
            aerobat_mass: 0.040,
            anchors,
            attachments,
        }
    }
}

impl ElasticParams {
    /// Stiffness of one band.
    pub fn band_stiffness(&self) -> f64 {
        self.stiffness / 4.0
    }
}

/// Robot mass and wing-linkage geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AerobatParams {
    /// Total mass, kg.
    pub total_mass: f64,
    /// Each lumped wing mass, kg.
    pub wing_mass: f64,
    /// Lateral offset of the wing hinge from the body centerline, m.
    pub hinge_offset: f64,
    /// Proximal wing segment length, m.
    pub proximal_length: f64,
    /// Distal wing segment length, m.
    pub distal_length: f64,
}

impl Default for AerobatParams {
    fn default() -> Self {
        Self {
            total_mass: 0.040,
            wing_mass: 0.004,
            hinge_offset: 0.015,
            proximal_length: 0.05,
            distal_length: 0.07,
        }
    }
}

impl AerobatParams {
    pub fn body_mass(&self) -> f64 {
        self.total_mass - 2.0 * self.wing_mass
    }

    /// Spanwise semispan seen by the aerodynamic strips.
    pub fn semispan(&self) -> f64 {
        self.hinge_offset + self.proximal_length + self.distal_length
    }
}

/// State of the suspended robot relative to the guard.
#[derive(Debug, Clone, PartialEq)]
pub struct AerobatState {
    /// Offset of the body mass from the guard center, world frame, m.
    pub rel_position: Vector3<f64>,
    pub rel_velocity: Vector3<f64>,
    /// Suspension angles `[alpha3, alpha4]` (about world-aligned x then y), rad.
    pub alpha: Vector2<f64>,
    pub alpha_rate: Vector2<f64>,
    /// Relative heading; exposed in the state but not driven by the dynamics.
    pub rel_yaw: f64,
}

impl AerobatState {
    pub fn at_rest() -> Self {
        Self {
            rel_position: Vector3::zeros(),
            rel_velocity: Vector3::zeros(),
            alpha: Vector2::zeros(),
            alpha_rate: Vector2::zeros(),
            rel_yaw: 0.0,
        }
    }

    /// Hanging equilibrium under gravity for the given suspension.
    pub fn at_equilibrium(params: &AerobatParams, elastic: &ElasticParams) -> Self {
        let sag = params.total_mass * 9.8 / elastic.stiffness;
        let mut state = Self::at_rest();
        state.rel_position = Vector3::new(0.0, 0.0, -sag);
        state
    }

    /// Robot attitude `R = Rx(alpha3) Ry(alpha4) Rz(yaw)`.
    pub fn attitude(&self) -> Matrix3<f64> {
        rot_x(self.alpha.x) * rot_y(self.alpha.y) * rot_z(self.rel_yaw)
    }
}

/// Unit vector along the suspended direction for given suspension angles:
/// `R(alpha) * [0, 0, 1]`.
pub fn aerobat_kinematics(alpha: &Vector2<f64>) -> Vector3<f64> {
    rot_x(alpha.x) * rot_y(alpha.y) * Vector3::z()
}

/// Prescribed wing gait: sinusoidal proximal/distal joint trajectories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WingGait {
    pub frequency: f64,
    pub amplitude: [f64; 2],
    pub phase: [f64; 2],
    pub mean: [f64; 2],
}

impl Default for WingGait {
    fn default() -> Self {
        Self {
            frequency: 4.0,
            amplitude: [0.5, 0.3],
            phase: [0.0, -std::f64::consts::FRAC_PI_2],
            mean: [0.0, 0.0],
        }
    }
}

/// Joint angles and their first two time derivatives at time `t`.
pub fn wing_gait(gait: &WingGait, t: f64) -> (Vector2<f64>, Vector2<f64>, Vector2<f64>) {
    let omega = 2.0 * std::f64::consts::PI * gait.frequency;
    let mut a = Vector2::zeros();
    let mut rate = Vector2::zeros();
    let mut accel = Vector2::zeros();
    for j in 0..2 {
        let arg = omega * t + gait.phase[j];
        a[j] = gait.mean[j] + gait.amplitude[j] * arg.sin();
        rate[j] = gait.amplitude[j] * omega * arg.cos();
        accel[j] = -gait.amplitude[j] * omega * omega * arg.sin();
    }
    (a, rate, accel)
}

/// Suspension potential in the lumped form:
/// `V = 1/2 K (p_G - p_A)^T (p_G - p_A) + m_A g (p_Gz + (R_A p_A)_z)`.
///
/// `p_a` is the robot position compared against the guard position `p_g`.
pub fn elastic_potential(
    p_g: &Vector3<f64>,
    p_a: &Vector3<f64>,
    r_a: &Matrix3<f64>,
    elastic: &ElasticParams,
) -> f64 {
    spring_energy(p_g, p_a, elastic)
        + elastic.aerobat_mass * 9.8 * (p_g.z + (r_a * p_a).z)
}

/// Quadratic band part of [`elastic_potential`]: `1/2 K |p_G - p_A|^2`.
pub fn spring_energy(p_g: &Vector3<f64>, p_a: &Vector3<f64>, elastic: &ElasticParams) -> f64 {
    0.5 * elastic.stiffness * (p_g - p_a).norm_squared()
}

/// Full four-band potential with anchor/attachment geometry:
/// `1/2 k sum_i |  (p_G + R_G r_i) - (x_A + R_A s_i) |^2`.
pub fn band_energy(
    p_g: &Vector3<f64>,
    r_g: &Matrix3<f64>,
    x_a: &Vector3<f64>,
    r_a: &Matrix3<f64>,
    elastic: &ElasticParams,
) -> f64 {
    let k = elastic.band_stiffness();
    let mut v = 0.0;
    for i in 0..4 {
        let d = (p_g + r_g * elastic.anchors[i]) - (x_a + r_a * elastic.attachments[i]);
        v += 0.5 * k * d.norm_squared();
    }
    v
}

/// Band wrench on the guard, world frame: the spring force
/// `f_e = -K (p_G - x_A)` plus the moment of the four attachment forces about
/// the guard center of mass.
pub fn elastic_wrench(
    p_g: &Vector3<f64>,
    r_g: &Matrix3<f64>,
    x_a: &Vector3<f64>,
    r_a: &Matrix3<f64>,
    elastic: &ElasticParams,
) -> (Vector3<f64>, Vector3<f64>) {
    let k = elastic.band_stiffness();
    let mut force = Vector3::zeros();
    let mut moment = Vector3::zeros();
    for i in 0..4 {
        let arm = r_g * elastic.anchors[i];
        let d = (p_g + arm) - (x_a + r_a * elastic.attachments[i]);
        let band_force = -k * d;
        force += band_force;
        moment += arm.cross(&band_force);
    }
    (force, moment)
}

/// Guard motion inputs the robot dynamics depend on.
#[derive(Debug, Clone, PartialEq)]
pub struct GuardMotion {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: Matrix3<f64>,
    /// Translational acceleration of the guard, world frame.
    pub acceleration: Vector3<f64>,
}

impl GuardMotion {
    pub fn stationary() -> Self {
        Self {
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            attitude: Matrix3::identity(),
            acceleration: Vector3::zeros(),
        }
    }
}

/// Inertia blocks and the generalized-force block of the partitioned
/// underactuated equations, evaluated at one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedDynamics {
    pub d_u: SMatrix<f64, 5, 5>,
    pub d_ua: SMatrix<f64, 5, 2>,
    /// Gravity, elastic, velocity-product, and guard-reaction generalized
    /// forces on `q_u` (everything except gait inertia and aerodynamics).
    pub h_u: SVector<f64, 5>,
}

/// Wing-mass offset from the body mass, robot body frame.
///
/// The lumped mass sits at the hinge, out the proximal segment at flap angle
/// `a1`, then half the distal segment at `a1 + a2`. `side` is +1 (right) or
/// -1 (left).
fn wing_mass_body(params: &AerobatParams, a: &Vector2<f64>, side: f64) -> Vector3<f64> {
    let l1 = params.proximal_length;
    let lm = 0.5 * params.distal_length;
    let (s1, c1) = a.x.sin_cos();
    let (s12, c12) = (a.x + a.y).sin_cos();
    Vector3::new(
        0.0,
        side * (params.hinge_offset + l1 * c1 + lm * c12),
        l1 * s1 + lm * s12,
    )
}

fn wing_mass_body_da(params: &AerobatParams, a: &Vector2<f64>, side: f64) -> [Vector3<f64>; 2] {
    let l1 = params.proximal_length;
    let lm = 0.5 * params.distal_length;
    let (s1, c1) = a.x.sin_cos();
    let (s12, c12) = (a.x + a.y).sin_cos();
    [
        Vector3::new(0.0, side * (-l1 * s1 - lm * s12), l1 * c1 + lm * c12),
        Vector3::new(0.0, side * (-lm * s12), lm * c12),
    ]
}

fn wing_mass_body_dda(
    params: &AerobatParams,
    a: &Vector2<f64>,
    side: f64,
) -> [[Vector3<f64>; 2]; 2] {
    let l1 = params.proximal_length;
    let lm = 0.5 * params.distal_length;
    let (s1, c1) = a.x.sin_cos();
    let (s12, c12) = (a.x + a.y).sin_cos();
    let d11 = Vector3::new(0.0, side * (-l1 * c1 - lm * c12), -l1 * s1 - lm * s12);
    let d12 = Vector3::new(0.0, side * (-lm * c12), -lm * s12);
    [[d11, d12], [d12, d12]]
}

/// Per-wing kinematic bundle: world offset of the lumped mass from the body
/// mass, its partials with respect to `[alpha3, alpha4, a1, a2]`, and the
/// velocity-product acceleration.
struct WingKinematics {
    /// 3x2 partials with respect to the suspension angles.
    g_alpha: SMatrix<f64, 3, 2>,
    /// 3x2 partials with respect to the gait joints.
    g_gait: SMatrix<f64, 3, 2>,
    /// World velocity of the mass relative to the body mass.
    rel_velocity: Vector3<f64>,
    /// Velocity-product (Coriolis/centripetal) part of the world acceleration.
    gamma: Vector3<f64>,
    /// World offset from the body mass.
    offset: Vector3<f64>,
}

fn wing_kinematics(
    params: &AerobatParams,
    state: &AerobatState,
    a: &Vector2<f64>,
    a_rate: &Vector2<f64>,
    side: f64,
) -> WingKinematics {
    let rx = rot_x(state.alpha.x);
    let ry = rot_y(state.alpha.y);
    let rz = rot_z(state.rel_yaw);
    let dx = drot_x(state.alpha.x);
    let dy = drot_y(state.alpha.y);
    // Second derivatives of the elementary rotations: minus the rotation on
    // the rotating 2x2 block.
    let ddx = {
        let (s, c) = state.alpha.x.sin_cos();
        Matrix3::new(0.0, 0.0, 0.0, 0.0, -c, s, 0.0, -s, -c)
    };
    let ddy = {
        let (s, c) = state.alpha.y.sin_cos();
        Matrix3::new(-c, 0.0, -s, 0.0, 0.0, 0.0, s, 0.0, -c)
    };

    let rho = rz * wing_mass_body(params, a, side);
    let da = wing_mass_body_da(params, a, side);
    let dda = wing_mass_body_dda(params, a, side);
    let rho_da = [rz * da[0], rz * da[1]];
    let rho_rate = rho_da[0] * a_rate.x + rho_da[1] * a_rate.y;
    let rho_accel_vel = rz
        * (dda[0][0] * (a_rate.x * a_rate.x)
            + dda[0][1] * (2.0 * a_rate.x * a_rate.y)
            + dda[1][1] * (a_rate.y * a_rate.y));

    let r = rx * ry;
    let r_da3 = dx * ry;
    let r_da4 = rx * dy;
    let r_rate = r_da3 * state.alpha_rate.x + r_da4 * state.alpha_rate.y;
    let r_accel_vel = ddx * ry * (state.alpha_rate.x * state.alpha_rate.x)
        + dx * dy * (2.0 * state.alpha_rate.x * state.alpha_rate.y)
        + rx * ddy * (state.alpha_rate.y * state.alpha_rate.y);

    let mut g_alpha = SMatrix::<f64, 3, 2>::zeros();
    g_alpha.set_column(0, &(r_da3 * rho));
    g_alpha.set_column(1, &(r_da4 * rho));
    let mut g_gait = SMatrix::<f64, 3, 2>::zeros();
    g_gait.set_column(0, &(r * rho_da[0]));
    g_gait.set_column(1, &(r * rho_da[1]));

    let rel_velocity = r_rate * rho + r * rho_rate;
    let gamma = r_accel_vel * rho + 2.0 * (r_rate * rho_rate) + r * rho_accel_vel;

    WingKinematics {
        g_alpha,
        g_gait,
        rel_velocity,
        gamma,
        offset: r * rho,
    }
}

/// Assemble the partitioned blocks at one configuration.
///
/// `gait` carries the joint angles and rates; the joint accelerations enter
/// later through `D_ua` in [`aerobat_accel`].
pub fn partitioned_dynamics(
    state: &AerobatState,
    gait_angles: &Vector2<f64>,
    gait_rates: &Vector2<f64>,
    guard: &GuardMotion,
    params: &AerobatParams,
    elastic: &ElasticParams,
) -> PartitionedDynamics {
    let g = 9.8;
    let m_w = params.wing_mass;
    let m_t = params.total_mass;

    let wings = [
        wing_kinematics(params, state, gait_angles, gait_rates, 1.0),
        wing_kinematics(params, state, gait_angles, gait_rates, -1.0),
    ];

    let mut d_u = SMatrix::<f64, 5, 5>::zeros();
    d_u.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(Matrix3::identity() * m_t));
    let mut coupling = SMatrix::<f64, 3, 2>::zeros();
    let mut alpha_block = SMatrix::<f64, 2, 2>::zeros();
    let mut d_ua_top = SMatrix::<f64, 3, 2>::zeros();
    let mut d_ua_bottom = SMatrix::<f64, 2, 2>::zeros();
    for w in &wings {
        coupling += m_w * w.g_alpha;
        alpha_block += m_w * w.g_alpha.transpose() * w.g_alpha;
        d_ua_top += m_w * w.g_gait;
        d_ua_bottom += m_w * w.g_alpha.transpose() * w.g_gait;
    }
    d_u.fixed_view_mut::<3, 2>(0, 3).copy_from(&coupling);
    d_u.fixed_view_mut::<2, 3>(3, 0)
        .copy_from(&coupling.transpose());
    d_u.fixed_view_mut::<2, 2>(3, 3).copy_from(&alpha_block);

    let mut d_ua = SMatrix::<f64, 5, 2>::zeros();
    d_ua.fixed_view_mut::<3, 2>(0, 0).copy_from(&d_ua_top);
    d_ua.fixed_view_mut::<2, 2>(3, 0).copy_from(&d_ua_bottom);

    // Generalized forces at frozen accelerations.
    let x_a = guard.position + state.rel_position;
    let r_a = state.attitude();
    let k = elastic.band_stiffness();
    let mut f_el = Vector3::zeros();
    let mut q_el_alpha = Vector2::zeros();
    let rx = rot_x(state.alpha.x);
    let ry = rot_y(state.alpha.y);
    let rz = rot_z(state.rel_yaw);
    let dr_alpha = [drot_x(state.alpha.x) * ry * rz, rx * drot_y(state.alpha.y) * rz];
    for i in 0..4 {
        let d = (guard.position + guard.attitude * elastic.anchors[i])
            - (x_a + r_a * elastic.attachments[i]);
        f_el += k * d; // band force on the robot
        for j in 0..2 {
            q_el_alpha[j] += k * d.dot(&(dr_alpha[j] * elastic.attachments[i]));
        }
    }

    let mut h_u = SVector::<f64, 5>::zeros();
    let mut h_top = f_el + Vector3::new(0.0, 0.0, -m_t * g) - m_t * guard.acceleration;
    let mut h_bottom = q_el_alpha;
    for w in &wings {
        h_top -= m_w * w.gamma;
        h_bottom -= m_w * w.g_alpha.transpose() * (w.gamma + guard.acceleration);
        h_bottom -= m_w * g * w.g_alpha.transpose() * Vector3::z();
    }
    h_u.fixed_rows_mut::<3>(0).copy_from(&h_top);
    h_u.fixed_rows_mut::<2>(3).copy_from(&h_bottom);

    PartitionedDynamics { d_u, d_ua, h_u }
}

/// Solve the partitioned equations for the underactuated accelerations:
///
/// ```text
/// [pddot_A; alphaddot] = -D_u^-1 (D_ua addot - H_u + J^T y)
/// ```
///
/// `jacobian` maps `q_u` rates to stacked strip positions and `y` stacks the
/// per-strip aerodynamic loads in the conjugate (flow-reaction) sign
/// convention.
pub fn aerobat_accel(
    dynamics: &PartitionedDynamics,
    jacobian: &DMatrix<f64>,
    y: &DVector<f64>,
    gait_accel: &Vector2<f64>,
) -> Result<(Vector3<f64>, Vector2<f64>), AerobatError> {
    let mut rhs = -(dynamics.d_ua * gait_accel - dynamics.h_u);
    if jacobian.nrows() > 0 {
        let jt_y = jacobian.transpose() * y;
        for i in 0..5 {
            rhs[i] -= jt_y[i];
        }
    }
    let chol = dynamics.d_u.cholesky().ok_or_else(|| {
        let svs = dynamics.d_u.singular_values();
        AerobatError::IllConditioned {
            rcond: svs.min() / svs.max(),
        }
    })?;
    let sol = chol.solve(&rhs);
    Ok((
        Vector3::new(sol[0], sol[1], sol[2]),
        Vector2::new(sol[3], sol[4]),
    ))
}

/// Strip attachment on the two-segment wing chain, body frame.
///
/// `station` is the spanwise distance from the centerline; the strip rides the
/// center bar, the proximal segment, or the distal segment depending on where
/// it falls.
pub fn strip_body_position(
    params: &AerobatParams,
    a: &Vector2<f64>,
    station: f64,
    side: f64,
) -> Vector3<f64> {
    let w0 = params.hinge_offset;
    let l1 = params.proximal_length;
    if station <= w0 {
        Vector3::new(0.0, side * station, 0.0)
    } else if station <= w0 + l1 {
        let u = station - w0;
        let (s1, c1) = a.x.sin_cos();
        Vector3::new(0.0, side * (w0 + u * c1), u * s1)
    } else {
        let u = (station - w0 - l1).min(params.distal_length);
        let (s1, c1) = a.x.sin_cos();
        let (s12, c12) = (a.x + a.y).sin_cos();
        Vector3::new(0.0, side * (w0 + l1 * c1 + u * c12), l1 * s1 + u * s12)
    }
}

/// Partials of [`strip_body_position`] with respect to the gait joints.
pub fn strip_body_position_da(
    params: &AerobatParams,
    a: &Vector2<f64>,
    station: f64,
    side: f64,
) -> [Vector3<f64>; 2] {
    let w0 = params.hinge_offset;
    let l1 = params.proximal_length;
    if station <= w0 {
        [Vector3::zeros(), Vector3::zeros()]
    } else if station <= w0 + l1 {
        let u = station - w0;
        let (s1, c1) = a.x.sin_cos();
        [Vector3::new(0.0, -side * u * s1, u * c1), Vector3::zeros()]
    } else {
        let u = (station - w0 - l1).min(params.distal_length);
        let (s1, c1) = a.x.sin_cos();
        let (s12, c12) = (a.x + a.y).sin_cos();
        [
            Vector3::new(0.0, side * (-l1 * s1 - u * s12), l1 * c1 + u * c12),
            Vector3::new(0.0, -side * u * s12, u * c12),
        ]
    }
}

/// Local flap angle of the segment carrying the strip.
pub fn strip_flap_angle(params: &AerobatParams, a: &Vector2<f64>, station: f64) -> f64 {
    let w0 = params.hinge_offset;
    if station <= w0 {
        0.0
    } else if station <= w0 + params.proximal_length {
        a.x
    } else {
        a.x + a.y
    }
}

/// Spanwise unit tangent of the bound vortex at the strip, body frame.
/// Oriented continuously from the left tip toward the right tip.
pub fn strip_span_direction(
    params: &AerobatParams,
    a: &Vector2<f64>,
    station: f64,
    side: f64,
) -> Vector3<f64> {
    let phi = strip_flap_angle(params, a, station);
    Vector3::new(0.0, phi.cos(), side * phi.sin())
}

/// Chord-normal unit vector at the strip, body frame (points toward the
/// suction side at rest).
pub fn strip_normal(
    params: &AerobatParams,
    a: &Vector2<f64>,
    station: f64,
    side: f64,
) -> Vector3<f64> {
    let phi = strip_flap_angle(params, a, station);
    Vector3::new(0.0, -side * phi.sin(), phi.cos())
}

/// World position of one strip.
pub fn strip_world_position(
    state: &AerobatState,
    guard_position: &Vector3<f64>,
    params: &AerobatParams,
    a: &Vector2<f64>,
    station: f64,
    side: f64,
) -> Vector3<f64> {
    guard_position
        + state.rel_position
        + state.attitude() * strip_body_position(params, a, station, side)
}

/// World velocity of one strip.
pub fn strip_world_velocity(
    state: &AerobatState,
    guard_velocity: &Vector3<f64>,
    params: &AerobatParams,
    a: &Vector2<f64>,
    a_rate: &Vector2<f64>,
    station: f64,
    side: f64,
) -> Vector3<f64> {
    let rx = rot_x(state.alpha.x);
    let ry = rot_y(state.alpha.y);
    let rz = rot_z(state.rel_yaw);
    let r = rx * ry * rz;
    let r_rate = drot_x(state.alpha.x) * ry * rz * state.alpha_rate.x
        + rx * drot_y(state.alpha.y) * rz * state.alpha_rate.y;
    let rho = strip_body_position(params, a, station, side);
    let da = strip_body_position_da(params, a, station, side);
    let rho_rate = da[0] * a_rate.x + da[1] * a_rate.y;
    guard_velocity + state.rel_velocity + r_rate * rho + r * rho_rate
}

/// Jacobian of the stacked strip world positions with respect to
/// `q_u = [p_A, alpha3, alpha4]`, by central differences over the coordinates.
///
/// `stations` lists the spanwise stations of one wing; rows come out in
/// station-major order, right wing first then left, three rows per strip.
pub fn strip_jacobian(
    state: &AerobatState,
    guard_position: &Vector3<f64>,
    params: &AerobatParams,
    a: &Vector2<f64>,
    stations: &[f64],
) -> DMatrix<f64> {
    let m = stations.len();
    let mut jac = DMatrix::zeros(6 * m, 5);
    let h = 1e-6;
    let positions = |s: &AerobatState| -> Vec<Vector3<f64>> {
        let mut out = Vec::with_capacity(2 * m);
        for &side in &[1.0, -1.0] {
            for &station in stations {
                out.push(strip_world_position(
                    s,
                    guard_position,
                    params,
                    a,
                    station,
                    side,
                ));
            }
        }
        out
    };
    for col in 0..5 {
        let mut plus = state.clone();
        let mut minus = state.clone();
        match col {
            0..=2 => {
                plus.rel_position[col] += h;
                minus.rel_position[col] -= h;
            }
            3 => {
                plus.alpha.x += h;
                minus.alpha.x -= h;
            }
            _ => {
                plus.alpha.y += h;
                minus.alpha.y -= h;
            }
        }
        let xp = positions(&plus);
        let xm = positions(&minus);
        for (i, (p, q)) in xp.iter().zip(xm.iter()).enumerate() {
            let d = (p - q) / (2.0 * h);
            jac[(3 * i, col)] = d.x;
            jac[(3 * i + 1, col)] = d.y;
            jac[(3 * i + 2, col)] = d.z;
        }
    }
    jac
}

/// Total mechanical energy of the coupled guard + robot system (kinetic plus
/// gravity plus band potential), for conservation audits.
pub fn coupled_energy(
    guard_state: &crate::guard::GuardState,
    guard_params: &crate::guard::GuardParams,
    state: &AerobatState,
    gait_angles: &Vector2<f64>,
    gait_rates: &Vector2<f64>,
    params: &AerobatParams,
    elastic: &ElasticParams,
) -> f64 {
    let g = 9.8;
    let t_guard = crate::guard::kinetic_energy(guard_state, guard_params);
    let x_b_dot = guard_state.velocity + state.rel_velocity;
    let mut t_robot = 0.5 * params.body_mass() * x_b_dot.norm_squared();
    let mut v_robot = params.body_mass() * g * (guard_state.position + state.rel_position).z;
    for &side in &[1.0, -1.0] {
        let w = wing_kinematics(params, state, gait_angles, gait_rates, side);
        let v_w = x_b_dot + w.rel_velocity;
        t_robot += 0.5 * params.wing_mass * v_w.norm_squared();
        v_robot += params.wing_mass
            * g
            * (guard_state.position + state.rel_position + w.offset).z;
    }
    let v_guard = guard_params.mass * g * guard_state.position.z;
    let v_bands = band_energy(
        &guard_state.position,
        &guard_state.attitude,
        &(guard_state.position + state.rel_position),
        &state.attitude(),
        elastic,
    );
    t_guard + t_robot + v_guard + v_robot + v_bands
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gait_zero_amplitude_is_constant() {
        let gait = WingGait {
            amplitude: [0.0, 0.0],
            mean: [0.3, -0.1],
            ..WingGait::default()
        };
        for &t in &[0.0, 0.17, 1.23] {
            let (a, rate, accel) = wing_gait(&gait, t);
            assert_eq!(a, Vector2::new(0.3, -0.1));
            assert_eq!(rate, Vector2::zeros());
            assert_eq!(accel, Vector2::zeros());
        }
    }

    #[test]
    fn gait_sin_phase_starts_at_zero_crossing() {
        let gait = WingGait {
            frequency: 4.0,
            amplitude: [0.5, 0.2],
            phase: [0.0, 0.0],
            mean: [0.0, 0.0],
        };
        let (a, rate, _) = wing_gait(&gait, 0.0);
        assert_eq!(a, Vector2::zeros());
        let omega = 2.0 * std::f64::consts::PI * 4.0;
        assert_relative_eq!(rate.x, 0.5 * omega, epsilon = 1e-12);
        assert_relative_eq!(rate.y, 0.2 * omega, epsilon = 1e-12);
    }

    #[test]
    fn gait_periodic_return() {
        let gait = WingGait::default();
        let (a0, r0, acc0) = wing_gait(&gait, 0.3);
        let (a1, r1, acc1) = wing_gait(&gait, 0.3 + 1.0 / gait.frequency);
        assert_relative_eq!(a0, a1, epsilon = 1e-12);
        assert_relative_eq!(r0, r1, epsilon = 1e-10);
        assert_relative_eq!(acc0, acc1, epsilon = 1e-9);
    }

    #[test]
    fn gait_rates_match_finite_differences() {
        let gait = WingGait::default();
        let h = 1e-6;
        for &t in &[0.0, 0.111, 0.4] {
            let (ap, _, _) = wing_gait(&gait, t + h);
            let (am, _, _) = wing_gait(&gait, t - h);
            let (_, rate, accel) = wing_gait(&gait, t);
            let fd_rate = (ap - am) / (2.0 * h);
            assert_relative_eq!(rate, fd_rate, epsilon = 1e-5);
            let (_, rp, _) = wing_gait(&gait, t + h);
            let (_, rm, _) = wing_gait(&gait, t - h);
            let fd_accel = (rp - rm) / (2.0 * h);
            assert_relative_eq!(accel, fd_accel, epsilon = 1e-3);
        }
    }

    #[test]
    fn potential_vanishes_at_coincident_level_rest() {
        let e = ElasticParams::default();
        let v = elastic_potential(
            &Vector3::zeros(),
            &Vector3::zeros(),
            &Matrix3::identity(),
            &e,
        );
        assert_eq!(v, 0.0);
    }

    #[test]
    fn potential_spring_term_hand_value() {
        let mut e = ElasticParams::default();
        e.stiffness = 100.0;
        let v = spring_energy(&Vector3::new(0.1, 0.0, 0.0), &Vector3::zeros(), &e);
        assert_relative_eq!(v, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn potential_linear_in_guard_height() {
        let e = ElasticParams::default();
        let p_a = Vector3::new(0.01, -0.02, 0.03);
        let r = Matrix3::identity();
        let h = 0.37;
        let v0 = elastic_potential(&Vector3::zeros(), &p_a, &r, &e);
        let v1 = elastic_potential(&Vector3::new(0.0, 0.0, h), &p_a, &r, &e);
        assert_relative_eq!(v1 - v0, e.aerobat_mass * 9.8 * h, epsilon = 1e-12);
    }

    #[test]
    fn wrench_zero_displacement() {
        let e = ElasticParams::default();
        let (f, m) = elastic_wrench(
            &Vector3::zeros(),
            &Matrix3::identity(),
            &Vector3::zeros(),
            &Matrix3::identity(),
            &e,
        );
        assert!(f.norm() < 1e-15);
        assert!(m.norm() < 1e-15);
    }

    #[test]
    fn wrench_vertical_offset() {
        // Robot 0.1 m below the guard pulls the guard down with K * 0.1.
        let mut e = ElasticParams::default();
        e.stiffness = 100.0;
        let (f, m) = elastic_wrench(
            &Vector3::zeros(),
            &Matrix3::identity(),
            &Vector3::new(0.0, 0.0, -0.1),
            &Matrix3::identity(),
            &e,
        );
        assert_relative_eq!(f, Vector3::new(0.0, 0.0, -10.0), epsilon = 1e-12);
        assert!(m.norm() < 1e-12, "symmetric attachment gives zero moment");
    }

    #[test]
    fn wrench_matches_spring_gradient() {
        // f_e == -K (p_G - x_A) for the aligned default layout.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let e = ElasticParams::default();
        for _ in 0..50 {
            let p_g = Vector3::from_fn(|_, _| rng.gen_range(-0.2..0.2));
            let x_a = Vector3::from_fn(|_, _| rng.gen_range(-0.2..0.2));
            let (f, _) = elastic_wrench(&p_g, &Matrix3::identity(), &x_a, &Matrix3::identity(), &e);
            let expect = -e.stiffness * (p_g - x_a);
            assert_relative_eq!(f, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn wrench_is_band_energy_gradient() {
        // Translational: f_e = -dV/dp_G; rotational: m_e = -dV/dtheta_G,
        // both by central differences on the band potential.
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let e = ElasticParams::default();
        let h = 1e-6;
        for _ in 0..100 {
            let p_g = Vector3::from_fn(|_, _| rng.gen_range(-0.1..0.1));
            let x_a = Vector3::from_fn(|_, _| rng.gen_range(-0.1..0.1));
            let r_g = crate::spatial::euler_to_rotation(&crate::spatial::EulerAngles::new(
                rng.gen_range(-0.4..0.4),
                rng.gen_range(-0.4..0.4),
                rng.gen_range(-0.4..0.4),
            ))
            .unwrap();
            let r_a = crate::spatial::euler_to_rotation(&crate::spatial::EulerAngles::new(
                rng.gen_range(-0.4..0.4),
                rng.gen_range(-0.4..0.4),
                rng.gen_range(-0.4..0.4),
            ))
            .unwrap();
            let (f, m) = elastic_wrench(&p_g, &r_g, &x_a, &r_a, &e);
            for axis in 0..3 {
                let mut dp = Vector3::zeros();
                dp[axis] = h;
                let vp = band_energy(&(p_g + dp), &r_g, &x_a, &r_a, &e);
                let vm = band_energy(&(p_g - dp), &r_g, &x_a, &r_a, &e);
                let grad = (vp - vm) / (2.0 * h);
                assert_relative_eq!(f[axis], -grad, epsilon = 1e-6, max_relative = 1e-5);

                // Rotate the guard by a small angle about `axis`.
                let rot = crate::spatial::reorthonormalize(
                    &(Matrix3::identity() + crate::spatial::hat(&dp)),
                )
                .unwrap();
                let vp = band_energy(&p_g, &(rot * r_g), &x_a, &r_a, &e);
                let rot_m = crate::spatial::reorthonormalize(
                    &(Matrix3::identity() - crate::spatial::hat(&dp)),
                )
                .unwrap();
                let vm = band_energy(&p_g, &(rot_m * r_g), &x_a, &r_a, &e);
                let grad = (vp - vm) / (2.0 * h);
                assert_relative_eq!(m[axis], -grad, epsilon = 1e-6, max_relative = 1e-5);
            }
        }
    }

    #[test]
    fn kinematics_rest_points_up() {
        assert_relative_eq!(
            aerobat_kinematics(&Vector2::zeros()),
            Vector3::z(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn kinematics_quarter_turn() {
        let dir = aerobat_kinematics(&Vector2::new(std::f64::consts::FRAC_PI_2, 0.0));
        assert_relative_eq!(dir, Vector3::new(0.0, -1.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn kinematics_matches_rotation_product() {
        let alpha = Vector2::new(0.1, 0.2);
        let expect = rot_x(0.1) * rot_y(0.2) * Vector3::z();
        assert_relative_eq!(aerobat_kinematics(&alpha), expect, epsilon = 1e-15);
    }

    #[test]
    fn equilibrium_state_has_zero_acceleration() {
        let params = AerobatParams::default();
        let elastic = ElasticParams::default();
        let state = AerobatState::at_equilibrium(&params, &elastic);
        let dyn_blocks = partitioned_dynamics(
            &state,
            &Vector2::zeros(),
            &Vector2::zeros(),
            &GuardMotion::stationary(),
            &params,
            &elastic,
        );
        let (p_acc, a_acc) = aerobat_accel(
            &dyn_blocks,
            &DMatrix::zeros(0, 5),
            &DVector::zeros(0),
            &Vector2::zeros(),
        )
        .unwrap();
        assert!(p_acc.norm() < 1e-12, "translational residual {}", p_acc.norm());
        assert!(a_acc.norm() < 1e-12, "angular residual {}", a_acc.norm());
    }

    #[test]
    fn accel_affine_in_aero_load() {
        let params = AerobatParams::default();
        let elastic = ElasticParams::default();
        let mut state = AerobatState::at_rest();
        state.alpha = Vector2::new(0.1, -0.05);
        let stations = [0.05, 0.1];
        let a = Vector2::new(0.2, 0.1);
        let dyn_blocks = partitioned_dynamics(
            &state,
            &a,
            &Vector2::zeros(),
            &GuardMotion::stationary(),
            &params,
            &elastic,
        );
        let jac = strip_jacobian(&state, &Vector3::zeros(), &params, &a, &stations);
        let y: DVector<f64> = DVector::from_fn(12, |i, _| 0.01 * (i as f64 + 1.0));
        let zero = DVector::zeros(12);
        let (p0, a0) = aerobat_accel(&dyn_blocks, &jac, &zero, &Vector2::zeros()).unwrap();
        let (p1, a1) = aerobat_accel(&dyn_blocks, &jac, &y, &Vector2::zeros()).unwrap();
        let (p2, a2) = aerobat_accel(&dyn_blocks, &jac, &(2.0 * &y), &Vector2::zeros()).unwrap();
        // Doubling y doubles the aero contribution.
        assert_relative_eq!(p2 - p0, 2.0 * (p1 - p0), epsilon = 1e-10);
        assert_relative_eq!(a2 - a0, 2.0 * (a1 - a0), epsilon = 1e-10);
    }

    #[test]
    fn d_u_positive_definite_over_gait_cycle() {
        let params = AerobatParams::default();
        let elastic = ElasticParams::default();
        let gait = WingGait::default();
        let mut state = AerobatState::at_rest();
        state.alpha = Vector2::new(0.05, 0.02);
        for k in 0..50 {
            let t = k as f64 / 50.0 / gait.frequency;
            let (a, rate, _) = wing_gait(&gait, t);
            let blocks = partitioned_dynamics(
                &state,
                &a,
                &rate,
                &GuardMotion::stationary(),
                &params,
                &elastic,
            );
            assert!(
                blocks.d_u.cholesky().is_some(),
                "D_u lost positive definiteness at t = {t}"
            );
            assert_relative_eq!(blocks.d_u, blocks.d_u.transpose(), epsilon = 1e-12);
        }
    }

    #[test]
    fn strip_jacobian_matches_analytic_columns() {
        // Translational columns are the identity; angle columns match the
        // analytic rotation derivatives.
        let params = AerobatParams::default();
        let mut state = AerobatState::at_rest();
        state.alpha = Vector2::new(0.3, -0.2);
        let a = Vector2::new(0.4, 0.15);
        let stations = [0.04, 0.09];
        let jac = strip_jacobian(&state, &Vector3::zeros(), &params, &a, &stations);
        let dr3 = drot_x(state.alpha.x) * rot_y(state.alpha.y) * rot_z(0.0);
        let dr4 = rot_x(state.alpha.x) * drot_y(state.alpha.y) * rot_z(0.0);
        let mut row = 0;
        for &side in &[1.0, -1.0] {
            for &station in &stations {
                let rho = strip_body_position(&params, &a, station, side);
                for axis in 0..3 {
                    for col in 0..3 {
                        let expect = if axis == col { 1.0 } else { 0.0 };
                        assert_relative_eq!(jac[(row + axis, col)], expect, epsilon = 1e-8);
                    }
                    assert_relative_eq!(jac[(row + axis, 3)], (dr3 * rho)[axis], epsilon = 1e-7);
                    assert_relative_eq!(jac[(row + axis, 4)], (dr4 * rho)[axis], epsilon = 1e-7);
                }
                row += 3;
            }
        }
    }

    #[test]
    fn strip_chain_is_continuous() {
        let params = AerobatParams::default();
        let a = Vector2::new(0.5, -0.3);
        let eps = 1e-9;
        for &edge in &[
            params.hinge_offset,
            params.hinge_offset + params.proximal_length,
        ] {
            let before = strip_body_position(&params, &a, edge - eps, 1.0);
            let after = strip_body_position(&params, &a, edge + eps, 1.0);
            assert!((before - after).norm() < 1e-7);
        }
    }

    #[test]
    fn strip_frame_is_orthonormal() {
        let params = AerobatParams::default();
        let a = Vector2::new(0.7, 0.2);
        for &side in &[1.0, -1.0] {
            for &station in &[0.01, 0.05, 0.12] {
                let t = strip_span_direction(&params, &a, station, side);
                let n = strip_normal(&params, &a, station, side);
                assert_relative_eq!(t.norm(), 1.0, epsilon = 1e-12);
                assert_relative_eq!(n.norm(), 1.0, epsilon = 1e-12);
                assert_relative_eq!(t.dot(&n), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn strip_velocity_matches_position_differences() {
        let params = AerobatParams::default();
        let gait = WingGait::default();
        let mut state = AerobatState::at_rest();
        state.alpha = Vector2::new(0.1, 0.05);
        state.alpha_rate = Vector2::new(0.8, -0.4);
        state.rel_velocity = Vector3::new(0.02, -0.01, 0.04);
        let t0 = 0.123;
        let h = 1e-7;
        let station = 0.11;
        let guard_v = Vector3::new(0.1, 0.0, -0.05);
        let pos_at = |dt: f64| {
            let (a, _, _) = wing_gait(&gait, t0 + dt);
            let mut s = state.clone();
            s.rel_position += state.rel_velocity * dt;
            s.alpha += state.alpha_rate * dt;
            strip_world_position(&s, &(guard_v * dt), &params, &a, station, -1.0)
        };
        let fd = (pos_at(h) - pos_at(-h)) / (2.0 * h);
        let (a, a_rate, _) = wing_gait(&gait, t0);
        let v = strip_world_velocity(&state, &guard_v, &params, &a, &a_rate, station, -1.0);
        assert_relative_eq!(v, fd, epsilon = 1e-5);
    }
}
