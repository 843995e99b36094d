//! End-to-end verification suite behind `guardsim verify` and the
//! `acceptance` integration tests.
//!
//! Each criterion is a standalone function returning a detail string on pass
//! or a diagnostic on fail, so the CLI and the test target share one
//! implementation. Tolerances are fixed here, next to the checks they gate.

use crate::aero::{
    duhamel_oracle, AeroModel, AeroState, BladeGeometry, MemoryForcing, WagnerCoefficients,
};
use crate::aerobat::{
    band_energy, coupled_energy, elastic_wrench, spring_energy, AerobatState, ElasticParams,
};
use crate::control::{
    control_law, observer_error_matrix, ModelTerms, Observer, ObserverGains,
};
use crate::guard::{angular_momentum, GuardParams, GuardState};
use crate::harness::{observer_model, rk4_step, run, PlantModel, Scenario, SimState};
use crate::metrics::{performance_score, rms_total};
use crate::spatial::{hat, orthonormality_error, reorthonormalize};
use crate::telemetry::{
    decode_command, decode_pose, encode_command, encode_pose, CommandPacket, Link, LinkModel,
    PosePacket,
};
use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Outcome of one criterion.
#[derive(Debug, Clone)]
pub struct CriterionOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = fn() -> Result<String, String>;

pub const CRITERIA: [(&str, Check); 10] = [
    ("rms-table-consistency", rms_table_consistency),
    ("score-and-ranking", score_and_ranking),
    ("aero-march-vs-convolution", aero_march_vs_convolution),
    ("observer-convergence", observer_convergence),
    ("feedback-cancellation", feedback_cancellation),
    ("energy-and-momentum-conservation", conservation),
    ("elastic-gradient-consistency", elastic_gradient),
    ("hover-trim", hover_trim),
    ("telemetry-pipeline", telemetry_pipeline),
    ("run-determinism", run_determinism),
];

/// Run every criterion, in order.
pub fn run_all() -> Vec<CriterionOutcome> {
    CRITERIA
        .iter()
        .map(|(name, check)| match check() {
            Ok(detail) => CriterionOutcome {
                name,
                passed: true,
                detail,
            },
            Err(detail) => CriterionOutcome {
                name,
                passed: false,
                detail,
            },
        })
        .collect()
}

/// Reference RMS rows from the five hardware tuning flights:
/// (per-axis x, y, z, published total).
pub const REFERENCE_RMS_ROWS: [(f64, f64, f64, f64); 5] = [
    (3.670, 2.460, 0.085, 4.419),
    (4.509, 3.157, 0.093, 5.505),
    (4.374, 3.085, 0.075, 5.354),
    (4.406, 2.835, 0.090, 5.240),
    (3.783, 7.334, 0.076, 8.252),
];

/// The Euclidean total recomputed from each reference row must match the
/// published total within 0.001.
pub fn rms_table_consistency() -> Result<String, String> {
    let mut worst = 0.0f64;
    for (i, &(x, y, z, total)) in REFERENCE_RMS_ROWS.iter().enumerate() {
        let got = rms_total(x, y, z);
        let err = (got - total).abs();
        worst = worst.max(err);
        if err > 0.001 {
            return Err(format!(
                "row {}: recomputed total {got:.4} vs published {total:.3} (|err| = {err:.4})",
                i + 1
            ));
        }
    }
    Ok(format!(
        "all 5 rows reproduce the published totals (worst |err| = {worst:.5})"
    ))
}

fn ranking_scenario(preset: &str) -> Scenario {
    let mut s = Scenario::preset(preset).expect("known preset");
    s.run.duration = 8.0;
    s.run.seed = 11;
    s.aero.strips = 2;
    s.links.pose_noise_std = 2.0e-4;
    s.disturbance.force_amplitude = [0.06, 0.06, 0.02];
    s.disturbance.force_frequency = [0.5, 0.8, 1.1];
    s.disturbance.force_phase = [0.0, 1.0, 2.0];
    s.disturbance.force_bias = [0.015, -0.015, 0.0];
    s.disturbance.start_time = 1.0;
    s
}

/// The combined score reproduces the published best-run value from its RMS
/// total and back-solved stability, and the five presets run on a shared
/// disturbance script rank the first configuration best and the fifth worst.
pub fn score_and_ranking() -> Result<String, String> {
    let score = performance_score(4.419, -0.090);
    if (score - (-4.509)).abs() > 0.001 {
        return Err(format!("score {score:.4} != -4.509 within 0.001"));
    }

    let mut scores = Vec::new();
    for preset in crate::control::PRESET_NAMES {
        let scenario = ranking_scenario(preset);
        let outcome = run(&scenario).map_err(|e| format!("{preset} failed to run: {e}"))?;
        if outcome.diverged {
            return Err(format!("{preset} diverged under the shared disturbance"));
        }
        let report = crate::metrics::analyze(&outcome.log)
            .map_err(|e| format!("{preset} log analysis failed: {e}"))?;
        scores.push((preset, report.score));
    }
    let s1 = scores[0].1;
    let s5 = scores[4].1;
    for &(name, s) in &scores[1..] {
        if s > s1 + 1e-12 {
            return Err(format!(
                "{name} scored {s:.4}, above test1's {s1:.4}; full set: {scores:?}"
            ));
        }
    }
    for &(name, s) in &scores[..4] {
        if s5 >= s {
            return Err(format!(
                "test5 ({s5:.4}) did not rank strictly worst against {name} ({s:.4}); full set: {scores:?}"
            ));
        }
    }
    Ok(format!(
        "score -4.509 reproduced; preset scores {:?} rank test1 best, test5 worst",
        scores
            .iter()
            .map(|(n, s)| format!("{n}: {s:.3}"))
            .collect::<Vec<_>>()
    ))
}

fn march_beta_deviation(n: usize) -> Result<f64, String> {
    let coeffs = WagnerCoefficients::default();
    let chord = 0.05;
    let geom = BladeGeometry::cosine_spaced(n, 0.15, chord).map_err(|e| e.to_string())?;
    let model =
        AeroModel::new(geom, coeffs, MemoryForcing::Standard).map_err(|e| e.to_string())?;
    let dt = 1e-4;
    let steps = 20_000; // 2 s
    let raw = DVector::from_element(n, 1.0);
    let mut state = AeroState::zeros(n);
    // Per-strip effective-input histories for the convolution reference.
    let mut histories: Vec<Vec<f64>> = vec![Vec::with_capacity(steps + 1); n];
    let mut march_betas: Vec<Vec<f64>> = vec![Vec::with_capacity(steps + 1); n];
    let record = |state: &AeroState,
                  histories: &mut Vec<Vec<f64>>,
                  march_betas: &mut Vec<Vec<f64>>| {
        let yprime = model.yprime(state, &raw);
        let betas = model.betas(state, &yprime);
        for i in 0..n {
            histories[i].push(yprime[i]);
            march_betas[i].push(betas[i]);
        }
    };
    record(&state, &mut histories, &mut march_betas);
    let f = |_: f64, y: &DVector<f64>| {
        model
            .derivative(&AeroState::from_vector(y, n), &raw, 0.0)
            .to_vector()
    };
    let mut flat = state.to_vector();
    for k in 0..steps {
        flat = rk4_step(&f, k as f64 * dt, &flat, dt).map_err(|e| e.to_string())?;
        state = AeroState::from_vector(&flat, n);
        record(&state, &mut histories, &mut march_betas);
    }

    // Compare at 10 ms checkpoints, normalized by the reference peak.
    let mut worst = 0.0f64;
    for i in 0..n {
        let mut peak = 0.0f64;
        let mut dev = 0.0f64;
        for cp in (0..=steps).step_by(100) {
            let oracle = duhamel_oracle(&histories[i][..=cp], dt, chord, &coeffs)
                .map_err(|e| e.to_string())?;
            peak = peak.max(oracle.abs());
            dev = dev.max((march_betas[i][cp] - oracle).abs());
        }
        if peak == 0.0 {
            return Err(format!("strip {i}: reference response identically zero"));
        }
        worst = worst.max(dev / peak);
    }
    Ok(worst)
}

/// The state-space march reproduces the direct convolution quadrature within
/// 1e-3 relative over a 2 s step-input run for 1, 4, and 8 strips.
pub fn aero_march_vs_convolution() -> Result<String, String> {
    let mut details = Vec::new();
    for n in [1usize, 4, 8] {
        let dev = march_beta_deviation(n)?;
        if dev >= 1e-3 {
            return Err(format!("n = {n}: relative deviation {dev:.2e} >= 1e-3"));
        }
        details.push(format!("n={n}: {dev:.2e}"));
    }
    Ok(format!("max relative deviation {}", details.join(", ")))
}

/// Scalar-instance eigenvalues land on -1, -2, -3; the 6-DoF observer error
/// decays below 1e-6 of its initial size within the predicted horizon; a
/// bounded constant load keeps the steady error inside the linear bound.
pub fn observer_convergence() -> Result<String, String> {
    // Eigenvalue placement on the scalar instance.
    let gains = ObserverGains::diagonal(1, 6.0, 11.0, 6.0);
    let (a_small, _) =
        observer_error_matrix(&gains, &DMatrix::identity(1, 1)).map_err(|e| e.to_string())?;
    let mut eigs: Vec<(f64, f64)> = a_small
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|l| (l.re, l.im))
        .collect();
    eigs.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (k, expect) in [-3.0, -2.0, -1.0].iter().enumerate() {
        if (eigs[k].0 - expect).abs() > 1e-9 || eigs[k].1.abs() > 1e-9 {
            return Err(format!(
                "scalar eigenvalues {eigs:?} missed (-1, -2, -3) at 1e-9"
            ));
        }
    }

    // Full 6-DoF error decay with no load dynamics.
    let scenario = Scenario::default();
    let (gains6, g3) = observer_model(&scenario);
    let (_, abscissa) = observer_error_matrix(&gains6, &g3).map_err(|e| e.to_string())?;
    if abscissa >= 0.0 {
        return Err(format!("6-DoF error matrix not Hurwitz ({abscissa:.3})"));
    }
    let horizon = 20.0 / abscissa.abs();
    let dt = 1.0 / 200.0;
    let mut observer = Observer::new(gains6);
    let model = ModelTerms {
        g1: DVector::zeros(6),
        g2: DMatrix::identity(6, 6),
        g3: g3.clone(),
    };
    let truth_x1 = DVector::zeros(6);
    let u = DVector::zeros(6);
    observer.estimate.x1 = DVector::from_element(6, 0.1);
    observer.estimate.x2 = DVector::from_element(6, -0.2);
    observer.estimate.x3 = DVector::from_element(6, 0.5);
    let e0 = (observer.estimate.x1.norm_squared()
        + observer.estimate.x2.norm_squared()
        + observer.estimate.x3.norm_squared())
    .sqrt();
    let steps = (horizon / dt).ceil() as usize;
    for _ in 0..steps {
        observer.step(&truth_x1, &u, &model, dt);
    }
    let e = (observer.estimate.x1.norm_squared()
        + observer.estimate.x2.norm_squared()
        + observer.estimate.x3.norm_squared())
    .sqrt();
    if e >= 1e-6 * e0 {
        return Err(format!(
            "6-DoF error {e:.3e} after {horizon:.1} s (started at {e0:.3e})"
        ));
    }

    // Constant bounded load: steady error within the linear-systems bound.
    let g_bar = 0.5;
    let b = DVector::from_vec(vec![0.0, 0.0, -1.0]);
    // Quadrature of || int_0^inf exp(At) B dt || via the matrix ODE.
    let f = |_: f64, y: &DVector<f64>| &a_small * y;
    let mut x = b.clone();
    let mut integral = DVector::zeros(3);
    let qdt = 1e-3;
    for k in 0..40_000 {
        // trapezoid accumulation of the state itself
        let x_next = rk4_step(&f, k as f64 * qdt, &x, qdt).map_err(|e| e.to_string())?;
        integral += 0.5 * qdt * (&x + &x_next);
        x = x_next;
    }
    let bound = g_bar * integral.norm();
    // Simulate the error ODE with the constant load to steady state.
    let fe = |_: f64, y: &DVector<f64>| &a_small * y + &b * g_bar;
    let mut e_vec = DVector::zeros(3);
    for k in 0..40_000 {
        e_vec = rk4_step(&fe, k as f64 * qdt, &e_vec, qdt).map_err(|e| e.to_string())?;
    }
    if e_vec.norm() > bound * (1.0 + 1e-6) + 1e-12 {
        return Err(format!(
            "steady error {:.6e} exceeds linear bound {:.6e}",
            e_vec.norm(),
            bound
        ));
    }
    Ok(format!(
        "eigenvalues placed to 1e-9; 6-DoF error {e:.1e} of initial within {horizon:.1} s; steady error {:.3e} <= bound {:.3e}",
        e_vec.norm(),
        bound
    ))
}

/// With the exact load state supplied, the cancelling law closes the
/// acceleration channel to `x2dot = K x2` within 1e-10 at 1000 random states.
pub fn feedback_cancellation() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let n = 6;
    let mut worst = 0.0f64;
    for trial in 0..1000 {
        let model = ModelTerms {
            g1: DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0)),
            g2: DMatrix::identity(n, n) * rng.gen_range(0.5..3.0)
                + DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.2..0.2)),
            g3: DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)),
        };
        let k = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-3.0..3.0));
        let x2 = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
        let x3 = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
        let u = control_law(&x2, &x3, &model, &k).map_err(|e| format!("trial {trial}: {e}"))?;
        let residual = (&model.g1 + &model.g2 * &u + &model.g3 * &x3 - &k * &x2).norm();
        worst = worst.max(residual);
        if residual >= 1e-10 {
            return Err(format!("trial {trial}: residual {residual:.3e} >= 1e-10"));
        }
    }
    Ok(format!("1000 random states, worst residual {worst:.3e}"))
}

/// Thrusters off, aero off: the coupled system conserves energy to 1e-6
/// relative per simulated second over 10 s; a torque-free tumbling guard
/// conserves angular momentum to the same tolerance.
pub fn conservation() -> Result<String, String> {
    let mut scenario = Scenario::default();
    scenario.aero.enabled = false;
    scenario.gait.amplitude = [0.0, 0.0];
    scenario.gait.mean = [0.3, 0.2];
    let plant = PlantModel::from_scenario(&scenario).map_err(|e| e.to_string())?;

    let mut state = SimState {
        guard: GuardState {
            position: Vector3::new(0.02, -0.01, 0.30),
            velocity: Vector3::new(0.05, 0.02, -0.03),
            attitude: Matrix3::identity(),
            omega: Vector3::new(0.3, -0.2, 0.4),
        },
        aerobat: AerobatState {
            rel_position: Vector3::new(0.01, 0.015, -0.02),
            rel_velocity: Vector3::new(-0.02, 0.0, 0.05),
            alpha: Vector2::new(0.1, -0.08),
            alpha_rate: Vector2::new(0.2, 0.1),
            rel_yaw: 0.0,
        },
        aero: Vec::new(),
    };
    let thrusts = [0.0; 6];
    let gait = plant.gait;
    let energy = |s: &SimState| {
        let (a, a_rate, _) = crate::aerobat::wing_gait(&gait, 0.0);
        coupled_energy(
            &s.guard,
            &plant.guard,
            &s.aerobat,
            &a,
            &a_rate,
            &plant.aerobat,
            &plant.elastic,
        )
    };
    let e0 = energy(&state);
    if e0.abs() < 1e-6 {
        return Err("degenerate initial energy".into());
    }
    let dt = 1e-4;
    let f = |t: f64, y: &DVector<f64>| {
        let s = SimState::from_vector(y, 0, 0, 0.0);
        plant.derivative(t, &s, &thrusts).to_vector(0)
    };
    let mut flat = state.to_vector(0);
    let mut worst_drift = 0.0f64;
    let mut max_ortho = 0.0f64;
    for second in 0..10 {
        for k in 0..10_000 {
            let t = (second * 10_000 + k) as f64 * dt;
            flat = rk4_step(&f, t, &flat, dt).map_err(|e| e.to_string())?;
            let mut s = SimState::from_vector(&flat, 0, 0, 0.0);
            s.guard.attitude =
                reorthonormalize(&s.guard.attitude).map_err(|e| e.to_string())?;
            max_ortho = max_ortho.max(orthonormality_error(&s.guard.attitude));
            flat = s.to_vector(0);
        }
        state = SimState::from_vector(&flat, 0, 0, 0.0);
        let drift = ((energy(&state) - e0) / e0).abs() / (second + 1) as f64;
        worst_drift = worst_drift.max(drift);
        if drift >= 1e-6 {
            return Err(format!(
                "energy drift {drift:.3e} per second after {} s",
                second + 1
            ));
        }
    }

    // Torque-free tumbling guard: world angular momentum stays put.
    let params = GuardParams::default();
    let mut guard = GuardState {
        position: Vector3::zeros(),
        velocity: Vector3::zeros(),
        attitude: Matrix3::identity(),
        omega: Vector3::new(2.0, -1.0, 1.5),
    };
    let h0 = angular_momentum(&guard, &params);
    let dt = 1e-4;
    let mut worst_h = 0.0f64;
    for second in 0..10 {
        for _ in 0..10_000 {
            // Rdot = R hat(w); J wdot = -w x J w.
            let k_r = |g: &GuardState| (g.attitude * hat(&g.omega), g.omega);
            let accel = |g: &GuardState| {
                -params.inertia.try_inverse().unwrap()
                    * (g.omega.cross(&(params.inertia * g.omega)))
            };
            // RK4 on (R, w) jointly.
            let (r1, _) = k_r(&guard);
            let w1 = accel(&guard);
            let mid1 = GuardState {
                attitude: guard.attitude + 0.5 * dt * r1,
                omega: guard.omega + 0.5 * dt * w1,
                ..guard.clone()
            };
            let (r2, _) = k_r(&mid1);
            let w2 = accel(&mid1);
            let mid2 = GuardState {
                attitude: guard.attitude + 0.5 * dt * r2,
                omega: guard.omega + 0.5 * dt * w2,
                ..guard.clone()
            };
            let (r3, _) = k_r(&mid2);
            let w3 = accel(&mid2);
            let end = GuardState {
                attitude: guard.attitude + dt * r3,
                omega: guard.omega + dt * w3,
                ..guard.clone()
            };
            let (r4, _) = k_r(&end);
            let w4 = accel(&end);
            guard.attitude += dt / 6.0 * (r1 + 2.0 * r2 + 2.0 * r3 + r4);
            guard.omega += dt / 6.0 * (w1 + 2.0 * w2 + 2.0 * w3 + w4);
            guard.attitude = reorthonormalize(&guard.attitude).map_err(|e| e.to_string())?;
        }
        let h = angular_momentum(&guard, &params);
        let drift = ((h - h0).norm() / h0.norm()) / (second + 1) as f64;
        worst_h = worst_h.max(drift);
        if drift >= 1e-6 {
            return Err(format!(
                "angular momentum drift {drift:.3e} per second after {} s",
                second + 1
            ));
        }
    }
    Ok(format!(
        "energy drift {worst_drift:.2e}/s, momentum drift {worst_h:.2e}/s, attitude orthonormality {max_ortho:.2e}"
    ))
}

/// The band wrench matches central-difference gradients of the suspension
/// potential within 1e-5 relative at 100 random states.
pub fn elastic_gradient() -> Result<String, String> {
    let elastic = ElasticParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let p_g = Vector3::from_fn(|_, _| rng.gen_range(-0.15..0.15));
        let x_a = Vector3::from_fn(|_, _| rng.gen_range(-0.15..0.15));
        let r_g = crate::spatial::euler_to_rotation(&crate::spatial::EulerAngles::new(
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
        ))
        .unwrap();
        let r_a = crate::spatial::euler_to_rotation(&crate::spatial::EulerAngles::new(
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
        ))
        .unwrap();
        let (f, m) = elastic_wrench(&p_g, &r_g, &x_a, &r_a, &elastic);

        // Translational part against the lumped spring energy (the aligned
        // band layout makes them identical).
        let scale = f.norm().max(m.norm()).max(1e-3);
        for axis in 0..3 {
            let mut dp = Vector3::zeros();
            dp[axis] = h;
            let grad_spring = (spring_energy(&(p_g + dp), &x_a, &elastic)
                - spring_energy(&(p_g - dp), &x_a, &elastic))
                / (2.0 * h);
            let grad_bands = (band_energy(&(p_g + dp), &r_g, &x_a, &r_a, &elastic)
                - band_energy(&(p_g - dp), &r_g, &x_a, &r_a, &elastic))
                / (2.0 * h);
            let err_s = (f[axis] + grad_spring).abs() / scale;
            let err_b = (f[axis] + grad_bands).abs() / scale;
            worst = worst.max(err_s).max(err_b);
            if err_s >= 1e-5 || err_b >= 1e-5 {
                return Err(format!(
                    "trial {trial}: force axis {axis} off by {:.2e} (spring) / {:.2e} (bands)",
                    err_s, err_b
                ));
            }
            // Rotational gradient against the band potential.
            let rot_p = reorthonormalize(&(Matrix3::identity() + hat(&dp))).unwrap();
            let rot_m = reorthonormalize(&(Matrix3::identity() - hat(&dp))).unwrap();
            let grad_rot = (band_energy(&p_g, &(rot_p * r_g), &x_a, &r_a, &elastic)
                - band_energy(&p_g, &(rot_m * r_g), &x_a, &r_a, &elastic))
                / (2.0 * h);
            let err_m = (m[axis] + grad_rot).abs() / scale;
            worst = worst.max(err_m);
            if err_m >= 1e-5 {
                return Err(format!(
                    "trial {trial}: moment axis {axis} off by {err_m:.2e}"
                ));
            }
        }
    }
    Ok(format!("100 random states, worst scaled error {worst:.2e}"))
}

/// A level system at its hanging equilibrium with the collective equal to the
/// total weight produces accelerations below 1e-9.
pub fn hover_trim() -> Result<String, String> {
    let mut scenario = Scenario::default();
    scenario.aero.enabled = false;
    scenario.gait.amplitude = [0.0, 0.0];
    let plant = PlantModel::from_scenario(&scenario).map_err(|e| e.to_string())?;
    let total_mass = plant.guard.mass + plant.aerobat.total_mass;
    let weight = total_mass * 9.8;
    let thrusts = [weight / 6.0; 6];
    let state = SimState {
        guard: GuardState {
            position: Vector3::new(0.0, 0.0, 0.2),
            velocity: Vector3::zeros(),
            attitude: Matrix3::identity(),
            omega: Vector3::zeros(),
        },
        aerobat: AerobatState::at_equilibrium(&plant.aerobat, &plant.elastic),
        aero: Vec::new(),
    };
    let rate = plant.derivative(0.0, &state, &thrusts);
    let guard_acc = rate.guard.velocity.norm();
    let robot_acc = rate.aerobat.rel_velocity.norm() + rate.aerobat.alpha_rate.norm();
    if guard_acc >= 1e-9 || robot_acc >= 1e-9 {
        return Err(format!(
            "residual acceleration: guard {guard_acc:.3e}, robot {robot_acc:.3e}"
        ));
    }
    Ok(format!(
        "collective {weight:.4} N holds: guard accel {guard_acc:.1e}, robot accel {robot_acc:.1e}"
    ))
}

/// Codec round-trips are bit exact over 10^4 random packets, the 2.8 ms link
/// beats the second-following control tick for every sample, and delivery
/// traces are seed-deterministic.
pub fn telemetry_pipeline() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..10_000 {
        if trial % 2 == 0 {
            let p = PosePacket {
                x: rng.gen_range(-10.0..10.0),
                y: rng.gen_range(-10.0..10.0),
                z: rng.gen_range(-10.0..10.0),
                qw: rng.gen_range(-1.0..1.0),
                qx: rng.gen_range(-1.0..1.0),
                qy: rng.gen_range(-1.0..1.0),
                qz: rng.gen_range(-1.0..1.0),
            };
            let back = decode_pose(&encode_pose(&p)).map_err(|e| e.to_string())?;
            let same = p.x.to_bits() == back.x.to_bits()
                && p.y.to_bits() == back.y.to_bits()
                && p.z.to_bits() == back.z.to_bits()
                && p.qw.to_bits() == back.qw.to_bits()
                && p.qx.to_bits() == back.qx.to_bits()
                && p.qy.to_bits() == back.qy.to_bits()
                && p.qz.to_bits() == back.qz.to_bits();
            if !same {
                return Err(format!("pose packet {trial} not bit-exact"));
            }
        } else {
            let c = CommandPacket {
                roll: rng.gen_range(-1.0..1.0),
                pitch: rng.gen_range(-1.0..1.0),
                yaw: rng.gen_range(-3.2..3.2),
                thrusts: std::array::from_fn(|_| rng.gen_range(0.0..0.6)),
            };
            let back = decode_command(&encode_command(&c)).map_err(|e| e.to_string())?;
            if back != c {
                return Err(format!("command packet {trial} not bit-exact"));
            }
        }
    }

    // 240 Hz samples through a 2.8 ms link against a 200 Hz consumer.
    let model = LinkModel {
        rate_hz: 240,
        latency: 2.8e-3,
        jitter: 0.0,
        drop_probability: 0.0,
    };
    let mut link: Link<u32> = Link::new(model, 1);
    let mut received: Vec<Option<usize>> = vec![None; 480];
    for tick in 0..100_000u64 {
        let t = tick as f64 * 1e-5; // 1 s of fine time
        if tick % (100_000 / 240) == 0 {
            let k = (tick / (100_000 / 240)) as u32;
            if (k as usize) < 480 {
                link.send(k, t);
            }
        }
        if tick % 500 == 0 {
            // 200 Hz consumer
            let ctrl_idx = (tick / 500) as usize;
            for k in link.poll(t) {
                received[k as usize].get_or_insert(ctrl_idx);
            }
        }
    }
    for (k, slot) in received.iter().enumerate() {
        let send_time = k as f64 * (100_000 / 240) as f64 * 1e-5;
        if send_time > 0.9 {
            continue; // tail samples may still be in flight at the horizon
        }
        let ctrl_idx = slot.ok_or(format!("sample {k} never delivered"))?;
        let deadline_idx = (send_time / 5e-3).floor() as usize + 2; // second-following tick
        if ctrl_idx > deadline_idx {
            return Err(format!(
                "sample {k} sent at {send_time:.4} s reached control tick {ctrl_idx}, after tick {deadline_idx}"
            ));
        }
    }

    // Seeded determinism of the full jitter + drop pipeline.
    let noisy = LinkModel {
        rate_hz: 240,
        latency: 2.8e-3,
        jitter: 8e-4,
        drop_probability: 0.15,
    };
    let trace = |seed: u64| {
        let mut link: Link<u32> = Link::new(noisy, seed);
        let mut out = Vec::new();
        for k in 0..2000u32 {
            let t = k as f64 / 240.0;
            link.send(k, t);
            out.extend(link.poll(t + 4e-3));
        }
        out.extend(link.poll(f64::INFINITY));
        out
    };
    if trace(7) != trace(7) {
        return Err("identical seeds produced different delivery traces".into());
    }
    Ok("10^4 packets bit-exact; 2.8 ms link beats the second-following control tick; traces seed-deterministic".into())
}

/// Identical (scenario, seed) pairs produce byte-identical logs.
pub fn run_determinism() -> Result<String, String> {
    let mut scenario = Scenario::default();
    scenario.run.duration = 1.5;
    scenario.run.seed = 31;
    scenario.aero.strips = 2;
    scenario.links.pose_noise_std = 2.0e-4;
    scenario.links.pose.jitter = 4.0e-4;
    scenario.disturbance.force_amplitude = [0.05, 0.05, 0.02];
    scenario.disturbance.force_frequency = [0.7, 0.9, 1.2];
    let a = run(&scenario).map_err(|e| e.to_string())?;
    let b = run(&scenario).map_err(|e| e.to_string())?;
    if a.diverged || b.diverged {
        return Err("determinism scenario diverged".into());
    }
    let bytes_a = a.log.to_csv_string();
    let bytes_b = b.log.to_csv_string();
    if bytes_a != bytes_b {
        return Err("two runs of the same (scenario, seed) differ".into());
    }
    // A different seed must actually change the noisy trace.
    let mut other = scenario.clone();
    other.run.seed = 32;
    let c = run(&other).map_err(|e| e.to_string())?;
    let detail = if c.log.to_csv_string() == bytes_a {
        "identical logs (warning: seed change had no effect)".to_string()
    } else {
        format!("byte-identical logs ({} bytes), seed change alters the trace", bytes_a.len())
    };
    Ok(detail)
}
