//! Extended-state observer and the feedback-cancelling control law.
//!
//! The plant is modelled as
//!
//! ```text
//! x1dot = x2
//! x2dot = g1 + g2 u + g3 x3
//! x3dot = G(t)          (unknown aerodynamic load dynamics)
//! z     = x1
//! ```
//!
//! and the observer integrates
//!
//! ```text
//! x1hatdot = x2hat - beta1 (x1hat - x1)
//! x2hatdot = g1 + g2 u + g3 x3hat - beta2 (x1hat - x1)
//! x3hatdot = -beta3 (x1hat - x1)
//! ```
//!
//! so the estimation error obeys a linear system whose block matrix must be
//! Hurwitz for the configured gains and `g3` bound.

use super::ControlError;
use nalgebra::{DMatrix, DVector};

/// Estimated pose, velocity, and extended load state.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedState {
    pub x1: DVector<f64>,
    pub x2: DVector<f64>,
    pub x3: DVector<f64>,
}

impl ExtendedState {
    pub fn zeros(dim: usize) -> Self {
        Self {
            x1: DVector::zeros(dim),
            x2: DVector::zeros(dim),
            x3: DVector::zeros(dim),
        }
    }
}

/// Observer gain blocks (diagonal in the default configuration).
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverGains {
    pub beta1: DMatrix<f64>,
    pub beta2: DMatrix<f64>,
    pub beta3: DMatrix<f64>,
}

impl ObserverGains {
    /// Same scalar triple on every axis.
    pub fn diagonal(dim: usize, beta1: f64, beta2: f64, beta3: f64) -> Self {
        Self {
            beta1: DMatrix::identity(dim, dim) * beta1,
            beta2: DMatrix::identity(dim, dim) * beta2,
            beta3: DMatrix::identity(dim, dim) * beta3,
        }
    }

    pub fn dim(&self) -> usize {
        self.beta1.nrows()
    }
}

/// Model terms of the pose-acceleration channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelTerms {
    pub g1: DVector<f64>,
    pub g2: DMatrix<f64>,
    pub g3: DMatrix<f64>,
}

/// Extended-state observer stepped at the controller rate.
#[derive(Debug, Clone)]
pub struct Observer {
    pub gains: ObserverGains,
    pub estimate: ExtendedState,
}

impl Observer {
    pub fn new(gains: ObserverGains) -> Self {
        let dim = gains.dim();
        Self {
            gains,
            estimate: ExtendedState::zeros(dim),
        }
    }

    /// One forward-Euler step of the estimate equations.
    pub fn step(&mut self, meas_x1: &DVector<f64>, u: &DVector<f64>, model: &ModelTerms, dt: f64) {
        let innovation = &self.estimate.x1 - meas_x1;
        let x1_dot = &self.estimate.x2 - &self.gains.beta1 * &innovation;
        let x2_dot = &model.g1 + &model.g2 * u + &model.g3 * &self.estimate.x3
            - &self.gains.beta2 * &innovation;
        let x3_dot = -(&self.gains.beta3 * &innovation);
        self.estimate.x1 += dt * x1_dot;
        self.estimate.x2 += dt * x2_dot;
        self.estimate.x3 += dt * x3_dot;
    }
}

/// Assemble the error-dynamics block matrix
///
/// ```text
/// [ -beta1  I   0  ]
/// [ -beta2  0   g3 ]
/// [ -beta3  0   0  ]
/// ```
///
/// and return it with its spectral abscissa (largest real part over the
/// eigenvalues). Gains are valid when the abscissa is negative for every `g3`
/// allowed by the configured bound.
pub fn observer_error_matrix(
    gains: &ObserverGains,
    g3: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, f64), ControlError> {
    let n = gains.dim();
    if g3.nrows() != n || g3.ncols() != n {
        return Err(ControlError::DimensionMismatch(n, g3.nrows()));
    }
    let mut a = DMatrix::zeros(3 * n, 3 * n);
    a.view_mut((0, 0), (n, n)).copy_from(&(-&gains.beta1));
    a.view_mut((0, n), (n, n)).copy_from(&DMatrix::identity(n, n));
    a.view_mut((n, 0), (n, n)).copy_from(&(-&gains.beta2));
    a.view_mut((n, 2 * n), (n, n)).copy_from(g3);
    a.view_mut((2 * n, 0), (n, n)).copy_from(&(-&gains.beta3));
    let abscissa = spectral_abscissa(&a);
    Ok((a, abscissa))
}

/// Largest real part over the eigenvalues of a square matrix.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Feedback-cancelling law `u = g2^-1 (K x2 - g1 - g3 x3hat)`.
///
/// With a perfect load estimate the closed acceleration channel collapses to
/// `x2dot = K x2` exactly.
pub fn control_law(
    x2: &DVector<f64>,
    x3_hat: &DVector<f64>,
    model: &ModelTerms,
    k: &DMatrix<f64>,
) -> Result<DVector<f64>, ControlError> {
    let u0 = k * x2;
    let rhs = u0 - &model.g1 - &model.g3 * x3_hat;
    model
        .g2
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or(ControlError::SingularInput)
}

/// Variant with a position term, `u0 = K_v x2 + K_p (x1 - x1_ref)`, for
/// holding a setpoint rather than only damping velocity.
#[allow(clippy::too_many_arguments)]
pub fn control_law_with_position(
    x1: &DVector<f64>,
    x1_ref: &DVector<f64>,
    x2: &DVector<f64>,
    x3_hat: &DVector<f64>,
    model: &ModelTerms,
    k_v: &DMatrix<f64>,
    k_p: &DMatrix<f64>,
) -> Result<DVector<f64>, ControlError> {
    let u0 = k_v * x2 + k_p * (x1 - x1_ref);
    let rhs = u0 - &model.g1 - &model.g3 * x3_hat;
    model
        .g2
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or(ControlError::SingularInput)
}
