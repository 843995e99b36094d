//! Unsteady blade-element aerodynamics.
//!
//! Circulation along the span is parameterized by a truncated Fourier series
//! over `theta = arccos(s / l)`; each strip carries two exponential memory
//! states from a two-term indicial response kernel. The assembled system is
//! marched in time as
//!
//! ```text
//! A adot = -B a + C Z + Phi0 * y'
//! Zdot_i = D_i Z_i + E_i * y'_i
//! ```
//!
//! with `y'_i = y_1i + yGamma_i`, the raw strip kinematics plus the
//! circulation-induced downwash. The strip force coefficient is recovered as
//! `beta_i = y'_i Phi0 + C_i Z_i`, which along trajectories of the march is
//! identical to `Gamma_i / c_i + dGamma_i/dt`.
//!
//! [`duhamel_oracle`] evaluates the same response by direct convolution
//! quadrature and exists as the slow reference path for the fast march.

use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use thiserror::Error;

/// Default air density (sea level), kg/m^3.
pub const AIR_DENSITY: f64 = 1.225;

#[derive(Debug, Error)]
pub enum AeroError {
    #[error("blade geometry invalid: {0}")]
    BadGeometry(String),
    #[error("strip {index} sits at theta = 0 (tip); induced kinematics divide by sin(theta)")]
    SingularStation { index: usize },
    #[error("assembled Fourier matrix is ill conditioned (1/cond ~ {rcond:.3e})")]
    IllConditioned { rcond: f64 },
    #[error("kinematic history is empty")]
    EmptyHistory,
    #[error("wagner coefficients invalid: {0}")]
    BadCoefficients(String),
}

/// Two-exponential indicial response coefficients.
///
/// Defaults are the classical two-term flat-plate fit
/// (psi = 0.165/0.335, eps = 0.0455/0.3); all four are config-overridable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WagnerCoefficients {
    pub psi1: f64,
    pub psi2: f64,
    pub eps1: f64,
    pub eps2: f64,
}

impl Default for WagnerCoefficients {
    fn default() -> Self {
        Self {
            psi1: 0.165,
            psi2: 0.335,
            eps1: 0.0455,
            eps2: 0.3,
        }
    }
}

impl WagnerCoefficients {
    pub fn validate(&self) -> Result<(), AeroError> {
        if !(self.eps1 > 0.0 && self.eps2 > 0.0) {
            return Err(AeroError::BadCoefficients(
                "decay rates eps1, eps2 must be positive".into(),
            ));
        }
        if self.psi1 + self.psi2 <= 0.0 {
            return Err(AeroError::BadCoefficients(
                "psi1 + psi2 must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Kernel value `Phi(tau) = psi1 exp(-eps1 tau / c) + psi2 exp(-eps2 tau / c)`.
    pub fn phi(&self, tau: f64, chord: f64) -> f64 {
        self.psi1 * (-self.eps1 / chord * tau).exp() + self.psi2 * (-self.eps2 / chord * tau).exp()
    }

    /// Kernel value at zero scaled time: `psi1 + psi2`.
    pub fn phi0(&self) -> f64 {
        self.psi1 + self.psi2
    }

    /// Kernel slope `dPhi/dtau` at scaled time `tau`.
    pub fn phi_rate(&self, tau: f64, chord: f64) -> f64 {
        -self.psi1 * self.eps1 / chord * (-self.eps1 / chord * tau).exp()
            - self.psi2 * self.eps2 / chord * (-self.eps2 / chord * tau).exp()
    }
}

/// Spanwise strip layout of one wing.
///
/// Stations are measured from the centerline; `theta_i = arccos(s_i / l)` maps
/// the root (`s = 0`) to `theta = pi/2` and the tip (`s -> l`) to `theta -> 0`.
/// The tip itself is excluded so `sin(theta_i)` never vanishes.
#[derive(Debug, Clone, PartialEq)]
pub struct BladeGeometry {
    stations: Vec<f64>,
    chords: Vec<f64>,
    semispan: f64,
    thetas: Vec<f64>,
    widths: Vec<f64>,
}

impl BladeGeometry {
    pub fn new(stations: Vec<f64>, chords: Vec<f64>, semispan: f64) -> Result<Self, AeroError> {
        if stations.is_empty() {
            return Err(AeroError::BadGeometry("no strips".into()));
        }
        if stations.len() != chords.len() {
            return Err(AeroError::BadGeometry(format!(
                "{} stations but {} chords",
                stations.len(),
                chords.len()
            )));
        }
        if !(semispan > 0.0) {
            return Err(AeroError::BadGeometry("semispan must be positive".into()));
        }
        for (i, &s) in stations.iter().enumerate() {
            if !(0.0..semispan).contains(&s) {
                return Err(AeroError::BadGeometry(format!(
                    "station {i} = {s} outside [0, semispan)"
                )));
            }
            if i > 0 && s <= stations[i - 1] {
                return Err(AeroError::BadGeometry(
                    "stations must be strictly increasing".into(),
                ));
            }
        }
        if chords.iter().any(|&c| !(c > 0.0)) {
            return Err(AeroError::BadGeometry("chords must be positive".into()));
        }
        let thetas: Vec<f64> = stations.iter().map(|&s| (s / semispan).acos()).collect();
        for (i, &t) in thetas.iter().enumerate() {
            if t.sin() < 1e-12 {
                return Err(AeroError::SingularStation { index: i });
            }
        }
        let widths = strip_widths(&stations, semispan);
        Ok(Self {
            stations,
            chords,
            semispan,
            thetas,
            widths,
        })
    }

    /// Uniform-`theta` layout: `theta_i = i * pi / (2n)` for `i = 1..=n`,
    /// i.e. cosine-clustered stations from near the tip down to the root.
    /// One Fourier mode per strip keeps the assembled system square.
    pub fn cosine_spaced(n: usize, semispan: f64, chord: f64) -> Result<Self, AeroError> {
        if n == 0 {
            return Err(AeroError::BadGeometry("no strips".into()));
        }
        let mut stations: Vec<f64> = (1..=n)
            .map(|i| {
                let theta = i as f64 * std::f64::consts::FRAC_PI_2 / n as f64;
                semispan * theta.cos()
            })
            .collect();
        stations.reverse(); // ascending spanwise order
        if let Some(s) = stations.first_mut() {
            // cos(pi/2) in floating point is a subnormal-scale residue; pin the
            // root station to exactly zero.
            if s.abs() < 1e-12 {
                *s = 0.0;
            }
        }
        Self::new(stations, vec![chord; n], semispan)
    }

    pub fn strip_count(&self) -> usize {
        self.stations.len()
    }

    pub fn stations(&self) -> &[f64] {
        &self.stations
    }

    pub fn chords(&self) -> &[f64] {
        &self.chords
    }

    pub fn semispan(&self) -> f64 {
        self.semispan
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    /// Spanwise width each strip is responsible for (midpoint partition of `[0, l]`).
    pub fn widths(&self) -> &[f64] {
        &self.widths
    }
}

fn strip_widths(stations: &[f64], semispan: f64) -> Vec<f64> {
    let n = stations.len();
    let mut widths = Vec::with_capacity(n);
    for i in 0..n {
        let lo = if i == 0 {
            0.0
        } else {
            0.5 * (stations[i - 1] + stations[i])
        };
        let hi = if i == n - 1 {
            semispan
        } else {
            0.5 * (stations[i] + stations[i + 1])
        };
        widths.push(hi - lo);
    }
    widths
}

/// Unified aerodynamic state of one wing: Fourier coefficients plus the two
/// memory states per strip.
#[derive(Debug, Clone, PartialEq)]
pub struct AeroState {
    /// Fourier circulation coefficients, one per mode (= per strip).
    pub a: DVector<f64>,
    /// Memory-state pairs `(z1, z2)`, one per strip.
    pub z: Vec<Vector2<f64>>,
}

impl AeroState {
    pub fn zeros(n: usize) -> Self {
        Self {
            a: DVector::zeros(n),
            z: vec![Vector2::zeros(); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.a.len() + 2 * self.z.len()
    }

    /// Flatten as `[a_1..a_n, z1_1, z2_1, ..., z1_n, z2_n]`.
    pub fn to_vector(&self) -> DVector<f64> {
        let n = self.a.len();
        let mut out = DVector::zeros(self.dim());
        out.rows_mut(0, n).copy_from(&self.a);
        for (i, z) in self.z.iter().enumerate() {
            out[n + 2 * i] = z.x;
            out[n + 2 * i + 1] = z.y;
        }
        out
    }

    pub fn from_vector(v: &DVector<f64>, n: usize) -> Self {
        assert_eq!(v.len(), 3 * n, "aero state vector has wrong length");
        let a = DVector::from_iterator(n, v.iter().take(n).copied());
        let z = (0..n)
            .map(|i| Vector2::new(v[n + 2 * i], v[n + 2 * i + 1]))
            .collect();
        Self { a, z }
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().all(|x| x.is_finite()) && self.z.iter().all(|z| z.x.is_finite() && z.y.is_finite())
    }
}

/// Memory-state forcing term variant.
///
/// `Standard` uses the constant forcing and per-mode decay rate obtained by
/// differentiating the convolution memory states directly; it is bounded for
/// bounded inputs and is the default. `Legacy` keeps the time-growing forcing
/// `2 - exp(eps_k t / c_i)` with decay `-2 eps_k / c_i`; it diverges on long
/// horizons and exists only for comparison runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MemoryForcing {
    #[default]
    Standard,
    Legacy,
}

/// Circulation at station angle `theta`: `Gamma = sum_k a_k sin(k theta)`.
pub fn circulation(a: &[f64], theta: f64) -> f64 {
    a.iter()
        .enumerate()
        .map(|(k, &ak)| ak * ((k + 1) as f64 * theta).sin())
        .sum()
}

/// Matrix of `sin(k theta_i) / sin(theta_i)` entries; its first column is
/// identically one, so the first Fourier mode contributes `a_1` at every strip.
pub fn induced_matrix(geom: &BladeGeometry) -> DMatrix<f64> {
    let n = geom.strip_count();
    DMatrix::from_fn(n, n, |i, k| {
        let theta = geom.thetas()[i];
        ((k + 1) as f64 * theta).sin() / theta.sin()
    })
}

/// Circulation-induced kinematics `yGamma = M a`.
pub fn induced_kinematics(a: &DVector<f64>, geom: &BladeGeometry) -> DVector<f64> {
    induced_matrix(geom) * a
}

/// Strip force-coefficient response from the memory states:
/// `beta = y' Phi0 + (psi1 eps1 / c) z1 + (psi2 eps2 / c) z2`.
pub fn beta_from_states(
    yprime: f64,
    z: &Vector2<f64>,
    chord: f64,
    coeffs: &WagnerCoefficients,
) -> f64 {
    yprime * coeffs.phi0()
        + coeffs.psi1 * coeffs.eps1 / chord * z.x
        + coeffs.psi2 * coeffs.eps2 / chord * z.y
}

/// Rate-of-change of an [`AeroState`]; same layout as the state itself.
pub type AeroRate = AeroState;

/// Assembled state-space model for one wing.
///
/// Holds the Fourier sine matrix `A` (rows `[sin(theta_i) ... sin(n theta_i)]`),
/// its LU factorization, and the induced-kinematics matrix.
#[derive(Debug, Clone)]
pub struct AeroModel {
    geom: BladeGeometry,
    coeffs: WagnerCoefficients,
    forcing: MemoryForcing,
    fourier: DMatrix<f64>,
    fourier_lu: nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    induced: DMatrix<f64>,
}

impl AeroModel {
    pub fn new(
        geom: BladeGeometry,
        coeffs: WagnerCoefficients,
        forcing: MemoryForcing,
    ) -> Result<Self, AeroError> {
        coeffs.validate()?;
        let n = geom.strip_count();
        let fourier = DMatrix::from_fn(n, n, |i, k| ((k + 1) as f64 * geom.thetas()[i]).sin());
        // Reciprocal condition estimate from the extreme singular values.
        let svs = fourier.clone().singular_values();
        let (smax, smin) = (svs.max(), svs.min());
        let rcond = if smax > 0.0 { smin / smax } else { 0.0 };
        if rcond < 1e-12 {
            return Err(AeroError::IllConditioned { rcond });
        }
        let fourier_lu = fourier.clone().lu();
        let induced = induced_matrix(&geom);
        Ok(Self {
            geom,
            coeffs,
            forcing,
            fourier,
            fourier_lu,
            induced,
        })
    }

    pub fn geometry(&self) -> &BladeGeometry {
        &self.geom
    }

    pub fn coefficients(&self) -> &WagnerCoefficients {
        &self.coeffs
    }

    pub fn strip_count(&self) -> usize {
        self.geom.strip_count()
    }

    /// Effective kinematic input `y' = y_1 + M a`.
    pub fn yprime(&self, state: &AeroState, raw: &DVector<f64>) -> DVector<f64> {
        raw + &self.induced * &state.a
    }

    /// Per-strip circulation `Gamma_i = A_i a`.
    pub fn circulations(&self, state: &AeroState) -> DVector<f64> {
        &self.fourier * &state.a
    }

    /// Per-strip response `beta_i` for a given effective input.
    pub fn betas(&self, state: &AeroState, yprime: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.strip_count(), |i, _| {
            beta_from_states(yprime[i], &state.z[i], self.geom.chords()[i], &self.coeffs)
        })
    }

    /// Time derivative of the aerodynamic state given raw strip kinematics.
    ///
    /// `t` only enters under [`MemoryForcing::Legacy`].
    pub fn derivative(&self, state: &AeroState, raw: &DVector<f64>, t: f64) -> AeroRate {
        let yprime = self.yprime(state, raw);
        self.derivative_with_yprime(state, &yprime, t)
    }

    /// Time derivative with the effective input supplied directly.
    pub fn derivative_with_yprime(
        &self,
        state: &AeroState,
        yprime: &DVector<f64>,
        t: f64,
    ) -> AeroRate {
        let n = self.strip_count();
        let phi0 = self.coeffs.phi0();
        // Right-hand side of A adot = -B a + C Z + Phi0 y'.
        let mut rhs = DVector::zeros(n);
        let gammas = self.circulations(state);
        for i in 0..n {
            let c = self.geom.chords()[i];
            // (B a)_i = (A a)_i / c_i = Gamma_i / c_i.
            let cz = self.coeffs.psi1 * self.coeffs.eps1 / c * state.z[i].x
                + self.coeffs.psi2 * self.coeffs.eps2 / c * state.z[i].y;
            rhs[i] = -gammas[i] / c + cz + phi0 * yprime[i];
        }
        let a_dot = self
            .fourier_lu
            .solve(&rhs)
            .expect("fourier matrix conditioning checked at construction");

        let mut z_dot = Vec::with_capacity(n);
        for i in 0..n {
            let c = self.geom.chords()[i];
            let zi = &state.z[i];
            let rate = match self.forcing {
                MemoryForcing::Standard => Vector2::new(
                    -self.coeffs.eps1 / c * zi.x - yprime[i],
                    -self.coeffs.eps2 / c * zi.y - yprime[i],
                ),
                MemoryForcing::Legacy => Vector2::new(
                    -2.0 * self.coeffs.eps1 / c * zi.x
                        + (2.0 - (self.coeffs.eps1 * t / c).exp()) * yprime[i],
                    -2.0 * self.coeffs.eps2 / c * zi.y
                        + (2.0 - (self.coeffs.eps2 * t / c).exp()) * yprime[i],
                ),
            };
            z_dot.push(rate);
        }
        AeroRate {
            a: a_dot,
            z: z_dot,
        }
    }
}

/// Brute-force response by direct convolution quadrature (trapezoid rule):
/// `beta(t) = y'(t) Phi0 + int_0^t dPhi/dtau (t - tau) y'(tau) dtau`.
///
/// `samples` holds `y'` on a uniform grid of spacing `dt` starting at `t = 0`;
/// the response is evaluated at the final sample. This is the reference path
/// used to validate the state-space march, not a fast path.
pub fn duhamel_oracle(
    samples: &[f64],
    dt: f64,
    chord: f64,
    coeffs: &WagnerCoefficients,
) -> Result<f64, AeroError> {
    if samples.is_empty() {
        return Err(AeroError::EmptyHistory);
    }
    let m = samples.len() - 1;
    let t = m as f64 * dt;
    let mut integral = 0.0;
    for j in 0..=m {
        let tau = j as f64 * dt;
        let weight = if j == 0 || j == m { 0.5 } else { 1.0 };
        integral += weight * coeffs.phi_rate(t - tau, chord) * samples[j];
    }
    integral *= dt;
    Ok(samples[m] * coeffs.phi0() + integral)
}

/// Quarter-chord strip force from the circulation:
/// `F = rho * width * Gamma * (span_dir x u_rel)`, with `|F| = rho |U| Gamma w`
/// when the flow is perpendicular to the span. Zero relative flow (or flow
/// parallel to the span) yields zero force by convention.
pub fn strip_force(
    gamma: f64,
    u_rel: &Vector3<f64>,
    span_dir: &Vector3<f64>,
    width: f64,
    rho: f64,
) -> Vector3<f64> {
    rho * width * gamma * span_dir.cross(u_rel)
}
