//! Classical fourth-order Runge-Kutta step over a flat state vector.

use nalgebra::DVector;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Rk4Error {
    #[error("non-finite derivative at t = {t}; first bad component {index}")]
    NonFinite { t: f64, index: usize },
}

/// One RK4 step of `ydot = f(t, y)`. Rotation blocks inside `y` must be
/// reprojected by the caller afterwards.
pub fn rk4_step<F>(f: &F, t: f64, y: &DVector<f64>, dt: f64) -> Result<DVector<f64>, Rk4Error>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let check = |k: &DVector<f64>, stage_t: f64| -> Result<(), Rk4Error> {
        match k.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Rk4Error::NonFinite { t: stage_t, index }),
            None => Ok(()),
        }
    };
    let k1 = f(t, y);
    check(&k1, t)?;
    let k2 = f(t + 0.5 * dt, &(y + 0.5 * dt * &k1));
    check(&k2, t + 0.5 * dt)?;
    let k3 = f(t + 0.5 * dt, &(y + 0.5 * dt * &k2));
    check(&k3, t + 0.5 * dt)?;
    let k4 = f(t + dt, &(y + dt * &k3));
    check(&k4, t + dt)?;
    Ok(y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}
