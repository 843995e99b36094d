//! Estimation and flight control: the extended-state observer for the
//! unobservable aerodynamic load, the feedback-cancelling law, and the
//! cascaded position/attitude PID stack with thrust allocation.

mod cascade;
mod observer;
mod pid;

pub use cascade::{
    allocate, mixing_matrix, position_preset, AttitudeGains, AxisGains, Cascade, CascadeConfig,
    CascadeOutput, PoseMeasurement, PRESET_NAMES,
};
pub use observer::{
    control_law, control_law_with_position, observer_error_matrix, spectral_abscissa,
    ExtendedState, ModelTerms, Observer, ObserverGains,
};
pub use pid::{pid_step, Pid, PidGains};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("input matrix g2 is singular and cannot be cancelled through")]
    SingularInput,
    #[error("observer gain blocks must share the pose dimension (got {0} and {1})")]
    DimensionMismatch(usize, usize),
    #[error("observer error dynamics are not Hurwitz (spectral abscissa {0:.3e})")]
    NotHurwitz(f64),
}
