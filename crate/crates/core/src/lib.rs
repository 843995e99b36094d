//! Simulation and control library for a flapping-wing robot suspended inside
//! an actively stabilized thruster guard.
//!
//! The crate is organized around the physical pipeline:
//!
//! * [`spatial`] — rotation and kinematics primitives shared by the dynamics.
//! * [`aero`] — unsteady blade-element aerodynamics: Fourier circulation,
//!   Wagner memory states, and the state-space march producing strip forces.
//! * [`guard`] — guard rigid-body dynamics and thruster mixing.
//! * [`aerobat`] — the suspended robot's reduced-order dynamics: elastic band
//!   coupling, wing gait, and the partitioned underactuated equations.
//! * [`control`] — extended-state observer, feedback-cancelling law, and the
//!   cascaded position/attitude PID stack with thrust allocation.
//! * [`telemetry`] — pose/command wire codecs and a latency/jitter link model.
//! * [`metrics`] — post-run error analysis (per-axis RMS, stability, score).
//! * [`harness`] — multirate simulation executive, RK4 integrator, scenario
//!   configuration, CSV logging.
//! * [`acceptance`] — the end-to-end verification suite behind `guardsim verify`.

pub mod acceptance;
pub mod aero;
pub mod aerobat;
pub mod control;
pub mod guard;
pub mod harness;
pub mod metrics;
pub mod spatial;
pub mod telemetry;
