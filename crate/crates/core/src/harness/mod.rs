//! Simulation executive: integer-tick multirate scheduling, RK4 integration,
//! scenario configuration, the run loop, and CSV logging.

mod clock;
mod log;
mod rk4;
pub mod scenario;
mod sim;

pub use clock::{RateSchedule, SimClock};
pub use log::{LogError, LogRow, RunLog, LOG_HEADER};
pub use rk4::{rk4_step, Rk4Error};
pub use scenario::{Scenario, ScenarioError};
pub use sim::{
    observer_model, quaternion_to_rotation, rotation_to_quaternion, run, HarnessError,
    PlantModel, RunOutcome, SimState,
};
