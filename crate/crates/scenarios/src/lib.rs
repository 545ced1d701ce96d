//! Desk-scale wireless simulators that expose their KPIs as normalized
//! losses for the calibration routines in `conformal-core`.

pub mod backlog;
pub mod beam;
pub mod channel;
mod error;
pub mod hyperparam;
pub mod power_control;
pub mod rng;
pub mod scheduler;

pub use error::{Result, ScenarioError};
