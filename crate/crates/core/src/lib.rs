//! Conformal calibration toolkit.
//!
//! * [`conformal`]: split conformal set prediction and coverage checks.
//! * [`risk`]: hyperparameter certification (batch p-values and adaptive e-processes).
//! * [`online`]: deployment-time threshold tracking with long-run risk control.
//! * [`counterfactual`]: propensity-weighted intervals for KPIs of apps that did not run.
//!
//! Everything numeric is generic over [`Scalar`]; the aliases below fix the
//! common `f64` and `f32` instantiations.

pub mod conformal;
pub mod counterfactual;
mod error;
pub mod online;
pub mod risk;
mod scalar;

pub use error::{CalError, Result};
pub use scalar::Scalar;

pub type CalibrationSet64 = conformal::CalibrationSet<f64>;
pub type CoverageTarget64 = conformal::CoverageTarget<f64>;
pub type Threshold64 = conformal::Threshold<f64>;
pub type ScalarPredictionSet64 = conformal::PredictionSet<f64, f64>;
pub type RiskRequirement64 = risk::RiskRequirement<f64>;
pub type CandidateGrid64 = risk::CandidateGrid<f64>;
pub type EProcess64 = risk::EProcess<f64>;
pub type TestOutcome64 = risk::TestOutcome<f64>;
pub type OnlineThreshold64 = online::OnlineThreshold<f64>;
pub type LoggedEpisode64 = counterfactual::LoggedEpisode<f64>;
pub type WeightedCalibSet64 = counterfactual::WeightedCalibSet<f64>;

pub type CalibrationSet32 = conformal::CalibrationSet<f32>;
pub type Threshold32 = conformal::Threshold<f32>;
pub type RiskRequirement32 = risk::RiskRequirement<f32>;
pub type EProcess32 = risk::EProcess<f32>;
pub type OnlineThreshold32 = online::OnlineThreshold<f32>;
