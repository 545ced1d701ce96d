//! One module per experiment. Each turns a config and a run spec into an
//! [`Outcome`], the experiment-specific part of a [`RunReport`](crate::report::RunReport).

pub mod beam;
pub mod counterfactual;
pub mod hyperparam;
pub mod power_control;

use rayon::prelude::*;

use crate::config::RunSpec;
use crate::error::{HarnessError, Result};
use crate::report::TargetCheck;
use crate::table::CsvTable;

/// What an experiment hands back before provenance is attached.
pub struct Outcome {
    pub trace: CsvTable,
    pub trials: CsvTable,
    pub aggregate: serde_json::Value,
    pub checks: Vec<TargetCheck>,
    pub summary: Vec<String>,
}

/// Runs `f` for every trial index on the current thread pool; results come
/// back in trial order.
pub(crate) fn par_trials<T, E, F>(spec: &RunSpec, f: F) -> Result<Vec<T>>
where
    T: Send,
    E: Into<HarnessError> + Send,
    F: Fn(u64) -> std::result::Result<T, E> + Sync + Send,
{
    (0..spec.trials as u64)
        .into_par_iter()
        .map(|t| f(t).map_err(Into::into))
        .collect()
}
