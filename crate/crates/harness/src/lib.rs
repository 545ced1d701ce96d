//! Seeded Monte-Carlo experiments for conformal calibration in wireless
//! scenarios. [`execute`] validates a config before running its trials in
//! parallel into a [`RunReport`].

pub mod config;
mod error;
pub mod experiments;
pub mod report;
pub mod stats;
pub mod table;

pub use config::{validate_config, ExperimentConfig, ExperimentKind, RunSpec};
pub use error::{HarnessError, Result};
pub use report::{Provenance, RunReport, TargetCheck};

/// Validates, then runs every trial of `kind` on a pool of `spec.workers`
/// threads. Nothing is simulated if validation finds a problem.
pub fn execute(kind: ExperimentKind, cfg: &ExperimentConfig, spec: &RunSpec) -> Result<RunReport> {
    let violations = validate_config(kind, cfg, spec);
    if !violations.is_empty() {
        return Err(HarnessError::Config(violations));
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = spec.workers {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| HarnessError::Runtime(format!("cannot start worker pool: {e}")))?;
    let out = pool.install(|| match kind {
        ExperimentKind::PowerControl => {
            experiments::power_control::run(&cfg.power_control, &cfg.power_control_targets, spec)
        }
        ExperimentKind::Hyperparam => {
            experiments::hyperparam::run(&cfg.hyperparam, &cfg.hyperparam_targets, spec)
        }
        ExperimentKind::Beam => experiments::beam::run(&cfg.beam, &cfg.beam_targets, spec),
        ExperimentKind::Counterfactual => {
            experiments::counterfactual::run(&cfg.counterfactual, &cfg.counterfactual_targets, spec)
        }
    })?;
    Ok(RunReport {
        kind,
        provenance: Provenance {
            experiment: kind.to_string(),
            config_sha256: cfg.hash_for(kind),
            seed: spec.seed,
            trials: spec.trials,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
        trace: out.trace,
        trials: out.trials,
        aggregate: out.aggregate,
        checks: out.checks,
        summary: out.summary,
    })
}
