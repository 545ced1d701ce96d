//! Experiment configuration files.
//!
//! A config is a TOML document with one section per experiment. Missing
//! sections and keys fall back to the built-in defaults, so an empty file is
//! a valid config for every experiment.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wireless_scenarios::backlog::CounterfactualRunConfig;
use wireless_scenarios::beam::BeamRunConfig;
use wireless_scenarios::hyperparam::HyperparamConfig;
use wireless_scenarios::power_control::PowerControlConfig;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    PowerControl,
    Hyperparam,
    Beam,
    Counterfactual,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::PowerControl => "power_control",
            Self::Hyperparam => "hyperparam",
            Self::Beam => "beam",
            Self::Counterfactual => "counterfactual",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerTargets {
    /// Required `mean power (multi-sample) / mean power (unimodal)`.
    pub min_power_ratio: f64,
    /// Allowed gap between the two scores' realized coverage.
    pub max_coverage_gap: f64,
    /// Mean interference may exceed alpha by this many standard errors.
    pub interference_std_errs: f64,
}

impl Default for PowerTargets {
    fn default() -> Self {
        Self {
            min_power_ratio: 1.1,
            max_coverage_gap: 0.01,
            interference_std_errs: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperparamTargets {
    /// Fraction of trials in which aLTT's pick is no worse than LTT's at
    /// every target of the sweep.
    pub min_win_fraction: f64,
    /// Require a target where LTT certifies nothing in most trials while
    /// aLTT certifies something.
    pub require_ltt_gap: bool,
}

impl Default for HyperparamTargets {
    fn default() -> Self {
        Self {
            min_win_fraction: 0.8,
            require_ltt_gap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamTargets {
    /// Allowed distance of each method's average risk from alpha.
    pub risk_tolerance: f64,
    /// Require the localized mean set size to be strictly smaller.
    pub strictly_smaller_local_sets: bool,
}

impl Default for BeamTargets {
    fn default() -> Self {
        Self {
            risk_tolerance: 0.01,
            strictly_smaller_local_sets: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterfactualTargets {
    /// Weighted coverage must reach `1 - beta - coverage_tolerance`.
    pub coverage_tolerance: f64,
    /// Naive coverage at or below this level demonstrates the selection bias.
    pub max_naive_coverage: f64,
}

impl Default for CounterfactualTargets {
    fn default() -> Self {
        Self {
            coverage_tolerance: 0.015,
            max_naive_coverage: 0.88,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// When present, must match the subcommand.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentKind>,
    pub power_control: PowerControlConfig,
    pub power_control_targets: PowerTargets,
    pub hyperparam: HyperparamConfig,
    pub hyperparam_targets: HyperparamTargets,
    pub beam: BeamRunConfig,
    pub beam_targets: BeamTargets,
    pub counterfactual: CounterfactualRunConfig,
    pub counterfactual_targets: CounterfactualTargets,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Config(vec![e.to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            HarnessError::Config(vec![format!("cannot read {}: {e}", path.display())])
        })?;
        Self::from_toml(&text)
    }

    /// SHA-256 over the resolved settings of one experiment (defaults
    /// filled in), so equivalent files hash alike.
    pub fn hash_for(&self, kind: ExperimentKind) -> String {
        let value = match kind {
            ExperimentKind::PowerControl => {
                serde_json::json!([&self.power_control, &self.power_control_targets])
            }
            ExperimentKind::Hyperparam => {
                serde_json::json!([&self.hyperparam, &self.hyperparam_targets])
            }
            ExperimentKind::Beam => serde_json::json!([&self.beam, &self.beam_targets]),
            ExperimentKind::Counterfactual => {
                serde_json::json!([&self.counterfactual, &self.counterfactual_targets])
            }
        };
        let digest = Sha256::digest(value.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Seed, trial count and parallelism for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSpec {
    pub seed: u64,
    pub trials: usize,
    /// Worker threads; `None` lets the thread pool decide.
    pub workers: Option<usize>,
}

fn non_negative(v: &mut Vec<String>, name: &str, x: f64) {
    if !(x >= 0.0 && x.is_finite()) {
        v.push(format!("{name} must be finite and >= 0, got {x}"));
    }
}

/// Every problem with running `kind` under `cfg` and `spec`, empty if none.
pub fn validate_config(
    kind: ExperimentKind,
    cfg: &ExperimentConfig,
    spec: &RunSpec,
) -> Vec<String> {
    let mut v = Vec::new();
    if let Some(k) = cfg.experiment {
        if k != kind {
            v.push(format!(
                "config declares experiment = \"{k}\" but the {kind} subcommand was run"
            ));
        }
    }
    if spec.trials == 0 {
        v.push("trials must be at least 1".into());
    }
    if spec.workers == Some(0) {
        v.push("workers must be at least 1".into());
    }
    let section = |v: &mut Vec<String>, name: &str, found: Vec<String>| {
        v.extend(found.into_iter().map(|m| format!("[{name}] {m}")));
    };
    match kind {
        ExperimentKind::PowerControl => {
            section(&mut v, "power_control", cfg.power_control.violations());
            let t = &cfg.power_control_targets;
            non_negative(
                &mut v,
                "power_control_targets.min_power_ratio",
                t.min_power_ratio,
            );
            non_negative(
                &mut v,
                "power_control_targets.max_coverage_gap",
                t.max_coverage_gap,
            );
            non_negative(
                &mut v,
                "power_control_targets.interference_std_errs",
                t.interference_std_errs,
            );
        }
        ExperimentKind::Hyperparam => {
            section(&mut v, "hyperparam", cfg.hyperparam.violations());
            let w = cfg.hyperparam_targets.min_win_fraction;
            if !(0.0..=1.0).contains(&w) {
                v.push(format!(
                    "hyperparam_targets.min_win_fraction must lie in [0, 1], got {w}"
                ));
            }
        }
        ExperimentKind::Beam => {
            section(&mut v, "beam", cfg.beam.violations());
            non_negative(
                &mut v,
                "beam_targets.risk_tolerance",
                cfg.beam_targets.risk_tolerance,
            );
        }
        ExperimentKind::Counterfactual => {
            section(&mut v, "counterfactual", cfg.counterfactual.violations());
            let t = &cfg.counterfactual_targets;
            non_negative(
                &mut v,
                "counterfactual_targets.coverage_tolerance",
                t.coverage_tolerance,
            );
            if !(0.0..=1.0).contains(&t.max_naive_coverage) {
                v.push(format!(
                    "counterfactual_targets.max_naive_coverage must lie in [0, 1], got {}",
                    t.max_naive_coverage
                ));
            }
        }
    }
    v
}
