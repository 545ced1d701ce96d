//! Transmit power chosen from conformal gain sets, unimodal vs multi-sample.

use serde_json::json;
use wireless_scenarios::power_control::{run_trial, PowerControlConfig, PowerStep};

use super::{par_trials, Outcome};
use crate::config::{PowerTargets, RunSpec};
use crate::error::Result;
use crate::report::TargetCheck;
use crate::stats::{mean, std_err};
use crate::table::{flag, num, CsvTable};

pub const TRACE_SCHEMA: &str = "conformal-cal/power_control/trace/v1";
pub const TRIALS_SCHEMA: &str = "conformal-cal/power_control/trials/v1";

pub const TRIAL_COLUMNS: [&str; 9] = [
    "trial",
    "coverage_unimodal",
    "coverage_multisample",
    "mean_power_unimodal",
    "mean_power_multisample",
    "mean_interference_unimodal",
    "mean_interference_multisample",
    "mean_set_size_unimodal",
    "mean_set_size_multisample",
];

fn trial_metrics(steps: &[PowerStep]) -> [f64; 8] {
    let avg = |f: &dyn Fn(&PowerStep) -> f64| mean(&steps.iter().map(f).collect::<Vec<_>>());
    [
        avg(&|s| s.covered_unimodal as u8 as f64),
        avg(&|s| s.covered_multisample as u8 as f64),
        avg(&|s| s.power_unimodal),
        avg(&|s| s.power_multisample),
        avg(&|s| s.interference_unimodal()),
        avg(&|s| s.interference_multisample()),
        avg(&|s| s.set_size_unimodal as f64),
        avg(&|s| s.set_size_multisample as f64),
    ]
}

pub fn run(cfg: &PowerControlConfig, targets: &PowerTargets, spec: &RunSpec) -> Result<Outcome> {
    let runs = par_trials(spec, |t| run_trial(cfg, spec.seed, t))?;
    let gamma = cfg.gamma()?;

    let mut trace = CsvTable::new(
        TRACE_SCHEMA,
        &[
            "trial",
            "t",
            "mode",
            "true_gain",
            "power_unimodal",
            "power_multisample",
            "power_unimodal_norm",
            "power_multisample_norm",
            "set_size_unimodal",
            "set_size_multisample",
            "covered_unimodal",
            "covered_multisample",
        ],
    );
    let mut trials = CsvTable::new(TRIALS_SCHEMA, &TRIAL_COLUMNS);
    let mut per_trial = Vec::with_capacity(runs.len());
    for (trial, steps) in runs.iter().enumerate() {
        for s in steps {
            trace.push(vec![
                trial.to_string(),
                s.t.to_string(),
                format!("{:?}", s.mode).to_lowercase(),
                num(s.true_gain),
                num(s.power_unimodal),
                num(s.power_multisample),
                num(s.power_unimodal / cfg.x_max),
                num(s.power_multisample / cfg.x_max),
                s.set_size_unimodal.to_string(),
                s.set_size_multisample.to_string(),
                flag(s.covered_unimodal),
                flag(s.covered_multisample),
            ]);
        }
        let m = trial_metrics(steps);
        let mut row = vec![trial.to_string()];
        row.extend(m.iter().map(|&v| num(v)));
        trials.push(row);
        per_trial.push(m);
    }

    let col = |k: usize| per_trial.iter().map(|m| m[k]).collect::<Vec<f64>>();
    let stat = |k: usize| json!({ "mean": mean(&col(k)), "std_err": std_err(&col(k)) });
    let (cov_u, cov_m) = (mean(&col(0)), mean(&col(1)));
    let (pow_u, pow_m) = (mean(&col(2)), mean(&col(3)));
    let (int_u, int_m) = (mean(&col(4)), mean(&col(5)));
    let (se_u, se_m) = (std_err(&col(4)), std_err(&col(5)));
    let ratio = pow_m / pow_u;
    let gap = (cov_u - cov_m).abs();

    let aggregate = json!({
        "alpha": cfg.alpha,
        "beta": cfg.beta,
        "gamma": gamma,
        "x_max": cfg.x_max,
        "coverage_unimodal": stat(0),
        "coverage_multisample": stat(1),
        "mean_power_unimodal": stat(2),
        "mean_power_multisample": stat(3),
        "mean_interference_unimodal": stat(4),
        "mean_interference_multisample": stat(5),
        "mean_set_size_unimodal": stat(6),
        "mean_set_size_multisample": stat(7),
        "power_ratio": ratio,
        "coverage_gap": gap,
    });
    let k = targets.interference_std_errs;
    let checks = vec![
        TargetCheck::at_least(
            "power_ratio_multisample_over_unimodal",
            ratio,
            targets.min_power_ratio,
        ),
        TargetCheck::at_most("coverage_gap", gap, targets.max_coverage_gap),
        TargetCheck::at_most("mean_interference_unimodal", int_u, cfg.alpha + k * se_u),
        TargetCheck::at_most("mean_interference_multisample", int_m, cfg.alpha + k * se_m),
    ];
    let summary = vec![
        format!("gamma = {gamma:.6} (alpha = {}, beta = {})", cfg.alpha, cfg.beta),
        format!("coverage     unimodal {cov_u:.4}  multi-sample {cov_m:.4}"),
        format!("mean power   unimodal {pow_u:.4}  multi-sample {pow_m:.4}  ratio {ratio:.3}"),
        format!("interference unimodal {int_u:.4} (se {se_u:.4})  multi-sample {int_m:.4} (se {se_m:.4})"),
    ];
    Ok(Outcome {
        trace,
        trials,
        aggregate,
        checks,
        summary,
    })
}
