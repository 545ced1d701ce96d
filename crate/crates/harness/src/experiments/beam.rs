//! Global vs bin-localized online calibration of beam candidate sets.

use serde_json::json;
use wireless_scenarios::beam::{run_trial, BeamRunConfig, BeamStep};

use super::{par_trials, Outcome};
use crate::config::{BeamTargets, RunSpec};
use crate::error::Result;
use crate::report::TargetCheck;
use crate::stats::{mean, std_err};
use crate::table::{num, CsvTable};

pub const TRACE_SCHEMA: &str = "conformal-cal/beam/trace/v1";
pub const TRIALS_SCHEMA: &str = "conformal-cal/beam/trials/v1";

pub const TRIAL_COLUMNS: [&str; 6] = [
    "trial",
    "alpha",
    "avg_risk_global",
    "avg_risk_local",
    "mean_set_size_global",
    "mean_set_size_local",
];

/// Main target first, then the sweep without repeats.
fn alphas(cfg: &BeamRunConfig) -> Vec<f64> {
    let mut a = vec![cfg.alpha];
    for &x in &cfg.alpha_sweep {
        if !a.contains(&x) {
            a.push(x);
        }
    }
    a
}

fn metrics(steps: &[BeamStep]) -> [f64; 4] {
    let avg = |f: &dyn Fn(&BeamStep) -> f64| mean(&steps.iter().map(f).collect::<Vec<_>>());
    [
        avg(&|s| s.risk_global),
        avg(&|s| s.risk_local),
        avg(&|s| s.set_size_global as f64),
        avg(&|s| s.set_size_local as f64),
    ]
}

pub fn run(cfg: &BeamRunConfig, targets: &BeamTargets, spec: &RunSpec) -> Result<Outcome> {
    let levels = alphas(cfg);
    let runs = par_trials(spec, |t| {
        levels
            .iter()
            .map(|&alpha| {
                run_trial(
                    &BeamRunConfig {
                        alpha,
                        ..cfg.clone()
                    },
                    spec.seed,
                    t,
                )
            })
            .collect::<wireless_scenarios::Result<Vec<_>>>()
    })?;

    let mut trace = CsvTable::new(
        TRACE_SCHEMA,
        &[
            "trial",
            "t",
            "bin",
            "cumulative_risk_global",
            "cumulative_risk_local",
            "set_size_global",
            "set_size_local",
            "lambda_global",
            "lambda_local",
        ],
    );
    let mut trials = CsvTable::new(TRIALS_SCHEMA, &TRIAL_COLUMNS);
    // per_level[k][trial] = metrics
    let mut per_level = vec![Vec::new(); levels.len()];
    for (trial, by_level) in runs.iter().enumerate() {
        let (mut cg, mut cl) = (0.0, 0.0);
        for s in &by_level[0] {
            cg += s.risk_global;
            cl += s.risk_local;
            let n = (s.t + 1) as f64;
            trace.push(vec![
                trial.to_string(),
                s.t.to_string(),
                s.bin.to_string(),
                num(cg / n),
                num(cl / n),
                s.set_size_global.to_string(),
                s.set_size_local.to_string(),
                num(s.lambda_global),
                num(s.lambda_local),
            ]);
        }
        for (k, steps) in by_level.iter().enumerate() {
            let m = metrics(steps);
            let mut row = vec![trial.to_string(), num(levels[k])];
            row.extend(m.iter().map(|&v| num(v)));
            trials.push(row);
            per_level[k].push(m);
        }
    }

    let col = |k: usize, j: usize| per_level[k].iter().map(|m| m[j]).collect::<Vec<f64>>();
    let sweep: Vec<_> = levels
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            json!({
                "alpha": a,
                "avg_risk_global": mean(&col(k, 0)),
                "avg_risk_local": mean(&col(k, 1)),
                "mean_set_size_global": mean(&col(k, 2)),
                "mean_set_size_local": mean(&col(k, 3)),
            })
        })
        .collect();
    let (rg, rl) = (mean(&col(0, 0)), mean(&col(0, 1)));
    let (sg, sl) = (mean(&col(0, 2)), mean(&col(0, 3)));
    let aggregate = json!({
        "alpha": cfg.alpha,
        "eta": cfg.eta,
        "steps": cfg.steps,
        "avg_risk_global": { "mean": rg, "std_err": std_err(&col(0, 0)) },
        "avg_risk_local": { "mean": rl, "std_err": std_err(&col(0, 1)) },
        "mean_set_size_global": { "mean": sg, "std_err": std_err(&col(0, 2)) },
        "mean_set_size_local": { "mean": sl, "std_err": std_err(&col(0, 3)) },
        "alpha_sweep": sweep,
    });
    let tol = targets.risk_tolerance;
    let size_check = if targets.strictly_smaller_local_sets {
        TargetCheck::less_than("mean_set_size_local_vs_global", sl, sg)
    } else {
        TargetCheck::at_most("mean_set_size_local_vs_global", sl, sg)
    };
    let checks = vec![
        TargetCheck::at_most("risk_deviation_global", (rg - cfg.alpha).abs(), tol),
        TargetCheck::at_most("risk_deviation_local", (rl - cfg.alpha).abs(), tol),
        size_check,
    ];
    let mut summary = vec![
        format!(
            "alpha = {}, eta = {}, steps = {}",
            cfg.alpha, cfg.eta, cfg.steps
        ),
        format!("average risk   global {rg:.4}  localized {rl:.4}"),
        format!("mean set size  global {sg:.3}  localized {sl:.3}"),
        String::new(),
        format!("{:>6} {:>12} {:>12}", "alpha", "size_global", "size_local"),
    ];
    for (k, &a) in levels.iter().enumerate() {
        summary.push(format!(
            "{a:>6} {:>12.3} {:>12.3}",
            mean(&col(k, 2)),
            mean(&col(k, 3))
        ));
    }
    Ok(Outcome {
        trace,
        trials,
        aggregate,
        checks,
        summary,
    })
}
