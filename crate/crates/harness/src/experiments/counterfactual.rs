//! Naive vs propensity-weighted conformal intervals for the backlogs round
//! robin would have left where the logging policy ran proportional fair.

use serde_json::json;
use wireless_scenarios::backlog::{run_trial, CounterfactualRunConfig, UeInterval};

use super::{par_trials, Outcome};
use crate::config::{CounterfactualTargets, RunSpec};
use crate::error::Result;
use crate::report::TargetCheck;
use crate::stats::{mean, std_err};
use crate::table::{flag, num, CsvTable};

pub const TRACE_SCHEMA: &str = "conformal-cal/counterfactual/trace/v1";
pub const TRIALS_SCHEMA: &str = "conformal-cal/counterfactual/trials/v1";

pub const TRIAL_COLUMNS: [&str; 6] = [
    "trial",
    "coverage_naive",
    "coverage_counterfactual",
    "median_width_naive",
    "median_width_counterfactual",
    "unbounded_fraction_counterfactual",
];

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn metrics(rows: &[UeInterval]) -> [f64; 5] {
    let frac = |f: &dyn Fn(&UeInterval) -> bool| {
        rows.iter().filter(|r| f(r)).count() as f64 / rows.len() as f64
    };
    [
        frac(&|r| r.naive.contains(r.truth)),
        frac(&|r| r.counterfactual.contains(r.truth)),
        median(rows.iter().map(|r| r.naive.width()).collect()),
        median(rows.iter().map(|r| r.counterfactual.width()).collect()),
        frac(&|r| !r.counterfactual.hi.is_finite()),
    ]
}

pub fn run(
    cfg: &CounterfactualRunConfig,
    targets: &CounterfactualTargets,
    spec: &RunSpec,
) -> Result<Outcome> {
    let runs = par_trials(spec, |t| run_trial(cfg, spec.seed, t))?;

    let mut trace = CsvTable::new(
        TRACE_SCHEMA,
        &[
            "trial",
            "context",
            "ue",
            "rr_propensity",
            "truth",
            "naive_lo",
            "naive_hi",
            "cf_lo",
            "cf_hi",
            "covered_naive",
            "covered_cf",
        ],
    );
    let mut trials = CsvTable::new(TRIALS_SCHEMA, &TRIAL_COLUMNS);
    let mut per_trial = Vec::with_capacity(runs.len());
    for (trial, rows) in runs.iter().enumerate() {
        for r in rows {
            trace.push(vec![
                trial.to_string(),
                r.context.to_string(),
                r.ue.to_string(),
                num(r.rr_propensity),
                num(r.truth),
                num(r.naive.lo),
                num(r.naive.hi),
                num(r.counterfactual.lo),
                num(r.counterfactual.hi),
                flag(r.naive.contains(r.truth)),
                flag(r.counterfactual.contains(r.truth)),
            ]);
        }
        let m = metrics(rows);
        let mut row = vec![trial.to_string()];
        row.extend(m.iter().map(|&v| num(v)));
        trials.push(row);
        per_trial.push(m);
    }

    let col = |k: usize| per_trial.iter().map(|m| m[k]).collect::<Vec<f64>>();
    let (cn, cc) = (mean(&col(0)), mean(&col(1)));
    let contexts = cfg.test_contexts * spec.trials;
    let aggregate = json!({
        "beta": cfg.beta,
        "held_out_contexts": contexts,
        "coverage_naive": { "mean": cn, "std_err": std_err(&col(0)) },
        "coverage_counterfactual": { "mean": cc, "std_err": std_err(&col(1)) },
        "median_width_naive": mean(&col(2)),
        "median_width_counterfactual": mean(&col(3)),
        "unbounded_fraction_counterfactual": mean(&col(4)),
    });
    let checks = vec![
        TargetCheck::at_least(
            "coverage_counterfactual",
            cc,
            1.0 - cfg.beta - targets.coverage_tolerance,
        ),
        TargetCheck::at_most("coverage_naive", cn, targets.max_naive_coverage),
    ];
    let summary = vec![
        format!(
            "beta = {}, held-out contexts = {contexts}, UEs = {}",
            cfg.beta, cfg.scenario.ues
        ),
        format!("coverage      naive {cn:.4}  counterfactual {cc:.4}"),
        format!(
            "median width  naive {:.3}  counterfactual {:.3} (unbounded {:.4})",
            mean(&col(2)),
            mean(&col(3)),
            mean(&col(4))
        ),
    ];
    Ok(Outcome {
        trace,
        trials,
        aggregate,
        checks,
        summary,
    })
}
