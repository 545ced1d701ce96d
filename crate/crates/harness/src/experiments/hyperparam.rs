//! LTT vs aLTT certification of scheduler hyperparameters across a sweep of
//! high-priority latency targets.

use serde_json::json;
use wireless_scenarios::hyperparam::{
    reference_table, run_trial, HyperparamConfig, Method, MethodResult, ReferenceTable,
};

use super::{par_trials, Outcome};
use crate::config::{HyperparamTargets, RunSpec};
use crate::error::Result;
use crate::report::TargetCheck;
use crate::stats::mean;
use crate::table::{flag, num, opt, CsvTable};

pub const TRACE_SCHEMA: &str = "conformal-cal/hyperparam/trace/v1";
pub const TRIALS_SCHEMA: &str = "conformal-cal/hyperparam/trials/v1";

pub const TRIAL_COLUMNS: [&str; 11] = [
    "trial",
    "target_ms",
    "method",
    "discoveries",
    "samples_used",
    "selected",
    "selected_fairness_weight",
    "selected_power_level",
    "ed_estimate",
    "reference_ed",
    "reference_latency_ms",
];

/// One row of the trials table, kept typed for aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub trial: usize,
    pub target_ms: f64,
    pub method: Method,
    pub discoveries: usize,
    pub samples_used: usize,
    pub selected: Option<usize>,
    /// Reference E-D of the selection; `+inf` when nothing was certified.
    pub reference_ed: f64,
    pub reference_latency_ms: Option<f64>,
}

fn to_row(trial: usize, r: &MethodResult, reference: &ReferenceTable, l_ms: f64) -> TrialRow {
    TrialRow {
        trial,
        target_ms: r.target_ms,
        method: r.method,
        discoveries: r.outcome.discovered.len(),
        samples_used: r.outcome.total_samples(),
        selected: r.selected,
        reference_ed: r
            .selected
            .map_or(f64::INFINITY, |i| reference.energy_delay[i]),
        reference_latency_ms: r.selected.map(|i| reference.latency_normalized[i] * l_ms),
    }
}

/// Per trial: aLTT's pick is no worse than LTT's at every target (an empty
/// selection counts as infinitely bad).
pub fn trial_wins(rows: &[TrialRow]) -> Vec<bool> {
    let trials = rows.iter().map(|r| r.trial + 1).max().unwrap_or(0);
    let mut wins = vec![true; trials];
    for r in rows.iter().filter(|r| r.method == Method::Altt) {
        let ltt = rows
            .iter()
            .find(|l| l.trial == r.trial && l.target_ms == r.target_ms && l.method == Method::Ltt)
            .expect("every target has an LTT row");
        if r.reference_ed > ltt.reference_ed {
            wins[r.trial] = false;
        }
    }
    wins
}

/// Targets where LTT certifies nothing in at least half the trials while
/// aLTT certifies something in at least half.
pub fn ltt_gap_targets(rows: &[TrialRow], targets: &[f64]) -> Vec<f64> {
    targets
        .iter()
        .copied()
        .filter(|&t| {
            let frac = |m: Method, pred: &dyn Fn(&TrialRow) -> bool| {
                let sel: Vec<&TrialRow> = rows
                    .iter()
                    .filter(|r| r.target_ms == t && r.method == m)
                    .collect();
                sel.iter().filter(|r| pred(r)).count() as f64 / sel.len().max(1) as f64
            };
            frac(Method::Ltt, &|r| r.discoveries == 0) >= 0.5
                && frac(Method::Altt, &|r| r.discoveries > 0) >= 0.5
        })
        .collect()
}

pub fn run(cfg: &HyperparamConfig, targets: &HyperparamTargets, spec: &RunSpec) -> Result<Outcome> {
    let reference = reference_table(cfg, spec.seed)?;
    let runs = par_trials(spec, |t| run_trial(cfg, spec.seed, t))?;
    let l_ms = cfg.scheduler.l_max * cfg.slot_ms;

    let mut trace = CsvTable::new(
        TRACE_SCHEMA,
        &[
            "trial",
            "target_ms",
            "method",
            "candidate",
            "fairness_weight",
            "power_level",
            "samples_used",
            "evidence",
            "discovered",
        ],
    );
    let mut trials = CsvTable::new(TRIALS_SCHEMA, &TRIAL_COLUMNS);
    let mut rows = Vec::new();
    for (trial, results) in runs.iter().enumerate() {
        for r in results {
            for (i, p) in reference.params.iter().enumerate() {
                trace.push(vec![
                    trial.to_string(),
                    num(r.target_ms),
                    r.method.as_str().into(),
                    i.to_string(),
                    num(p.fairness_weight),
                    num(p.power_level),
                    r.outcome.samples_used[i].to_string(),
                    num(r.outcome.evidence[i]),
                    flag(r.outcome.is_discovered(i)),
                ]);
            }
            let row = to_row(trial, r, &reference, l_ms);
            let sel = r.selected.map(|i| reference.params[i]);
            trials.push(vec![
                trial.to_string(),
                num(row.target_ms),
                row.method.as_str().into(),
                row.discoveries.to_string(),
                row.samples_used.to_string(),
                opt(row.selected),
                opt(sel.map(|p| num(p.fairness_weight))),
                opt(sel.map(|p| num(p.power_level))),
                opt(r.selected_ed_estimate.map(num)),
                opt(r.selected.map(|_| num(row.reference_ed))),
                opt(row.reference_latency_ms.map(num)),
            ]);
            rows.push(row);
        }
    }

    let mut per_target = Vec::new();
    let mut summary = vec![format!(
        "{:>9} {:>6} {:>10} {:>12} {:>14} {:>16}",
        "target_ms", "method", "selected", "discoveries", "reference_ed", "realized_lat_ms"
    )];
    for &t in &cfg.targets_ms {
        for m in [Method::Ltt, Method::Altt] {
            let sel: Vec<&TrialRow> = rows
                .iter()
                .filter(|r| r.target_ms == t && r.method == m)
                .collect();
            let chosen: Vec<&&TrialRow> = sel.iter().filter(|r| r.selected.is_some()).collect();
            let rate = chosen.len() as f64 / sel.len() as f64;
            let disc = mean(&sel.iter().map(|r| r.discoveries as f64).collect::<Vec<_>>());
            let ed = mean(&chosen.iter().map(|r| r.reference_ed).collect::<Vec<_>>());
            let lat: Vec<f64> = chosen
                .iter()
                .filter_map(|r| r.reference_latency_ms)
                .collect();
            let violations = lat.iter().filter(|&&l| l > t).count() as f64 / sel.len() as f64;
            summary.push(format!(
                "{t:>9} {:>6} {rate:>10.3} {disc:>12.2} {ed:>14.3} {:>16.3}",
                m.as_str(),
                mean(&lat)
            ));
            per_target.push(json!({
                "target_ms": t,
                "method": m.as_str(),
                "selection_rate": rate,
                "mean_discoveries": disc,
                "mean_reference_ed_when_selected": ed,
                "mean_reference_latency_ms_when_selected": mean(&lat),
                "fraction_selected_above_target": violations,
            }));
        }
    }
    let wins = trial_wins(&rows);
    let win_fraction = wins.iter().filter(|&&w| w).count() as f64 / wins.len() as f64;
    let gaps = ltt_gap_targets(&rows, &cfg.targets_ms);
    summary.push(String::new());
    summary.push(format!(
        "aLTT no worse than LTT at every target in {win_fraction:.3} of trials"
    ));
    summary.push(format!("targets where only aLTT certifies: {gaps:?}"));

    let aggregate = json!({
        "beta": cfg.beta,
        "budget": cfg.budget,
        "l_max_ms": l_ms,
        "per_target": per_target,
        "win_fraction": win_fraction,
        "ltt_gap_targets_ms": gaps,
        "reference": {
            "fairness_weight": reference.params.iter().map(|p| p.fairness_weight).collect::<Vec<_>>(),
            "power_level": reference.params.iter().map(|p| p.power_level).collect::<Vec<_>>(),
            "latency_ms": reference.latency_normalized.iter().map(|v| v * l_ms).collect::<Vec<_>>(),
            "energy_delay": reference.energy_delay,
        },
    });
    let mut checks = vec![TargetCheck::at_least(
        "altt_win_fraction",
        win_fraction,
        targets.min_win_fraction,
    )];
    if targets.require_ltt_gap {
        checks.push(TargetCheck::at_least(
            "targets_where_only_altt_certifies",
            gaps.len() as f64,
            1.0,
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
