//! Run reports and their on-disk form.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::config::ExperimentKind;
use crate::error::Result;
use crate::table::CsvTable;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub experiment: String,
    pub config_sha256: String,
    pub seed: u64,
    pub trials: usize,
    pub version: String,
}

/// One declared target and whether the run met it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetCheck {
    pub name: String,
    pub value: f64,
    /// Human-readable condition, e.g. `>= 1.1`.
    pub requirement: String,
    pub passed: bool,
}

impl TargetCheck {
    pub fn at_least(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            requirement: format!(">= {bound}"),
            passed: value >= bound,
        }
    }

    pub fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            requirement: format!("<= {bound}"),
            passed: value <= bound,
        }
    }

    pub fn less_than(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            requirement: format!("< {bound}"),
            passed: value < bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub kind: ExperimentKind,
    pub provenance: Provenance,
    /// Fine-grained rows (steps, candidates or UEs).
    pub trace: CsvTable,
    /// One row per trial (and per sweep point where applicable); every
    /// aggregate is a function of this table.
    pub trials: CsvTable,
    pub aggregate: Value,
    pub checks: Vec<TargetCheck>,
    pub summary: Vec<String>,
}

impl RunReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn aggregate_json(&self) -> Value {
        serde_json::json!({
            "provenance": self.provenance,
            "aggregate": self.aggregate,
            "targets": self.checks,
            "all_targets_met": self.all_passed(),
        })
    }

    pub fn report_text(&self) -> String {
        let p = &self.provenance;
        let mut s = String::new();
        let _ = writeln!(s, "experiment: {}", p.experiment);
        let _ = writeln!(
            s,
            "seed: {}  trials: {}  version: {}",
            p.seed, p.trials, p.version
        );
        let _ = writeln!(s, "config sha256: {}", p.config_sha256);
        let _ = writeln!(s);
        for line in &self.summary {
            let _ = writeln!(s, "{line}");
        }
        let _ = writeln!(s);
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(
                s,
                "[{tag}] {}: {} (required {})",
                c.name, c.value, c.requirement
            );
        }
        s
    }

    /// Writes `trace.csv`, `trials.csv`, `aggregate.json` and `report.txt`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.trace.write_file(&dir.join("trace.csv"))?;
        self.trials.write_file(&dir.join("trials.csv"))?;
        let json =
            serde_json::to_string_pretty(&self.aggregate_json()).expect("report values serialize");
        std::fs::write(dir.join("aggregate.json"), json + "\n")?;
        std::fs::write(dir.join("report.txt"), self.report_text())?;
        Ok(())
    }
}
