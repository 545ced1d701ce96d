//! Certifying scheduler hyperparameters for a high-priority latency target
//! and picking the most energy-efficient certified one for low-priority UEs.
//!
//! Batch LTT and adaptive aLTT get the same total number of simulated
//! episodes. Episode `j` of candidate `i` is drawn from a fixed per-candidate
//! stream, so both methods see identical samples wherever they overlap.
//! The energy-delay product carries no guarantee, so both methods rank their
//! certified candidates with one shared estimate from a separate batch.

use conformal_core::risk::{
    altt_run_infallible, learn_then_test, select_best, AlttConfig, ArmPolicy, CandidateGrid,
    Procedure, RiskRequirement, TestOutcome,
};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::{stream, SimRng};
use crate::scheduler::{EpisodeKpis, SchedulerConfig, SchedulerParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ltt,
    Altt,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ltt => "LTT",
            Self::Altt => "aLTT",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperparamConfig {
    /// Allowed probability of certifying any unreliable candidate.
    pub beta: f64,
    /// Latency targets in milliseconds.
    pub targets_ms: Vec<f64>,
    pub slot_ms: f64,
    /// Episodes per method per target.
    pub budget: usize,
    /// Episodes per candidate used to estimate the E-D product for selection.
    pub secondary_episodes: usize,
    /// Episodes per candidate in the reference table used to score selections.
    pub reference_episodes: usize,
    pub scheduler: SchedulerConfig,
}

impl Default for HyperparamConfig {
    fn default() -> Self {
        Self {
            beta: 0.1,
            targets_ms: vec![2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0],
            slot_ms: 1.0,
            budget: 500,
            secondary_episodes: 100,
            reference_episodes: 400,
            scheduler: SchedulerConfig::default(),
        }
    }
}

impl HyperparamConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = self.scheduler.violations();
        if !(self.beta > 0.0 && self.beta < 1.0) {
            v.push(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        if !(self.slot_ms > 0.0 && self.slot_ms.is_finite()) {
            v.push(format!("slot_ms must be positive, got {}", self.slot_ms));
        }
        if self.targets_ms.is_empty() {
            v.push("targets_ms must list at least one latency target".into());
        }
        for &t in &self.targets_ms {
            let a = t / self.slot_ms / self.scheduler.l_max;
            if !(a > 0.0 && a < 1.0) {
                v.push(format!(
                    "latency target {t} ms normalizes to {a}, outside (0, 1); check l_max and slot_ms"
                ));
            }
        }
        if self.reference_episodes == 0 || self.secondary_episodes == 0 {
            v.push("reference_episodes and secondary_episodes must be at least 1".into());
        }
        v
    }

    /// Target expressed as a normalized loss level.
    pub fn normalized_target(&self, target_ms: f64) -> f64 {
        target_ms / self.slot_ms / self.scheduler.l_max
    }
}

/// Episodes of every candidate, generated on demand from per-candidate streams.
pub struct EpisodePool<'a> {
    cfg: &'a SchedulerConfig,
    params: Vec<SchedulerParams>,
    rngs: Vec<SimRng>,
    episodes: Vec<Vec<EpisodeKpis>>,
}

impl<'a> EpisodePool<'a> {
    pub fn new(cfg: &'a SchedulerConfig, seed: u64, trial: u64, label: &str) -> Self {
        let params = cfg.candidates();
        let rngs = (0..params.len())
            .map(|i| stream(seed, trial, &format!("{label}-{i}")))
            .collect();
        Self {
            cfg,
            episodes: vec![Vec::new(); params.len()],
            params,
            rngs,
        }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn params(&self) -> &[SchedulerParams] {
        &self.params
    }

    /// Episode `j` of candidate `i`.
    pub fn get(&mut self, i: usize, j: usize) -> Result<EpisodeKpis> {
        while self.episodes[i].len() <= j {
            let k = self.cfg.episode(self.params[i], &mut self.rngs[i])?;
            self.episodes[i].push(k);
        }
        Ok(self.episodes[i][j])
    }

    /// First `n` episodes of candidate `i`.
    pub fn first(&mut self, i: usize, n: usize) -> Result<&[EpisodeKpis]> {
        if n > 0 {
            self.get(i, n - 1)?;
        }
        Ok(&self.episodes[i][..n])
    }
}

/// Per-candidate means over a large independent batch of episodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceTable {
    pub params: Vec<SchedulerParams>,
    pub latency_normalized: Vec<f64>,
    pub energy_delay: Vec<f64>,
}

pub fn reference_table(cfg: &HyperparamConfig, seed: u64) -> Result<ReferenceTable> {
    let mut pool = EpisodePool::new(&cfg.scheduler, seed, u64::MAX, "reference");
    let mut lat = Vec::with_capacity(pool.len());
    let mut ed = Vec::with_capacity(pool.len());
    for i in 0..pool.len() {
        let eps = pool.first(i, cfg.reference_episodes)?;
        let n = eps.len() as f64;
        lat.push(eps.iter().map(|e| e.high_latency_normalized).sum::<f64>() / n);
        ed.push(eps.iter().map(|e| e.energy_delay).sum::<f64>() / n);
    }
    Ok(ReferenceTable {
        params: pool.params().to_vec(),
        latency_normalized: lat,
        energy_delay: ed,
    })
}

/// One method at one latency target in one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub target_ms: f64,
    pub method: Method,
    pub outcome: TestOutcome<f64>,
    pub selected: Option<usize>,
    /// Estimated E-D product of the selection.
    pub selected_ed_estimate: Option<f64>,
}

fn finish(target_ms: f64, method: Method, outcome: TestOutcome<f64>, ed: &[f64]) -> MethodResult {
    let selected = select_best(&outcome, ed);
    MethodResult {
        target_ms,
        method,
        selected_ed_estimate: selected.map(|i| ed[i]),
        selected,
        outcome,
    }
}

/// Runs LTT (Bonferroni, equal split of the budget) and aLTT (greedy
/// wealth) at every target in the sweep.
pub fn run_trial(cfg: &HyperparamConfig, seed: u64, trial: u64) -> Result<Vec<MethodResult>> {
    if let Some(v) = cfg.violations().into_iter().next() {
        return invalid(v);
    }
    let mut pool = EpisodePool::new(&cfg.scheduler, seed, trial, "episode");
    let grid = CandidateGrid::new(
        pool.params()
            .iter()
            .map(|p| vec![p.fairness_weight, p.power_level])
            .collect(),
    )?;
    let n = pool.len();
    let mut side = EpisodePool::new(&cfg.scheduler, seed, trial, "secondary");
    let ed = (0..n)
        .map(|i| {
            side.first(i, cfg.secondary_episodes)
                .map(|eps| eps.iter().map(|e| e.energy_delay).sum::<f64>() / eps.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let per_candidate = cfg.budget / n;
    let mut out = Vec::with_capacity(2 * cfg.targets_ms.len());
    for &target_ms in &cfg.targets_ms {
        let req = RiskRequirement::new(cfg.normalized_target(target_ms), cfg.beta)?;

        let losses = (0..n)
            .map(|i| {
                pool.first(i, per_candidate)
                    .map(|eps| eps.iter().map(|e| e.high_latency_normalized).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let ltt = learn_then_test(&grid, &losses, &req, Procedure::Bonferroni)?;
        out.push(finish(target_ms, Method::Ltt, ltt, &ed));

        let mut drawn = vec![0usize; n];
        let mut failure = None;
        let altt_cfg = AlttConfig {
            policy: ArmPolicy::GreedyWealth,
            ..AlttConfig::with_budget(cfg.budget)
        };
        let altt = altt_run_infallible(&grid, &req, &altt_cfg, |i| {
            let j = drawn[i];
            drawn[i] += 1;
            match pool.get(i, j) {
                Ok(e) => e.high_latency_normalized,
                Err(e) => {
                    failure.get_or_insert(e);
                    1.0
                }
            }
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        out.push(finish(target_ms, Method::Altt, altt, &ed));
    }
    Ok(out)
}
