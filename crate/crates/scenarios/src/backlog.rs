//! Draining per-UE backlogs under round-robin or proportional-fair
//! scheduling, with a context-dependent logging policy choosing between
//! them.

use conformal_core::counterfactual::{
    counterfactual_interval, naive_interval, Action, CounterfactualQuery, Interval, LoggedEpisode,
};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::{stream, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateLaw {
    /// Mean rate times a unit-mean exponential, independently per slot.
    Exponential,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacklogScenario {
    pub ues: usize,
    pub horizon: usize,
    /// Initial backlogs are uniform on `[0, backlog_max]`.
    pub backlog_max: f64,
    /// Mean rates are uniform on `[rate_min, rate_max]`.
    pub rate_min: f64,
    pub rate_max: f64,
    pub rate_law: RateLaw,
    /// Poisson arrivals per UE per slot.
    pub arrival_rate: f64,
    /// Decay of the throughput average in the proportional-fair metric.
    pub pf_decay: f64,
    /// Predicted max residual backlog at which RR and PFCA are equally likely.
    pub policy_threshold: f64,
    pub policy_temperature: f64,
}

impl Default for BacklogScenario {
    fn default() -> Self {
        Self {
            ues: 4,
            horizon: 40,
            backlog_max: 40.0,
            rate_min: 0.5,
            rate_max: 3.0,
            rate_law: RateLaw::Exponential,
            arrival_rate: 0.0,
            pf_decay: 0.99,
            policy_threshold: 5.0,
            policy_temperature: 4.0,
        }
    }
}

/// Initial state seen by the base station before choosing a scheduler.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacklogContext {
    pub backlogs: Vec<f64>,
    pub mean_rates: Vec<f64>,
}

impl BacklogContext {
    /// `[backlogs..., mean_rates...]`.
    pub fn to_vec(&self) -> Vec<f64> {
        self.backlogs
            .iter()
            .chain(&self.mean_rates)
            .copied()
            .collect()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl BacklogScenario {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.ues == 0 {
            v.push("ues must be at least 1".into());
        }
        if !(self.backlog_max >= 0.0 && self.backlog_max.is_finite()) {
            v.push(format!(
                "backlog_max must be >= 0, got {}",
                self.backlog_max
            ));
        }
        if !(self.rate_min > 0.0 && self.rate_min <= self.rate_max && self.rate_max.is_finite()) {
            v.push(format!(
                "rates must satisfy 0 < rate_min <= rate_max, got [{}, {}]",
                self.rate_min, self.rate_max
            ));
        }
        if !(self.arrival_rate >= 0.0 && self.arrival_rate.is_finite()) {
            v.push(format!(
                "arrival_rate must be >= 0, got {}",
                self.arrival_rate
            ));
        }
        if !(0.0..1.0).contains(&self.pf_decay) {
            v.push(format!(
                "pf_decay must lie in [0, 1), got {}",
                self.pf_decay
            ));
        }
        if !(self.policy_temperature > 0.0) || !self.policy_threshold.is_finite() {
            v.push("policy_temperature must be positive (infinite allowed) and policy_threshold finite".into());
        }
        v
    }

    pub fn sample_context<R: Rng + ?Sized>(&self, rng: &mut R) -> BacklogContext {
        let backlogs = (0..self.ues)
            .map(|_| rng.random::<f64>() * self.backlog_max)
            .collect();
        let mean_rates = (0..self.ues)
            .map(|_| self.rate_min + rng.random::<f64>() * (self.rate_max - self.rate_min))
            .collect();
        BacklogContext {
            backlogs,
            mean_rates,
        }
    }

    /// Residual backlogs of the fluid RR model: every backlogged UE gets an
    /// equal share of the slots at its mean rate.
    pub fn fluid_rr(&self, ctx: &BacklogContext) -> Vec<f64> {
        let mut b = ctx.backlogs.clone();
        for _ in 0..self.horizon {
            let active = b.iter().filter(|&&v| v > 0.0).count().max(1) as f64;
            for (q, &r) in b.iter_mut().zip(&ctx.mean_rates) {
                if *q > 0.0 {
                    *q = (*q - r / active).max(0.0);
                }
                *q += self.arrival_rate;
            }
        }
        b
    }

    /// Probability the logging policy picks RR at this context.
    pub fn rr_propensity(&self, ctx: &BacklogContext) -> f64 {
        let score = self.fluid_rr(ctx).into_iter().fold(0.0, f64::max);
        sigmoid(-(score - self.policy_threshold) / self.policy_temperature)
    }

    /// Samples the logged action; returns it with its own propensity.
    pub fn logging_policy<R: Rng + ?Sized>(
        &self,
        ctx: &BacklogContext,
        rng: &mut R,
    ) -> (Action, f64) {
        let p_rr = self.rr_propensity(ctx);
        if rng.random::<f64>() < p_rr {
            (Action::RoundRobin, p_rr)
        } else {
            (Action::ProportionalFair, 1.0 - p_rr)
        }
    }

    /// Final per-UE backlogs after `horizon` slots under `action`.
    pub fn episode<R: Rng + ?Sized>(
        &self,
        ctx: &BacklogContext,
        action: Action,
        rng: &mut R,
    ) -> Vec<f64> {
        let n = ctx.backlogs.len();
        let mut b = ctx.backlogs.clone();
        let mut avg = ctx.mean_rates.clone();
        let mut cursor = 0usize;
        let arrivals = (self.arrival_rate > 0.0)
            .then(|| Poisson::new(self.arrival_rate).expect("positive rate"));
        for _ in 0..self.horizon {
            // Rates are drawn for every UE whatever the action, so both
            // actions see the same channel realization.
            let rates: Vec<f64> = ctx
                .mean_rates
                .iter()
                .map(|&m| match self.rate_law {
                    RateLaw::Constant => m,
                    RateLaw::Exponential => m * rng.sample::<f64, _>(Exp1),
                })
                .collect();
            let pick = match action {
                Action::RoundRobin => {
                    let p = (0..n).map(|i| (cursor + i) % n).find(|&u| b[u] > 0.0);
                    if let Some(u) = p {
                        cursor = (u + 1) % n;
                    }
                    p
                }
                Action::ProportionalFair => {
                    let mut best: Option<(usize, f64)> = None;
                    for u in (0..n).filter(|&u| b[u] > 0.0) {
                        let m = rates[u] / avg[u].max(1e-12);
                        if best.is_none_or(|(_, bm)| m > bm) {
                            best = Some((u, m));
                        }
                    }
                    best.map(|(u, _)| u)
                }
            };
            for u in 0..n {
                let served = if Some(u) == pick {
                    rates[u].min(b[u])
                } else {
                    0.0
                };
                b[u] = (b[u] - served).max(0.0);
                avg[u] = self.pf_decay * avg[u] + (1.0 - self.pf_decay) * served;
            }
            if let Some(dist) = &arrivals {
                for q in b.iter_mut() {
                    *q += dist.sample(rng);
                }
            }
        }
        b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterfactualRunConfig {
    pub beta: f64,
    pub weight_clip: f64,
    /// Logged episodes per trial.
    pub log_size: usize,
    /// Held-out contexts (where the logging policy ran PFCA) per trial.
    pub test_contexts: usize,
    pub scenario: BacklogScenario,
}

impl Default for CounterfactualRunConfig {
    fn default() -> Self {
        Self {
            beta: 0.1,
            weight_clip: conformal_core::counterfactual::DEFAULT_WEIGHT_CLIP,
            log_size: 2000,
            test_contexts: 100,
            scenario: BacklogScenario::default(),
        }
    }
}

impl CounterfactualRunConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = self.scenario.violations();
        if !(self.beta > 0.0 && self.beta < 1.0) {
            v.push(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        if !(self.weight_clip > 0.0) {
            v.push(format!(
                "weight_clip must be positive, got {}",
                self.weight_clip
            ));
        }
        if self.log_size == 0 {
            v.push("log_size must be at least 1".into());
        }
        v
    }
}

/// Interval pair for one UE at one held-out context.
#[derive(Debug, Clone, PartialEq)]
pub struct UeInterval {
    pub context: usize,
    pub ue: usize,
    pub rr_propensity: f64,
    pub truth: f64,
    pub naive: Interval<f64>,
    pub counterfactual: Interval<f64>,
}

/// Context features stored with each logged episode: the raw context
/// followed by the fluid RR prediction for every UE.
pub fn logged_features(scn: &BacklogScenario, ctx: &BacklogContext) -> Vec<f64> {
    let mut x = ctx.to_vec();
    x.extend(scn.fluid_rr(ctx));
    x
}

/// Logs episodes under the logging policy, then builds RR intervals at
/// held-out contexts where the policy chose PFCA.
pub fn run_trial(cfg: &CounterfactualRunConfig, seed: u64, trial: u64) -> Result<Vec<UeInterval>> {
    if let Some(v) = cfg.violations().into_iter().next() {
        return invalid(v);
    }
    let scn = &cfg.scenario;
    let mut ctx_rng: SimRng = stream(seed, trial, "log-context");
    let mut pol_rng: SimRng = stream(seed, trial, "log-policy");
    let mut ep_rng: SimRng = stream(seed, trial, "log-episode");
    let mut logs: Vec<Vec<LoggedEpisode<f64>>> = vec![Vec::with_capacity(cfg.log_size); scn.ues];
    for _ in 0..cfg.log_size {
        let ctx = scn.sample_context(&mut ctx_rng);
        let (action, pi) = scn.logging_policy(&ctx, &mut pol_rng);
        let finals = scn.episode(&ctx, action, &mut ep_rng);
        let x = logged_features(scn, &ctx);
        for (log, kpi) in logs.iter_mut().zip(finals) {
            log.push(LoggedEpisode::new(x.clone(), action, kpi, pi)?);
        }
    }

    let mut test_ctx_rng: SimRng = stream(seed, trial, "test-context");
    let mut test_pol_rng: SimRng = stream(seed, trial, "test-policy");
    let mut truth_rng: SimRng = stream(seed, trial, "test-episode");
    let mut out = Vec::with_capacity(cfg.test_contexts * scn.ues);
    let mut found = 0;
    while found < cfg.test_contexts {
        let ctx = scn.sample_context(&mut test_ctx_rng);
        let (action, _) = scn.logging_policy(&ctx, &mut test_pol_rng);
        if action != Action::ProportionalFair {
            continue;
        }
        let truth = scn.episode(&ctx, Action::RoundRobin, &mut truth_rng);
        let p_rr = scn.rr_propensity(&ctx);
        let x = logged_features(scn, &ctx);
        for (u, log) in logs.iter().enumerate() {
            let predictor = |x: &[f64]| x[2 * scn.ues + u];
            let query = CounterfactualQuery {
                target_action: Action::RoundRobin,
                context: &x,
                target_propensity: p_rr,
                beta: cfg.beta,
                clip: cfg.weight_clip,
                kpi_range: (0.0, f64::INFINITY),
            };
            out.push(UeInterval {
                context: found,
                ue: u,
                rr_propensity: p_rr,
                truth: truth[u],
                naive: naive_interval(&query, log, predictor)?,
                counterfactual: counterfactual_interval(&query, log, predictor)?,
            });
        }
        found += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(ues: usize, horizon: usize) -> BacklogScenario {
        BacklogScenario {
            ues,
            horizon,
            rate_law: RateLaw::Constant,
            ..Default::default()
        }
    }

    fn ctx(backlogs: &[f64], rates: &[f64]) -> BacklogContext {
        BacklogContext {
            backlogs: backlogs.to_vec(),
            mean_rates: rates.to_vec(),
        }
    }

    #[test]
    fn single_ue_hand_count() {
        let s = constant(1, 4);
        let c = ctx(&[10.0], &[1.0]);
        for a in [Action::RoundRobin, Action::ProportionalFair] {
            assert_eq!(s.episode(&c, a, &mut stream(0, 0, "b")), vec![6.0]);
        }
    }

    #[test]
    fn empty_stays_empty() {
        let s = BacklogScenario::default();
        let c = ctx(&[0.0; 4], &[1.0; 4]);
        for a in [Action::RoundRobin, Action::ProportionalFair] {
            assert_eq!(s.episode(&c, a, &mut stream(0, 0, "b")), vec![0.0; 4]);
        }
    }

    #[test]
    fn symmetric_rates_make_policies_agree() {
        let s = constant(2, 7);
        let c = ctx(&[9.0, 4.0], &[1.5, 1.5]);
        let rr = s.episode(&c, Action::RoundRobin, &mut stream(0, 0, "b"));
        let pf = s.episode(&c, Action::ProportionalFair, &mut stream(0, 0, "b"));
        assert_eq!(rr, pf);
    }

    #[test]
    fn round_robin_skips_empty_queues() {
        let s = constant(3, 3);
        let c = ctx(&[2.0, 0.0, 5.0], &[1.0, 1.0, 1.0]);
        // Slots serve UE 0, UE 2, UE 0.
        assert_eq!(
            s.episode(&c, Action::RoundRobin, &mut stream(0, 0, "b")),
            vec![0.0, 0.0, 4.0]
        );
    }

    #[test]
    fn policy_limits_and_bookkeeping() {
        let mut s = BacklogScenario {
            policy_temperature: f64::INFINITY,
            ..Default::default()
        };
        let c = ctx(&[30.0, 1.0, 2.0, 3.0], &[1.0; 4]);
        assert_eq!(s.rr_propensity(&c), 0.5);
        s.policy_temperature = 0.01;
        assert!(s.rr_propensity(&ctx(&[0.0; 4], &[1.0; 4])) > 0.999);
        s.policy_temperature = 4.0;
        let p_rr = s.rr_propensity(&c);
        let mut rng = stream(1, 0, "p");
        for _ in 0..50 {
            let (a, pi) = s.logging_policy(&c, &mut rng);
            let expected = if a == Action::RoundRobin {
                p_rr
            } else {
                1.0 - p_rr
            };
            assert_eq!(pi, expected);
        }
    }

    #[test]
    fn fluid_model_redistributes_slots() {
        let s = constant(2, 4);
        // UE 0 drains after two half-rate slots, then UE 1 gets full slots.
        let r = s.fluid_rr(&ctx(&[1.0, 10.0], &[1.0, 1.0]));
        assert_eq!(r, vec![0.0, 10.0 - 0.5 - 0.5 - 1.0 - 1.0]);
    }

    #[test]
    fn constant_policy_intervals_coincide() {
        let cfg = CounterfactualRunConfig {
            log_size: 200,
            test_contexts: 10,
            scenario: BacklogScenario {
                policy_temperature: f64::INFINITY,
                ..Default::default()
            },
            ..Default::default()
        };
        for r in run_trial(&cfg, 3, 0).unwrap() {
            assert_eq!(r.naive, r.counterfactual);
        }
    }
}
