//! "What if" KPI intervals from logged deployments.
//!
//! Episodes logged under the alternative action are reweighted by the
//! likelihood ratio between contexts where the alternative was *not* run
//! (the query population) and contexts where it was. Weighted split
//! conformal calibration on those episodes then covers the unobserved KPI
//! with probability at least `1 - beta` when the logged propensities are
//! exact.

use std::fmt;
use std::str::FromStr;

use crate::conformal::{CoverageTarget, Threshold};
use crate::error::{contract, CalError, Result};
use crate::scalar::Scalar;

/// Default cap on importance weights.
pub const DEFAULT_WEIGHT_CLIP: f64 = 50.0;

/// Scheduling app chosen by the logging policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    RoundRobin,
    ProportionalFair,
}

impl Action {
    pub fn other(self) -> Self {
        match self {
            Self::RoundRobin => Self::ProportionalFair,
            Self::ProportionalFair => Self::RoundRobin,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::RoundRobin => "RR",
            Self::ProportionalFair => "PFCA",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = CalError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "RR" | "rr" => Ok(Self::RoundRobin),
            "PFCA" | "pfca" => Ok(Self::ProportionalFair),
            other => Err(CalError::Parse(format!("unknown action `{other}`"))),
        }
    }
}

/// One logged deployment: context, chosen app, realized KPI and the
/// probability the logging policy gave to that app.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedEpisode<T> {
    pub context: Vec<T>,
    pub action: Action,
    pub kpi: T,
    pub propensity: T,
}

impl<T: Scalar> LoggedEpisode<T> {
    pub fn new(context: Vec<T>, action: Action, kpi: T, propensity: T) -> Result<Self> {
        if !(propensity > T::zero() && propensity <= T::one()) {
            return contract(format!("propensity {propensity} outside (0,1]"));
        }
        if !kpi.is_finite() {
            return contract("KPI must be finite");
        }
        Ok(Self {
            context,
            action,
            kpi,
            propensity,
        })
    }
}

/// Reads episodes from CSV with columns
/// `episode_id, <context fields...>, action, propensity, kpi`.
/// Every column between `episode_id` and `action` is a context field.
pub fn read_episodes_csv<T: Scalar, R: std::io::Read>(reader: R) -> Result<Vec<LoggedEpisode<T>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CalError::Parse(e.to_string()))?
        .clone();
    let pos = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CalError::Parse(format!("missing column `{name}`")))
    };
    let (c_id, c_act, c_prop, c_kpi) = (
        pos("episode_id")?,
        pos("action")?,
        pos("propensity")?,
        pos("kpi")?,
    );
    if c_act <= c_id {
        return Err(CalError::Parse("`action` must follow `episode_id`".into()));
    }
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CalError::Parse(e.to_string()))?;
        let num = |c: usize| -> Result<T> {
            rec.get(c)
                .unwrap_or("")
                .parse()
                .map_err(|_| CalError::Parse(format!("row {}: bad number in column {c}", row + 1)))
        };
        let context = (c_id + 1..c_act).map(num).collect::<Result<Vec<T>>>()?;
        let action = rec.get(c_act).unwrap_or("").parse()?;
        out.push(LoggedEpisode::new(
            context,
            action,
            num(c_kpi)?,
            num(c_prop)?,
        )?);
    }
    Ok(out)
}

/// Nonconformity scores with positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedCalibSet<T> {
    scores: Vec<T>,
    weights: Vec<T>,
}

impl<T: Scalar> WeightedCalibSet<T> {
    pub fn new(scores: Vec<T>, weights: Vec<T>) -> Result<Self> {
        if scores.is_empty() {
            return Err(CalError::InsufficientData(
                "weighted calibration set is empty".into(),
            ));
        }
        if scores.len() != weights.len() {
            return contract(format!(
                "{} scores but {} weights",
                scores.len(),
                weights.len()
            ));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return contract("scores must be finite");
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > T::zero())) {
            return contract("weights must be finite and positive");
        }
        Ok(Self { scores, weights })
    }

    /// All weights equal to one.
    pub fn unweighted(scores: Vec<T>) -> Result<Self> {
        let w = vec![T::one(); scores.len()];
        Self::new(scores, w)
    }

    pub fn scores(&self) -> &[T] {
        &self.scores
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Likelihood ratio `min((1 - pi) / pi, clip)` for a context where the
/// alternative action had propensity `pi`.
pub fn counterfactual_weight<T: Scalar>(pi_target_action: T, clip: T) -> Result<T> {
    if pi_target_action == T::zero() {
        return Err(CalError::Unevaluable(
            "alternative action has zero propensity at this context".into(),
        ));
    }
    if !(pi_target_action > T::zero() && pi_target_action <= T::one()) {
        return contract(format!("propensity {pi_target_action} outside (0,1]"));
    }
    if !(clip > T::zero()) {
        return contract("weight clip must be positive");
    }
    Ok(((T::one() - pi_target_action) / pi_target_action).min(clip))
}

/// Weighted split conformal threshold with the test point's mass at `+inf`:
/// the smallest score `s` with `sum_{s_i <= s} w_i >= (1 - beta)(sum w_i + w_test)`.
///
/// With unit weights this is exactly the `ceil((n+1)(1-beta))`-th order statistic.
pub fn weighted_conformal_threshold<T: Scalar>(
    calib: &WeightedCalibSet<T>,
    test_weight: T,
    target: CoverageTarget<T>,
) -> Result<Threshold<T>> {
    if !(test_weight.is_finite() && test_weight >= T::zero()) {
        return contract("test weight must be finite and nonnegative");
    }
    let mut pairs: Vec<(T, T)> = calib
        .scores
        .iter()
        .copied()
        .zip(calib.weights.iter().copied())
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores"));
    let total = calib.weights.iter().copied().sum::<T>() + test_weight;
    let needed = (T::one() - target.beta()) * total;
    let mut cum = T::zero();
    for (s, w) in pairs {
        cum = cum + w;
        if cum >= needed {
            return Ok(Threshold::Finite(s));
        }
    }
    Ok(Threshold::IncludeAll)
}

/// Closed KPI interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> Interval<T> {
    pub fn contains(&self, v: T) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn width(&self) -> T {
        self.hi - self.lo
    }
}

/// What the interval is being built for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CounterfactualQuery<'a, T> {
    pub target_action: Action,
    pub context: &'a [T],
    /// `pi(target_action | context)` under the logging policy.
    pub target_propensity: T,
    pub beta: T,
    pub clip: T,
    /// Returned when calibration mass is insufficient.
    pub kpi_range: (T, T),
}

fn interval_from<T: Scalar>(pred: T, thr: Threshold<T>, range: (T, T)) -> Interval<T> {
    match thr {
        Threshold::Finite(l) => Interval {
            lo: pred - l,
            hi: pred + l,
        },
        Threshold::IncludeAll => Interval {
            lo: range.0,
            hi: range.1,
        },
    }
}

fn calibration_scores<T: Scalar, P: Fn(&[T]) -> T>(
    action: Action,
    log: &[LoggedEpisode<T>],
    predictor: &P,
) -> Result<Vec<(T, T)>> {
    let out: Vec<(T, T)> = log
        .iter()
        .filter(|e| e.action == action)
        .map(|e| ((e.kpi - predictor(&e.context)).abs(), e.propensity))
        .collect();
    if out.is_empty() {
        return Err(CalError::Unevaluable(format!(
            "no logged episodes ran {action}"
        )));
    }
    Ok(out)
}

/// Propensity-weighted conformal interval for the KPI the target action
/// would have produced at the query context.
pub fn counterfactual_interval<T: Scalar, P: Fn(&[T]) -> T>(
    query: &CounterfactualQuery<'_, T>,
    log: &[LoggedEpisode<T>],
    predictor: P,
) -> Result<Interval<T>> {
    let target = CoverageTarget::new(query.beta)?;
    let raw = calibration_scores(query.target_action, log, &predictor)?;
    let mut scores = Vec::with_capacity(raw.len());
    let mut weights = Vec::with_capacity(raw.len());
    for (s, pi) in raw {
        let w = counterfactual_weight(pi, query.clip)?;
        // pi = 1 means the query population never contains this context.
        if w > T::zero() {
            scores.push(s);
            weights.push(w);
        }
    }
    if scores.is_empty() {
        return Err(CalError::Unevaluable(
            "every calibration episode has zero counterfactual weight".into(),
        ));
    }
    let test_weight = counterfactual_weight(query.target_propensity, query.clip)?;
    let calib = WeightedCalibSet::new(scores, weights)?;
    let thr = weighted_conformal_threshold(&calib, test_weight, target)?;
    Ok(interval_from(
        predictor(query.context),
        thr,
        query.kpi_range,
    ))
}

/// Standard split conformal interval ignoring the selection bias.
pub fn naive_interval<T: Scalar, P: Fn(&[T]) -> T>(
    query: &CounterfactualQuery<'_, T>,
    log: &[LoggedEpisode<T>],
    predictor: P,
) -> Result<Interval<T>> {
    let target = CoverageTarget::new(query.beta)?;
    let scores: Vec<T> = calibration_scores(query.target_action, log, &predictor)?
        .into_iter()
        .map(|(s, _)| s)
        .collect();
    let calib = WeightedCalibSet::unweighted(scores)?;
    let thr = weighted_conformal_threshold(&calib, T::one(), target)?;
    Ok(interval_from(
        predictor(query.context),
        thr,
        query.kpi_range,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::{conformal_threshold, CalibrationSet};
    use proptest::prelude::*;

    fn ep(x: f64, action: Action, kpi: f64, pi: f64) -> LoggedEpisode<f64> {
        LoggedEpisode::new(vec![x], action, kpi, pi).unwrap()
    }

    fn query(ctx: &[f64], pi: f64, beta: f64) -> CounterfactualQuery<'_, f64> {
        CounterfactualQuery {
            target_action: Action::RoundRobin,
            context: ctx,
            target_propensity: pi,
            beta,
            clip: 100.0,
            kpi_range: (0.0, 100.0),
        }
    }

    #[test]
    fn weight_examples() {
        assert_eq!(counterfactual_weight(0.5, 100.0).unwrap(), 1.0);
        assert!((counterfactual_weight(0.2f64, 100.0).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(counterfactual_weight(0.001, 20.0).unwrap(), 20.0);
        assert!(matches!(
            counterfactual_weight(0.0, 20.0),
            Err(CalError::Unevaluable(_))
        ));
        assert!(counterfactual_weight(1.5, 20.0).is_err());
    }

    #[test]
    fn weighted_threshold_examples() {
        let beta = |b| CoverageTarget::new(b).unwrap();
        let c = WeightedCalibSet::new(vec![1.0, 2.0], vec![1.0, 3.0]).unwrap();
        assert_eq!(
            weighted_conformal_threshold(&c, 1.0, beta(0.5)).unwrap(),
            Threshold::Finite(2.0)
        );
        let c = WeightedCalibSet::unweighted(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(
            weighted_conformal_threshold(&c, 1.0, beta(0.4)).unwrap(),
            Threshold::Finite(3.0)
        );
        assert_eq!(
            weighted_conformal_threshold(&c, 1.0, beta(0.1)).unwrap(),
            Threshold::IncludeAll
        );
        assert!(WeightedCalibSet::<f64>::new(vec![], vec![]).is_err());
        assert!(WeightedCalibSet::new(vec![1.0], vec![0.0]).is_err());
        assert!(WeightedCalibSet::new(vec![1.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn constant_policy_matches_naive() {
        let log: Vec<_> = (0..30)
            .map(|i| ep(i as f64, Action::RoundRobin, (i * 7 % 11) as f64, 0.5))
            .collect();
        let pred = |x: &[f64]| x[0] * 0.1;
        let q = query(&[3.0], 0.5, 0.2);
        let a = counterfactual_interval(&q, &log, pred).unwrap();
        let b = naive_interval(&q, &log, pred).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_episode_is_include_all() {
        let log = vec![ep(0.0, Action::RoundRobin, 3.0, 0.5)];
        for beta in [0.49, 0.3, 0.1] {
            let i = counterfactual_interval(&query(&[0.0], 0.5, beta), &log, |_| 2.0).unwrap();
            assert_eq!(i, Interval { lo: 0.0, hi: 100.0 });
        }
        // mass 1/2 reaches 1 - beta exactly at beta = 1/2
        let i = counterfactual_interval(&query(&[0.0], 0.5, 0.5), &log, |_| 2.0).unwrap();
        assert_eq!(i, Interval { lo: 1.0, hi: 3.0 });
    }

    #[test]
    fn exact_predictor_gives_point_interval() {
        let log: Vec<_> = (0..20)
            .map(|i| ep(i as f64, Action::RoundRobin, 2.0 * i as f64, 0.5))
            .collect();
        let i = counterfactual_interval(&query(&[4.0], 0.5, 0.1), &log, |x| 2.0 * x[0]).unwrap();
        assert_eq!(i, Interval { lo: 8.0, hi: 8.0 });
    }

    #[test]
    fn missing_action_is_unevaluable() {
        let log = vec![ep(0.0, Action::ProportionalFair, 3.0, 0.5)];
        let q = query(&[0.0], 0.5, 0.1);
        assert!(matches!(
            counterfactual_interval(&q, &log, |_| 0.0),
            Err(CalError::Unevaluable(_))
        ));
        assert!(matches!(
            naive_interval(&q, &log, |_| 0.0),
            Err(CalError::Unevaluable(_))
        ));
    }

    #[test]
    fn reads_episode_csv() {
        let text =
            "episode_id,b0,b1,action,propensity,kpi\n0,1.5,2,RR,0.25,3.5\n1,0,0,PFCA,0.75,1\n";
        let eps: Vec<LoggedEpisode<f64>> = read_episodes_csv(text.as_bytes()).unwrap();
        assert_eq!(eps.len(), 2);
        assert_eq!(eps[0].context, vec![1.5, 2.0]);
        assert_eq!(eps[0].action, Action::RoundRobin);
        assert_eq!(eps[1].propensity, 0.75);
        let bad = "episode_id,action,propensity,kpi\n0,XX,0.5,1\n";
        assert!(read_episodes_csv::<f64, _>(bad.as_bytes()).is_err());
        let bad = "episode_id,action,propensity,kpi\n0,RR,0,1\n";
        assert!(read_episodes_csv::<f64, _>(bad.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn unit_weights_reduce_to_split_conformal(
            scores in prop::collection::vec(-50.0f64..50.0, 1..60),
            beta in 0.01f64..0.99,
        ) {
            let t = CoverageTarget::new(beta).unwrap();
            let w = weighted_conformal_threshold(
                &WeightedCalibSet::unweighted(scores.clone()).unwrap(), 1.0, t).unwrap();
            let u = conformal_threshold(&CalibrationSet::new(scores).unwrap(), t);
            prop_assert_eq!(w, u);
        }

        #[test]
        fn larger_beta_never_widens(
            scores in prop::collection::vec(0.0f64..10.0, 1..40),
            weights in prop::collection::vec(0.1f64..5.0, 40),
            b1 in 0.01f64..0.99,
            b2 in 0.01f64..0.99,
            tw in 0.1f64..5.0,
        ) {
            let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
            let c = WeightedCalibSet::new(scores.clone(), weights[..scores.len()].to_vec()).unwrap();
            let wide = weighted_conformal_threshold(&c, tw, CoverageTarget::new(lo).unwrap()).unwrap();
            let narrow = weighted_conformal_threshold(&c, tw, CoverageTarget::new(hi).unwrap()).unwrap();
            match (wide, narrow) {
                (Threshold::Finite(a), Threshold::Finite(b)) => prop_assert!(b <= a),
                (Threshold::Finite(_), Threshold::IncludeAll) => prop_assert!(false),
                _ => {}
            }
        }

        #[test]
        fn clip_above_max_ratio_is_inert(
            pis in prop::collection::vec(0.05f64..0.95, 2..30),
            test_pi in 0.05f64..0.95,
        ) {
            let log: Vec<_> = pis.iter().enumerate()
                .map(|(i, &p)| ep(i as f64, Action::RoundRobin, (i % 5) as f64, p))
                .collect();
            let ctx = [1.0];
            let mut q = query(&ctx, test_pi, 0.2);
            q.clip = 19.0 + 1e-9; // (1 - 0.05) / 0.05
            let a = counterfactual_interval(&q, &log, |_| 1.0).unwrap();
            q.clip = f64::INFINITY;
            let b = counterfactual_interval(&q, &log, |_| 1.0).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
