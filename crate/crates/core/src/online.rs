//! Deployment-time threshold adaptation.
//!
//! After each decision the realized risk `R_t` moves the threshold by
//! `lambda_{t+1} = lambda_t - eta (R_t - alpha)`. With a constant step the
//! updates telescope: `sum_t (R_t - alpha) = (lambda_1 - lambda_{T+1}) / eta`
//! for every risk sequence, adversarial or not, so a bounded threshold forces
//! the long-run average risk to `alpha`. No clipping is applied to the
//! threshold since it would break that identity.
//!
//! The localized variant replaces the scalar with `lambda_t(x) = <theta_t, phi(x)>`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{contract, CalError, Result};
use crate::scalar::Scalar;

/// Step-size schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepSchedule {
    #[default]
    Constant,
    /// `eta_t = eta / sqrt(t)`; the telescoping identity becomes an inequality.
    InverseSqrt,
}

impl StepSchedule {
    fn step<T: Scalar>(&self, eta: T, t: u64) -> T {
        match self {
            Self::Constant => eta,
            Self::InverseSqrt => eta / T::from_u64(t.max(1)).expect("round index").sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry<T> {
    pub t: u64,
    /// Threshold in force during round `t`.
    pub lambda: T,
    pub risk: T,
}

/// A round that produced no risk feedback.
#[derive(Debug, Clone, PartialEq)]
pub struct SkipRecord {
    pub t: u64,
    pub reason: String,
}

fn check_params<T: Scalar>(eta: T, alpha: T) -> Result<()> {
    if !(eta > T::zero()) || !eta.is_finite() {
        return contract(format!("step size must be positive, got {eta}"));
    }
    // alpha = 0 is allowed: the threshold then drifts toward include-all.
    if !(alpha >= T::zero() && alpha < T::one()) {
        return contract(format!("target risk must lie in [0,1), got {alpha}"));
    }
    Ok(())
}

fn check_risk<T: Scalar>(risk: T) -> Result<()> {
    if risk.is_finite() {
        Ok(())
    } else {
        contract(format!("risk feedback must be finite, got {risk}"))
    }
}

/// Global online conformal threshold on the confidence scale.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineThreshold<T> {
    lambda: T,
    eta: T,
    alpha: T,
    schedule: StepSchedule,
    /// Index of the next round, starting at 1.
    t: u64,
    history: Option<Vec<TraceEntry<T>>>,
    skips: Vec<SkipRecord>,
}

impl<T: Scalar> OnlineThreshold<T> {
    pub fn new(lambda: T, eta: T, alpha: T) -> Result<Self> {
        check_params(eta, alpha)?;
        if !lambda.is_finite() {
            return contract("initial threshold must be finite");
        }
        Ok(Self {
            lambda,
            eta,
            alpha,
            schedule: StepSchedule::Constant,
            t: 1,
            history: None,
            skips: Vec::new(),
        })
    }

    pub fn with_schedule(mut self, schedule: StepSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    /// Record `(t, lambda_t, R_t)` for every update.
    pub fn with_history(mut self) -> Self {
        self.history = Some(Vec::new());
        self
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn eta(&self) -> T {
        self.eta
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn round(&self) -> u64 {
        self.t
    }

    pub fn history(&self) -> Option<&[TraceEntry<T>]> {
        self.history.as_deref()
    }

    pub fn skips(&self) -> &[SkipRecord] {
        &self.skips
    }

    /// `lambda <- lambda - eta_t (risk - alpha)`.
    pub fn update(&mut self, risk: T) -> Result<()> {
        check_risk(risk)?;
        if let Some(h) = self.history.as_mut() {
            h.push(TraceEntry {
                t: self.t,
                lambda: self.lambda,
                risk,
            });
        }
        self.lambda = self.lambda - self.schedule.step(self.eta, self.t) * (risk - self.alpha);
        self.t += 1;
        Ok(())
    }

    /// Leaves the threshold untouched and audits the missing feedback.
    pub fn skip_round(&mut self, reason: impl Into<String>) {
        self.skips.push(SkipRecord {
            t: self.t,
            reason: reason.into(),
        });
    }

    /// Flat `key = value` checkpoint.
    pub fn to_snapshot(&self) -> String {
        let mut s = String::new();
        writeln!(s, "kind = global").unwrap();
        writeln!(s, "lambda = {}", self.lambda).unwrap();
        write_common(&mut s, self.eta, self.alpha, self.t, self.schedule);
        s
    }

    pub fn from_snapshot(text: &str) -> Result<Self> {
        let kv = parse_kv(text)?;
        expect_kind(&kv, "global")?;
        let (eta, alpha, t, schedule) = read_common(&kv)?;
        let mut s = Self::new(get(&kv, "lambda")?, eta, alpha)?;
        s.t = t;
        s.schedule = schedule;
        Ok(s)
    }
}

/// Maps a context to a fixed-length feature vector.
pub trait FeatureMap {
    type Context: ?Sized;

    fn dim(&self) -> usize;

    fn features<T: Scalar>(&self, ctx: &Self::Context) -> Result<Vec<T>>;
}

/// Single constant feature; the localized update then equals the global one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConstantFeature;

impl FeatureMap for ConstantFeature {
    type Context = ();

    fn dim(&self) -> usize {
        1
    }

    fn features<T: Scalar>(&self, _: &()) -> Result<Vec<T>> {
        Ok(vec![T::one()])
    }
}

/// One-hot indicator of a discrete bin (e.g. a location cell).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OneHotBins {
    pub bins: usize,
}

impl FeatureMap for OneHotBins {
    type Context = usize;

    fn dim(&self) -> usize {
        self.bins
    }

    fn features<T: Scalar>(&self, bin: &usize) -> Result<Vec<T>> {
        if *bin >= self.bins {
            return contract(format!("bin {bin} outside 0..{}", self.bins));
        }
        let mut v = vec![T::zero(); self.bins];
        v[*bin] = T::one();
        Ok(v)
    }
}

/// Gaussian bumps `exp(-||x - c||^2 / (2 w^2))` around fixed centers.
/// Every feature lies in (0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RadialBasis {
    pub centers: Vec<Vec<f64>>,
    pub width: f64,
}

impl FeatureMap for RadialBasis {
    type Context = [f64];

    fn dim(&self) -> usize {
        self.centers.len()
    }

    fn features<T: Scalar>(&self, x: &[f64]) -> Result<Vec<T>> {
        if !(self.width > 0.0) {
            return contract("radial basis width must be positive");
        }
        self.centers
            .iter()
            .map(|c| {
                if c.len() != x.len() {
                    return contract(format!(
                        "context has {} entries, centers have {}",
                        x.len(),
                        c.len()
                    ));
                }
                let d2: f64 = c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                Ok(T::lit((-d2 / (2.0 * self.width * self.width)).exp()))
            })
            .collect()
    }
}

/// Input-dependent threshold `lambda_t(x) = <theta_t, phi(x)>`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizedThreshold<T, F> {
    theta: Vec<T>,
    feature_map: F,
    eta: T,
    alpha: T,
    t: u64,
    skips: Vec<SkipRecord>,
}

impl<T: Scalar, F: FeatureMap> LocalizedThreshold<T, F> {
    pub fn new(theta: Vec<T>, feature_map: F, eta: T, alpha: T) -> Result<Self> {
        check_params(eta, alpha)?;
        if theta.len() != feature_map.dim() {
            return contract(format!(
                "theta has {} weights but the feature map has dimension {}",
                theta.len(),
                feature_map.dim()
            ));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return contract("initial weights must be finite");
        }
        Ok(Self {
            theta,
            feature_map,
            eta,
            alpha,
            t: 1,
            skips: Vec::new(),
        })
    }

    /// Every weight set to `lambda`.
    pub fn uniform(lambda: T, feature_map: F, eta: T, alpha: T) -> Result<Self> {
        let theta = vec![lambda; feature_map.dim()];
        Self::new(theta, feature_map, eta, alpha)
    }

    pub fn theta(&self) -> &[T] {
        &self.theta
    }

    pub fn feature_map(&self) -> &F {
        &self.feature_map
    }

    pub fn eta(&self) -> T {
        self.eta
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn round(&self) -> u64 {
        self.t
    }

    pub fn skips(&self) -> &[SkipRecord] {
        &self.skips
    }

    fn phi(&self, ctx: &F::Context) -> Result<Vec<T>> {
        let phi: Vec<T> = self.feature_map.features(ctx)?;
        if phi.len() != self.theta.len() {
            return contract(format!(
                "feature vector has {} entries, theta has {}",
                phi.len(),
                self.theta.len()
            ));
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return contract("feature map produced a non-finite value");
        }
        Ok(phi)
    }

    pub fn threshold(&self, ctx: &F::Context) -> Result<T> {
        let phi = self.phi(ctx)?;
        Ok(self.theta.iter().zip(&phi).map(|(&a, &b)| a * b).sum())
    }

    /// `theta <- theta - eta (risk - alpha) phi(x)`.
    pub fn update(&mut self, ctx: &F::Context, risk: T) -> Result<()> {
        check_risk(risk)?;
        let phi = self.phi(ctx)?;
        let step = self.eta * (risk - self.alpha);
        for (w, f) in self.theta.iter_mut().zip(phi) {
            *w = *w - step * f;
        }
        self.t += 1;
        Ok(())
    }

    pub fn skip_round(&mut self, reason: impl Into<String>) {
        self.skips.push(SkipRecord {
            t: self.t,
            reason: reason.into(),
        });
    }

    /// Flat `key = value` checkpoint; `theta` is comma separated. The
    /// feature map itself is not serialized.
    pub fn to_snapshot(&self) -> String {
        let mut s = String::new();
        writeln!(s, "kind = localized").unwrap();
        let theta: Vec<String> = self.theta.iter().map(ToString::to_string).collect();
        writeln!(s, "theta = {}", theta.join(",")).unwrap();
        write_common(&mut s, self.eta, self.alpha, self.t, StepSchedule::Constant);
        s
    }

    pub fn from_snapshot(text: &str, feature_map: F) -> Result<Self> {
        let kv = parse_kv(text)?;
        expect_kind(&kv, "localized")?;
        let (eta, alpha, t, _) = read_common(&kv)?;
        let raw = kv
            .get("theta")
            .ok_or_else(|| CalError::Parse("missing key `theta`".into()))?;
        let theta = raw
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<T>()
                    .map_err(|_| CalError::Parse(format!("bad theta entry `{v}`")))
            })
            .collect::<Result<Vec<T>>>()?;
        let mut s = Self::new(theta, feature_map, eta, alpha)?;
        s.t = t;
        Ok(s)
    }
}

fn write_common<T: Scalar>(s: &mut String, eta: T, alpha: T, t: u64, schedule: StepSchedule) {
    writeln!(s, "eta = {eta}").unwrap();
    writeln!(s, "alpha = {alpha}").unwrap();
    writeln!(s, "t = {t}").unwrap();
    let sched = match schedule {
        StepSchedule::Constant => "constant",
        StepSchedule::InverseSqrt => "inverse_sqrt",
    };
    writeln!(s, "schedule = {sched}").unwrap();
}

fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut kv = BTreeMap::new();
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CalError::Parse(format!("expected `key = value`, got `{line}`")))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(kv)
}

fn get<V: std::str::FromStr>(kv: &BTreeMap<String, String>, key: &str) -> Result<V> {
    kv.get(key)
        .ok_or_else(|| CalError::Parse(format!("missing key `{key}`")))?
        .parse()
        .map_err(|_| CalError::Parse(format!("bad value for `{key}`")))
}

fn expect_kind(kv: &BTreeMap<String, String>, kind: &str) -> Result<()> {
    match kv.get("kind").map(String::as_str) {
        Some(k) if k == kind => Ok(()),
        other => Err(CalError::Parse(format!(
            "snapshot kind {other:?}, expected `{kind}`"
        ))),
    }
}

fn read_common<T: Scalar>(kv: &BTreeMap<String, String>) -> Result<(T, T, u64, StepSchedule)> {
    let schedule = match kv.get("schedule").map(String::as_str) {
        None | Some("constant") => StepSchedule::Constant,
        Some("inverse_sqrt") => StepSchedule::InverseSqrt,
        Some(other) => return Err(CalError::Parse(format!("unknown schedule `{other}`"))),
    };
    Ok((get(kv, "eta")?, get(kv, "alpha")?, get(kv, "t")?, schedule))
}

/// Average of a risk trace and its signed deviation from `alpha`.
pub fn long_run_risk<T: Scalar>(trace: &[T], alpha: T) -> Result<(T, T)> {
    if trace.is_empty() {
        return Err(CalError::InsufficientData("risk trace is empty".into()));
    }
    let avg = trace.iter().copied().sum::<T>() / T::from_count(trace.len());
    Ok((avg, avg - alpha))
}

/// Deviation from `alpha` implied by the threshold drift:
/// `(lambda_first - lambda_last) / (eta T)` for a constant step.
pub fn telescoped_deviation<T: Scalar>(
    lambda_first: T,
    lambda_last: T,
    eta: T,
    rounds: usize,
) -> T {
    (lambda_first - lambda_last) / (eta * T::from_count(rounds))
}
