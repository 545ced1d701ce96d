//! Beam candidate selection for a UE moving across location bins.
//!
//! Each bin has its own angular response: line-of-sight bins see a wide,
//! steady beam pattern, blocked bins a narrow and strongly shadowed one.
//! The predictor keeps a per-bin moving average of the measured per-beam
//! SNRs and offers every beam whose relative confidence clears a threshold.

use conformal_core::online::{LocalizedThreshold, OneHotBins, OnlineThreshold};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::{stream, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinProfile {
    /// Mean direction of the best beam, in beam-index units.
    pub direction: f64,
    /// Per-step Gaussian wobble of the direction.
    pub direction_jitter: f64,
    /// Angular width of the response, in beams.
    pub width: f64,
    /// Linear SNR of a perfectly aligned beam.
    pub peak_snr: f64,
    /// Log-normal shadowing standard deviation, per beam and step.
    pub shadowing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamEnvironment {
    pub codebook_size: usize,
    pub bins: Vec<BinProfile>,
    /// Probability the UE stays in its bin for another step; otherwise it
    /// moves to a neighbouring bin (reflecting at the ends).
    pub stay_probability: f64,
    pub snr_floor: f64,
    /// Decay of the per-bin SNR moving average.
    pub ema_decay: f64,
}

impl Default for BeamEnvironment {
    fn default() -> Self {
        let los = |direction: f64| BinProfile {
            direction,
            direction_jitter: 0.1,
            width: 2.5,
            peak_snr: 100.0,
            shadowing: 0.1,
        };
        let nlos = |direction: f64| BinProfile {
            direction,
            direction_jitter: 0.6,
            width: 0.8,
            peak_snr: 30.0,
            shadowing: 0.7,
        };
        Self {
            codebook_size: 16,
            bins: vec![
                los(2.0),
                los(4.5),
                nlos(7.0),
                los(9.5),
                nlos(11.0),
                los(13.5),
            ],
            stay_probability: 0.95,
            snr_floor: 0.01,
            ema_decay: 0.9,
        }
    }
}

impl BeamEnvironment {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.codebook_size < 2 {
            v.push(format!(
                "codebook_size must be >= 2, got {}",
                self.codebook_size
            ));
        }
        if self.bins.is_empty() {
            v.push("at least one location bin is required".into());
        }
        for (i, b) in self.bins.iter().enumerate() {
            if !(b.width > 0.0
                && b.peak_snr > 0.0
                && b.shadowing >= 0.0
                && b.direction_jitter >= 0.0)
                || !b.direction.is_finite()
            {
                v.push(format!(
                    "bin {i}: width and peak_snr must be positive, shadowing and jitter non-negative"
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.stay_probability) {
            v.push(format!(
                "stay_probability must be a probability, got {}",
                self.stay_probability
            ));
        }
        if !(self.snr_floor > 0.0 && self.snr_floor.is_finite()) {
            v.push(format!(
                "snr_floor must be positive, got {}",
                self.snr_floor
            ));
        }
        if !(self.ema_decay >= 0.0 && self.ema_decay < 1.0) {
            v.push(format!(
                "ema_decay must lie in [0, 1), got {}",
                self.ema_decay
            ));
        }
        v
    }

    /// Per-beam SNRs seen from `bin` in one step.
    pub fn sample_snrs<R: Rng + ?Sized>(&self, bin: usize, rng: &mut R) -> Vec<f64> {
        let p = &self.bins[bin];
        let d = p.direction + p.direction_jitter * rng.sample::<f64, _>(StandardNormal);
        (0..self.codebook_size)
            .map(|k| {
                let off = k as f64 - d;
                let gain = (-off * off / (2.0 * p.width * p.width)).exp();
                let shadow = (p.shadowing * rng.sample::<f64, _>(StandardNormal)).exp();
                p.peak_snr * gain * shadow + self.snr_floor
            })
            .collect()
    }

    pub fn next_bin<R: Rng + ?Sized>(&self, bin: usize, rng: &mut R) -> usize {
        let last = self.bins.len() - 1;
        if last == 0 || rng.random::<f64>() < self.stay_probability {
            return bin;
        }
        let up = rng.random::<bool>();
        match (bin, up) {
            (0, _) => 1,
            (b, _) if b == last => last - 1,
            (b, true) => b + 1,
            (b, false) => b - 1,
        }
    }
}

/// Per-bin moving average of measured SNRs.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamPredictor {
    ema: Vec<Vec<f64>>,
    decay: f64,
}

impl BeamPredictor {
    /// Starts every bin with a flat profile, so initial confidences are all 1.
    pub fn new(bins: usize, codebook_size: usize, decay: f64) -> Self {
        Self {
            ema: vec![vec![1.0; codebook_size]; bins],
            decay,
        }
    }

    /// `ema_k / max_j ema_j` for the given bin, each in (0, 1].
    pub fn confidences(&self, bin: usize) -> Vec<f64> {
        let e = &self.ema[bin];
        let top = e.iter().copied().fold(f64::MIN_POSITIVE, f64::max);
        e.iter().map(|v| v / top).collect()
    }

    pub fn observe(&mut self, bin: usize, snrs: &[f64]) {
        for (e, &s) in self.ema[bin].iter_mut().zip(snrs) {
            *e = self.decay * *e + (1.0 - self.decay) * s;
        }
    }
}

/// Beams whose confidence reaches `lambda`.
pub fn candidate_set(confidences: &[f64], lambda: f64) -> Vec<usize> {
    (0..confidences.len())
        .filter(|&k| confidences[k] >= lambda)
        .collect()
}

/// Normalized SNR loss of the best beam in `set` against the best overall.
/// An empty set loses everything.
pub fn snr_degradation(snrs: &[f64], set: &[usize]) -> f64 {
    let best = snrs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let in_set = set
        .iter()
        .map(|&k| snrs[k])
        .fold(f64::NEG_INFINITY, f64::max);
    if !in_set.is_finite() || !(best > 0.0) {
        return 1.0;
    }
    ((best - in_set) / best).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamRunConfig {
    pub alpha: f64,
    pub eta: f64,
    pub steps: usize,
    /// Starting threshold for both methods.
    pub initial_lambda: f64,
    /// Extra target levels whose final average set sizes are reported.
    pub alpha_sweep: Vec<f64>,
    pub environment: BeamEnvironment,
}

impl Default for BeamRunConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            eta: 0.1,
            steps: 10_000,
            initial_lambda: 0.5,
            alpha_sweep: vec![0.05, 0.1, 0.15, 0.2, 0.3],
            environment: BeamEnvironment::default(),
        }
    }
}

impl BeamRunConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = self.environment.violations();
        if !(0.0..1.0).contains(&self.alpha) {
            v.push(format!("alpha must lie in [0, 1), got {}", self.alpha));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            v.push(format!("eta must be positive, got {}", self.eta));
        }
        for &a in &self.alpha_sweep {
            if !(0.0..1.0).contains(&a) {
                v.push(format!("alpha_sweep entry {a} outside [0, 1)"));
            }
        }
        if !self.initial_lambda.is_finite() {
            v.push("initial_lambda must be finite".into());
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BeamStep {
    pub t: usize,
    pub bin: usize,
    pub lambda_global: f64,
    pub lambda_local: f64,
    pub set_size_global: usize,
    pub set_size_local: usize,
    pub risk_global: f64,
    pub risk_local: f64,
}

/// Global and bin-localized online calibration driven by the same UE path,
/// SNR draws and predictor.
pub fn run_trial(cfg: &BeamRunConfig, seed: u64, trial: u64) -> Result<Vec<BeamStep>> {
    if let Some(v) = cfg.violations().into_iter().next() {
        return invalid(v);
    }
    let env = &cfg.environment;
    let nb = env.bins.len();
    let mut mobility: SimRng = stream(seed, trial, "beam-mobility");
    let mut radio: SimRng = stream(seed, trial, "beam-radio");
    let mut global = OnlineThreshold::new(cfg.initial_lambda, cfg.eta, cfg.alpha)?;
    let mut local = LocalizedThreshold::uniform(
        cfg.initial_lambda,
        OneHotBins { bins: nb },
        cfg.eta,
        cfg.alpha,
    )?;
    let mut predictor = BeamPredictor::new(nb, env.codebook_size, env.ema_decay);
    let mut bin = mobility.random_range(0..nb);
    let mut out = Vec::with_capacity(cfg.steps);
    for t in 0..cfg.steps {
        let conf = predictor.confidences(bin);
        let lg = global.lambda();
        let ll = local.threshold(&bin)?;
        let set_g = candidate_set(&conf, lg);
        let set_l = candidate_set(&conf, ll);
        let snrs = env.sample_snrs(bin, &mut radio);
        let rg = snr_degradation(&snrs, &set_g);
        let rl = snr_degradation(&snrs, &set_l);
        global.update(rg)?;
        local.update(&bin, rl)?;
        predictor.observe(bin, &snrs);
        out.push(BeamStep {
            t,
            bin,
            lambda_global: lg,
            lambda_local: ll,
            set_size_global: set_g.len(),
            set_size_local: set_l.len(),
            risk_global: rg,
            risk_local: rl,
        });
        bin = env.next_bin(bin, &mut mobility);
    }
    Ok(out)
}
