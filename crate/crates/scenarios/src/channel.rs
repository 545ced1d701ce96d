//! Two-mode Markov-modulated AR(1) channel gain.
//!
//! The channel either stays near a stable level or drops sharply into a
//! fade, which makes the one-step-ahead gain distribution bimodal.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Stable,
    Fade,
}

/// `y' = a y + b + sigma * N(0, 1)` while in a given mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeDynamics {
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
}

impl ModeDynamics {
    fn mean(&self, y: f64) -> f64 {
        self.a * y + self.b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    pub mode: Mode,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelProcess {
    pub stable: ModeDynamics,
    pub fade: ModeDynamics,
    /// `P(Stable -> Fade)` per step.
    pub p_stable_to_fade: f64,
    /// `P(Fade -> Stable)` per step.
    pub p_fade_to_stable: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for ChannelProcess {
    fn default() -> Self {
        Self {
            stable: ModeDynamics {
                a: 0.9,
                b: 0.1,
                sigma: 0.03,
            },
            fade: ModeDynamics {
                a: 0.2,
                b: 0.04,
                sigma: 0.02,
            },
            p_stable_to_fade: 0.1,
            p_fade_to_stable: 0.25,
            y_min: 0.01,
            y_max: 1.5,
        }
    }
}

impl ChannelProcess {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.y_min > 0.0 && self.y_min < self.y_max && self.y_max.is_finite()) {
            v.push(format!(
                "channel bounds must satisfy 0 < y_min < y_max, got [{}, {}]",
                self.y_min, self.y_max
            ));
        }
        for (name, p) in [
            ("p_stable_to_fade", self.p_stable_to_fade),
            ("p_fade_to_stable", self.p_fade_to_stable),
        ] {
            if !(0.0..=1.0).contains(&p) {
                v.push(format!("{name} must be a probability, got {p}"));
            }
        }
        for (name, d) in [("stable", self.stable), ("fade", self.fade)] {
            if !(d.sigma >= 0.0) || !d.a.is_finite() || !d.b.is_finite() {
                v.push(format!("{name} dynamics must be finite with sigma >= 0"));
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().first() {
            Some(msg) => invalid(msg.clone()),
            None => Ok(()),
        }
    }

    /// Rows `[P(m -> Stable), P(m -> Fade)]` for `m` in (Stable, Fade).
    pub fn transition_matrix(&self) -> [[f64; 2]; 2] {
        [
            [1.0 - self.p_stable_to_fade, self.p_stable_to_fade],
            [self.p_fade_to_stable, 1.0 - self.p_fade_to_stable],
        ]
    }

    /// Stationary `(P(Stable), P(Fade))`; uniform when the chain never moves.
    pub fn stationary(&self) -> (f64, f64) {
        let s = self.p_stable_to_fade + self.p_fade_to_stable;
        if s == 0.0 {
            (0.5, 0.5)
        } else {
            (self.p_fade_to_stable / s, self.p_stable_to_fade / s)
        }
    }

    fn dynamics(&self, mode: Mode) -> &ModeDynamics {
        match mode {
            Mode::Stable => &self.stable,
            Mode::Fade => &self.fade,
        }
    }

    fn switch_prob(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Stable => self.p_stable_to_fade,
            Mode::Fade => self.p_fade_to_stable,
        }
    }

    fn clip(&self, y: f64) -> f64 {
        y.clamp(self.y_min, self.y_max)
    }

    /// One step: the mode switches first, then the gain follows the new mode.
    pub fn step<R: Rng + ?Sized>(&self, state: ChannelState, rng: &mut R) -> ChannelState {
        let p = self.switch_prob(state.mode);
        let switch = p > 0.0 && rng.random::<f64>() < p;
        let mode = match (state.mode, switch) {
            (m, false) => m,
            (Mode::Stable, true) => Mode::Fade,
            (Mode::Fade, true) => Mode::Stable,
        };
        let d = self.dynamics(mode);
        let noise: f64 = if d.sigma > 0.0 {
            d.sigma * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        ChannelState {
            mode,
            gain: self.clip(d.mean(state.gain) + noise),
        }
    }

    /// `len` successive states starting from (and including) `start`.
    pub fn sample_trajectory<R: Rng + ?Sized>(
        &self,
        start: ChannelState,
        len: usize,
        rng: &mut R,
    ) -> Result<Vec<ChannelState>> {
        if !(start.gain >= self.y_min && start.gain <= self.y_max) {
            return invalid(format!(
                "initial gain {} outside [{}, {}]",
                start.gain, self.y_min, self.y_max
            ));
        }
        let mut out = Vec::with_capacity(len);
        let mut s = start;
        for i in 0..len {
            if i > 0 {
                s = self.step(s, rng);
            }
            out.push(s);
        }
        Ok(out)
    }

    /// Draws a mode from the stationary law and runs `burn_in` steps from
    /// that mode's fixed point.
    pub fn stationary_start<R: Rng + ?Sized>(&self, burn_in: usize, rng: &mut R) -> ChannelState {
        let (_, p_fade) = self.stationary();
        let mode = if rng.random::<f64>() < p_fade {
            Mode::Fade
        } else {
            Mode::Stable
        };
        let d = self.dynamics(mode);
        let level = if (1.0 - d.a).abs() > 1e-9 {
            d.b / (1.0 - d.a)
        } else {
            self.y_min
        };
        let mut s = ChannelState {
            mode,
            gain: self.clip(level),
        };
        for _ in 0..burn_in {
            s = self.step(s, rng);
        }
        s
    }

    /// `E[y_{t+1} | state]`, ignoring the clipping at the bounds.
    pub fn predictive_mean(&self, state: ChannelState) -> f64 {
        let p = self.switch_prob(state.mode);
        let other = match state.mode {
            Mode::Stable => Mode::Fade,
            Mode::Fade => Mode::Stable,
        };
        let stay = self.dynamics(state.mode).mean(state.gain);
        let go = self.dynamics(other).mean(state.gain);
        self.clip((1.0 - p) * stay + p * go)
    }

    /// `m` independent rollouts of length `horizon` from `state` (the
    /// current state itself excluded).
    pub fn sample_futures<R: Rng + ?Sized>(
        &self,
        state: ChannelState,
        horizon: usize,
        m: usize,
        rng: &mut R,
    ) -> Vec<Vec<f64>> {
        (0..m)
            .map(|_| {
                let mut s = state;
                (0..horizon)
                    .map(|_| {
                        s = self.step(s, rng);
                        s.gain
                    })
                    .collect()
            })
            .collect()
    }
}
