//! Hyperparameter certification with family-wise error control.
//!
//! Each candidate configuration carries the null hypothesis "expected loss
//! exceeds `alpha`". Batch testing turns per-candidate loss samples into
//! Hoeffding-Bentkus p-values and corrects for multiplicity; the adaptive
//! variant grows one betting e-process per candidate and certifies a
//! candidate as soon as its wealth crosses the Bonferroni-corrected Ville
//! threshold, which stays valid under any stopping rule.

mod altt;
mod eprocess;
mod ltt;
mod pvalue;
mod replay;

pub use altt::{altt_run, altt_run_infallible, AlttConfig, AlttError, ArmPolicy};
pub use eprocess::{EProcess, BET_EPSILON};
pub use ltt::{bonferroni_ltt, fixed_sequence_ltt, learn_then_test, select_best, Procedure};
pub use pvalue::{bernoulli_kl, binomial_cdf, hb_pvalue, hb_pvalue_from_losses};
pub use replay::{LossLog, ReplayExhausted};

use crate::error::{contract, Result};
use crate::scalar::Scalar;

/// Statistical KPI requirement: mean loss at most `alpha`, certified with
/// family-wise error rate at most `beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskRequirement<T> {
    alpha: T,
    beta: T,
}

impl<T: Scalar> RiskRequirement<T> {
    pub fn new(alpha: T, beta: T) -> Result<Self> {
        let unit = |v: T| v > T::zero() && v < T::one();
        if !unit(alpha) {
            return contract(format!("alpha must lie in (0,1), got {alpha}"));
        }
        if !unit(beta) {
            return contract(format!("beta must lie in (0,1), got {beta}"));
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn beta(&self) -> T {
        self.beta
    }
}

/// Maps a raw KPI onto `[0, 1]` given declared bounds, clamping outliers.
pub fn normalize_loss<T: Scalar>(raw: T, lo: T, hi: T) -> T {
    ((raw - lo) / (hi - lo)).max(T::zero()).min(T::one())
}

/// Candidate hyperparameter vectors plus an optional testing priority.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGrid<T> {
    candidates: Vec<Vec<T>>,
    order: Option<Vec<usize>>,
}

impl<T: Scalar> CandidateGrid<T> {
    pub fn new(candidates: Vec<Vec<T>>) -> Result<Self> {
        if candidates.is_empty() {
            return contract("candidate grid is empty");
        }
        for (i, c) in candidates.iter().enumerate() {
            if c.iter().any(|v| !v.is_finite()) {
                return contract(format!("candidate {i} has non-finite entries"));
            }
            if candidates[..i].contains(c) {
                return contract(format!("candidate {i} duplicates an earlier one"));
            }
        }
        Ok(Self {
            candidates,
            order: None,
        })
    }

    /// Attaches a data-independent priority order for fixed-sequence testing.
    pub fn with_order(mut self, order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; self.candidates.len()];
        if order.len() != seen.len() {
            return contract("ordering must list every candidate exactly once");
        }
        for &i in &order {
            match seen.get_mut(i) {
                Some(s) if !*s => *s = true,
                _ => return contract("ordering is not a permutation of candidate indices"),
            }
        }
        self.order = Some(order);
        Ok(self)
    }

    pub fn candidates(&self) -> &[Vec<T>] {
        &self.candidates
    }

    pub fn order(&self) -> Option<&[usize]> {
        self.order.as_deref()
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// Result of a certification run.
#[derive(Debug, Clone, PartialEq)]
pub struct TestOutcome<T> {
    /// Certified candidate indices, ascending.
    pub discovered: Vec<usize>,
    /// Per-candidate p-value (batch) or final wealth (adaptive).
    pub evidence: Vec<T>,
    pub samples_used: Vec<usize>,
}

impl<T> TestOutcome<T> {
    pub fn is_discovered(&self, i: usize) -> bool {
        self.discovered.binary_search(&i).is_ok()
    }

    pub fn total_samples(&self) -> usize {
        self.samples_used.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn requirement_bounds() {
        assert!(RiskRequirement::new(0.1, 0.1).is_ok());
        assert!(RiskRequirement::new(0.0, 0.1).is_err());
        assert!(RiskRequirement::new(0.1, 1.0).is_err());
    }

    #[test]
    fn grid_rejects_duplicates_and_bad_orders() {
        assert!(CandidateGrid::new(vec![vec![0.1], vec![0.1]]).is_err());
        assert!(CandidateGrid::<f64>::new(vec![]).is_err());
        let g = CandidateGrid::new(vec![vec![0.1], vec![0.2]]).unwrap();
        assert!(g.clone().with_order(vec![0, 0]).is_err());
        assert!(g.clone().with_order(vec![1]).is_err());
        assert_eq!(g.with_order(vec![1, 0]).unwrap().order(), Some(&[1, 0][..]));
    }

    #[test]
    fn normalization_clamps() {
        assert_eq!(normalize_loss(5.0, 0.0, 10.0), 0.5);
        assert_eq!(normalize_loss(15.0, 0.0, 10.0), 1.0);
        assert_eq!(normalize_loss(-1.0, 0.0, 10.0), 0.0);
    }
}
