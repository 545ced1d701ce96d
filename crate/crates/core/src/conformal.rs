//! Split conformal set prediction.
//!
//! A predictor assigns a confidence to every candidate outcome. Calibration
//! picks a cutoff from held-out nonconformity scores (nonconformity is the
//! negated confidence) so that the thresholded set covers the truth with
//! probability at least `1 - beta` whenever calibration and test points are
//! exchangeable.

use std::num::NonZeroUsize;

use crate::error::{contract, CalError, Result};
use crate::scalar::Scalar;

/// How confidence in a candidate outcome is derived from model output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfidenceScoreKind {
    /// `-||y - y_hat||^2` against a single point prediction.
    NegSquared,
    /// `-min_m ||y - y_hat_m||^2` over `samples` sampled predictions.
    MultiSampleNegSquared { samples: NonZeroUsize },
}

impl ConfidenceScoreKind {
    /// Number of model predictions the score consumes.
    pub fn predictions_needed(&self) -> usize {
        match self {
            Self::NegSquared => 1,
            Self::MultiSampleNegSquared { samples } => samples.get(),
        }
    }

    pub fn score<T: Scalar, P: AsRef<[T]>>(&self, y: &[T], predictions: &[P]) -> Result<T> {
        if predictions.len() != self.predictions_needed() {
            return contract(format!(
                "{self:?} expects {} predictions, got {}",
                self.predictions_needed(),
                predictions.len()
            ));
        }
        match self {
            Self::NegSquared => score_neg_squared(y, predictions[0].as_ref()),
            Self::MultiSampleNegSquared { .. } => score_multi_sample(y, predictions),
        }
    }
}

fn squared_distance<T: Scalar>(y: &[T], y_hat: &[T]) -> Result<T> {
    if y.len() != y_hat.len() {
        return contract(format!(
            "dimension mismatch: outcome has {} entries, prediction has {}",
            y.len(),
            y_hat.len()
        ));
    }
    Ok(y.iter().zip(y_hat).map(|(&a, &b)| (a - b) * (a - b)).sum())
}

/// Negative squared loss `-||y - y_hat||^2`.
pub fn score_neg_squared<T: Scalar>(y: &[T], y_hat: &[T]) -> Result<T> {
    squared_distance(y, y_hat).map(|d| -d)
}

/// Multi-sample confidence `-min_m ||y - y_hat_m||^2`.
///
/// Thresholding this score yields a union of balls around the samples, so
/// the resulting set can be multi-modal.
pub fn score_multi_sample<T: Scalar, P: AsRef<[T]>>(y: &[T], samples: &[P]) -> Result<T> {
    if samples.is_empty() {
        return contract("multi-sample score needs at least one sample");
    }
    let mut best = T::infinity();
    for s in samples {
        best = best.min(squared_distance(y, s.as_ref())?);
    }
    Ok(-best)
}

/// Miscoverage level `beta` in (0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageTarget<T>(T);

impl<T: Scalar> CoverageTarget<T> {
    pub fn new(beta: T) -> Result<Self> {
        if beta > T::zero() && beta < T::one() {
            Ok(Self(beta))
        } else {
            contract(format!("miscoverage level must lie in (0,1), got {beta}"))
        }
    }

    pub fn beta(&self) -> T {
        self.0
    }
}

/// Held-out nonconformity scores.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet<T> {
    scores: Vec<T>,
}

impl<T: Scalar> CalibrationSet<T> {
    pub fn new(nonconformity_scores: Vec<T>) -> Result<Self> {
        if nonconformity_scores.is_empty() {
            return Err(CalError::InsufficientData(
                "calibration set is empty".into(),
            ));
        }
        if let Some(bad) = nonconformity_scores.iter().find(|s| !s.is_finite()) {
            return contract(format!("non-finite calibration score {bad}"));
        }
        Ok(Self {
            scores: nonconformity_scores,
        })
    }

    /// Builds the set from confidences of the true outcomes.
    pub fn from_confidences(confidences: impl IntoIterator<Item = T>) -> Result<Self> {
        Self::new(confidences.into_iter().map(|c| -c).collect())
    }

    pub fn scores(&self) -> &[T] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Calibrated cutoff on the nonconformity scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold<T> {
    Finite(T),
    /// Not enough calibration mass: the set is the whole candidate space.
    IncludeAll,
}

impl<T: Scalar> Threshold<T> {
    /// The same cutoff expressed on the confidence scale.
    pub fn confidence_cutoff(&self) -> T {
        match *self {
            Self::Finite(v) => -v,
            Self::IncludeAll => T::neg_infinity(),
        }
    }

    pub fn finite(&self) -> Option<T> {
        match *self {
            Self::Finite(v) => Some(v),
            Self::IncludeAll => None,
        }
    }

    pub fn is_include_all(&self) -> bool {
        matches!(self, Self::IncludeAll)
    }
}

/// Rank `ceil((n + 1)(1 - beta))` used by split conformal calibration.
pub fn conformal_rank<T: Scalar>(n: usize, target: CoverageTarget<T>) -> usize {
    let q = T::from_count(n + 1) * (T::one() - target.beta());
    q.ceil().to_usize().unwrap_or(usize::MAX)
}

/// Split conformal threshold: the `ceil((n+1)(1-beta))`-th smallest score.
pub fn conformal_threshold<T: Scalar>(
    calib: &CalibrationSet<T>,
    target: CoverageTarget<T>,
) -> Threshold<T> {
    let n = calib.len();
    let k = conformal_rank(n, target);
    if k > n {
        return Threshold::IncludeAll;
    }
    let mut sorted = calib.scores.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    Threshold::Finite(sorted[k.max(1) - 1])
}

/// Candidates with a membership mask; `threshold_used` is on the confidence scale.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet<C, T> {
    grid: Vec<C>,
    mask: Vec<bool>,
    threshold_used: T,
}

impl<C, T: Scalar> PredictionSet<C, T> {
    pub fn grid(&self) -> &[C] {
        &self.grid
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn threshold_used(&self) -> T {
        self.threshold_used
    }

    /// Number of included candidates.
    pub fn size(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    pub fn contains_index(&self, i: usize) -> bool {
        self.mask.get(i).copied().unwrap_or(false)
    }

    pub fn included(&self) -> impl Iterator<Item = &C> + '_ {
        self.grid
            .iter()
            .zip(&self.mask)
            .filter_map(|(c, &m)| m.then_some(c))
    }
}

/// Thresholds per-candidate confidences: candidate `i` is kept iff
/// `confidences[i] >= cutoff`. Pass `-inf` for an include-all set.
pub fn build_prediction_set<C, T: Scalar>(
    grid: Vec<C>,
    confidences: &[T],
    cutoff: T,
) -> Result<PredictionSet<C, T>> {
    if grid.is_empty() {
        return contract("candidate grid is empty");
    }
    if grid.len() != confidences.len() {
        return contract(format!(
            "grid has {} candidates but {} confidences were given",
            grid.len(),
            confidences.len()
        ));
    }
    if cutoff.is_nan() {
        return contract("cutoff is NaN");
    }
    let mask = confidences.iter().map(|&c| c >= cutoff).collect();
    Ok(PredictionSet {
        grid,
        mask,
        threshold_used: cutoff,
    })
}

fn check_increasing<T: Scalar>(grid: &[T]) -> Result<()> {
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return contract("scalar grid must be strictly increasing");
    }
    Ok(())
}

/// Maximal runs of included grid points as closed intervals. Isolated
/// points come back as zero-width `(v, v)` intervals.
pub fn set_to_intervals<T: Scalar>(set: &PredictionSet<T, T>) -> Result<Vec<(T, T)>> {
    check_increasing(&set.grid)?;
    let mut out = Vec::new();
    let mut run: Option<(T, T)> = None;
    for (&y, &m) in set.grid.iter().zip(&set.mask) {
        run = match (run, m) {
            (None, true) => Some((y, y)),
            (Some((lo, _)), true) => Some((lo, y)),
            (Some(r), false) => {
                out.push(r);
                None
            }
            (None, false) => None,
        };
    }
    out.extend(run);
    Ok(out)
}

/// Total length of a union of intervals where each interval also gets one
/// grid spacing, so singletons count as `spacing`.
pub fn intervals_measure<T: Scalar>(intervals: &[(T, T)], spacing: T) -> T {
    intervals.iter().map(|&(lo, hi)| hi - lo + spacing).sum()
}

/// Index of the grid point nearest to `y`; ties go to the lower index.
pub fn snap_to_grid<T: Scalar>(grid: &[T], y: T) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &g) in grid.iter().enumerate() {
        let d = (g - y).abs();
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

/// Whether the truth (snapped to the grid) lies in the set.
pub fn covers<T: Scalar>(set: &PredictionSet<T, T>, truth: T) -> bool {
    snap_to_grid(&set.grid, truth).is_some_and(|i| set.mask[i])
}

/// Fraction of `(truth, set)` pairs whose truth is covered.
pub fn coverage_eval<T: Scalar>(pairs: &[(T, PredictionSet<T, T>)]) -> Result<T> {
    if pairs.is_empty() {
        return Err(CalError::InsufficientData(
            "coverage needs at least one test pair".into(),
        ));
    }
    let hits = pairs.iter().filter(|(y, s)| covers(s, *y)).count();
    Ok(T::from_count(hits) / T::from_count(pairs.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn nz(m: usize) -> NonZeroUsize {
        NonZeroUsize::new(m).unwrap()
    }

    #[test]
    fn neg_squared_examples() {
        assert_eq!(score_neg_squared(&[2.0], &[2.0]).unwrap(), 0.0);
        assert_eq!(score_neg_squared(&[2.0], &[5.0]).unwrap(), -9.0);
        assert_eq!(score_neg_squared(&[1.0, 1.0], &[0.0, 0.0]).unwrap(), -2.0);
        assert!(matches!(
            score_neg_squared(&[1.0, 1.0], &[0.0]),
            Err(CalError::Contract(_))
        ));
    }

    #[test]
    fn multi_sample_examples() {
        let s = [[1.0], [5.0]];
        assert_eq!(score_multi_sample(&[2.0], &s).unwrap(), -1.0);
        assert_eq!(score_multi_sample(&[5.0], &s).unwrap(), 0.0);
        assert_eq!(score_multi_sample(&[2.0], &[[7.0]]).unwrap(), -25.0);
        assert_eq!(
            score_multi_sample(&[2.0], &[[7.0]]).unwrap(),
            score_neg_squared(&[2.0], &[7.0]).unwrap()
        );
        let empty: [[f64; 1]; 0] = [];
        assert!(score_multi_sample(&[2.0], &empty).is_err());
    }

    #[test]
    fn score_kind_checks_prediction_count() {
        let kind = ConfidenceScoreKind::MultiSampleNegSquared { samples: nz(2) };
        assert!(kind.score(&[0.0], &[[1.0]]).is_err());
        assert_eq!(kind.score(&[0.0], &[[1.0], [3.0]]).unwrap(), -1.0);
    }

    #[test]
    fn threshold_examples() {
        let c = CalibrationSet::new(vec![4.0, 2.0, 1.0, 3.0]).unwrap();
        let t = conformal_threshold(&c, CoverageTarget::new(0.4).unwrap());
        assert_eq!(t, Threshold::Finite(3.0));
        let t = conformal_threshold(&c, CoverageTarget::new(0.1).unwrap());
        assert_eq!(t, Threshold::IncludeAll);
        let c = CalibrationSet::new(vec![7.0]).unwrap();
        assert_eq!(
            conformal_threshold(&c, CoverageTarget::new(0.5).unwrap()),
            Threshold::Finite(7.0)
        );
        assert!(matches!(
            CalibrationSet::<f64>::new(vec![]),
            Err(CalError::InsufficientData(_))
        ));
        assert!(CalibrationSet::new(vec![1.0, f64::NAN]).is_err());
        assert!(CoverageTarget::new(1.0).is_err());
    }

    #[test]
    fn rank_for_common_targets() {
        assert_eq!(conformal_rank(100, CoverageTarget::new(0.1).unwrap()), 91);
        assert_eq!(conformal_rank(4, CoverageTarget::new(0.4).unwrap()), 3);
        assert_eq!(
            conformal_rank(100, CoverageTarget::new(0.2f32).unwrap()),
            81
        );
    }

    #[test]
    fn duplicates_kept_in_order_statistics() {
        let c = CalibrationSet::new(vec![1.0, 1.0, 1.0, 5.0]).unwrap();
        assert_eq!(
            conformal_threshold(&c, CoverageTarget::new(0.4).unwrap()),
            Threshold::Finite(1.0)
        );
    }

    #[test]
    fn build_set_examples() {
        let s = build_prediction_set(vec![0, 1, 2], &[0.9, 0.2, 0.8], 0.5).unwrap();
        assert_eq!(s.mask(), &[true, false, true]);
        let s = build_prediction_set(vec![0, 1, 2], &[0.9, 0.2, 0.8], f64::NEG_INFINITY).unwrap();
        assert_eq!(s.size(), 3);
        let s = build_prediction_set(vec![0, 1, 2], &[0.9, 0.2, 0.8], f64::INFINITY).unwrap();
        assert!(s.is_empty());
        assert!(build_prediction_set(Vec::<u8>::new(), &[], 0.0).is_err());
        // ties are included
        let s = build_prediction_set(vec![0], &[0.5], 0.5).unwrap();
        assert!(s.contains_index(0));
    }

    fn scalar_set(mask: &[bool]) -> PredictionSet<f64, f64> {
        PredictionSet {
            grid: (0..mask.len()).map(|i| i as f64).collect(),
            mask: mask.to_vec(),
            threshold_used: 0.0,
        }
    }

    #[test]
    fn intervals_examples() {
        let s = scalar_set(&[false, true, true, false, true]);
        let iv = set_to_intervals(&s).unwrap();
        assert_eq!(iv, vec![(1.0, 2.0), (4.0, 4.0)]);
        assert_eq!(intervals_measure(&iv, 1.0), 3.0);
        assert_eq!(
            set_to_intervals(&scalar_set(&[true; 5])).unwrap(),
            vec![(0.0, 4.0)]
        );
        assert!(set_to_intervals(&scalar_set(&[false; 5]))
            .unwrap()
            .is_empty());
        let bad = PredictionSet {
            grid: vec![0.0, 0.0],
            mask: vec![true, true],
            threshold_used: 0.0,
        };
        assert!(set_to_intervals(&bad).is_err());
    }

    #[test]
    fn snapping_ties_go_low() {
        let grid = [0.0, 1.0, 2.0];
        assert_eq!(snap_to_grid(&grid, 0.5), Some(0));
        assert_eq!(snap_to_grid(&grid, 1.6), Some(2));
        assert_eq!(snap_to_grid(&grid, -3.0), Some(0));
    }

    #[test]
    fn coverage_examples() {
        let full = scalar_set(&[true; 4]);
        let none = scalar_set(&[false; 4]);
        let pairs: Vec<_> = (0..4).map(|i| (i as f64, full.clone())).collect();
        assert_eq!(coverage_eval(&pairs).unwrap(), 1.0);
        let pairs: Vec<_> = (0..4).map(|i| (i as f64, none.clone())).collect();
        assert_eq!(coverage_eval(&pairs).unwrap(), 0.0);
        let partial = scalar_set(&[true, true, true, false]);
        let pairs: Vec<_> = (0..4).map(|i| (i as f64, partial.clone())).collect();
        assert_eq!(coverage_eval(&pairs).unwrap(), 0.75);
        assert!(coverage_eval::<f64>(&[]).is_err());
    }

    proptest! {
        #[test]
        fn lower_cutoff_never_shrinks_set(
            conf in prop::collection::vec(-10.0f64..10.0, 1..40),
            a in -12.0f64..12.0,
            b in -12.0f64..12.0,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let grid: Vec<usize> = (0..conf.len()).collect();
            let big = build_prediction_set(grid.clone(), &conf, lo).unwrap();
            let small = build_prediction_set(grid, &conf, hi).unwrap();
            for i in 0..conf.len() {
                prop_assert!(!small.contains_index(i) || big.contains_index(i));
            }
        }

        #[test]
        fn multi_sample_dominates_each_sample(
            y in prop::collection::vec(-5.0f64..5.0, 2),
            samples in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 1..8),
        ) {
            let ms = score_multi_sample(&y, &samples).unwrap();
            for s in &samples {
                prop_assert!(ms >= score_neg_squared(&y, s).unwrap());
            }
        }

        #[test]
        fn single_sample_reduces_to_neg_squared(
            y in prop::collection::vec(-5.0f64..5.0, 3),
            s in prop::collection::vec(-5.0f64..5.0, 3),
        ) {
            let one = ConfidenceScoreKind::MultiSampleNegSquared { samples: nz(1) };
            let a = one.score(&y, std::slice::from_ref(&s)).unwrap();
            let b = ConfidenceScoreKind::NegSquared.score(&y, &[s]).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
