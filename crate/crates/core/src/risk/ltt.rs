use super::{hb_pvalue_from_losses, CandidateGrid, RiskRequirement, TestOutcome};
use crate::error::{contract, Result};
use crate::scalar::Scalar;

/// Multiplicity correction used by batch testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Procedure {
    #[default]
    Bonferroni,
    /// Walks the grid's priority order and stops at the first non-rejection.
    FixedSequence,
}

fn check_pvalues<T: Scalar>(pvalues: &[T]) -> Result<()> {
    match pvalues
        .iter()
        .find(|p| !(**p > T::zero() && **p <= T::one()))
    {
        Some(p) => contract(format!("p-value {p} outside (0,1]")),
        None => Ok(()),
    }
}

/// Rejects every null with `p_i <= beta / |grid|`.
///
/// `samples_used` is zero-filled; [`learn_then_test`] fills it in.
pub fn bonferroni_ltt<T: Scalar>(pvalues: &[T], beta: T) -> Result<TestOutcome<T>> {
    check_pvalues(pvalues)?;
    let level = beta / T::from_count(pvalues.len().max(1));
    let discovered = pvalues
        .iter()
        .enumerate()
        .filter(|(_, &p)| p <= level)
        .map(|(i, _)| i)
        .collect();
    Ok(TestOutcome {
        discovered,
        evidence: pvalues.to_vec(),
        samples_used: vec![0; pvalues.len()],
    })
}

/// Fixed-sequence testing at level `beta`: indices refer to positions in
/// `ordered_pvalues`, whose order must not depend on the test data.
pub fn fixed_sequence_ltt<T: Scalar>(ordered_pvalues: &[T], beta: T) -> Result<TestOutcome<T>> {
    check_pvalues(ordered_pvalues)?;
    let accepted = ordered_pvalues.iter().take_while(|&&p| p <= beta).count();
    Ok(TestOutcome {
        discovered: (0..accepted).collect(),
        evidence: ordered_pvalues.to_vec(),
        samples_used: vec![0; ordered_pvalues.len()],
    })
}

/// Batch learn-then-test over per-candidate loss samples.
///
/// Fixed-sequence testing uses the grid's priority order, or index order
/// when none was attached.
pub fn learn_then_test<T: Scalar>(
    grid: &CandidateGrid<T>,
    losses: &[Vec<T>],
    req: &RiskRequirement<T>,
    procedure: Procedure,
) -> Result<TestOutcome<T>> {
    if losses.len() != grid.len() {
        return contract(format!(
            "{} loss vectors for {} candidates",
            losses.len(),
            grid.len()
        ));
    }
    let pvalues = losses
        .iter()
        .map(|l| {
            if l.is_empty() {
                Ok(T::one())
            } else {
                hb_pvalue_from_losses(l, req.alpha())
            }
        })
        .collect::<Result<Vec<T>>>()?;
    let mut outcome = match procedure {
        Procedure::Bonferroni => bonferroni_ltt(&pvalues, req.beta())?,
        Procedure::FixedSequence => {
            let order: Vec<usize> = grid
                .order()
                .map(<[usize]>::to_vec)
                .unwrap_or_else(|| (0..grid.len()).collect());
            let ordered: Vec<T> = order.iter().map(|&i| pvalues[i]).collect();
            let seq = fixed_sequence_ltt(&ordered, req.beta())?;
            let mut discovered: Vec<usize> = seq.discovered.iter().map(|&k| order[k]).collect();
            discovered.sort_unstable();
            TestOutcome {
                discovered,
                evidence: pvalues,
                samples_used: vec![0; grid.len()],
            }
        }
    };
    outcome.samples_used = losses.iter().map(Vec::len).collect();
    Ok(outcome)
}

/// Certified candidate with the smallest secondary KPI; ties go to the
/// lowest index. Undefined (NaN) KPIs never win.
pub fn select_best<T: Scalar>(outcome: &TestOutcome<T>, secondary_kpi: &[T]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for &i in &outcome.discovered {
        let Some(&v) = secondary_kpi.get(i) else {
            continue;
        };
        if v.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}
