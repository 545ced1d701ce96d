use std::fmt;

use super::{CandidateGrid, EProcess, RiskRequirement, TestOutcome};
use crate::error::{CalError, Result};
use crate::scalar::Scalar;

/// Which unresolved candidate receives the next loss sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ArmPolicy {
    /// Largest current wealth first; ties rotate round-robin.
    #[default]
    GreedyWealth,
    RoundRobin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlttConfig {
    /// Maximum number of loss samples across all candidates.
    pub budget: usize,
    pub policy: ArmPolicy,
    /// Stop once this many candidates are certified.
    pub max_discoveries: Option<usize>,
    /// Wealth below which a candidate is dropped. `None` uses `beta / (10 |grid|)`.
    pub drop_floor: Option<f64>,
}

impl AlttConfig {
    pub fn with_budget(budget: usize) -> Self {
        Self {
            budget,
            policy: ArmPolicy::default(),
            max_discoveries: None,
            drop_floor: None,
        }
    }
}

/// Failure during an adaptive run, carrying everything observed so far.
#[derive(Debug)]
pub enum AlttError<T, E> {
    Source {
        source: E,
        partial: TestOutcome<T>,
    },
    Invalid {
        error: CalError,
        partial: TestOutcome<T>,
    },
}

impl<T, E> AlttError<T, E> {
    pub fn partial(&self) -> &TestOutcome<T> {
        match self {
            Self::Source { partial, .. } | Self::Invalid { partial, .. } => partial,
        }
    }
}

impl<T, E: fmt::Display> fmt::Display for AlttError<T, E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Source { source, partial } => write!(
                f,
                "loss source failed after {} samples: {source}",
                partial.total_samples()
            ),
            Self::Invalid { error, .. } => write!(f, "{error}"),
        }
    }
}

impl<T: fmt::Debug, E: std::error::Error + 'static> std::error::Error for AlttError<T, E> {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Self::Source { source, .. } => Some(source),
            Self::Invalid { error, .. } => Some(error),
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Status {
    Open,
    Discovered,
    Dropped,
}

struct Run<T> {
    eps: Vec<EProcess<T>>,
    status: Vec<Status>,
    discovered: Vec<usize>,
}

impl<T: Scalar> Run<T> {
    fn outcome(&self) -> TestOutcome<T> {
        let mut discovered = self.discovered.clone();
        discovered.sort_unstable();
        TestOutcome {
            discovered,
            evidence: self.eps.iter().map(EProcess::wealth).collect(),
            samples_used: self.eps.iter().map(EProcess::count).collect(),
        }
    }

    fn pick(&self, policy: ArmPolicy, cursor: usize) -> Option<usize> {
        let n = self.eps.len();
        let open = (0..n)
            .map(|k| (cursor + k) % n)
            .filter(|&i| self.status[i] == Status::Open);
        match policy {
            ArmPolicy::RoundRobin => open.into_iter().next(),
            ArmPolicy::GreedyWealth => {
                let mut best: Option<(usize, T)> = None;
                for i in open {
                    let w = self.eps[i].wealth();
                    if best.is_none_or(|(_, b)| w > b) {
                        best = Some((i, w));
                    }
                }
                best.map(|(i, _)| i)
            }
        }
    }
}

/// Adaptive learn-then-test.
///
/// Keeps one [`EProcess`] per candidate and samples one loss per round from
/// the candidate chosen by `cfg.policy`. A candidate is certified the first
/// time its wealth reaches `|grid| / beta`, and dropped once its wealth falls
/// under the drop floor. Stops when the budget is spent, every candidate is
/// resolved, or `cfg.max_discoveries` is reached. Family-wise error stays
/// below `beta` for any sampling policy and any stopping time.
pub fn altt_run<T, E, F>(
    grid: &CandidateGrid<T>,
    req: &RiskRequirement<T>,
    cfg: &AlttConfig,
    mut loss_source: F,
) -> std::result::Result<TestOutcome<T>, AlttError<T, E>>
where
    T: Scalar,
    F: FnMut(usize) -> std::result::Result<T, E>,
{
    let n = grid.len();
    let ep = EProcess::new(req.alpha()).map_err(|error| AlttError::Invalid {
        error,
        partial: TestOutcome {
            discovered: vec![],
            evidence: vec![T::one(); n],
            samples_used: vec![0; n],
        },
    })?;
    let mut run = Run {
        eps: vec![ep; n],
        status: vec![Status::Open; n],
        discovered: Vec::new(),
    };
    let target = T::from_count(n) / req.beta();
    let floor = cfg
        .drop_floor
        .map(T::lit)
        .unwrap_or_else(|| req.beta() / T::from_count(10 * n));
    let enough = |found: usize| cfg.max_discoveries.is_some_and(|m| found >= m);

    let mut cursor = 0;
    for _ in 0..cfg.budget {
        if enough(run.discovered.len()) {
            break;
        }
        let Some(i) = run.pick(cfg.policy, cursor) else {
            break;
        };
        cursor = (i + 1) % n;
        let loss = match loss_source(i) {
            Ok(l) => l,
            Err(source) => {
                return Err(AlttError::Source {
                    source,
                    partial: run.outcome(),
                })
            }
        };
        if let Err(error) = run.eps[i].observe(loss) {
            return Err(AlttError::Invalid {
                error,
                partial: run.outcome(),
            });
        }
        let w = run.eps[i].wealth();
        if w >= target {
            run.status[i] = Status::Discovered;
            run.discovered.push(i);
        } else if w < floor {
            run.status[i] = Status::Dropped;
        }
    }
    Ok(run.outcome())
}

/// Convenience for infallible loss sources.
pub fn altt_run_infallible<T: Scalar>(
    grid: &CandidateGrid<T>,
    req: &RiskRequirement<T>,
    cfg: &AlttConfig,
    mut loss_source: impl FnMut(usize) -> T,
) -> Result<TestOutcome<T>> {
    altt_run::<T, std::convert::Infallible, _>(grid, req, cfg, |i| Ok(loss_source(i))).map_err(
        |e| match e {
            AlttError::Invalid { error, .. } => error,
            AlttError::Source { source, .. } => match source {},
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::RiskRequirement;

    fn grid(n: usize) -> CandidateGrid<f64> {
        CandidateGrid::new((0..n).map(|i| vec![i as f64]).collect()).unwrap()
    }

    #[test]
    fn zero_loss_discovered_within_seven_rounds() {
        let req = RiskRequirement::new(0.5, 0.1).unwrap();
        let o =
            altt_run_infallible(&grid(1), &req, &AlttConfig::with_budget(100), |_| 0.0).unwrap();
        assert_eq!(o.discovered, vec![0]);
        assert_eq!(o.samples_used, vec![7]);
    }

    #[test]
    fn constant_max_loss_never_discovered() {
        let req = RiskRequirement::new(0.5, 0.1).unwrap();
        let o = altt_run_infallible(&grid(1), &req, &AlttConfig::with_budget(50), |_| 1.0).unwrap();
        assert!(o.discovered.is_empty());
        assert_eq!(o.evidence, vec![1.0]);
        assert_eq!(o.samples_used, vec![50]);
    }

    #[test]
    fn zero_budget_samples_nothing() {
        let req = RiskRequirement::new(0.5, 0.1).unwrap();
        let o = altt_run_infallible(&grid(3), &req, &AlttConfig::with_budget(0), |_| 0.0).unwrap();
        assert!(o.discovered.is_empty());
        assert_eq!(o.samples_used, vec![0, 0, 0]);
    }

    #[test]
    fn stops_at_requested_discoveries() {
        let req = RiskRequirement::new(0.5, 0.1).unwrap();
        let mut cfg = AlttConfig::with_budget(1000);
        cfg.max_discoveries = Some(1);
        let o = altt_run_infallible(&grid(4), &req, &cfg, |_| 0.0).unwrap();
        assert_eq!(o.discovered.len(), 1);
        assert!(o.total_samples() < 40);
    }

    #[test]
    fn round_robin_spreads_samples() {
        let req = RiskRequirement::new(0.3, 0.1).unwrap();
        let mut cfg = AlttConfig::with_budget(12);
        cfg.policy = ArmPolicy::RoundRobin;
        let o = altt_run_infallible(&grid(3), &req, &cfg, |_| 0.3).unwrap();
        assert_eq!(o.samples_used, vec![4, 4, 4]);
    }

    #[test]
    fn source_failure_keeps_partial_outcome() {
        let req = RiskRequirement::new(0.5, 0.1).unwrap();
        let mut calls = 0;
        let err = altt_run(&grid(2), &req, &AlttConfig::with_budget(10), |_| {
            calls += 1;
            if calls > 3 {
                Err("link down")
            } else {
                Ok(0.0)
            }
        })
        .unwrap_err();
        assert!(matches!(
            err,
            AlttError::Source {
                source: "link down",
                ..
            }
        ));
        assert_eq!(err.partial().total_samples(), 3);
    }

    #[test]
    fn out_of_range_loss_is_rejected() {
        let req = RiskRequirement::new(0.5, 0.1).unwrap();
        let r = altt_run_infallible(&grid(1), &req, &AlttConfig::with_budget(3), |_| 2.0);
        assert!(matches!(r, Err(CalError::Contract(_))));
    }

    #[test]
    fn identical_streams_are_bitwise_identical() {
        let req = RiskRequirement::new(0.3, 0.1).unwrap();
        let stream = |i: usize, t: usize| ((i * 7 + t * 13) % 10) as f64 / 20.0;
        let run = || {
            let mut counts = [0usize; 5];
            altt_run_infallible(&grid(5), &req, &AlttConfig::with_budget(300), |i| {
                counts[i] += 1;
                stream(i, counts[i])
            })
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
        for (x, y) in a.evidence.iter().zip(&b.evidence) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
