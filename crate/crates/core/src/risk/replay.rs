use std::collections::VecDeque;
use std::fmt;
use std::io::Read;

use crate::error::{CalError, Result};
use crate::scalar::Scalar;

/// Logged losses replayed offline, one FIFO per candidate in round order.
///
/// CSV columns: `round,candidate_index,loss`. Lines starting with `#` are
/// comments.
#[derive(Debug, Clone, PartialEq)]
pub struct LossLog<T> {
    queues: Vec<VecDeque<T>>,
}

/// A replayed candidate has no logged losses left.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplayExhausted {
    pub candidate: usize,
}

impl fmt::Display for ReplayExhausted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "no logged losses left for candidate {}", self.candidate)
    }
}

impl std::error::Error for ReplayExhausted {}

impl<T: Scalar> LossLog<T> {
    pub fn from_csv<R: Read>(reader: R, candidates: usize) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| CalError::Parse(e.to_string()))?
            .clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CalError::Parse(format!("missing column `{name}`")))
        };
        let (c_round, c_idx, c_loss) = (col("round")?, col("candidate_index")?, col("loss")?);
        let mut rows: Vec<(u64, usize, T)> = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| CalError::Parse(e.to_string()))?;
            let field = |c: usize| rec.get(c).unwrap_or("");
            let bad = |what: &str| CalError::Parse(format!("row {}: bad {what}", line + 1));
            let round: u64 = field(c_round).parse().map_err(|_| bad("round"))?;
            let idx: usize = field(c_idx).parse().map_err(|_| bad("candidate_index"))?;
            let loss: T = field(c_loss).parse().map_err(|_| bad("loss"))?;
            if idx >= candidates {
                return Err(bad("candidate_index (out of range)"));
            }
            if !(loss >= T::zero() && loss <= T::one()) {
                return Err(CalError::Contract(format!(
                    "row {}: loss {loss} outside [0,1]",
                    line + 1
                )));
            }
            rows.push((round, idx, loss));
        }
        rows.sort_by_key(|r| r.0);
        let mut queues = vec![VecDeque::new(); candidates];
        for (_, i, l) in rows {
            queues[i].push_back(l);
        }
        Ok(Self { queues })
    }

    pub fn remaining(&self, candidate: usize) -> usize {
        self.queues.get(candidate).map_or(0, VecDeque::len)
    }

    /// Pops the next logged loss for `candidate`.
    pub fn next_loss(&mut self, candidate: usize) -> std::result::Result<T, ReplayExhausted> {
        self.queues
            .get_mut(candidate)
            .and_then(VecDeque::pop_front)
            .ok_or(ReplayExhausted { candidate })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::{altt_run, AlttConfig, AlttError, CandidateGrid, RiskRequirement};

    const LOG: &str =
        "# schema: loss-log/v1\nround,candidate_index,loss\n2,0,0.5\n1,0,0.0\n1,1,1.0\n";

    #[test]
    fn replays_in_round_order() {
        let mut log: LossLog<f64> = LossLog::from_csv(LOG.as_bytes(), 2).unwrap();
        assert_eq!(log.remaining(0), 2);
        assert_eq!(log.next_loss(0), Ok(0.0));
        assert_eq!(log.next_loss(0), Ok(0.5));
        assert_eq!(log.next_loss(0), Err(ReplayExhausted { candidate: 0 }));
    }

    #[test]
    fn rejects_malformed_rows() {
        let bad = "round,candidate_index,loss\n1,5,0.1\n";
        assert!(LossLog::<f64>::from_csv(bad.as_bytes(), 2).is_err());
        let bad = "round,candidate_index,loss\n1,0,1.1\n";
        assert!(LossLog::<f64>::from_csv(bad.as_bytes(), 2).is_err());
        let bad = "round,loss\n1,0.1\n";
        assert!(LossLog::<f64>::from_csv(bad.as_bytes(), 2).is_err());
    }

    #[test]
    fn exhausted_replay_surfaces_partial_outcome() {
        let mut log: LossLog<f64> = LossLog::from_csv(LOG.as_bytes(), 2).unwrap();
        let grid = CandidateGrid::new(vec![vec![0.0], vec![1.0]]).unwrap();
        let req = RiskRequirement::new(0.5, 0.1).unwrap();
        let err = altt_run(&grid, &req, &AlttConfig::with_budget(10), |i| {
            log.next_loss(i)
        })
        .unwrap_err();
        match err {
            AlttError::Source { source, partial } => {
                assert_eq!(partial.total_samples(), 3);
                assert!(source.candidate < 2);
            }
            other => panic!("unexpected {other}"),
        }
    }
}
