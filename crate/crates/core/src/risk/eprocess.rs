use crate::error::{contract, Result};
use crate::scalar::Scalar;

/// Floor on the squared-increment sum in the betting ratio.
pub const BET_EPSILON: f64 = 1e-12;

/// Betting wealth for the null "mean loss > alpha".
///
/// Each round bets `v` on the increment `g = alpha - loss`; under the null
/// the wealth is a nonnegative supermartingale, so by Ville's inequality it
/// exceeds `1/delta` with probability at most `delta` at any stopping time.
#[derive(Debug, Clone, PartialEq)]
pub struct EProcess<T> {
    alpha: T,
    wealth: T,
    bet: T,
    count: usize,
    sum_g: T,
    sum_g2: T,
}

impl<T: Scalar> EProcess<T> {
    pub fn new(alpha: T) -> Result<Self> {
        if !(alpha > T::zero() && alpha < T::one()) {
            return contract(format!("alpha {alpha} outside (0,1)"));
        }
        Ok(Self {
            alpha,
            wealth: T::one(),
            bet: T::zero(),
            count: 0,
            sum_g: T::zero(),
            sum_g2: T::zero(),
        })
    }

    /// Overrides the next bet, which must lie in `[0, max_bet]`.
    pub fn with_bet(mut self, bet: T) -> Result<Self> {
        if !(bet >= T::zero() && bet <= self.max_bet()) {
            return contract(format!("bet {bet} outside [0, {}]", self.max_bet()));
        }
        self.bet = bet;
        Ok(self)
    }

    pub fn with_wealth(mut self, wealth: T) -> Result<Self> {
        if !(wealth >= T::zero()) || !wealth.is_finite() {
            return contract(format!("wealth {wealth} must be finite and nonnegative"));
        }
        self.wealth = wealth;
        Ok(self)
    }

    /// `0.5 / (1 - alpha)`, which keeps every wealth multiplier at least 1/2.
    pub fn max_bet(&self) -> T {
        T::lit(0.5) / (T::one() - self.alpha)
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn wealth(&self) -> T {
        self.wealth
    }

    pub fn bet(&self) -> T {
        self.bet
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Multiplies wealth by `1 + v (alpha - loss)`, then refreshes the bet.
    pub fn observe(&mut self, loss: T) -> Result<()> {
        if !(loss >= T::zero() && loss <= T::one()) {
            return contract(format!("loss {loss} outside [0,1]"));
        }
        let g = self.alpha - loss;
        self.wealth = self.wealth * (T::one() + self.bet * g);
        self.count += 1;
        self.sum_g = self.sum_g + g;
        self.sum_g2 = self.sum_g2 + g * g;
        self.bet = self.next_bet();
        Ok(())
    }

    /// aGRAPA-style ratio `sum_g / max(sum_g2, eps)`, clipped to `[0, max_bet]`.
    /// Zero before any observation.
    pub fn next_bet(&self) -> T {
        if self.count == 0 {
            return T::zero();
        }
        let raw = self.sum_g / self.sum_g2.max(T::lit(BET_EPSILON));
        raw.max(T::zero()).min(self.max_bet())
    }
}
