use crate::error::{contract, Result};
use crate::scalar::Scalar;

/// Relative entropy between Bernoulli(p) and Bernoulli(q), with `0 ln 0 = 0`.
pub fn bernoulli_kl<T: Scalar>(p: T, q: T) -> T {
    let term = |a: T, b: T| {
        if a == T::zero() {
            T::zero()
        } else {
            a * (a / b).ln()
        }
    };
    term(p, q) + term(T::one() - p, T::one() - q)
}

/// `P(Binomial(n, p) <= k)`, summed in log space so large `n` does not underflow.
pub fn binomial_cdf<T: Scalar>(k: usize, n: usize, p: T) -> T {
    if k >= n {
        return T::one();
    }
    if p <= T::zero() {
        return T::one();
    }
    if p >= T::one() {
        return T::zero();
    }
    let log_p = p.ln();
    let log_q = (T::one() - p).ln();
    let mut log_pmf = T::from_count(n) * log_q;
    let mut terms = Vec::with_capacity(k + 1);
    terms.push(log_pmf);
    for j in 0..k {
        // pmf(j+1) / pmf(j) = (n - j) / (j + 1) * p / q
        log_pmf = log_pmf + (T::from_count(n - j) / T::from_count(j + 1)).ln() + log_p - log_q;
        terms.push(log_pmf);
    }
    let peak = terms.iter().copied().fold(T::neg_infinity(), T::max);
    let total: T = terms.iter().map(|&l| (l - peak).exp()).sum();
    (peak.exp() * total).min(T::one())
}

/// Hoeffding-Bentkus p-value for the null "mean loss > alpha" from `n`
/// samples with empirical mean `r_hat`.
///
/// `p = min(1, exp(-n KL(min(r_hat, alpha) || alpha)), e * P(Bin(n, alpha) <= ceil(n r_hat)))`.
pub fn hb_pvalue<T: Scalar>(n: usize, r_hat: T, alpha: T) -> Result<T> {
    if n == 0 {
        return contract("Hoeffding-Bentkus p-value needs at least one sample");
    }
    if !(r_hat >= T::zero() && r_hat <= T::one()) {
        return contract(format!("empirical risk {r_hat} outside [0,1]"));
    }
    if !(alpha > T::zero() && alpha < T::one()) {
        return contract(format!("alpha {alpha} outside (0,1)"));
    }
    let nt = T::from_count(n);
    let hoeffding = (-nt * bernoulli_kl(r_hat.min(alpha), alpha)).exp();
    let k = (nt * r_hat).ceil().to_usize().unwrap_or(n);
    let bentkus = T::one().exp() * binomial_cdf(k, n, alpha);
    Ok(T::one().min(hoeffding).min(bentkus))
}

/// [`hb_pvalue`] from raw losses in `[0, 1]`.
pub fn hb_pvalue_from_losses<T: Scalar>(losses: &[T], alpha: T) -> Result<T> {
    if losses.iter().any(|l| !(*l >= T::zero() && *l <= T::one())) {
        return contract("losses must lie in [0,1]");
    }
    let mean = losses.iter().copied().sum::<T>() / T::from_count(losses.len().max(1));
    hb_pvalue(losses.len(), mean, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_evidence_when_risk_at_or_above_alpha() {
        for n in [1, 7, 50, 400] {
            assert_eq!(hb_pvalue(n, 0.3, 0.3).unwrap(), 1.0);
            assert_eq!(hb_pvalue(n, 0.9, 0.3).unwrap(), 1.0);
        }
    }

    #[test]
    fn single_zero_loss() {
        let p = hb_pvalue(1, 0.0f64, 0.5).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
    }

    #[test]
    fn frozen_reference_values() {
        // Reference values from an independent scipy evaluation.
        let p = hb_pvalue(100, 0.05f64, 0.2).unwrap();
        assert!((p - 5.077768477858185e-05).abs() < 1e-15, "{p}");
        let p = hb_pvalue(50, 0.1f64, 0.3).unwrap();
        assert!((p - 0.0019649418811243102).abs() < 1e-14, "{p}");
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(hb_pvalue(10, 1.2, 0.1).is_err());
        assert!(hb_pvalue(10, -0.1, 0.1).is_err());
        assert!(hb_pvalue(0, 0.0, 0.1).is_err());
        assert!(hb_pvalue_from_losses(&[0.5, 1.5], 0.1).is_err());
    }

    #[test]
    fn binomial_cdf_large_n_stays_finite() {
        let c = binomial_cdf(1900, 10_000, 0.2f64);
        assert!(c > 0.0 && c < 0.01);
        assert_eq!(binomial_cdf(5, 5, 0.3f64), 1.0);
    }

    #[test]
    fn works_in_f32() {
        let p = hb_pvalue(100, 0.05f32, 0.2).unwrap();
        assert!((p - 5.0778e-5).abs() < 1e-8);
    }
}
