//! Binomial-tail p-values and the standard normal quantile.

use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("sample size must be positive")]
    EmptySample,
    #[error("alpha must lie in (0, 1), got {0}")]
    AlphaOutOfRange(f64),
    #[error("empirical risk must lie in [0, 1], got {0}")]
    RiskOutOfRange(f64),
    #[error("empirical risk {risk} is not a multiple of 1/{n}")]
    NotALossFraction { risk: f64, n: usize },
    #[error("loss count {losses} exceeds sample size {n}")]
    TooManyLosses { losses: usize, n: usize },
    #[error("probability must lie in (0, 1), got {0}")]
    ProbabilityOutOfRange(f64),
}

/// Tolerance for `n * risk` to count as an integer.
pub const LOSS_COUNT_TOLERANCE: f64 = 1e-9;

/// `ln P(Bin(n, p) <= k)`, summing the exact terms in log space.
pub fn binomial_log_cdf(n: usize, p: f64, k: usize) -> f64 {
    if k >= n {
        return 0.0;
    }
    let log_q = libm::log1p(-p);
    let log_odds = libm::log(p) - log_q;
    // ln P(X = 0), then the ratio recurrence P(j+1)/P(j) = (n-j)/(j+1) * p/q.
    let mut term = n as f64 * log_q;
    let mut terms = Vec::with_capacity(k + 1);
    terms.push(term);
    for j in 0..k {
        term += libm::log((n - j) as f64 / (j + 1) as f64) + log_odds;
        terms.push(term);
    }
    let peak = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: f64 = terms.iter().map(|&t| libm::exp(t - peak)).sum();
    peak + libm::log(scaled)
}

/// Valid p-value for the null `risk > alpha` from `losses` out of `n`
/// binary losses: `e · P(Bin(n, alpha) <= losses)`, capped at 1.
pub fn binomial_tail_pvalue_count(n: usize, alpha: f64, losses: usize) -> Result<f64, StatsError> {
    if n == 0 {
        return Err(StatsError::EmptySample);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::AlphaOutOfRange(alpha));
    }
    if losses > n {
        return Err(StatsError::TooManyLosses { losses, n });
    }
    let log_p = 1.0 + binomial_log_cdf(n, alpha, losses);
    Ok(if log_p >= 0.0 { 1.0 } else { libm::exp(log_p).min(1.0) })
}

/// Same p-value from an empirical risk, which must be a multiple of `1/n`.
/// The loss count is snapped to `⌊n·risk + 0.5⌋`.
pub fn binomial_tail_pvalue(n: usize, alpha: f64, risk: f64) -> Result<f64, StatsError> {
    if n == 0 {
        return Err(StatsError::EmptySample);
    }
    if !(0.0..=1.0).contains(&risk) {
        return Err(StatsError::RiskOutOfRange(risk));
    }
    let scaled = n as f64 * risk;
    let losses = libm::floor(scaled + 0.5);
    if (scaled - losses).abs() > LOSS_COUNT_TOLERANCE {
        return Err(StatsError::NotALossFraction { risk, n });
    }
    binomial_tail_pvalue_count(n, alpha, losses as usize)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// Quantile of the standard normal distribution (Acklam's rational
/// approximation refined by one Halley step).
pub fn normal_quantile(p: f64) -> Result<f64, StatsError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(StatsError::ProbabilityOutOfRange(p));
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const LOW: f64 = 0.02425;

    let tail = |q: f64| {
        let q = libm::sqrt(-2.0 * libm::log(q));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let x = if p < LOW {
        tail(p)
    } else if p <= 1.0 - LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail(1.0 - p)
    };

    let err = normal_cdf(x) - p;
    let u = err * libm::sqrt(2.0 * core::f64::consts::PI) * libm::exp(x * x / 2.0);
    Ok(x - u / (1.0 + x * u / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::E;

    /// Direct sum of binomial probabilities with explicit binomial
    /// coefficients, for cross-checking the log-space path.
    fn direct_cdf(n: u32, p: f64, k: u32) -> f64 {
        let mut total = 0.0;
        for j in 0..=k {
            let mut coef = 1.0;
            for i in 0..j {
                coef = coef * f64::from(n - i) / f64::from(i + 1);
            }
            total += coef * libm::pow(p, f64::from(j)) * libm::pow(1.0 - p, f64::from(n - j));
        }
        total
    }

    #[test]
    fn closed_form_values() {
        let p = binomial_tail_pvalue(20, 0.2, 0.0).unwrap();
        assert!((p - E * libm::pow(0.8, 20.0)).abs() < 1e-12);
        assert!((p - 0.031339).abs() < 1e-6);
        let p = binomial_tail_pvalue(50, 0.1, 0.02).unwrap();
        let expected = E * (libm::pow(0.9, 50.0) + 50.0 * 0.1 * libm::pow(0.9, 49.0));
        assert!((p - expected).abs() < 1e-12);
    }

    #[test]
    fn full_risk_clamps_to_one() {
        assert_eq!(binomial_tail_pvalue(30, 0.1, 1.0).unwrap(), 1.0);
        assert_eq!(binomial_tail_pvalue_count(30, 0.1, 30).unwrap(), 1.0);
    }

    #[test]
    fn matches_direct_summation() {
        for &(n, p) in &[(10u32, 0.3), (57, 0.1), (120, 0.05), (200, 0.25)] {
            for k in [0u32, 1, 3, n / 4, n / 2] {
                let direct = direct_cdf(n, p, k);
                let logspace = libm::exp(binomial_log_cdf(n as usize, p, k as usize));
                assert!((direct - logspace).abs() <= 1e-12 * direct.max(1e-300) + 1e-15);
            }
        }
    }

    #[test]
    fn domain_errors() {
        assert_eq!(binomial_tail_pvalue(0, 0.1, 0.0), Err(StatsError::EmptySample));
        assert_eq!(binomial_tail_pvalue(10, 1.0, 0.0), Err(StatsError::AlphaOutOfRange(1.0)));
        assert_eq!(binomial_tail_pvalue(10, 0.1, 1.5), Err(StatsError::RiskOutOfRange(1.5)));
        assert!(matches!(
            binomial_tail_pvalue(10, 0.1, 0.15),
            Err(StatsError::NotALossFraction { .. })
        ));
        // Float round-off in n * risk is tolerated.
        assert!(binomial_tail_pvalue(3, 0.1, 1.0 / 3.0).is_ok());
    }

    #[test]
    fn pvalue_is_monotone_in_losses() {
        let ps: Vec<f64> =
            (0..=40).map(|k| binomial_tail_pvalue_count(40, 0.2, k).unwrap()).collect();
        assert!(ps.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn normal_quantiles() {
        assert!(normal_quantile(0.5).unwrap().abs() < 1e-15);
        assert!((normal_quantile(0.95).unwrap() - 1.6448536269514722).abs() < 1e-12);
        assert!((normal_quantile(0.99).unwrap() - 2.3263478740408408).abs() < 1e-12);
        assert!((normal_quantile(0.01).unwrap() + 2.3263478740408408).abs() < 1e-12);
        assert!((normal_quantile(1e-10).unwrap() + 6.361340902404056).abs() < 1e-9);
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
    }
}
