use super::EvalError;
use crate::numkit::norm_ppf;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KupiecResult {
    pub violations: usize,
    pub n: usize,
    pub lr: f64,
    pub reject: bool,
}

/// x * ln(v) with the limit convention 0 * ln(0) = 0.
fn xlny(x: f64, v: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * v.ln()
    }
}

/// Kupiec likelihood-ratio test of unconditional coverage.
///
/// LR = -2 ln[(1-p)^(n-x) p^x] + 2 ln[(1-x/n)^(n-x) (x/n)^x], asymptotically
/// chi-squared with one degree of freedom under the null that the violation
/// rate matches the nominal level p. Rejects when LR exceeds the chi2(1)
/// critical value at `alpha` (3.841 at 5%).
pub fn kupiec_test(
    violations: usize,
    n: usize,
    nominal: f64,
    alpha: f64,
) -> Result<KupiecResult, EvalError> {
    if n == 0 || violations > n {
        return Err(EvalError::InvalidParameter(format!(
            "invalid counts: {violations} violations out of {n}"
        )));
    }
    if !(0.0 < nominal && nominal < 1.0) {
        return Err(EvalError::InvalidParameter(format!(
            "nominal violation rate must be in (0,1), got {nominal}"
        )));
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(EvalError::InvalidParameter(format!(
            "significance level must be in (0,1), got {alpha}"
        )));
    }
    let x = violations as f64;
    let nf = n as f64;
    let rate = x / nf;
    let log_null = xlny(nf - x, 1.0 - nominal) + xlny(x, nominal);
    let log_alt = xlny(nf - x, 1.0 - rate) + xlny(x, rate);
    let lr = 2.0 * (log_alt - log_null);
    // chi2(1) critical value is the squared two-sided normal quantile.
    let critical = norm_ppf(1.0 - alpha / 2.0).powi(2);
    Ok(KupiecResult { violations, n, lr, reject: lr > critical })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::RngState;

    #[test]
    fn observed_equals_expected_gives_zero() {
        let r = kupiec_test(50, 100, 0.5, 0.05).unwrap();
        assert_eq!(r.lr, 0.0);
        assert!(!r.reject);

        let r = kupiec_test(10, 200, 0.05, 0.05).unwrap();
        assert!(r.lr.abs() < 1e-12);
        assert!(!r.reject);
    }

    #[test]
    fn zero_violations_against_half_gives_200_ln2() {
        // LR = -2 ln(0.5^100) = 200 ln 2 ~= 138.63.
        let r = kupiec_test(0, 100, 0.5, 0.05).unwrap();
        let expected = 200.0 * (2.0f64).ln();
        assert!((r.lr - expected).abs() < 1e-9, "{}", r.lr);
        assert!(r.reject);
    }

    #[test]
    fn all_violations_edge_is_finite() {
        let r = kupiec_test(100, 100, 0.5, 0.05).unwrap();
        assert!(r.lr.is_finite());
        assert!(r.reject);
    }

    #[test]
    fn matches_independent_log_ratio_oracle() {
        // Oracle in the rate-ratio form 2[x ln(r/p) + (n-x) ln((1-r)/(1-p))],
        // algebraically equivalent but evaluated differently.
        let oracle = |x: usize, n: usize, p: f64| -> f64 {
            let xf = x as f64;
            let nf = n as f64;
            let r = xf / nf;
            let mut lr = 0.0;
            if x > 0 {
                lr += xf * (r / p).ln();
            }
            if x < n {
                lr += (nf - xf) * ((1.0 - r) / (1.0 - p)).ln();
            }
            2.0 * lr
        };
        let mut rng = RngState::seed_from(55);
        for _ in 0..1000 {
            let n = 20 + rng.below(2000);
            let x = rng.below(n + 1);
            let p = 0.01 + 0.98 * rng.uniform();
            let got = kupiec_test(x, n, p, 0.05).unwrap().lr;
            let want = oracle(x, n, p);
            assert!((got - want).abs() < 1e-8, "x={x} n={n} p={p}: {got} vs {want}");
        }
    }

    #[test]
    fn invariant_under_relabeling() {
        let mut rng = RngState::seed_from(62);
        for _ in 0..200 {
            let n = 30 + rng.below(500);
            let x = rng.below(n + 1);
            let p = 0.05 + 0.9 * rng.uniform();
            let a = kupiec_test(x, n, p, 0.05).unwrap();
            let b = kupiec_test(n - x, n, 1.0 - p, 0.05).unwrap();
            assert!((a.lr - b.lr).abs() < 1e-9);
            assert_eq!(a.reject, b.reject);
        }
    }

    #[test]
    fn invalid_counts_rejected() {
        assert!(kupiec_test(5, 4, 0.5, 0.05).is_err());
        assert!(kupiec_test(1, 0, 0.5, 0.05).is_err());
        assert!(kupiec_test(1, 10, 0.0, 0.05).is_err());
        assert!(kupiec_test(1, 10, 1.0, 0.05).is_err());
    }
}
