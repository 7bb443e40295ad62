//! One-way ANOVA and the F-distribution CDF.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CF_TOLERANCE: f64 = 1e-10;
const CF_MAX_ITER: usize = 300;
const TINY: f64 = 1e-300;

/// Significance levels evaluated for every result.
pub const ALPHAS: [f64; 2] = [0.05, 0.01];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f_statistic: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p_value: f64,
    /// `(alpha, p < alpha)` for each entry of [`ALPHAS`].
    pub significant_at: Vec<(f64, bool)>,
    /// Zero within-group variance with differing group means: F is infinite
    /// and p is reported as 0.
    pub degenerate: bool,
}

impl AnovaResult {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Natural log of the gamma function (Lanczos, g = 7, 9 terms), `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Regularized incomplete beta `I_x(a, b)` by modified Lentz evaluation of
/// the continued fraction, switching to `1 - I_{1-x}(b, a)` above
/// `x = (a + 1) / (a + b + 2)`.
pub fn regularized_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::input(format!("beta parameters must be positive (a = {a}, b = {b})")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::input(format!("incomplete beta argument {x} outside [0, 1]")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let front = (a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b)).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(front * beta_fraction(x, a, b)? / a)
    } else {
        Ok(1.0 - front * beta_fraction(1.0 - x, b, a)? / b)
    }
}

fn beta_fraction(x: f64, a: f64, b: f64) -> Result<f64> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        // even step
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        // odd step
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_TOLERANCE {
            return Ok(h);
        }
    }
    Err(Error::numeric(format!(
        "incomplete beta continued fraction did not converge in {CF_MAX_ITER} iterations (a = {a}, b = {b}, x = {x})"
    )))
}

/// CDF of the F distribution with `df1`, `df2` degrees of freedom.
pub fn f_cdf(x: f64, df1: f64, df2: f64) -> Result<f64> {
    if !(df1 >= 1.0 && df2 >= 1.0 && df1.is_finite() && df2.is_finite()) {
        return Err(Error::input(format!("degrees of freedom must be >= 1 (got {df1}, {df2})")));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::input(format!("F quantile must be non-negative, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let z = df1 * x / (df1 * x + df2);
    regularized_beta(z, df1 / 2.0, df2 / 2.0)
}

/// One-way ANOVA across `groups`.
pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<AnovaResult> {
    if groups.len() < 2 {
        return Err(Error::input(format!("ANOVA needs at least 2 groups, got {}", groups.len())));
    }
    if let Some(g) = groups.iter().position(|g| g.len() < 2) {
        return Err(Error::input(format!("group {} has fewer than 2 observations", g + 1)));
    }
    if groups.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::input("ANOVA observations must be finite"));
    }
    let total: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / total as f64;
    let means: Vec<f64> = groups.iter().map(|g| g.iter().sum::<f64>() / g.len() as f64).collect();
    let ss_between: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.len() as f64 * (m - grand).powi(2))
        .sum();
    let ss_within: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.iter().map(|v| (v - m).powi(2)).sum::<f64>())
        .sum();
    let df_between = groups.len() - 1;
    let df_within = total - groups.len();

    let scale: f64 = groups.iter().flatten().map(|v| (v - grand).powi(2)).sum();
    let within_is_zero = ss_within <= f64::EPSILON * scale.max(TINY);
    let between_is_zero = ss_between <= f64::EPSILON * scale.max(TINY);

    let (f_statistic, p_value, degenerate) = if within_is_zero {
        if between_is_zero {
            return Err(Error::input("all observations are identical; ANOVA is undefined"));
        }
        (f64::INFINITY, 0.0, true)
    } else {
        let f = (ss_between / df_between as f64) / (ss_within / df_within as f64);
        let p = (1.0 - f_cdf(f, df_between as f64, df_within as f64)?).clamp(0.0, 1.0);
        (f, p, false)
    };
    Ok(AnovaResult {
        f_statistic,
        df_between,
        df_within,
        p_value,
        significant_at: ALPHAS.iter().map(|&a| (a, p_value < a)).collect(),
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!(ln_gamma(2.0).abs() < 1e-14);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn uniform_case_of_incomplete_beta() {
        for i in 1..=9 {
            let x = i as f64 / 10.0;
            assert!((regularized_beta(x, 1.0, 1.0).unwrap() - x).abs() < 1e-10);
        }
    }

    #[test]
    fn f_2_2_has_closed_form() {
        // F(2, 2) CDF is x / (1 + x)
        for x in [0.1, 0.5, 1.0, 3.0, 20.0] {
            assert!((f_cdf(x, 2.0, 2.0).unwrap() - x / (1.0 + x)).abs() < 1e-10);
        }
    }

    #[test]
    fn f_cdf_bounds_and_errors() {
        assert_eq!(f_cdf(0.0, 3.0, 7.0).unwrap(), 0.0);
        assert!(f_cdf(1e6, 3.0, 7.0).unwrap() > 1.0 - 1e-9);
        assert!(f_cdf(-1.0, 1.0, 1.0).is_err());
        assert!(f_cdf(1.0, 0.0, 1.0).is_err());
        assert!(f_cdf(1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn anova_hand_case() {
        let r = anova_oneway(&[vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0]]).unwrap();
        // SSB = 3 * 0.25 * 2 = 1.5, SSW = 2 + 2 = 4, F = 1.5 / (4 / 4)
        assert!((r.f_statistic - 1.5).abs() < 1e-9);
        assert_eq!((r.df_between, r.df_within), (1, 4));
        assert!(!r.significant(0.05));
    }

    #[test]
    fn anova_identical_groups() {
        let r = anova_oneway(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(r.f_statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn anova_degenerate_and_invalid() {
        let r = anova_oneway(&[vec![1.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 0.0);
        assert!(r.significant(0.05));
        assert!(anova_oneway(&[vec![1.0, 1.0], vec![1.0, 1.0]]).is_err());
        assert!(anova_oneway(&[vec![1.0, 2.0]]).is_err());
        assert!(anova_oneway(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }
}
