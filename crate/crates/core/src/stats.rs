//! Scalar numerics shared across modules: Gaussian densities, special
//! functions, log-space reductions and Welch's t-test.

use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::erf::erfc;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Log density of N(mean, sd^2) at x.
pub fn normal_ln_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * LN_2PI
}

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Digamma via recurrence up to x >= 12 and the asymptotic series.
pub fn digamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 12.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + x.ln() - 0.5 * inv
        - inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0))))
}

/// Trigamma via recurrence up to x >= 12 and the asymptotic series.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 12.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + inv
        + 0.5 * inv2
        + inv * inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 / 30.0)))
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
pub fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Result of a one-tailed Welch t-test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    /// P-value for the alternative `mean(candidate) < mean(baseline)`.
    pub p_value: f64,
}

/// One-tailed Welch t-test of `mean(candidate) < mean(baseline)`.
///
/// t = (m_b - m_c) / sqrt(s_b^2/n_b + s_c^2/n_c), with Welch–Satterthwaite
/// degrees of freedom; p = P(T_df >= t).
pub fn welch_one_tailed(candidate: &[f64], baseline: &[f64]) -> WelchTest {
    let (nc, nb) = (candidate.len() as f64, baseline.len() as f64);
    let (mc, mb) = (mean(candidate), mean(baseline));
    let (vc, vb) = (sample_sd(candidate).powi(2) / nc, sample_sd(baseline).powi(2) / nb);
    let se2 = vc + vb;
    if se2 <= 0.0 {
        let p_value = if mb > mc {
            0.0
        } else if mb < mc {
            1.0
        } else {
            0.5
        };
        return WelchTest {
            t: 0.0,
            df: f64::NAN,
            p_value,
        };
    }
    let t = (mb - mc) / se2.sqrt();
    let mut denom = 0.0;
    if nc > 1.0 {
        denom += vc * vc / (nc - 1.0);
    }
    if nb > 1.0 {
        denom += vb * vb / (nb - 1.0);
    }
    let df = se2 * se2 / denom;
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    WelchTest {
        t,
        df,
        p_value: dist.sf(t),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn digamma_and_trigamma_known_values() {
        // psi(1) = -gamma_E, psi'(1) = pi^2 / 6
        assert_relative_eq!(digamma(1.0), -0.577_215_664_901_532_9, epsilon = 1e-12);
        assert_relative_eq!(trigamma(1.0), std::f64::consts::PI.powi(2) / 6.0, epsilon = 1e-12);
        assert_relative_eq!(digamma(0.5), -1.963_510_026_021_423_5, epsilon = 1e-12);
        assert_relative_eq!(trigamma(0.5), std::f64::consts::PI.powi(2) / 2.0, epsilon = 1e-11);
    }

    #[test]
    fn digamma_matches_ln_gamma_derivative() {
        for &x in &[0.3, 1.7, 4.2, 11.0, 250.0] {
            let h = 1e-5 * x;
            let fd = (ln_gamma(x + h) - ln_gamma(x - h)) / (2.0 * h);
            assert_relative_eq!(digamma(x), fd, max_relative = 1e-7);
        }
    }

    #[test]
    fn normal_cdf_symmetry() {
        assert_relative_eq!(normal_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(normal_cdf(1.3) + normal_cdf(-1.3), 1.0, epsilon = 1e-14);
        assert_relative_eq!(normal_pdf(0.0), 0.398_942_280_401_432_7, epsilon = 1e-15);
    }

    #[test]
    fn welch_equal_samples_gives_half() {
        let a = [0.1, 0.2, 0.3, 0.25];
        let r = welch_one_tailed(&a, &a);
        assert_relative_eq!(r.p_value, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn welch_against_hand_computed_statistic() {
        // means 0.042 vs 0.057, sds 0.004 / 0.007, n = 30 each:
        // se = sqrt(0.004^2/30 + 0.007^2/30) = 0.0014720...
        // t = 0.015 / se = 10.19, df = 46.08
        let make = |m: f64, s: f64| -> Vec<f64> {
            // symmetric sample with exact mean m and sample sd s
            let base: Vec<f64> = (0..30).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
            let sd0 = sample_sd(&base);
            base.iter().map(|b| m + b * s / sd0).collect()
        };
        let cand = make(0.042, 0.004);
        let base = make(0.057, 0.007);
        let r = welch_one_tailed(&cand, &base);
        let se = (0.004f64.powi(2) / 30.0 + 0.007f64.powi(2) / 30.0).sqrt();
        assert_relative_eq!(r.t, 0.015 / se, max_relative = 1e-9);
        let v1 = 0.004f64.powi(2) / 30.0;
        let v2 = 0.007f64.powi(2) / 30.0;
        let df = (v1 + v2).powi(2) / (v1 * v1 / 29.0 + v2 * v2 / 29.0);
        assert_relative_eq!(r.df, df, max_relative = 1e-9);
        assert!(r.p_value < 0.05);
        // reversed direction is not significant
        assert!(welch_one_tailed(&base, &cand).p_value > 0.95);
    }

    #[test]
    fn log_sum_exp_is_stable() {
        let v = [1000.0, 1000.0];
        assert_relative_eq!(log_sum_exp(&v), 1000.0 + 2f64.ln(), epsilon = 1e-12);
    }
}
