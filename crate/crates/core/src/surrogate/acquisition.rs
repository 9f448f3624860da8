use crate::stats::{normal_cdf, normal_pdf};

use super::gp::PosteriorPrediction;

/// Expected improvement below `best`; never negative.
pub fn expected_improvement(pred: &PosteriorPrediction, best: f64) -> f64 {
    let gain = best - pred.mean;
    if pred.sd <= 0.0 {
        return gain.max(0.0);
    }
    let z = gain / pred.sd;
    (gain * normal_cdf(z) + pred.sd * normal_pdf(z)).max(0.0)
}

/// `(1 - w) (best - mu) Phi(z) + w sigma phi(z)`. Not clamped: for `w < 0.5`
/// the exploitation term can make it negative where `mu > best`.
pub fn weighted_ei(pred: &PosteriorPrediction, best: f64, w: f64) -> f64 {
    let gain = best - pred.mean;
    if pred.sd <= 0.0 {
        return (1.0 - w) * gain.max(0.0);
    }
    let z = gain / pred.sd;
    (1.0 - w) * gain * normal_cdf(z) + w * pred.sd * normal_pdf(z)
}

/// `base^c / 2`.
pub fn cooling_weight(base: f64, c: usize) -> f64 {
    0.5 * base.powi(c as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn p(mean: f64, sd: f64) -> PosteriorPrediction {
        PosteriorPrediction { mean, sd }
    }

    #[test]
    fn ei_known_values() {
        assert_relative_eq!(expected_improvement(&p(0.0, 1.0), 0.0), 0.398_942_280_401_432_7, epsilon = 1e-15);
        assert_eq!(expected_improvement(&p(2.0, 0.0), 1.0), 0.0);
        assert_eq!(expected_improvement(&p(1.0, 0.0), 1.0), 0.0);
        assert_eq!(expected_improvement(&p(0.25, 0.0), 1.0), 0.75);
    }

    #[test]
    fn ei_increases_with_sd() {
        // moderate |z| keeps phi(z) representable across the grid
        for mean in [-0.01, 0.0, 0.01] {
            let grid: Vec<f64> = (0..1000).map(|i| 0.01 + (10.0 - 0.01) * i as f64 / 999.0).collect();
            for s in &grid {
                let h = 1e-6 * s;
                let d = (expected_improvement(&p(mean, s + h), 0.0) - expected_improvement(&p(mean, s - h), 0.0)) / (2.0 * h);
                assert!(d > 0.0, "mean {mean} sd {s} derivative {d}");
            }
        }
    }

    #[test]
    fn weight_limits() {
        let q = p(0.3, 0.7);
        let z = (1.0 - 0.3) / 0.7;
        assert_relative_eq!(weighted_ei(&q, 1.0, 0.0), 0.7 * normal_cdf(z), epsilon = 1e-15);
        assert_relative_eq!(weighted_ei(&q, 1.0, 1.0), 0.7 * normal_pdf(z), epsilon = 1e-15);
        assert!(weighted_ei(&p(2.0, 0.5), 1.0, 0.0) < 0.0);
    }

    #[test]
    fn cooling_schedule() {
        assert_eq!(cooling_weight(0.99, 0), 0.5);
        assert_relative_eq!(cooling_weight(0.99, 69), 0.2499, epsilon = 1e-4);
        assert_relative_eq!(cooling_weight(0.99, 69), 0.99f64.powi(69) / 2.0, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn half_weight_is_half_ei(mean in -5.0f64..5.0, sd in 0.0f64..5.0, best in -5.0f64..5.0) {
            let q = p(mean, sd);
            let ei = expected_improvement(&q, best);
            prop_assert!(ei >= 0.0);
            prop_assert!((weighted_ei(&q, best, 0.5) - 0.5 * ei).abs() <= 1e-12 * (1.0 + ei));
        }
    }
}
