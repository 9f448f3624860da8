use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, CalibError, Result};
use crate::params::{DynamicSchedule, ParamRange};
use crate::rng::{derive_seed, rng_from_seed};

use super::beta::BetaPosterior;
use super::merge::MergedRegimes;

/// How the next candidate schedules are drawn from the regime posteriors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenerationRule {
    /// Independent posterior draw per timestep and candidate.
    ByTime,
    /// One posterior draw per regime and candidate, shared across the regime.
    ByRegime,
    /// Deterministic spread `mean + (i - (I+1)/2) sd` around the posterior mean.
    ModeSelection,
    /// Uniform draw per regime and candidate; ignores the posteriors.
    Random,
}

impl GenerationRule {
    pub const ALL: [GenerationRule; 4] = [
        GenerationRule::ByTime,
        GenerationRule::ByRegime,
        GenerationRule::ModeSelection,
        GenerationRule::Random,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            GenerationRule::ByTime => "by-time",
            GenerationRule::ByRegime => "by-regime",
            GenerationRule::ModeSelection => "mode-selection",
            GenerationRule::Random => "random",
        }
    }
}

impl fmt::Display for GenerationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GenerationRule {
    type Err = CalibError;

    fn from_str(s: &str) -> Result<Self> {
        GenerationRule::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| {
                CalibError::InvalidInput(format!(
                    "unknown rule '{s}', expected by-time, by-regime, mode-selection or random"
                ))
            })
    }
}

/// Normalized value of candidate `i` (0-based) out of `count` under mode selection.
pub fn mode_selection_value(post: &BetaPosterior, i: usize, count: usize) -> f64 {
    let offset = (i + 1) as f64 - (count as f64 + 1.0) / 2.0;
    (post.mean() + offset * post.sd()).clamp(0.0, 1.0)
}

fn draw<R: Rng + ?Sized>(post: &BetaPosterior, rng: &mut R) -> Result<f64> {
    let dist = Beta::new(post.alpha, post.beta)
        .map_err(|e| CalibError::InvalidInput(format!("beta({}, {}): {e}", post.alpha, post.beta)))?;
    Ok(dist.sample(rng).clamp(0.0, 1.0))
}

/// Emits `count` schedules. `posteriors[n][u]` is the posterior of parameter
/// `n` on merged regime `u`.
pub fn generate_next(
    posteriors: &[Vec<BetaPosterior>],
    merged: &MergedRegimes,
    ranges: &[ParamRange],
    rule: GenerationRule,
    count: usize,
    seed: u64,
) -> Result<Vec<DynamicSchedule>> {
    check_dim("posterior parameter count", ranges.len(), posteriors.len())?;
    let u_count = merged.num_blocks();
    for p in posteriors {
        check_dim("posterior regime count", u_count, p.len())?;
    }
    let horizon = merged.horizon();
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let mut values = DMatrix::zeros(ranges.len(), horizon);
        for (n, range) in ranges.iter().enumerate() {
            for (u, block) in merged.blocks.iter().enumerate() {
                let post = &posteriors[n][u];
                let mut rng = rng_from_seed(derive_seed(seed, &[i as u64, n as u64, u as u64]));
                let shared = match rule {
                    GenerationRule::ByTime => None,
                    GenerationRule::ByRegime => Some(draw(post, &mut rng)?),
                    GenerationRule::ModeSelection => Some(mode_selection_value(post, i, count)),
                    GenerationRule::Random => Some(rng.random::<f64>()),
                };
                for &t in block {
                    let x = match shared {
                        Some(x) => x,
                        None => draw(post, &mut rng)?,
                    };
                    values[(n, t)] = range.denormalize(x);
                }
            }
        }
        out.push(DynamicSchedule::new(values, ranges.to_vec())?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regime::merge::merge_regimes;
    use approx::assert_relative_eq;

    fn post(mean: f64, sd: f64) -> BetaPosterior {
        // invert mean/sd to shapes
        let common = mean * (1.0 - mean) / (sd * sd) - 1.0;
        BetaPosterior {
            alpha: mean * common,
            beta: (1.0 - mean) * common,
            fallback: false,
        }
    }

    #[test]
    fn mode_selection_spreads_by_sd() {
        let p = post(0.5, 0.1);
        let v: Vec<f64> = (0..3).map(|i| mode_selection_value(&p, i, 3)).collect();
        assert_relative_eq!(v[0], 0.4, epsilon = 1e-12);
        assert_relative_eq!(v[1], 0.5, epsilon = 1e-12);
        assert_relative_eq!(v[2], 0.6, epsilon = 1e-12);
    }

    #[test]
    fn mode_selection_clips_and_denormalizes() {
        let merged = merge_regimes(&[vec![0; 5]]).unwrap();
        let ranges = vec![ParamRange::new("income", 0.0, 2.0)];
        let p = post(0.5, 0.4);
        let out = generate_next(&[vec![p]], &merged, &ranges, GenerationRule::ModeSelection, 3, 1).unwrap();
        // 0.5 - 0.4 = 0.1 -> 0.2, 0.5 -> 1.0, 0.9 -> 1.8
        assert_relative_eq!(out[0].values[(0, 0)], 0.2, epsilon = 1e-9);
        assert_relative_eq!(out[1].values[(0, 3)], 1.0, epsilon = 1e-9);
        assert_relative_eq!(out[2].values[(0, 4)], 1.8, epsilon = 1e-9);
        let wide = post(0.5, 0.49);
        let out = generate_next(&[vec![wide]], &merged, &ranges, GenerationRule::ModeSelection, 5, 1).unwrap();
        assert_eq!(out[0].values[(0, 0)], 0.0);
        assert_eq!(out[4].values[(0, 0)], 2.0);
    }

    #[test]
    fn by_regime_is_constant_within_blocks() {
        let merged = merge_regimes(&[(0..20).map(|t| usize::from(t >= 10)).collect()]).unwrap();
        let ranges = vec![ParamRange::new("income", 0.0, 2.0)];
        let posts = vec![vec![post(0.3, 0.1), post(0.7, 0.1)]];
        let out = generate_next(&posts, &merged, &ranges, GenerationRule::ByRegime, 4, 3).unwrap();
        for s in &out {
            assert!((1..10).all(|t| s.values[(0, t)] == s.values[(0, 0)]));
            assert!((11..20).all(|t| s.values[(0, t)] == s.values[(0, 10)]));
        }
    }

    #[test]
    fn by_time_varies_within_blocks_and_stays_in_range() {
        let merged = merge_regimes(&[vec![0; 30]]).unwrap();
        let ranges = vec![ParamRange::new("income", 0.0, 2.0)];
        let posts = vec![vec![post(0.5, 0.2)]];
        let out = generate_next(&posts, &merged, &ranges, GenerationRule::ByTime, 2, 3).unwrap();
        let row = out[0].values.row(0);
        assert!(row.iter().any(|v| *v != row[0]));
        assert!(out.iter().all(|s| s.values.iter().all(|v| (0.0..=2.0).contains(v))));
    }

    #[test]
    fn deterministic_given_seed() {
        let merged = merge_regimes(&[vec![0, 0, 1, 1]]).unwrap();
        let ranges = vec![ParamRange::new("income", 0.0, 2.0)];
        let posts = vec![vec![post(0.3, 0.1), post(0.7, 0.1)]];
        for rule in GenerationRule::ALL {
            let a = generate_next(&posts, &merged, &ranges, rule, 3, 11).unwrap();
            let b = generate_next(&posts, &merged, &ranges, rule, 3, 11).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn uniform_posterior_draws_are_uniform() {
        // Kolmogorov-Smirnov distance of 10,000 by-time draws from Beta(1, 1)
        let merged = merge_regimes(&[vec![0; 10_000]]).unwrap();
        let ranges = vec![ParamRange::new("x", 0.0, 1.0)];
        let uniform = BetaPosterior {
            alpha: 1.0,
            beta: 1.0,
            fallback: false,
        };
        let out = generate_next(&[vec![uniform]], &merged, &ranges, GenerationRule::ByTime, 1, 5).unwrap();
        let mut v: Vec<f64> = out[0].values.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let ks = v
            .iter()
            .enumerate()
            .map(|(k, x)| (x - k as f64 / n).abs().max(((k + 1) as f64 / n - x).abs()))
            .fold(0.0, f64::max);
        assert!(ks < 0.02, "KS = {ks}");
    }

    #[test]
    fn rule_names_round_trip() {
        for rule in GenerationRule::ALL {
            assert_eq!(rule.as_str().parse::<GenerationRule>().unwrap(), rule);
        }
        assert!("sideways".parse::<GenerationRule>().is_err());
    }
}
