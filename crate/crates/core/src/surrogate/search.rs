use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::rng::{derive_seed, rng_from_seed};

use super::acquisition::{cooling_weight, weighted_ei};
use super::gp::GaussianProcess;

pub const UNIFORM_RESTARTS: usize = 32;
pub const PERTURBED_RESTARTS: usize = 32;
const PERTURB_SD: f64 = 0.1;
const LOCAL_EVALS: usize = 40;
const LOCAL_STEP: f64 = 0.1;
const LOCAL_MIN_STEP: f64 = 1e-4;

/// Portfolio over proposal branches. `xi_wei` is the remainder `1 - others`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchStrategy {
    pub c0: usize,
    pub xi_rand: f64,
    pub xi_pv: f64,
    pub xi_pm: f64,
    pub cooling_base: f64,
    pub r0: f64,
}

impl Default for SearchStrategy {
    fn default() -> Self {
        Self {
            c0: 10,
            xi_rand: 0.1,
            xi_pv: 0.2,
            xi_pm: 0.2,
            cooling_base: 0.99,
            r0: 0.0,
        }
    }
}

impl SearchStrategy {
    pub fn xi_wei(&self) -> f64 {
        1.0 - self.xi_rand - self.xi_pv - self.xi_pm
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [self.xi_rand, self.xi_pv, self.xi_pm];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || self.xi_wei() < -1e-12 {
            return Err(CalibError::InvalidInput(format!(
                "branch probabilities must be nonnegative and sum to at most 1: {probs:?}"
            )));
        }
        if !(self.cooling_base > 0.0 && self.cooling_base <= 1.0) {
            return Err(CalibError::InvalidInput(format!("cooling base must lie in (0, 1], got {}", self.cooling_base)));
        }
        if !(self.r0 >= 0.0) {
            return Err(CalibError::InvalidInput(format!("exploration radius must be >= 0, got {}", self.r0)));
        }
        Ok(())
    }

    /// Samples a branch by the portfolio probabilities.
    pub fn sample_branch<R: Rng + ?Sized>(&self, rng: &mut R) -> Branch {
        let u: f64 = rng.random();
        if u < self.xi_rand {
            Branch::Random
        } else if u < self.xi_rand + self.xi_pv {
            Branch::MaxSd
        } else if u < self.xi_rand + self.xi_pv + self.xi_pm {
            Branch::MinMean
        } else {
            Branch::WeightedEi
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Random,
    MaxSd,
    MinMean,
    WeightedEi,
}

impl Branch {
    pub const ALL: [Branch; 4] = [Branch::Random, Branch::MaxSd, Branch::MinMean, Branch::WeightedEi];

    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Random => "random",
            Branch::MaxSd => "max_sd",
            Branch::MinMean => "min_mean",
            Branch::WeightedEi => "weighted_ei",
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Branch {
    type Err = CalibError;

    fn from_str(s: &str) -> Result<Self> {
        Branch::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| CalibError::InvalidInput(format!("unknown branch '{s}'")))
    }
}

/// A proposed point in the unit box and the branch that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub point: Vec<f64>,
    pub branch: Branch,
    /// Acquisition value at `point`; NaN for the random branch.
    pub acquisition: f64,
}

/// What the surrogate knows when proposing.
#[derive(Debug, Clone, Copy)]
pub struct SurrogateView<'a> {
    pub gp: &'a GaussianProcess,
    /// Lowest observed error.
    pub best: f64,
    /// Unit-box point achieving `best`.
    pub incumbent: &'a [f64],
    /// Most recently evaluated point, centre of the `r0` exclusion ball.
    pub current: &'a [f64],
}

fn uniform_point<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.random::<f64>()).collect()
}

/// Bounded coordinate pattern search maximizing `f` over the unit box.
fn local_search(f: &dyn Fn(&[f64]) -> f64, start: Vec<f64>, fstart: f64) -> (Vec<f64>, f64) {
    let mut x = start;
    let mut fx = fstart;
    let mut step = LOCAL_STEP;
    let mut evals = 0;
    while step >= LOCAL_MIN_STEP && evals < LOCAL_EVALS {
        let mut improved = false;
        for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut cand = x.clone();
                cand[i] = (cand[i] + dir * step).clamp(0.0, 1.0);
                if cand[i] == x[i] {
                    continue;
                }
                let fc = f(&cand);
                evals += 1;
                if fc > fx {
                    x = cand;
                    fx = fc;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, fx)
}

/// Maximizes `f` over the unit box from 32 uniform and 32 perturbed-incumbent
/// restarts. The result is never worse than the best restart seed.
pub fn maximize_in_box<R: Rng + ?Sized>(f: &dyn Fn(&[f64]) -> f64, dim: usize, incumbent: &[f64], rng: &mut R) -> (Vec<f64>, f64) {
    let noise = Normal::new(0.0, PERTURB_SD).expect("positive sd");
    let mut best = (incumbent.to_vec(), f(incumbent));
    for r in 0..UNIFORM_RESTARTS + PERTURBED_RESTARTS {
        let start: Vec<f64> = if r < UNIFORM_RESTARTS {
            uniform_point(dim, rng)
        } else {
            incumbent.iter().map(|v| (v + noise.sample(rng)).clamp(0.0, 1.0)).collect()
        };
        let fs = f(&start);
        let (x, fx) = local_search(f, start, fs);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Maximizes the acquisition for a fixed branch. `w` is the w-EI weight.
pub fn propose_with_branch<R: Rng + ?Sized>(
    view: Option<&SurrogateView<'_>>,
    branch: Branch,
    w: f64,
    r0: f64,
    dim: usize,
    rng: &mut R,
) -> Proposal {
    let Some(v) = view.filter(|_| branch != Branch::Random) else {
        return Proposal {
            point: uniform_point(dim, rng),
            branch: Branch::Random,
            acquisition: f64::NAN,
        };
    };
    let allowed = |x: &[f64]| -> bool {
        r0 <= 0.0 || x.iter().zip(v.current).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() >= r0
    };
    let acq = |x: &[f64]| -> f64 {
        if !allowed(x) {
            return f64::NEG_INFINITY;
        }
        match branch {
            Branch::MinMean => -v.gp.predict_mean(x),
            Branch::MaxSd => v.gp.predict(x).map_or(f64::NEG_INFINITY, |p| p.sd),
            Branch::WeightedEi => v.gp.predict(x).map_or(f64::NEG_INFINITY, |p| weighted_ei(&p, v.best, w)),
            Branch::Random => unreachable!("handled above"),
        }
    };
    let (point, acquisition) = maximize_in_box(&acq, dim, v.incumbent, rng);
    Proposal { point, branch, acquisition }
}

/// Next unit-box design point at heterogeneous iteration `c`: uniform while
/// `c < c0` or without a surrogate, otherwise a sampled branch.
pub fn propose_next(view: Option<&SurrogateView<'_>>, strategy: &SearchStrategy, c: usize, dim: usize, seed: u64) -> Proposal {
    let mut rng = rng_from_seed(seed);
    let branch = if c < strategy.c0 || view.is_none() {
        Branch::Random
    } else {
        strategy.sample_branch(&mut rng)
    };
    let w = cooling_weight(strategy.cooling_base, c);
    let mut inner = rng_from_seed(derive_seed(seed, &[1]));
    propose_with_branch(view, branch, w, strategy.r0, dim, &mut inner)
}
