use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, CalibError, Result};
use crate::model::{mean_summary, AbmModel};
use crate::params::{DynamicSchedule, HeterogeneousAssignment};
use crate::rng::{derive_seed, stream};
use crate::stats::log_sum_exp;
use crate::trace::{SummaryTrace, ValidationData};

use super::beta::{fit_beta, BetaPosterior, CLIP};
use super::generate::{generate_next, GenerationRule};
use super::hmm::{fit_hmm, HmmFit};
use super::likelihood::{compute_likelihoods, LikelihoodMatrix};
use super::merge::{detect_poor_fit, merge_regimes, MergedRegimes};

/// The I dynamic-parameter schedules maintained at iteration `iteration`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub candidates: Vec<DynamicSchedule>,
    pub iteration: usize,
}

impl CandidateSet {
    pub fn new(candidates: Vec<DynamicSchedule>, iteration: usize) -> Result<Self> {
        let set = Self { candidates, iteration };
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .candidates
            .first()
            .ok_or_else(|| CalibError::InvalidInput("candidate set is empty".into()))?;
        for c in &self.candidates {
            c.validate()?;
            check_dim("candidate horizon", first.horizon(), c.horizon())?;
            if c.ranges != first.ranges {
                return Err(CalibError::InvalidInput("candidates disagree on parameter ranges".into()));
            }
        }
        Ok(())
    }
}

/// Settings of one dynamic calibration iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicStepConfig {
    pub replications: usize,
    pub k_dyn: usize,
    pub rule: GenerationRule,
}

/// One row of the per-iteration dynamic log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicLogRow {
    pub iter: usize,
    pub candidate: usize,
    pub neg_log_lik: f64,
    pub regime_signature: String,
    pub param: String,
    pub block: usize,
    pub alpha: f64,
    pub beta: f64,
}

/// Everything computed during one dynamic iteration.
#[derive(Debug, Clone)]
pub struct DynamicStepOutcome {
    pub next: CandidateSet,
    /// Mean summary trace per evaluated candidate.
    pub sim_means: Vec<SummaryTrace>,
    pub likelihoods: LikelihoodMatrix,
    /// `sum_t -ln L_t^i` per evaluated candidate.
    pub neg_log_lik: Vec<f64>,
    pub labelings: Vec<HmmFit>,
    pub merged: MergedRegimes,
    /// `posteriors[n][u]`.
    pub posteriors: Vec<Vec<BetaPosterior>>,
    /// `poor_fit[u]`.
    pub poor_fit: Vec<bool>,
    pub log: Vec<DynamicLogRow>,
}

/// T x S deviations `mu_{s,t} - d_{s,t}`.
pub fn deviation_observations(sim: &SummaryTrace, validation: &ValidationData) -> DMatrix<f64> {
    (&sim.stats - &validation.trace.stats).transpose()
}

/// Weighted beta fits per parameter and merged regime. `ratio_exponent` is
/// the exponent `c` of the poor-fit ratio `0.9^c`.
pub fn fit_posteriors(
    candidates: &CandidateSet,
    likelihoods: &LikelihoodMatrix,
    merged: &MergedRegimes,
    ratio_exponent: usize,
) -> Result<(Vec<Vec<BetaPosterior>>, Vec<bool>)> {
    let normalized: Vec<DMatrix<f64>> = candidates.candidates.iter().map(|c| c.normalized()).collect();
    let num_params = candidates.candidates[0].num_params();
    let poor: Vec<bool> = merged
        .blocks
        .iter()
        .map(|b| detect_poor_fit(&likelihoods.log_joint, b, ratio_exponent))
        .collect();
    let mut posteriors = vec![Vec::with_capacity(merged.num_blocks()); num_params];
    for (u, block) in merged.blocks.iter().enumerate() {
        let mut log_w = Vec::with_capacity(block.len() * normalized.len());
        for &t in block {
            for i in 0..normalized.len() {
                log_w.push(likelihoods.log_joint[(t, i)]);
            }
        }
        let weights: Vec<f64> = if poor[u] {
            vec![1.0; log_w.len()]
        } else {
            let z = log_sum_exp(&log_w);
            log_w.iter().map(|l| (l - z).exp()).collect()
        };
        for (n, post) in posteriors.iter_mut().enumerate() {
            let mut xs = Vec::with_capacity(log_w.len());
            for &t in block {
                for norm in &normalized {
                    xs.push(norm[(n, t)].clamp(CLIP, 1.0 - CLIP));
                }
            }
            post.push(fit_beta(&xs, &weights)?);
        }
    }
    Ok((posteriors, poor))
}

/// One dynamic calibration iteration: evaluate every candidate with
/// `replications` runs (common random numbers across candidates), detect
/// regimes, fit posteriors and draw the next candidate set.
pub fn dynamic_calibration_step<M: AbmModel + ?Sized>(
    model: &M,
    candidates: &CandidateSet,
    het: &HeterogeneousAssignment,
    validation: &ValidationData,
    config: &DynamicStepConfig,
    ratio_exponent: usize,
    seed: u64,
) -> Result<DynamicStepOutcome> {
    candidates.validate()?;
    if config.replications == 0 {
        return Err(CalibError::InvalidInput("dynamic step needs at least one replication".into()));
    }
    check_dim("candidate horizon vs validation", validation.trace.horizon(), candidates.candidates[0].horizon())?;
    let sim_seed = derive_seed(seed, &[stream::DYNAMIC_SIM]);
    let sim_means = candidates
        .candidates
        .iter()
        .map(|c| mean_summary(model, c, het, sim_seed, config.replications))
        .collect::<Result<Vec<_>>>()?;
    let likelihoods = compute_likelihoods(&sim_means, validation)?;
    let neg_log_lik: Vec<f64> = (0..candidates.len()).map(|i| likelihoods.neg_log_likelihood(i)).collect();
    let labelings = sim_means
        .iter()
        .enumerate()
        .map(|(i, m)| {
            fit_hmm(
                &deviation_observations(m, validation),
                config.k_dyn,
                derive_seed(seed, &[stream::DYNAMIC_HMM, i as u64]),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<Vec<usize>> = labelings.iter().map(|f| f.labels.clone()).collect();
    let merged = merge_regimes(&labels)?;
    let (posteriors, poor_fit) = fit_posteriors(candidates, &likelihoods, &merged, ratio_exponent)?;
    let ranges = &candidates.candidates[0].ranges;
    let next = generate_next(
        &posteriors,
        &merged,
        ranges,
        config.rule,
        candidates.len(),
        derive_seed(seed, &[stream::DYNAMIC_GEN]),
    )?;
    let mut log = Vec::new();
    for (i, nll) in neg_log_lik.iter().enumerate() {
        for (n, range) in ranges.iter().enumerate() {
            for u in 0..merged.num_blocks() {
                log.push(DynamicLogRow {
                    iter: candidates.iteration,
                    candidate: i,
                    neg_log_lik: *nll,
                    regime_signature: merged.signature_string(u),
                    param: range.name.clone(),
                    block: u,
                    alpha: posteriors[n][u].alpha,
                    beta: posteriors[n][u].beta,
                });
            }
        }
    }
    Ok(DynamicStepOutcome {
        next: CandidateSet::new(next, candidates.iteration + 1)?,
        sim_means,
        likelihoods,
        neg_log_lik,
        labelings,
        merged,
        posteriors,
        poor_fit,
        log,
    })
}

/// `iter,candidate,neg_log_lik,regime_signature,param,block,alpha,beta`.
pub fn write_dynamic_log_csv(path: &Path, rows: &[DynamicLogRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(["iter", "candidate", "neg_log_lik", "regime_signature", "param", "block", "alpha", "beta"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dynamic_log_csv(path: &Path) -> Result<Vec<DynamicLogRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| CalibError::Parse {
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}
