use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, CalibError, Result};
use crate::stats::log_sum_exp;

/// Partition of the timesteps by the tuple of per-candidate regime labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedRegimes {
    /// Timesteps of each block, ascending; blocks ordered by first timestep.
    pub blocks: Vec<Vec<usize>>,
    /// Label tuple shared by every timestep of the block, one entry per candidate.
    pub signatures: Vec<Vec<usize>>,
    horizon: usize,
}

impl MergedRegimes {
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Block index of every timestep.
    pub fn block_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.horizon];
        for (u, block) in self.blocks.iter().enumerate() {
            for &t in block {
                out[t] = u;
            }
        }
        out
    }

    /// Signature as 1-based labels joined by `-`, e.g. `1-2-1`.
    pub fn signature_string(&self, u: usize) -> String {
        self.signatures[u]
            .iter()
            .map(|l| (l + 1).to_string())
            .collect::<Vec<_>>()
            .join("-")
    }
}

/// Groups timesteps whose label tuples across all candidates coincide.
/// `labels[i][t]` is candidate `i`'s regime at `t`.
pub fn merge_regimes(labels: &[Vec<usize>]) -> Result<MergedRegimes> {
    let horizon = labels
        .first()
        .ok_or_else(|| CalibError::InvalidInput("no regime labelings to merge".into()))?
        .len();
    for l in labels {
        check_dim("regime labeling length", horizon, l.len())?;
    }
    let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut signatures = Vec::new();
    for t in 0..horizon {
        let sig: Vec<usize> = labels.iter().map(|l| l[t]).collect();
        let u = *index.entry(sig.clone()).or_insert_with(|| {
            blocks.push(Vec::new());
            signatures.push(sig);
            blocks.len() - 1
        });
        blocks[u].push(t);
    }
    Ok(MergedRegimes {
        blocks,
        signatures,
        horizon,
    })
}

/// True when every candidate's likelihood at every timestep of `block` lies
/// strictly below `(min_t L + ratio max_t L) / (1 + ratio)`, with
/// `ratio = 0.9^c` and min/max taken over the whole horizon.
/// `log_joint` is T x I in log space.
pub fn detect_poor_fit(log_joint: &DMatrix<f64>, block: &[usize], c: usize) -> bool {
    if block.is_empty() {
        return false;
    }
    let ln_ratio = c as f64 * 0.9f64.ln();
    let ln_one_plus = ln_ratio.exp().ln_1p();
    log_joint.column_iter().all(|col| {
        let lmin = col.min();
        let lmax = col.max();
        let ln_threshold = log_sum_exp(&[lmin, ln_ratio + lmax]) - ln_one_plus;
        // the threshold never exceeds the maximum, so L = max always fails
        block.iter().all(|&t| col[t] < lmax && col[t] < ln_threshold)
    })
}
