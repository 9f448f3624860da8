use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustering::{ClusteringMode, VaeConfig};
use crate::clustering::dpmm::DEFAULT_SWEEPS;
use crate::error::{CalibError, Result};
use crate::params::ParamRange;
use crate::regime::GenerationRule;
use crate::surrogate::SearchStrategy;
use crate::wealth::{initial_wealth_split, WealthModel, WealthModelConfig};

/// Starting values for one parameter kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Uniform per entry: per timestep for dynamic, per cluster for heterogeneous.
    #[default]
    Random,
    Midpoint,
    /// The synthetic reference values.
    Reference,
    /// One constant per parameter.
    Constant(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct InitConfig {
    pub dynamic: InitMode,
    pub heterogeneous: InitMode,
}

/// How agents are grouped. `given` without an explicit vector splits agents
/// by initial wealth into two halves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ClusteringConfig {
    Given {
        #[serde(default)]
        cluster_of_agent: Option<Vec<usize>>,
    },
    Parametric {
        k: usize,
        #[serde(default)]
        vae: VaeConfig,
    },
    Nonparametric {
        gamma: f64,
        #[serde(default)]
        vae: VaeConfig,
        #[serde(default = "default_sweeps")]
        sweeps: usize,
    },
}

fn default_sweeps() -> usize {
    DEFAULT_SWEEPS
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig::Given { cluster_of_agent: None }
    }
}

impl ClusteringConfig {
    pub fn mode(&self, num_agents: usize) -> ClusteringMode {
        match self {
            ClusteringConfig::Given { cluster_of_agent } => ClusteringMode::Given {
                cluster_of_agent: cluster_of_agent.clone().unwrap_or_else(|| initial_wealth_split(num_agents)),
            },
            ClusteringConfig::Parametric { k, .. } => ClusteringMode::Parametric { k: *k },
            ClusteringConfig::Nonparametric { gamma, .. } => ClusteringMode::Nonparametric { gamma: *gamma },
        }
    }

    pub fn vae(&self) -> VaeConfig {
        match self {
            ClusteringConfig::Given { .. } => VaeConfig::default(),
            ClusteringConfig::Parametric { vae, .. } | ClusteringConfig::Nonparametric { vae, .. } => *vae,
        }
    }

    pub fn sweeps(&self) -> usize {
        match self {
            ClusteringConfig::Nonparametric { sweeps, .. } => *sweeps,
            _ => DEFAULT_SWEEPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRanges {
    pub dynamic: Vec<ParamRange>,
    pub heterogeneous: Vec<ParamRange>,
}

impl Default for ParamRanges {
    fn default() -> Self {
        Self {
            dynamic: WealthModel::dynamic_ranges(),
            heterogeneous: WealthModel::heterogeneous_ranges(),
        }
    }
}

/// Parameters that metrics are measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMode {
    /// The synthetic schedule and assignment of the wealth model.
    #[default]
    Synthetic,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationConfig {
    pub replications: usize,
    pub seed: u64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            replications: 300,
            seed: 2021,
        }
    }
}

/// Complete description of one calibration run; every key is optional in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrameworkConfig {
    pub model: WealthModelConfig,
    pub c_cal: usize,
    pub c_dyn: usize,
    pub c_het: usize,
    pub replications: usize,
    pub candidates: usize,
    pub k_dyn: usize,
    pub clustering: ClusteringConfig,
    pub rule: GenerationRule,
    pub seed: u64,
    pub ranges: ParamRanges,
    pub init: InitConfig,
    pub search: SearchStrategy,
    pub reference: ReferenceMode,
    pub validation: ValidationConfig,
}

impl Default for FrameworkConfig {
    fn default() -> Self {
        Self {
            model: WealthModelConfig::default(),
            c_cal: 200,
            c_dyn: 20,
            c_het: 30,
            replications: 10,
            candidates: 3,
            k_dyn: 3,
            clustering: ClusteringConfig::default(),
            rule: GenerationRule::ModeSelection,
            seed: 0,
            ranges: ParamRanges::default(),
            init: InitConfig::default(),
            search: SearchStrategy::default(),
            reference: ReferenceMode::Synthetic,
            validation: ValidationConfig::default(),
        }
    }
}

impl FrameworkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CalibError::InvalidInput(m));
        if self.c_dyn + self.c_het == 0 {
            return bad("c_dyn + c_het must be at least 1".into());
        }
        if self.replications == 0 || self.candidates == 0 || self.k_dyn == 0 {
            return bad("replications, candidates and k_dyn must be positive".into());
        }
        if self.ranges.dynamic.is_empty() || self.ranges.heterogeneous.is_empty() {
            return bad("parameter ranges must be nonempty".into());
        }
        if self.validation.replications == 0 {
            return bad("validation replications must be positive".into());
        }
        for (kind, mode, n) in [
            ("dynamic", &self.init.dynamic, self.ranges.dynamic.len()),
            ("heterogeneous", &self.init.heterogeneous, self.ranges.heterogeneous.len()),
        ] {
            if let InitMode::Constant(v) = mode {
                if v.len() != n {
                    return bad(format!("{kind} init needs {n} values, got {}", v.len()));
                }
            }
        }
        self.search.validate()?;
        self.model.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
