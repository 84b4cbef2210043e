use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::DatasetSpec;
use crate::error::{Error, Result};
use crate::mlp::MlpArch;
use crate::regularizers::{causal_weights, PenaltySpec};
use crate::solver::TrainConfig;

fn default_floor() -> f64 {
    1e-6
}

/// A penalty as written in a scenario file. `CausalEffect` turns
/// treatment-effect estimates into WeightedL2 weights `1/max(|te|, floor)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum PenaltyConfig {
    None,
    L1,
    L2,
    #[serde(rename = "EYE")]
    Eye,
    WeightedL2 {
        weights: Vec<f64>,
    },
    CausalEffect {
        treatment_effects: Vec<f64>,
        #[serde(default = "default_floor")]
        floor: f64,
    },
}

impl PenaltyConfig {
    pub fn resolve(&self) -> Result<PenaltySpec> {
        Ok(match self {
            PenaltyConfig::None => PenaltySpec::None,
            PenaltyConfig::L1 => PenaltySpec::L1,
            PenaltyConfig::L2 => PenaltySpec::L2,
            PenaltyConfig::Eye => PenaltySpec::Eye,
            PenaltyConfig::WeightedL2 { weights } => PenaltySpec::WeightedL2 { weights: weights.clone() },
            PenaltyConfig::CausalEffect { treatment_effects, floor } => causal_weights(treatment_effects, *floor)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizerConfig {
    /// Row label; also part of the seed derivation.
    pub name: String,
    #[serde(flatten)]
    pub penalty: PenaltyConfig,
    #[serde(default)]
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub lambda_grid: Option<Vec<f64>>,
    /// Values written into every `U` entry of the shortcut coefficients.
    #[serde(default)]
    pub delta_u_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    /// Closed form for L2 and WeightedL2, iterative otherwise.
    #[default]
    Auto,
    Iterative,
}

fn default_repeats() -> usize {
    10
}

fn default_true() -> bool {
    true
}

fn default_te_samples() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: String,
    #[serde(default)]
    pub description: String,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub regularizers: Vec<RegularizerConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Output directory; `out/<scenario>` when absent.
    #[serde(default)]
    pub outputs: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub standardize: bool,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub solver: SolverChoice,
    #[serde(default)]
    pub mlp: MlpArch,
    /// Draws per treatment-effect estimate.
    #[serde(default = "default_te_samples")]
    pub te_samples: usize,
    /// When set, repeat 0 of every regularizer is also fit iteratively for
    /// this many epochs with a per-epoch trace.
    #[serde(default)]
    pub trace_epochs: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.outputs.clone().unwrap_or_else(|| PathBuf::from("out").join(&self.scenario))
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenario.is_empty() {
            return Err(Error::Config("scenario name is empty".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be >= 1".into()));
        }
        if self.te_samples < 2 {
            return Err(Error::Config("te_samples must be >= 2".into()));
        }
        self.dataset.validate()?;
        self.train.validate()?;
        let us = self.dataset.u_dim + self.dataset.s_dim;
        let mut names = std::collections::HashSet::new();
        for r in &self.regularizers {
            if !names.insert(&r.name) {
                return Err(Error::Config(format!("duplicate regularizer name `{}`", r.name)));
            }
            if !(r.lambda >= 0.0 && r.lambda.is_finite()) {
                return Err(Error::Config(format!("`{}`: lambda must be >= 0", r.name)));
            }
            let spec = r.penalty.resolve()?;
            spec.validate(us).map_err(|e| Error::Config(format!("`{}`: {e}", r.name)))?;
        }
        if let Some(sweep) = &self.sweep {
            for (name, grid) in [("lambda_grid", &sweep.lambda_grid), ("delta_u_grid", &sweep.delta_u_grid)] {
                if let Some(g) = grid {
                    if g.is_empty() {
                        return Err(Error::EmptyGrid(name.into()));
                    }
                    if g.windows(2).any(|w| !(w[1] > w[0])) {
                        return Err(Error::Config(format!("{name} must be strictly increasing")));
                    }
                }
            }
            if let Some(g) = &sweep.lambda_grid {
                if g.iter().any(|l| !(*l >= 0.0)) {
                    return Err(Error::Config("lambda_grid must be non-negative".into()));
                }
            }
        }
        Ok(())
    }

    pub fn lambda_grid(&self) -> Result<&[f64]> {
        self.sweep
            .as_ref()
            .and_then(|s| s.lambda_grid.as_deref())
            .ok_or_else(|| Error::Config(format!("scenario `{}` has no sweep.lambda_grid", self.scenario)))
    }

    pub fn delta_u_grid(&self) -> Result<&[f64]> {
        self.sweep
            .as_ref()
            .and_then(|s| s.delta_u_grid.as_deref())
            .ok_or_else(|| Error::Config(format!("scenario `{}` has no sweep.delta_u_grid", self.scenario)))
    }
}
