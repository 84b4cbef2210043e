//! The five shortcut-mitigation penalties on a linear head.
//!
//! | kind         | value                                   |
//! |--------------|-----------------------------------------|
//! | `None`       | `0`                                     |
//! | `L1`         | `‖β_us‖₁`                               |
//! | `L2`         | `‖β_us‖₂²`                              |
//! | `EYE`        | `‖β_us‖₁ + √(‖β_us‖₁² + ‖β_c‖₂²)`       |
//! | `WeightedL2` | `Σ_i λ_i β_us,i²`                       |
//!
//! `β_us` is the concatenation of the unknown-concept and shortcut blocks.
//! Known concepts are only touched by EYE, through its coupled root term.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficient blocks of the linear head `ŷ = β_cᵀC + β_uᵀU + β_sᵀS + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta_c: Vec<f64>,
    pub beta_u: Vec<f64>,
    pub beta_s: Vec<f64>,
    #[serde(default)]
    pub intercept: f64,
}

impl ModelParams {
    pub fn zeros(c: usize, u: usize, s: usize) -> Self {
        ModelParams {
            beta_c: vec![0.0; c],
            beta_u: vec![0.0; u],
            beta_s: vec![0.0; s],
            intercept: 0.0,
        }
    }

    /// Split a flat `[c.., u.., s..]` vector into blocks.
    pub fn from_flat(c: usize, u: usize, s: usize, flat: &[f64]) -> Self {
        assert_eq!(flat.len(), c + u + s, "flat parameter length");
        ModelParams {
            beta_c: flat[..c].to_vec(),
            beta_u: flat[c..c + u].to_vec(),
            beta_s: flat[c + u..].to_vec(),
            intercept: 0.0,
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.beta_c.iter().chain(&self.beta_u).chain(&self.beta_s).copied().collect()
    }

    pub fn beta_us(&self) -> Vec<f64> {
        self.beta_u.iter().chain(&self.beta_s).copied().collect()
    }

    pub fn width(&self) -> usize {
        self.beta_c.len() + self.beta_u.len() + self.beta_s.len()
    }

    pub fn is_finite(&self) -> bool {
        self.flat().iter().all(|v| v.is_finite()) && self.intercept.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum PenaltySpec {
    None,
    L1,
    L2,
    #[serde(rename = "EYE")]
    Eye,
    /// Per-coefficient weights `λ_i` over the `u+s` block (so `D_ii = √λ_i`).
    WeightedL2 { weights: Vec<f64> },
}

impl PenaltySpec {
    pub fn name(&self) -> &'static str {
        match self {
            PenaltySpec::None => "None",
            PenaltySpec::L1 => "L1",
            PenaltySpec::L2 => "L2",
            PenaltySpec::Eye => "EYE",
            PenaltySpec::WeightedL2 { .. } => "WeightedL2",
        }
    }

    /// Check weights against a `u+s` block of length `us_len`.
    pub fn validate(&self, us_len: usize) -> Result<()> {
        if let PenaltySpec::WeightedL2 { weights } = self {
            if weights.len() != us_len {
                return Err(Error::DimensionMismatch {
                    expected: us_len,
                    got: weights.len(),
                });
            }
            if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                return Err(Error::Config("WeightedL2 weights must be finite and > 0".into()));
            }
        }
        Ok(())
    }

    /// Diagonal of `D_λ²` for the quadratic penalties; `None` otherwise.
    pub fn quadratic_weights(&self, us_len: usize) -> Option<Vec<f64>> {
        match self {
            PenaltySpec::L2 => Some(vec![1.0; us_len]),
            PenaltySpec::WeightedL2 { weights } => Some(weights.clone()),
            _ => None,
        }
    }
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Penalty value on raw blocks. Shared by the linear head and the network's
/// first-layer blocks.
pub fn penalty_on_blocks(beta_c: &[f64], beta_us: &[f64], spec: &PenaltySpec) -> Result<f64> {
    spec.validate(beta_us.len())?;
    Ok(match spec {
        PenaltySpec::None => 0.0,
        PenaltySpec::L1 => l1(beta_us),
        PenaltySpec::L2 => sq(beta_us),
        PenaltySpec::Eye => {
            let a = l1(beta_us);
            a + (a * a + sq(beta_c)).sqrt()
        }
        PenaltySpec::WeightedL2 { weights } => weights.iter().zip(beta_us).map(|(w, b)| w * b * b).sum(),
    })
}

/// Subgradient `(g_c, g_us)` on raw blocks; `sign(0) = 0`.
pub fn subgradient_on_blocks(beta_c: &[f64], beta_us: &[f64], spec: &PenaltySpec) -> Result<(Vec<f64>, Vec<f64>)> {
    spec.validate(beta_us.len())?;
    let zc = vec![0.0; beta_c.len()];
    Ok(match spec {
        PenaltySpec::None => (zc, vec![0.0; beta_us.len()]),
        PenaltySpec::L1 => (zc, beta_us.iter().map(|b| sign(*b)).collect()),
        PenaltySpec::L2 => (zc, beta_us.iter().map(|b| 2.0 * b).collect()),
        PenaltySpec::WeightedL2 { weights } => (zc, weights.iter().zip(beta_us).map(|(w, b)| 2.0 * w * b).collect()),
        PenaltySpec::Eye => {
            let a = l1(beta_us);
            let root = (a * a + sq(beta_c)).sqrt();
            if root == 0.0 {
                (zc, vec![0.0; beta_us.len()])
            } else {
                let scale = 1.0 + a / root;
                (
                    beta_c.iter().map(|b| b / root).collect(),
                    beta_us.iter().map(|b| sign(*b) * scale).collect(),
                )
            }
        }
    })
}

fn check_dims(p: &ModelParams, spec: &PenaltySpec) -> Result<()> {
    if !p.is_finite() {
        return Err(Error::Config("model parameters must be finite".into()));
    }
    spec.validate(p.beta_u.len() + p.beta_s.len())
}

pub fn penalty_value(p: &ModelParams, spec: &PenaltySpec) -> Result<f64> {
    check_dims(p, spec)?;
    penalty_on_blocks(&p.beta_c, &p.beta_us(), spec)
}

/// A valid subgradient of [`penalty_value`]. For EYE at `β = 0` the
/// minimal-norm element (zero) is returned.
pub fn penalty_subgradient(p: &ModelParams, spec: &PenaltySpec) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dims(p, spec)?;
    subgradient_on_blocks(&p.beta_c, &p.beta_us(), spec)
}

/// Causal-effect weights `λ_i = 1 / max(|te_i|, floor)`.
pub fn causal_weights(te_estimates: &[f64], floor: f64) -> Result<PenaltySpec> {
    if !(floor > 0.0) {
        return Err(Error::NonPositiveFloor(floor));
    }
    let weights = te_estimates.iter().map(|te| 1.0 / te.abs().max(floor)).collect();
    Ok(PenaltySpec::WeightedL2 { weights })
}
