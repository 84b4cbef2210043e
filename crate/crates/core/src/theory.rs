//! Numerical checks of the shortcut-elimination conditions.
//!
//! Scalar setting: `c = u = s = 1`, noiseless `Y = β_c C + β_u U` and
//! `S = δ_c C + δ_u U`. Every `β̂_c` picks out one point of the zero-risk
//! manifold
//!
//! ```text
//! β̂_s = (β_c − β̂_c) / δ_c
//! β̂_u = β_u − δ_u (β_c − β̂_c) / δ_c
//! ```
//!
//! so a penalty eliminates the shortcut iff its restriction to the manifold
//! is minimized at `β̂_c = β_c`. [`oracle_eliminates`] finds that minimizer by
//! brute force; [`condition_holds`] evaluates the closed-form conditions as
//! printed, which the oracle then adjudicates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::regularizers::{penalty_on_blocks, penalty_value, ModelParams, PenaltySpec};
use crate::rng::{derive_seed, seeded};
use crate::solver::{empirical_risk, fit_closed_form};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarProblem {
    pub beta_c: f64,
    pub beta_u: f64,
    pub delta_c: f64,
    pub delta_u: f64,
    /// `(λ_c, λ_u, λ_s)` for the causal penalty.
    #[serde(default)]
    pub causal_lambdas: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    L1,
    L2,
    #[serde(rename = "EYE")]
    Eye,
    Causal,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::L1, Method::L2, Method::Eye, Method::Causal];

    pub fn name(self) -> &'static str {
        match self {
            Method::L1 => "L1",
            Method::L2 => "L2",
            Method::Eye => "EYE",
            Method::Causal => "Causal",
        }
    }
}

/// `(β̂_u, β̂_s)` on the zero-risk manifold at `beta_c_hat`.
pub fn manifold_params(beta_c_hat: f64, prob: &ScalarProblem) -> Result<(f64, f64)> {
    if prob.delta_c == 0.0 {
        return Err(Error::ZeroDeltaC);
    }
    let bs = (prob.beta_c - beta_c_hat) / prob.delta_c;
    Ok((prob.beta_u - prob.delta_u * bs, bs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub value: f64,
    pub holds: bool,
}

fn causal_lambdas(prob: &ScalarProblem) -> Result<[f64; 3]> {
    let l = prob.causal_lambdas.ok_or(Error::MissingCausalLambdas)?;
    if l.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Config("causal lambdas must be finite and > 0".into()));
    }
    Ok(l)
}

/// The closed-form elimination condition, evaluated exactly as stated:
///
/// * L1: `(δ_c + δ_u − 1)/δ_c ≤ 0`
/// * L2: `(β_c + β_c δ_u² − 2β_u δ_c δ_u)/(δ_c² + δ_u² + 1) ≥ β_c`
/// * EYE: with `k = δ_c/(δ_u − 1)`, `(2β_c − 2kβ_u)/(k² + 1) ≥ β_c`
/// * Causal: with ratios `r_c = λ_c/λ_s`, `r_u = λ_u/λ_s`,
///   `(β_c + r_u δ_u² β_c − r_u δ_u δ_c β_u)/(r_c δ_c² + r_u δ_u² + 1) = β_c`
///   (relative tolerance `1e-9`)
pub fn condition_holds(method: Method, prob: &ScalarProblem) -> Result<Condition> {
    let ScalarProblem {
        beta_c: bc,
        beta_u: bu,
        delta_c: dc,
        delta_u: du,
        ..
    } = *prob;
    if dc == 0.0 {
        return Err(Error::ZeroDeltaC);
    }
    Ok(match method {
        Method::L1 => {
            let value = (dc + du - 1.0) / dc;
            Condition { value, holds: value <= 0.0 }
        }
        Method::L2 => {
            let value = (bc + bc * du * du - 2.0 * bu * dc * du) / (dc * dc + du * du + 1.0);
            Condition { value, holds: value >= bc }
        }
        Method::Eye => {
            if du == 1.0 {
                return Err(Error::EyeSingularDeltaU);
            }
            let k = dc / (du - 1.0);
            let value = (2.0 * bc - 2.0 * k * bu) / (k * k + 1.0);
            Condition { value, holds: value >= bc }
        }
        Method::Causal => {
            let [lc, lu, ls] = causal_lambdas(prob)?;
            let (rc, ru) = (lc / ls, lu / ls);
            let value = (bc + ru * du * du * bc - ru * du * dc * bu) / (rc * dc * dc + ru * du * du + 1.0);
            Condition {
                value,
                holds: (value - bc).abs() <= 1e-9 * bc.abs().max(1.0),
            }
        }
    })
}

/// Penalty restricted to the manifold, as a function of `β̂_c`.
///
/// L1 and L2 here include the `β̂_c` term (`|β̂_c| + |β̂_u| + |β̂_s|`,
/// `β̂_c² + β̂_u² + β̂_s²`); Causal is `λ_c β̂_c² + λ_u β̂_u² + λ_s β̂_s²`.
pub fn manifold_penalty(method: Method, prob: &ScalarProblem, beta_c_hat: f64) -> Result<f64> {
    let (bu, bs) = manifold_params(beta_c_hat, prob)?;
    let x = beta_c_hat;
    Ok(match method {
        Method::L1 => x.abs() + bu.abs() + bs.abs(),
        Method::L2 => x * x + bu * bu + bs * bs,
        Method::Eye => penalty_on_blocks(&[x], &[bu, bs], &PenaltySpec::Eye)?,
        Method::Causal => {
            let [lc, lu, ls] = causal_lambdas(prob)?;
            let us = penalty_on_blocks(&[x], &[bu, bs], &PenaltySpec::WeightedL2 { weights: vec![lu, ls] })?;
            us + lc * x * x
        }
    })
}

/// `β̂_c` range on which `β̂_c`, `β̂_u`, `β̂_s` are all non-negative.
/// Unbounded sides come back as infinities.
pub fn feasible_interval(prob: &ScalarProblem) -> Result<(f64, f64)> {
    let ScalarProblem {
        beta_c: bc,
        beta_u: bu,
        delta_c: dc,
        delta_u: du,
        ..
    } = *prob;
    if dc == 0.0 {
        return Err(Error::ZeroDeltaC);
    }
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    // β̂_s ≥ 0
    if dc > 0.0 {
        hi = hi.min(bc);
    } else {
        lo = lo.max(bc);
    }
    // β̂_u = β_u − (δ_u/δ_c)β_c + (δ_u/δ_c)β̂_c ≥ 0
    let r = du / dc;
    if r > 0.0 {
        lo = lo.max(bc - bu / r);
    } else if r < 0.0 {
        hi = hi.min(bc - bu / r);
    } else if bu < 0.0 {
        return Ok((f64::NAN, f64::NAN));
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleGrid {
    /// Search bounds; `None` means the feasible interval.
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub points: usize,
    /// Fractional widening of the default interval on each side.
    pub margin: f64,
    /// Elimination tolerance; `None` means `1e-6·max(1, |β_c|)`.
    pub atol: Option<f64>,
}

impl Default for OracleGrid {
    fn default() -> Self {
        OracleGrid {
            lo: None,
            hi: None,
            points: 4001,
            margin: 0.0,
            atol: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub argmin_beta_c_hat: f64,
    pub argmin_beta_u_hat: f64,
    pub argmin_beta_s_hat: f64,
    pub min_penalty: f64,
    pub eliminates: bool,
    pub grid_points: usize,
    pub atol: f64,
    pub lo: f64,
    pub hi: f64,
}

fn search_bounds(prob: &ScalarProblem, grid: &OracleGrid) -> Result<(f64, f64)> {
    let (mut lo, mut hi) = feasible_interval(prob)?;
    if !(lo <= hi) {
        (lo, hi) = (0.0f64.min(prob.beta_c), 0.0f64.max(prob.beta_c));
    }
    // cap rays at a generous multiple of the problem scale
    let cap = 10.0 * (1.0 + prob.beta_c.abs() + prob.beta_u.abs()) * (1.0 + prob.delta_c.abs() + prob.delta_u.abs());
    if lo.is_infinite() {
        lo = prob.beta_c - cap;
    }
    if hi.is_infinite() {
        hi = prob.beta_c + cap;
    }
    let pad = grid.margin * (hi - lo);
    Ok((grid.lo.unwrap_or(lo - pad), grid.hi.unwrap_or(hi + pad)))
}

/// Brute-force minimizer of the manifold penalty: a uniform grid, then
/// golden-section refinement inside the best cell down to `atol·1e-2`.
///
/// Exact ties go to the point with the smallest `|β̂_s|`.
pub fn oracle_eliminates(method: Method, prob: &ScalarProblem, grid: &OracleGrid) -> Result<OracleResult> {
    if grid.points < 1000 {
        return Err(Error::EmptyGrid(format!("need at least 1000 points, got {}", grid.points)));
    }
    let (lo, hi) = search_bounds(prob, grid)?;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::EmptyGrid(format!("bounds [{lo}, {hi}]")));
    }
    let atol = grid.atol.unwrap_or(1e-6 * prob.beta_c.abs().max(1.0));
    let f = |x: f64| manifold_penalty(method, prob, x);
    let n = grid.points;
    let xs: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect();
    let vals: Vec<f64> = xs.iter().map(|x| f(*x)).collect::<Result<_>>()?;

    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let tie = 1e-12 * (1.0 + min.abs());
    let (mut best_k, mut best_dist) = (0, f64::INFINITY);
    for (k, v) in vals.iter().enumerate() {
        let dist = (xs[k] - prob.beta_c).abs();
        if *v <= min + tie && dist < best_dist {
            best_k = k;
            best_dist = dist;
        }
    }
    let (mut x_best, mut v_best) = (xs[best_k], vals[best_k]);

    if lo < hi {
        let mut a = xs[best_k.saturating_sub(1)];
        let mut b = xs[(best_k + 1).min(n - 1)];
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        let mut x1 = b - phi * (b - a);
        let mut x2 = a + phi * (b - a);
        let mut f1 = f(x1)?;
        let mut f2 = f(x2)?;
        while b - a > atol * 1e-2 {
            if f1 <= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - phi * (b - a);
                f1 = f(x1)?;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + phi * (b - a);
                f2 = f(x2)?;
            }
        }
        let xr = 0.5 * (a + b);
        let vr = f(xr)?;
        // only move off the grid point on a strict improvement
        if vr < v_best - tie {
            x_best = xr;
            v_best = vr;
        }
    }
    let (bu, bs) = manifold_params(x_best, prob)?;
    Ok(OracleResult {
        argmin_beta_c_hat: x_best,
        argmin_beta_u_hat: bu,
        argmin_beta_s_hat: bs,
        min_penalty: v_best,
        eliminates: (x_best - prob.beta_c).abs() <= atol,
        grid_points: n,
        atol,
        lo,
        hi,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub lambda: f64,
    pub risk: f64,
    pub penalty: f64,
    /// `‖β̂_us‖₂` for L2, `‖Dβ̂_us‖₂` for WeightedL2.
    pub norm: f64,
    pub params: ModelParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageReport {
    pub monotone: bool,
    pub path: Vec<PathPoint>,
}

/// Closed-form regularization path: penalty must not grow and risk must not
/// shrink as `λ` increases (tolerance `1e-8`); for L2 the norm must not grow.
pub fn verify_shrinkage(ds: &Dataset, spec: &PenaltySpec, lambda_grid: &[f64]) -> Result<ShrinkageReport> {
    if lambda_grid.is_empty() {
        return Err(Error::EmptyGrid("lambda grid".into()));
    }
    if lambda_grid.iter().any(|l| !(*l >= 0.0)) || lambda_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("lambda grid must be non-negative and strictly increasing".into()));
    }
    let mut path = Vec::with_capacity(lambda_grid.len());
    for &lambda in lambda_grid {
        let params = fit_closed_form(ds, lambda, spec)?;
        let penalty = penalty_value(&params, spec)?;
        let norm = match spec {
            PenaltySpec::L2 => params.beta_us().iter().map(|v| v * v).sum::<f64>().sqrt(),
            _ => penalty.sqrt(),
        };
        path.push(PathPoint {
            lambda,
            risk: empirical_risk(&params, ds)?,
            penalty,
            norm,
            params,
        });
    }
    let tol = 1e-8;
    let monotone = path.windows(2).all(|w| {
        let ok = w[1].penalty <= w[0].penalty + tol && w[1].risk >= w[0].risk - tol;
        let norm_ok = !matches!(spec, PenaltySpec::L2) || w[1].norm <= w[0].norm + tol;
        ok && norm_ok
    });
    Ok(ShrinkageReport { monotone, path })
}

/// `min/max` of the u-block and s-block L1 masses; near zero when one block
/// carries all the weight.
pub fn concentration_ratio(p: &ModelParams) -> f64 {
    let mu: f64 = p.beta_u.iter().map(|v| v.abs()).sum();
    let ms: f64 = p.beta_s.iter().map(|v| v.abs()).sum();
    let max = mu.max(ms);
    if max == 0.0 {
        0.0
    } else {
        mu.min(ms) / max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgreementConfig {
    pub problems: usize,
    pub seed: u64,
    pub beta_range: (f64, f64),
    /// `|δ_c|` range.
    pub delta_c_range: (f64, f64),
    pub delta_u_range: (f64, f64),
    /// Also draw negative `δ_c`.
    pub signed_delta_c: bool,
    /// Range for each of `log10 λ_c, log10 λ_u, log10 λ_s`.
    pub log10_lambda_range: (f64, f64),
    /// `|value − threshold|` at or below this counts as a boundary case.
    pub boundary: f64,
    pub grid: OracleGrid,
}

impl Default for AgreementConfig {
    fn default() -> Self {
        AgreementConfig {
            problems: 500,
            seed: 0,
            beta_range: (0.1, 3.0),
            delta_c_range: (0.2, 2.0),
            delta_u_range: (-2.0, 2.0),
            signed_delta_c: false,
            log10_lambda_range: (-1.0, 1.0),
            boundary: 1e-3,
            grid: OracleGrid::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodVerdict {
    pub method: Method,
    /// `None` when the condition is undefined (EYE at `δ_u = 1`).
    pub condition: Option<Condition>,
    pub oracle_argmin: f64,
    pub oracle_eliminates: bool,
    pub boundary: bool,
    pub agree: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemRecord {
    pub index: usize,
    pub problem: ScalarProblem,
    pub verdicts: Vec<MethodVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAgreement {
    pub method: Method,
    pub evaluated: usize,
    pub non_boundary: usize,
    pub agree: usize,
    /// `agree / non_boundary`.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub config: AgreementConfig,
    pub summary: Vec<MethodAgreement>,
    pub records: Vec<ProblemRecord>,
}

impl AgreementReport {
    pub fn rate(&self, method: Method) -> f64 {
        self.summary.iter().find(|m| m.method == method).map_or(f64::NAN, |m| m.rate)
    }

    pub fn non_boundary(&self, method: Method) -> usize {
        self.summary.iter().find(|m| m.method == method).map_or(0, |m| m.non_boundary)
    }
}

fn uniform(rng: &mut crate::rng::SeededRng, (lo, hi): (f64, f64)) -> f64 {
    use rand::Rng;
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn random_problem(seed: u64, cfg: &AgreementConfig) -> ScalarProblem {
    use rand::Rng;
    let mut rng = seeded(seed);
    let beta_c = uniform(&mut rng, cfg.beta_range);
    let beta_u = uniform(&mut rng, cfg.beta_range);
    let mut delta_c = uniform(&mut rng, cfg.delta_c_range);
    let negative: bool = rng.random();
    if cfg.signed_delta_c && negative {
        delta_c = -delta_c;
    }
    let delta_u = uniform(&mut rng, cfg.delta_u_range);
    let mut lam = [0.0; 3];
    for l in &mut lam {
        *l = 10f64.powf(uniform(&mut rng, cfg.log10_lambda_range));
    }
    ScalarProblem {
        beta_c,
        beta_u,
        delta_c,
        delta_u,
        causal_lambdas: Some(lam),
    }
}

fn verdict(method: Method, prob: &ScalarProblem, cfg: &AgreementConfig) -> Result<MethodVerdict> {
    let oracle = oracle_eliminates(method, prob, &cfg.grid)?;
    let condition = match condition_holds(method, prob) {
        Ok(c) => Some(c),
        Err(Error::EyeSingularDeltaU) => None,
        Err(e) => return Err(e),
    };
    let boundary = match (method, condition) {
        (_, None) => true,
        (Method::L1, Some(c)) => c.value.abs() <= cfg.boundary,
        (_, Some(c)) => (c.value - prob.beta_c).abs() <= cfg.boundary,
    };
    Ok(MethodVerdict {
        method,
        condition,
        oracle_argmin: oracle.argmin_beta_c_hat,
        oracle_eliminates: oracle.eliminates,
        boundary,
        agree: condition.map(|c| c.holds == oracle.eliminates),
    })
}

/// Randomized comparison of the printed conditions against the oracle.
/// Problems run in parallel; each gets a seed derived from its index.
pub fn agreement_sweep(cfg: &AgreementConfig) -> Result<AgreementReport> {
    let records: Vec<ProblemRecord> = (0..cfg.problems)
        .into_par_iter()
        .map(|i| {
            let prob = random_problem(derive_seed(cfg.seed, &["problem", &i.to_string()]), cfg);
            let verdicts = Method::ALL.iter().map(|m| verdict(*m, &prob, cfg)).collect::<Result<_>>()?;
            Ok(ProblemRecord {
                index: i,
                problem: prob,
                verdicts,
            })
        })
        .collect::<Result<_>>()?;
    let summary = Method::ALL
        .iter()
        .map(|&method| {
            let vs: Vec<&MethodVerdict> = records.iter().flat_map(|r| r.verdicts.iter().filter(move |v| v.method == method)).collect();
            let evaluated = vs.iter().filter(|v| v.condition.is_some()).count();
            let nb: Vec<_> = vs.iter().filter(|v| !v.boundary).collect();
            let agree = nb.iter().filter(|v| v.agree == Some(true)).count();
            MethodAgreement {
                method,
                evaluated,
                non_boundary: nb.len(),
                agree,
                rate: if nb.is_empty() { f64::NAN } else { agree as f64 / nb.len() as f64 },
            }
        })
        .collect();
    Ok(AgreementReport {
        config: *cfg,
        summary,
        records,
    })
}
