//! Fitting the linear head.
//!
//! Empirical risk is `(1/n)‖Y − Ŷ‖²`. [`fit_closed_form`] solves the weighted
//! ridge normal equations after partialling `C` out of `[U S]`;
//! [`fit_iterative`] runs full-batch proximal gradient descent from zero with
//! a monotone backtracking step.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::eval::{te_draws, te_with_draws};
use crate::regularizers::{penalty_on_blocks, ModelParams, PenaltySpec};

/// Singular value ratio below which `C` is treated as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop once `max |Δβ|` over one epoch falls below this.
    pub tol: f64,
    pub lambda_reg: f64,
    pub record_trace: bool,
    pub te_trace_samples: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            max_epochs: 5000,
            tol: 1e-8,
            lambda_reg: 0.0,
            record_trace: false,
            te_trace_samples: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if !(self.lambda_reg >= 0.0 && self.lambda_reg.is_finite()) {
            return Err(Error::Config(format!("lambda_reg must be >= 0, got {}", self.lambda_reg)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.record_trace && self.te_trace_samples < 2 {
            return Err(Error::Config("te_trace_samples must be >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub risk: f64,
    pub penalty: f64,
    pub loss: f64,
    /// Sampled treatment effect of each shortcut column.
    pub te: Vec<f64>,
    pub params: ModelParams,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
    pub converged: bool,
    /// Epochs actually run.
    pub epochs: usize,
}

impl TrainTrace {
    /// `epoch,risk,penalty,loss,te_s0..,beta_c0..,beta_u0..,beta_s0..`
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let Some(first) = self.rows.first() else {
            out.push_str("epoch,risk,penalty,loss\n");
            return out;
        };
        let mut head = vec!["epoch".to_string(), "risk".into(), "penalty".into(), "loss".into()];
        head.extend((0..first.te.len()).map(|j| format!("te_s{j}")));
        head.extend((0..first.params.beta_c.len()).map(|j| format!("beta_c{j}")));
        head.extend((0..first.params.beta_u.len()).map(|j| format!("beta_u{j}")));
        head.extend((0..first.params.beta_s.len()).map(|j| format!("beta_s{j}")));
        out.push_str(&head.join(","));
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{:?},{:?},{:?}", r.epoch, r.risk, r.penalty, r.loss);
            for v in r.te.iter().chain(r.params.flat().iter()) {
                let _ = write!(out, ",{v:?}");
            }
            out.push('\n');
        }
        out
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }
}

pub fn soft_threshold(x: f64, t: f64) -> Result<f64> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeThreshold(t));
    }
    Ok(shrink(x, t))
}

#[inline]
fn shrink(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

fn check_rank(c: &DMatrix<f64>) -> Result<()> {
    if c.ncols() == 0 {
        return Ok(());
    }
    if c.nrows() < c.ncols() {
        return Err(Error::SingularConceptGram { ratio: 0.0 });
    }
    let gram = c.transpose() * c;
    let sv = gram.singular_values();
    let max = sv.max();
    let ratio = if max > 0.0 { sv.min() / max } else { 0.0 };
    if !(ratio >= RANK_TOL) {
        return Err(Error::SingularConceptGram { ratio });
    }
    Ok(())
}

/// `Π_c = C(CᵀC)⁻¹Cᵀ`, built from a thin QR as `QQᵀ`.
pub fn concept_projection(c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_rank(c)?;
    if c.ncols() == 0 {
        return Ok(DMatrix::zeros(c.nrows(), c.nrows()));
    }
    let q = c.clone().qr().q();
    Ok(&q * q.transpose())
}

/// `(I − Π_c)X` without forming the `n × n` projector.
struct Residualizer {
    q: Option<DMatrix<f64>>,
    r: Option<DMatrix<f64>>,
}

impl Residualizer {
    fn new(c: &DMatrix<f64>) -> Result<Self> {
        check_rank(c)?;
        if c.ncols() == 0 {
            return Ok(Residualizer { q: None, r: None });
        }
        let qr = c.clone().qr();
        Ok(Residualizer {
            q: Some(qr.q()),
            r: Some(qr.r()),
        })
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.q {
            Some(q) => x - q * (q.transpose() * x),
            None => x.clone(),
        }
    }

    /// Least-squares coefficients of `rhs` on `C`.
    fn coef(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match (&self.q, &self.r) {
            (Some(q), Some(r)) => r
                .solve_upper_triangular(&(q.transpose() * rhs))
                .expect("rank checked"),
            _ => DVector::zeros(0),
        }
    }
}

/// Solve a small symmetric positive (semi)definite system.
fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(b));
    }
    a.clone().lu().solve(b).ok_or(Error::SingularSystem)
}

/// Weighted ridge in closed form; `spec` must be `L2` or `WeightedL2`.
///
/// `β_us = (H̃ᵀH̃/n + λD²)⁻¹ H̃ᵀỸ/n` with `H̃ = (I−Π_c)H_us`, then
/// `β_c = (CᵀC)⁻¹Cᵀ(Y − H_us β_us)`.
pub fn fit_closed_form(ds: &Dataset, lambda_reg: f64, spec: &PenaltySpec) -> Result<ModelParams> {
    if !(lambda_reg >= 0.0 && lambda_reg.is_finite()) {
        return Err(Error::Config(format!("lambda_reg must be >= 0, got {lambda_reg}")));
    }
    let us = ds.u_dim() + ds.s_dim();
    spec.validate(us)?;
    let weights = spec
        .quadratic_weights(us)
        .ok_or_else(|| Error::Config(format!("closed form needs L2 or WeightedL2, got {}", spec.name())))?;
    let n = ds.n() as f64;
    let res = Residualizer::new(&ds.c)?;
    let h_us = ds.h_us();
    let ht = res.apply(&h_us);
    let y_mat = DMatrix::from_column_slice(ds.n(), 1, ds.y.as_slice());
    let yt = res.apply(&y_mat).column(0).into_owned();

    let mut a = ht.transpose() * &ht / n;
    let b = ht.transpose() * &yt / n;
    for (i, w) in weights.iter().enumerate() {
        a[(i, i)] += lambda_reg * w;
    }
    if us > 0 {
        let eig = a.clone().symmetric_eigen().eigenvalues;
        let max = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let min = eig.min();
        if !(max > 0.0) || min <= 1e-12 * max {
            return Err(Error::SingularSystem);
        }
    }
    let beta_us = spd_solve(&a, &b)?;
    let beta_c = res.coef(&(&ds.y - &h_us * &beta_us));
    Ok(ModelParams {
        beta_c: beta_c.iter().copied().collect(),
        beta_u: beta_us.rows(0, ds.u_dim()).iter().copied().collect(),
        beta_s: beta_us.rows(ds.u_dim(), ds.s_dim()).iter().copied().collect(),
        intercept: 0.0,
    })
}

pub fn predict(p: &ModelParams, ds: &Dataset) -> Result<DVector<f64>> {
    if p.beta_c.len() != ds.c_dim() || p.beta_u.len() != ds.u_dim() || p.beta_s.len() != ds.s_dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.width(),
            got: p.width(),
        });
    }
    let block = |m: &DMatrix<f64>, b: &[f64]| m * DVector::from_column_slice(b);
    let yhat = block(&ds.c, &p.beta_c) + block(&ds.u, &p.beta_u) + block(&ds.s, &p.beta_s);
    Ok(yhat.add_scalar(p.intercept))
}

/// `(1/n)‖Y − Ŷ‖²`
pub fn empirical_risk(p: &ModelParams, ds: &Dataset) -> Result<f64> {
    let yhat = predict(p, ds)?;
    Ok((&ds.y - yhat).norm_squared() / ds.n() as f64)
}

/// Sufficient statistics for the squared loss: `G = HᵀH/n`, `b = HᵀY/n`, `yy = YᵀY/n`.
struct Gram {
    g: DMatrix<f64>,
    b: DVector<f64>,
    yy: f64,
}

impl Gram {
    fn new(ds: &Dataset) -> Self {
        let h = ds.features();
        let n = ds.n() as f64;
        Gram {
            g: h.transpose() * &h / n,
            b: h.transpose() * &ds.y / n,
            yy: ds.y.norm_squared() / n,
        }
    }

    fn risk(&self, beta: &DVector<f64>) -> f64 {
        (self.yy - 2.0 * self.b.dot(beta) + beta.dot(&(&self.g * beta))).max(0.0)
    }

    fn grad(&self, beta: &DVector<f64>) -> DVector<f64> {
        2.0 * (&self.g * beta - &self.b)
    }
}

struct Blocks {
    c: usize,
    u: usize,
    s: usize,
}

impl Blocks {
    fn params(&self, beta: &DVector<f64>) -> ModelParams {
        ModelParams::from_flat(self.c, self.u, self.s, beta.as_slice())
    }

    fn penalty(&self, beta: &DVector<f64>, spec: &PenaltySpec) -> f64 {
        let v = beta.as_slice();
        penalty_on_blocks(&v[..self.c], &v[self.c..], spec).expect("spec validated")
    }
}

/// One proximal-gradient candidate from `beta` with gradient `g` of the risk.
///
/// `beta[..c]` is the concept block, `beta[c..c + us]` the penalized block;
/// anything after that takes a plain gradient step.
pub(crate) fn candidate(beta: &DVector<f64>, g: &DVector<f64>, step: f64, lambda: f64, spec: &PenaltySpec, c: usize, us: usize) -> DVector<f64> {
    let p = c + us;
    let mut out = beta - step * g;
    match spec {
        PenaltySpec::None => {}
        PenaltySpec::L2 => {
            for i in c..p {
                out[i] -= step * lambda * 2.0 * beta[i];
            }
        }
        PenaltySpec::WeightedL2 { weights } => {
            for i in c..p {
                out[i] -= step * lambda * 2.0 * weights[i - c] * beta[i];
            }
        }
        PenaltySpec::L1 => {
            for i in c..p {
                out[i] = shrink(out[i], step * lambda);
            }
        }
        PenaltySpec::Eye => {
            // linearize the root term around `beta`, keep the l1 part proximal
            let a: f64 = (c..p).map(|i| beta[i].abs()).sum();
            let cc: f64 = (0..c).map(|i| beta[i] * beta[i]).sum();
            let root = (a * a + cc).sqrt();
            let ratio = if root > 0.0 { a / root } else { 0.0 };
            if root > 0.0 {
                for i in 0..c {
                    out[i] -= step * lambda * beta[i] / root;
                }
            }
            for i in c..p {
                out[i] = shrink(out[i], step * lambda * (1.0 + ratio));
            }
        }
    }
    out
}

/// Full-batch proximal gradient descent on `risk + λ·R`, starting from zero.
///
/// L1 soft-thresholds the `u+s` block; L2 and WeightedL2 take plain gradient
/// steps; EYE soft-thresholds the `u+s` block at the level implied by the
/// linearized root term and takes a gradient step on `β_c`. Any increase in
/// the total loss halves the step (the reduction persists across epochs).
/// If thirty halvings cannot produce a non-increasing step the fit stops
/// with `converged = false`.
pub fn fit_iterative(ds: &Dataset, spec: &PenaltySpec, cfg: &TrainConfig) -> Result<(ModelParams, TrainTrace)> {
    cfg.validate()?;
    if ds.n() == 0 {
        return Err(Error::Empty);
    }
    let blocks = Blocks {
        c: ds.c_dim(),
        u: ds.u_dim(),
        s: ds.s_dim(),
    };
    spec.validate(blocks.u + blocks.s)?;
    let gram = Gram::new(ds);
    let lambda = cfg.lambda_reg;
    let total = |beta: &DVector<f64>| -> (f64, f64, f64) {
        let risk = gram.risk(beta);
        let pen = blocks.penalty(beta, spec);
        (risk, pen, risk + lambda * pen)
    };
    let draws = if cfg.record_trace {
        te_draws(cfg.seed, cfg.te_trace_samples)
    } else {
        Vec::new()
    };
    let mut trace = TrainTrace::default();
    let record = |trace: &mut TrainTrace, epoch: usize, beta: &DVector<f64>, (risk, penalty, loss): (f64, f64, f64)| {
        let params = blocks.params(beta);
        let base = vec![0.0; ds.width()];
        let te = (0..blocks.s)
            .map(|j| te_with_draws(&params, &base, ds.shortcut_index(j), &draws).expect("index in range"))
            .collect();
        trace.rows.push(TraceRow {
            epoch,
            risk,
            penalty,
            loss,
            te,
            params,
        });
    };

    let mut beta = DVector::zeros(ds.width());
    let mut cur = total(&beta);
    if cfg.record_trace {
        record(&mut trace, 0, &beta, cur);
    }
    let mut step = cfg.learning_rate;
    for epoch in 1..=cfg.max_epochs {
        let g = gram.grad(&beta);
        let slack = 1e-13 * (1.0 + cur.2.abs() + gram.yy);
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand = candidate(&beta, &g, step, lambda, spec, blocks.c, blocks.u + blocks.s);
            let next = total(&cand);
            if !next.2.is_finite() {
                return Err(Error::DivergenceDetected { epoch });
            }
            if next.2 <= cur.2 + slack {
                accepted = Some((cand, next));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, next)) = accepted else {
            break;
        };
        let delta = (&cand - &beta).amax();
        beta = cand;
        cur = next;
        trace.epochs = epoch;
        if cfg.record_trace {
            record(&mut trace, epoch, &beta, cur);
        }
        if delta < cfg.tol {
            trace.converged = true;
            break;
        }
    }
    Ok((blocks.params(&beta), trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, DatasetSpec, Role, ShortcutKind};
    use crate::regularizers::causal_weights;
    use crate::rng::{normals, seeded};

    fn spec(kind: ShortcutKind, coeffs: Vec<f64>, noise: f64, n: usize, seed: u64) -> DatasetSpec {
        DatasetSpec {
            n_train: n,
            n_test: 10,
            c_dim: 2,
            u_dim: 2,
            s_dim: 1,
            beta_c: vec![4.0, -0.5],
            beta_u: vec![1.0, 2.0],
            noise_sigma: noise,
            shortcut_kind: kind,
            shortcut_coeffs: coeffs,
            shortcut_noise: 0.0,
            seed,
        }
    }

    fn random_ds(n: usize, seed: u64) -> Dataset {
        let mut rng = seeded(seed);
        let c = DMatrix::from_vec(n, 2, normals(&mut rng, 2 * n));
        let u = DMatrix::from_vec(n, 2, normals(&mut rng, 2 * n));
        let s = DMatrix::from_vec(n, 1, normals(&mut rng, n));
        let y = DVector::from_vec(normals(&mut rng, n)) + &c.column(0) * 2.0 + &s.column(0) * 0.5;
        Dataset::new(c, u, s, y, Role::Train).unwrap()
    }

    fn tight() -> TrainConfig {
        TrainConfig {
            learning_rate: 0.1,
            max_epochs: 200_000,
            tol: 1e-13,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(3.0, 1.0).unwrap(), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0).unwrap(), 0.0);
        assert_eq!(soft_threshold(-2.5, 1.0).unwrap(), -1.5);
        for x in [-3.3, 0.0, 1e-9, 7.25] {
            assert_eq!(soft_threshold(x, 0.0).unwrap(), x);
        }
        assert!(matches!(soft_threshold(1.0, -1.0), Err(Error::NegativeThreshold(_))));
    }

    #[test]
    fn projection_of_ones_column() {
        let c = DMatrix::from_element(4, 1, 1.0);
        let p = concept_projection(&c).unwrap();
        for v in p.iter() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_orthonormal_and_ols() {
        let c = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let p = concept_projection(&c).unwrap();
        assert!((p - &c * c.transpose()).amax() < 1e-12);

        let ds = random_ds(50, 3);
        let p = concept_projection(&ds.c).unwrap();
        assert!((&p * &p - &p).amax() < 1e-8);
        assert!((&p - p.transpose()).amax() < 1e-12);
        assert!((&p * &ds.c - &ds.c).amax() < 1e-10);
        let ctc = ds.c.transpose() * &ds.c;
        let coef = ctc.lu().solve(&(ds.c.transpose() * &ds.y)).unwrap();
        assert!((&p * &ds.y - &ds.c * coef).amax() < 1e-10);
    }

    #[test]
    fn projection_rejects_rank_deficiency() {
        let c = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert!(matches!(concept_projection(&c), Err(Error::SingularConceptGram { .. })));
    }

    #[test]
    fn ols_recovery_with_independent_shortcut() {
        let (train, _) = generate_synthetic(&spec(ShortcutKind::Independent, vec![], 0.0, 10_000, 1)).unwrap();
        let p = fit_closed_form(&train, 0.0, &PenaltySpec::L2).unwrap();
        let want = [4.0, -0.5, 1.0, 2.0, 0.0];
        for (got, w) in p.flat().iter().zip(want) {
            assert!((got - w).abs() < 1e-6, "{got} vs {w}");
        }
        let (noisy, _) = generate_synthetic(&spec(ShortcutKind::Independent, vec![], 0.5, 10_000, 2)).unwrap();
        let p = fit_closed_form(&noisy, 0.0, &PenaltySpec::L2).unwrap();
        for (got, w) in p.flat().iter().zip(want) {
            assert!((got - w).abs() < 4.0 / 100.0, "{got} vs {w}");
        }
    }

    #[test]
    fn huge_lambda_kills_us_block() {
        let ds = random_ds(300, 9);
        let p = fit_closed_form(&ds, 1e12, &PenaltySpec::L2).unwrap();
        assert!(DVector::from_vec(p.beta_us()).norm() < 1e-6);
        let ctc = ds.c.transpose() * &ds.c;
        let ols = ctc.lu().solve(&(ds.c.transpose() * &ds.y)).unwrap();
        for (a, b) in p.beta_c.iter().zip(ols.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn collinear_unpenalized_system_is_singular() {
        let (train, _) = generate_synthetic(&spec(ShortcutKind::ConceptCorrelated, vec![1.5, -0.5], 0.0, 200, 4)).unwrap();
        assert!(matches!(fit_closed_form(&train, 0.0, &PenaltySpec::L2), Err(Error::SingularSystem)));
        assert!(fit_closed_form(&train, 1e-3, &PenaltySpec::L2).is_ok());
        assert!(fit_closed_form(&train, 1e-3, &PenaltySpec::L1).is_err());
    }

    #[test]
    fn closed_form_matches_iterative() {
        let ds = random_ds(400, 11);
        let cf = fit_closed_form(&ds, 1e-3, &PenaltySpec::L2).unwrap();
        let (it, trace) = fit_iterative(&ds, &PenaltySpec::L2, &TrainConfig { lambda_reg: 1e-3, ..tight() }).unwrap();
        assert!(trace.converged);
        for (a, b) in cf.flat().iter().zip(it.flat()) {
            assert!((a - b).abs() < 1e-5);
        }

        let w = causal_weights(&[1.0, 1.0, 0.001], 1e-6).unwrap();
        let (train, _) = generate_synthetic(&spec(ShortcutKind::UnknownCorrelated, vec![0.0, -0.125, 0.25, 0.5], 0.0, 500, 5)).unwrap();
        let cf = fit_closed_form(&train, 1e-3, &w).unwrap();
        let (it, _) = fit_iterative(&train, &w, &TrainConfig { lambda_reg: 1e-3, ..tight() }).unwrap();
        for (a, b) in cf.flat().iter().zip(it.flat()) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn unpenalized_exact_fit_on_manifold() {
        let (train, _) = generate_synthetic(&spec(ShortcutKind::ConceptCorrelated, vec![1.5, -0.5], 0.0, 1000, 6)).unwrap();
        let (p, _) = fit_iterative(&train, &PenaltySpec::None, &TrainConfig { max_epochs: 20_000, ..tight() }).unwrap();
        assert!(empirical_risk(&p, &train).unwrap() < 1e-10);
    }

    #[test]
    fn l1_zero_threshold() {
        let ds = random_ds(300, 12);
        let res = Residualizer::new(&ds.c).unwrap();
        let ht = res.apply(&ds.h_us());
        let y = DMatrix::from_column_slice(ds.n(), 1, ds.y.as_slice());
        let yt = res.apply(&y);
        let corr = ht.transpose() * yt;
        let lam = 2.0 * corr.amax() / ds.n() as f64 * 1.001;
        let (p, _) = fit_iterative(&ds, &PenaltySpec::L1, &TrainConfig { lambda_reg: lam, ..tight() }).unwrap();
        assert!(p.beta_us().iter().all(|v| *v == 0.0), "{:?}", p.beta_us());
        let (p, _) = fit_iterative(&ds, &PenaltySpec::L1, &TrainConfig { lambda_reg: lam * 0.5, ..tight() }).unwrap();
        assert!(p.beta_us().iter().any(|v| *v != 0.0));
    }

    #[test]
    fn predict_examples() {
        let ds = random_ds(20, 13);
        let zero = ModelParams::zeros(2, 2, 1);
        assert!(predict(&zero, &ds).unwrap().iter().all(|v| *v == 0.0));

        let p = ModelParams {
            beta_c: vec![0.3, -1.0],
            beta_u: vec![2.0, 0.1],
            beta_s: vec![-0.7],
            intercept: 0.25,
        };
        let got = predict(&p, &ds).unwrap();
        let flat = p.flat();
        for i in 0..ds.n() {
            let row = ds.row(i);
            let mut acc = p.intercept;
            for j in 0..row.len() {
                acc += row[j] * flat[j];
            }
            assert!((got[i] - acc).abs() < 1e-12);
        }
        assert!(predict(&ModelParams::zeros(1, 2, 1), &ds).is_err());

        let (train, _) = generate_synthetic(&spec(ShortcutKind::Independent, vec![], 0.0, 50, 14)).unwrap();
        let truth = ModelParams {
            beta_c: vec![4.0, -0.5],
            beta_u: vec![1.0, 2.0],
            beta_s: vec![0.0],
            intercept: 0.0,
        };
        assert_eq!(predict(&truth, &train).unwrap(), train.y);
    }

    #[test]
    fn trace_loss_identity_and_csv() {
        let ds = random_ds(100, 15);
        for spec in [PenaltySpec::L1, PenaltySpec::Eye, PenaltySpec::L2] {
            let cfg = TrainConfig {
                lambda_reg: 0.05,
                record_trace: true,
                max_epochs: 50,
                ..TrainConfig::default()
            };
            let (_, trace) = fit_iterative(&ds, &spec, &cfg).unwrap();
            assert_eq!(trace.rows.len(), trace.epochs + 1);
            for w in trace.rows.windows(2) {
                assert!(w[1].loss <= w[0].loss + 1e-10);
            }
            for r in &trace.rows {
                assert!((r.loss - (r.risk + 0.05 * r.penalty)).abs() < 1e-10);
            }
            let csv = trace.to_csv();
            assert!(csv.starts_with("epoch,risk,penalty,loss,te_s0,beta_c0,beta_c1,beta_u0,beta_u1,beta_s0\n"));
            assert_eq!(csv.lines().count(), trace.rows.len() + 1);
        }
    }

    #[test]
    fn deterministic() {
        let ds = random_ds(100, 16);
        let cfg = TrainConfig {
            lambda_reg: 0.01,
            record_trace: true,
            max_epochs: 300,
            ..TrainConfig::default()
        };
        let a = fit_iterative(&ds, &PenaltySpec::Eye, &cfg).unwrap();
        let b = fit_iterative(&ds, &PenaltySpec::Eye, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn eye_fixed_point_satisfies_optimality() {
        let ds = random_ds(300, 17);
        let lam = 0.05;
        let (p, trace) = fit_iterative(&ds, &PenaltySpec::Eye, &TrainConfig { lambda_reg: lam, ..tight() }).unwrap();
        assert!(trace.converged);
        let gram = Gram::new(&ds);
        let g = gram.grad(&DVector::from_vec(p.flat()));
        let a: f64 = p.beta_us().iter().map(|v| v.abs()).sum();
        let root = (a * a + p.beta_c.iter().map(|v| v * v).sum::<f64>()).sqrt();
        for (i, b) in p.beta_c.iter().enumerate() {
            assert!((g[i] + lam * b / root).abs() < 1e-6);
        }
        for (k, b) in p.beta_us().iter().enumerate() {
            let gi = g[2 + k];
            let level = lam * (1.0 + a / root);
            if *b != 0.0 {
                assert!((gi + level * b.signum()).abs() < 1e-6);
            } else {
                assert!(gi.abs() <= level + 1e-6);
            }
        }
    }

    #[test]
    fn l2_eigenbasis_coordinates_shrink() {
        let ds = random_ds(200, 18);
        let res = Residualizer::new(&ds.c).unwrap();
        let ht = res.apply(&ds.h_us());
        let m = ht.transpose() * &ht;
        let eig = m.clone().symmetric_eigen();
        let mut prev: Option<Vec<f64>> = None;
        for lam in [1e-4, 1e-3, 1e-2, 1e-1, 1.0] {
            let p = fit_closed_form(&ds, lam, &PenaltySpec::L2).unwrap();
            let z = eig.eigenvectors.transpose() * DVector::from_vec(p.beta_us());
            let mags: Vec<f64> = z.iter().map(|v| v.abs()).collect();
            if let Some(prev) = prev {
                for (a, b) in mags.iter().zip(&prev) {
                    assert!(a < b, "{a} !< {b}");
                }
            }
            prev = Some(mags);
        }
    }

    #[test]
    fn bad_config_rejected() {
        let ds = random_ds(10, 19);
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(matches!(fit_iterative(&ds, &PenaltySpec::L1, &bad), Err(Error::Config(_))));
    }
}
