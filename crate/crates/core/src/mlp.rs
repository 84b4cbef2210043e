//! A `input → hidden → 1` network whose first-layer weight matrix is
//! penalized column-block-wise.
//!
//! The first `c` columns of `W1` play the role of `β_c` and the remaining
//! `u+s` columns the role of `β_us`. Penalties apply entrywise: L1 sums
//! `|w|` over the us block, L2 sums squares, WeightedL2 weights every entry
//! of column `j` by `λ_j`, and EYE uses the us-block entrywise L1 together
//! with the concept-block Frobenius norm. `W2` and the biases are not
//! penalized.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::eval::{te_draws, te_with_draws, Predictor};
use crate::regularizers::{penalty_on_blocks, ModelParams, PenaltySpec};
use crate::rng::seeded;
use crate::solver::{candidate, TraceRow, TrainConfig, TrainTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    fn deriv(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - z.tanh().powi(2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpArch {
    pub hidden: usize,
    pub activation: Activation,
}

impl Default for MlpArch {
    fn default() -> Self {
        MlpArch {
            hidden: 10,
            activation: Activation::Relu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden: usize,
    pub input: usize,
    /// `hidden × input`, column-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub activation: Activation,
}

impl MlpParams {
    pub fn w1(&self, i: usize, j: usize) -> f64 {
        self.w1[j * self.hidden + i]
    }

    pub fn w1_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.w1[j * self.hidden + i]
    }

    /// `[W1 (column-major) | b1 | w2 | b2]`
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend(&self.w1);
        v.extend(&self.b1);
        v.extend(&self.w2);
        v.push(self.b2);
        v
    }

    pub fn len(&self) -> usize {
        self.hidden * (self.input + 2) + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn with_flat(&self, flat: &[f64]) -> MlpParams {
        let (h, p) = (self.hidden, self.input);
        MlpParams {
            hidden: h,
            input: p,
            w1: flat[..h * p].to_vec(),
            b1: flat[h * p..h * p + h].to_vec(),
            w2: flat[h * p + h..h * p + 2 * h].to_vec(),
            b2: flat[h * p + 2 * h],
            activation: self.activation,
        }
    }

    /// Column 2-norms of `W1`, arranged as coefficient blocks.
    pub fn column_norms(&self, c: usize, u: usize, s: usize) -> ModelParams {
        let norms: Vec<f64> = (0..self.input)
            .map(|j| (0..self.hidden).map(|i| self.w1(i, j).powi(2)).sum::<f64>().sqrt())
            .collect();
        ModelParams::from_flat(c, u, s, &norms)
    }
}

impl Predictor for MlpParams {
    fn input_width(&self) -> usize {
        self.input
    }

    fn predict_row(&self, x: &[f64]) -> f64 {
        let mut out = self.b2;
        for i in 0..self.hidden {
            let mut z = self.b1[i];
            for (j, xj) in x.iter().enumerate() {
                z += self.w1(i, j) * xj;
            }
            out += self.w2[i] * self.activation.apply(z);
        }
        out
    }
}

/// `W1`, `W2` uniform on `(−1/√fan_in, 1/√fan_in)`, biases zero.
pub fn mlp_init(input: usize, arch: &MlpArch, seed: u64) -> Result<MlpParams> {
    if input == 0 || arch.hidden == 0 {
        return Err(Error::InvalidDims(format!("input {input}, hidden {}", arch.hidden)));
    }
    let mut rng = seeded(seed);
    let mut uni = |bound: f64| (2.0 * rng.random::<f64>() - 1.0) * bound;
    let b_in = 1.0 / (input as f64).sqrt();
    let b_h = 1.0 / (arch.hidden as f64).sqrt();
    let w1 = (0..arch.hidden * input).map(|_| uni(b_in)).collect();
    let w2 = (0..arch.hidden).map(|_| uni(b_h)).collect();
    Ok(MlpParams {
        hidden: arch.hidden,
        input,
        w1,
        b1: vec![0.0; arch.hidden],
        w2,
        b2: 0.0,
        activation: arch.activation,
    })
}

pub fn mlp_forward(p: &MlpParams, x: &[f64]) -> Result<f64> {
    if x.len() != p.input {
        return Err(Error::DimensionMismatch {
            expected: p.input,
            got: x.len(),
        });
    }
    Ok(p.predict_row(x))
}

/// The penalty on `W1` with per-entry weights, so that the flat parameter
/// layout `[concept entries | us entries | rest]` lines up with it.
fn entrywise_spec(spec: &PenaltySpec, hidden: usize) -> PenaltySpec {
    match spec {
        PenaltySpec::WeightedL2 { weights } => PenaltySpec::WeightedL2 {
            weights: weights.iter().flat_map(|w| std::iter::repeat_n(*w, hidden)).collect(),
        },
        other => other.clone(),
    }
}

/// Total loss pieces and the gradient of the empirical risk.
struct Batch<'a> {
    x: DMatrix<f64>,
    y: &'a DVector<f64>,
    c_entries: usize,
    us_entries: usize,
    spec: PenaltySpec,
}

impl<'a> Batch<'a> {
    fn new(ds: &'a Dataset, spec: &PenaltySpec, hidden: usize) -> Result<Self> {
        spec.validate(ds.u_dim() + ds.s_dim())?;
        Ok(Batch {
            x: ds.features(),
            y: &ds.y,
            c_entries: ds.c_dim() * hidden,
            us_entries: (ds.u_dim() + ds.s_dim()) * hidden,
            spec: entrywise_spec(spec, hidden),
        })
    }

    fn penalty(&self, theta: &[f64]) -> f64 {
        let c = self.c_entries;
        penalty_on_blocks(&theta[..c], &theta[c..c + self.us_entries], &self.spec).expect("validated")
    }

    fn forward(&self, p: &MlpParams) -> (DMatrix<f64>, DVector<f64>) {
        let w1 = DMatrix::from_column_slice(p.hidden, p.input, &p.w1);
        let mut z = &self.x * w1.transpose();
        for mut row in z.row_iter_mut() {
            for (i, v) in row.iter_mut().enumerate() {
                *v += p.b1[i];
            }
        }
        let a = z.map(|v| p.activation.apply(v));
        let yhat = (&a * DVector::from_column_slice(&p.w2)).add_scalar(p.b2);
        (z, yhat)
    }

    fn risk(&self, p: &MlpParams) -> f64 {
        let (_, yhat) = self.forward(p);
        (self.y - yhat).norm_squared() / self.y.len() as f64
    }

    /// `(risk, ∇risk)` by backpropagation.
    fn risk_grad(&self, p: &MlpParams) -> (f64, DVector<f64>) {
        let n = self.y.len() as f64;
        let (z, yhat) = self.forward(p);
        let r = &yhat - self.y;
        let risk = r.norm_squared() / n;
        let d = r * (2.0 / n);
        let a = z.map(|v| p.activation.apply(v));
        let g_w2 = a.transpose() * &d;
        let g_b2 = d.sum();
        let mut dz = &d * DVector::from_column_slice(&p.w2).transpose();
        dz.zip_apply(&z, |g, zv| *g *= p.activation.deriv(zv));
        let g_w1 = dz.transpose() * &self.x;
        let g_b1 = dz.row_sum();
        let mut g = Vec::with_capacity(p.len());
        g.extend(g_w1.iter());
        g.extend(g_b1.iter());
        g.extend(g_w2.iter());
        g.push(g_b2);
        (risk, DVector::from_vec(g))
    }
}

/// `(risk, penalty, ∇(risk + λ·penalty))` with a smooth penalty; exposed
/// for gradient checks. Non-smooth penalties use their subgradient with
/// `sign(0) = 0`.
pub fn mlp_loss_grad(p: &MlpParams, ds: &Dataset, spec: &PenaltySpec, lambda: f64) -> Result<(f64, f64, Vec<f64>)> {
    if p.input != ds.width() {
        return Err(Error::DimensionMismatch {
            expected: ds.width(),
            got: p.input,
        });
    }
    let batch = Batch::new(ds, spec, p.hidden)?;
    let theta = p.flat();
    let (risk, mut g) = batch.risk_grad(p);
    let c = batch.c_entries;
    let us = batch.us_entries;
    let (gc, gus) = crate::regularizers::subgradient_on_blocks(&theta[..c], &theta[c..c + us], &batch.spec)?;
    for (k, v) in gc.iter().chain(&gus).enumerate() {
        g[k] += lambda * v;
    }
    Ok((risk, batch.penalty(&theta), g.iter().copied().collect()))
}

/// Full-batch training from [`mlp_init`] (seeded with `cfg.seed`) with the
/// same proximal step and backtracking rule as the linear solver.
///
/// Trace rows carry the column 2-norms of `W1` in place of coefficients and
/// the shortcut treatment effects at a zero base row.
pub fn mlp_fit(ds: &Dataset, spec: &PenaltySpec, cfg: &TrainConfig, arch: &MlpArch) -> Result<(MlpParams, TrainTrace)> {
    cfg.validate()?;
    if ds.n() == 0 {
        return Err(Error::Empty);
    }
    let init = mlp_init(ds.width(), arch, cfg.seed)?;
    let batch = Batch::new(ds, spec, arch.hidden)?;
    let lambda = cfg.lambda_reg;
    let total = |p: &MlpParams| -> (f64, f64, f64) {
        let risk = batch.risk(p);
        let pen = batch.penalty(&p.w1);
        (risk, pen, risk + lambda * pen)
    };
    let draws = if cfg.record_trace {
        te_draws(cfg.seed, cfg.te_trace_samples)
    } else {
        Vec::new()
    };
    let base = vec![0.0; ds.width()];
    let record = |trace: &mut TrainTrace, epoch: usize, p: &MlpParams, (risk, penalty, loss): (f64, f64, f64)| {
        let te = (0..ds.s_dim())
            .map(|j| te_with_draws(p, &base, ds.shortcut_index(j), &draws).expect("index in range"))
            .collect();
        trace.rows.push(TraceRow {
            epoch,
            risk,
            penalty,
            loss,
            te,
            params: p.column_norms(ds.c_dim(), ds.u_dim(), ds.s_dim()),
        });
    };

    let mut trace = TrainTrace::default();
    let mut params = init;
    let mut cur = total(&params);
    if cfg.record_trace {
        record(&mut trace, 0, &params, cur);
    }
    let mut step = cfg.learning_rate;
    for epoch in 1..=cfg.max_epochs {
        let (_, g) = batch.risk_grad(&params);
        let theta = DVector::from_vec(params.flat());
        let slack = 1e-13 * (1.0 + cur.2.abs());
        let mut accepted = None;
        for _ in 0..=30 {
            let cand = candidate(&theta, &g, step, lambda, &batch.spec, batch.c_entries, batch.us_entries);
            let cp = params.with_flat(cand.as_slice());
            let next = total(&cp);
            if !next.2.is_finite() {
                return Err(Error::DivergenceDetected { epoch });
            }
            if next.2 <= cur.2 + slack {
                accepted = Some((cand, cp, next));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, cp, next)) = accepted else {
            break;
        };
        let delta = (&cand - &theta).amax();
        params = cp;
        cur = next;
        trace.epochs = epoch;
        if cfg.record_trace {
            record(&mut trace, epoch, &params, cur);
        }
        if delta < cfg.tol {
            trace.converged = true;
            break;
        }
    }
    Ok((params, trace))
}
