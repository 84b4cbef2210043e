//! Metrics: sampled treatment effects, MSE, AUC, correlations and weight
//! summaries.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{pearson, StandardizeStats};
use crate::error::{Error, Result};
use crate::regularizers::ModelParams;
use crate::rng::{normals, seeded};

/// Anything that maps a full feature row `[c.., u.., s..]` to a prediction.
pub trait Predictor {
    fn input_width(&self) -> usize;
    fn predict_row(&self, row: &[f64]) -> f64;
}

impl Predictor for ModelParams {
    fn input_width(&self) -> usize {
        self.width()
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        self.beta_c
            .iter()
            .chain(&self.beta_u)
            .chain(&self.beta_s)
            .zip(row)
            .map(|(b, x)| b * x)
            .sum::<f64>()
            + self.intercept
    }
}

/// Wraps a predictor fitted on standardized data so it accepts raw rows and
/// returns raw-scale outputs.
pub struct Standardized<'a, P: ?Sized> {
    pub inner: &'a P,
    pub stats: &'a StandardizeStats,
}

impl<P: Predictor + ?Sized> Predictor for Standardized<'_, P> {
    fn input_width(&self) -> usize {
        self.inner.input_width()
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        let z: Vec<f64> = row
            .iter()
            .zip(self.stats.feature_means().iter().zip(self.stats.feature_stds()))
            .map(|(x, (m, s))| (x - m) / s)
            .collect();
        self.inner.predict_row(&z) * self.stats.y_std + self.stats.y_mean
    }
}

/// The `N(0,1)` values substituted into the treated column.
pub fn te_draws(seed: u64, n_samples: usize) -> Vec<f64> {
    normals(&mut seeded(seed), n_samples)
}

/// Sample standard deviation, divisor `n − 1`.
pub fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    // shift by the first value so constant inputs give exactly zero
    let n = v.len() as f64;
    let d: Vec<f64> = v.iter().map(|x| x - v[0]).collect();
    let m = d.iter().sum::<f64>() / n;
    (d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Treatment effect with caller-supplied draws.
pub fn te_with_draws<P: Predictor + ?Sized>(pred: &P, base_row: &[f64], feature_index: usize, draws: &[f64]) -> Result<f64> {
    if base_row.len() != pred.input_width() {
        return Err(Error::DimensionMismatch {
            expected: pred.input_width(),
            got: base_row.len(),
        });
    }
    if feature_index >= base_row.len() {
        return Err(Error::IndexOutOfRange {
            index: feature_index,
            len: base_row.len(),
        });
    }
    let mut row = base_row.to_vec();
    let outs: Vec<f64> = draws
        .iter()
        .map(|v| {
            row[feature_index] = *v;
            pred.predict_row(&row)
        })
        .collect();
    Ok(sample_std(&outs))
}

/// Standard deviation of the outputs when `feature_index` is replaced by
/// `n_samples` standard-normal draws and everything else is held at `base_row`.
pub fn estimate_treatment_effect<P: Predictor + ?Sized>(
    pred: &P,
    base_row: &[f64],
    feature_index: usize,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    if n_samples < 2 {
        return Err(Error::Config("treatment effect needs at least 2 samples".into()));
    }
    te_with_draws(pred, base_row, feature_index, &te_draws(seed, n_samples))
}

pub fn mse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: yhat.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::Empty);
    }
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64)
}

/// 1-based ranks with ties averaged.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Mann–Whitney AUC; tied pairs count one half.
pub fn auc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: scores.len(),
        });
    }
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let ranks = average_ranks(scores);
    let pos_sum: f64 = ranks.iter().zip(labels).filter(|(_, l)| **l).map(|(r, _)| r).sum();
    let np = n_pos as f64;
    Ok((pos_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Spearman rank correlation; `None` when either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Pearson correlations between named columns. Entries involving a
/// constant column are `None` ("undefined").
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        self.values[i][j]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("name");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (n, row) in self.names.iter().zip(&self.values) {
            out.push_str(n);
            for v in row {
                match v {
                    Some(v) => {
                        let _ = write!(out, ",{v:?}");
                    }
                    None => out.push_str(",undefined"),
                }
            }
            out.push('\n');
        }
        out
    }
}

pub fn correlation_matrix(names: &[String], columns: &[Vec<f64>]) -> Result<CorrelationMatrix> {
    if names.len() != columns.len() {
        return Err(Error::LengthMismatch {
            left: names.len(),
            right: columns.len(),
        });
    }
    let n = columns.first().map_or(0, |c| c.len());
    if let Some(bad) = columns.iter().find(|c| c.len() != n) {
        return Err(Error::LengthMismatch { left: n, right: bad.len() });
    }
    if n < 2 {
        return Err(Error::Empty);
    }
    let k = columns.len();
    let mut values = vec![vec![None; k]; k];
    for i in 0..k {
        for j in i..k {
            let r = if i == j {
                pearson(&columns[i], &columns[j]).map(|_| 1.0)
            } else {
                pearson(&columns[i], &columns[j])
            };
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        names: names.to_vec(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSummary {
    pub block: String,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Divisor `n − 1`; zero for fewer than two values.
    pub std: f64,
    /// `bins + 1` edges over `[min, max]`.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSummary {
    pub blocks: Vec<BlockSummary>,
}

impl WeightSummary {
    pub fn block(&self, name: &str) -> Option<&BlockSummary> {
        self.blocks.iter().find(|b| b.block == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,min,max,mean,std,count\n");
        for b in &self.blocks {
            let total: usize = b.counts.iter().sum();
            let _ = writeln!(out, "{},{:?},{:?},{:?},{:?},{}", b.block, b.min, b.max, b.mean, b.std, total);
        }
        out
    }

    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("name,bin_lo,bin_hi,count\n");
        for b in &self.blocks {
            for (k, c) in b.counts.iter().enumerate() {
                let _ = writeln!(out, "{},{:?},{:?},{}", b.block, b.edges[k], b.edges[k + 1], c);
            }
        }
        out
    }
}

fn summarize(block: &str, vals: &[f64], bins: usize) -> BlockSummary {
    if vals.is_empty() {
        return BlockSummary {
            block: block.into(),
            min: 0.0,
            max: 0.0,
            mean: 0.0,
            std: 0.0,
            edges: vec![0.0; bins + 1],
            counts: vec![0; bins],
        };
    }
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let width = (max - min) / bins as f64;
    let edges = (0..=bins).map(|k| min + width * k as f64).collect();
    let mut counts = vec![0; bins];
    for v in vals {
        let k = if width > 0.0 {
            (((v - min) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[k] += 1;
    }
    BlockSummary {
        block: block.into(),
        min,
        max,
        mean,
        std: sample_std(vals),
        edges,
        counts,
    }
}

/// Pooled per-block statistics and `bins`-bin histograms.
pub fn weight_summary(params: &[ModelParams], bins: usize) -> Result<WeightSummary> {
    let first = params.first().ok_or(Error::Empty)?;
    if bins == 0 {
        return Err(Error::Config("bins must be >= 1".into()));
    }
    let dims = (first.beta_c.len(), first.beta_u.len(), first.beta_s.len());
    if params.iter().any(|p| (p.beta_c.len(), p.beta_u.len(), p.beta_s.len()) != dims) {
        return Err(Error::InconsistentDims);
    }
    let pool = |f: fn(&ModelParams) -> &Vec<f64>| -> Vec<f64> { params.iter().flat_map(|p| f(p).iter().copied()).collect() };
    Ok(WeightSummary {
        blocks: vec![
            summarize("beta_c", &pool(|p| &p.beta_c), bins),
            summarize("beta_u", &pool(|p| &p.beta_u), bins),
            summarize("beta_s", &pool(|p| &p.beta_s), bins),
        ],
    })
}
