//! Experiment orchestration: scenario files in, result tables out.
//!
//! Every cell `(regularizer, grid point, repeat)` is independent. Its data
//! seed is `derive_seed(base_seed, [scenario, regularizer, repeat])`, so grid
//! points of one sweep share data and adding a scenario never moves another.
//! Cells run in parallel; tables are assembled in declaration order.

mod config;
mod report;
mod run;
pub mod verify;

pub use config::{ExperimentConfig, PenaltyConfig, RegularizerConfig, SolverChoice, SweepConfig};
pub use report::{aggregates_csv, charts, emit_report, read_table, rows_csv, svg_chart, Chart, Formats, Series};
pub use run::{run_experiment, run_nonlinear, sweep_correlation, sweep_lambda};
pub use verify::{validate_report, verify, ClosedFormSuite, Kind, Property, ShrinkageSuite, VerifyConfig, VerifyReport};

use serde::{Deserialize, Deserializer, Serialize};

use crate::eval::sample_std;
use crate::regularizers::ModelParams;
use crate::solver::TrainTrace;

fn f64_or_nan<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

fn vec_f64_or_nan<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
    Ok(Vec::<Option<f64>>::deserialize(d)?.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawParams {
    #[serde(deserialize_with = "vec_f64_or_nan")]
    beta_c: Vec<f64>,
    #[serde(deserialize_with = "vec_f64_or_nan")]
    beta_u: Vec<f64>,
    #[serde(deserialize_with = "vec_f64_or_nan")]
    beta_s: Vec<f64>,
    #[serde(deserialize_with = "f64_or_nan")]
    intercept: f64,
}

fn params_or_nan<'de, D: Deserializer<'de>>(d: D) -> Result<ModelParams, D::Error> {
    let r = RawParams::deserialize(d)?;
    Ok(ModelParams {
        beta_c: r.beta_c,
        beta_u: r.beta_u,
        beta_s: r.beta_s,
        intercept: r.intercept,
    })
}

/// One fitted cell. Failed fits keep their row with `status` set to the
/// error and every numeric field NaN (`null` in JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub regularizer: String,
    #[serde(deserialize_with = "f64_or_nan")]
    pub lambda: f64,
    /// Sweep coordinate (`λ` or `δ_u`); absent for plain runs.
    pub x: Option<f64>,
    pub repeat: usize,
    pub seed: u64,
    pub status: String,
    #[serde(deserialize_with = "f64_or_nan")]
    pub train_mse: f64,
    #[serde(deserialize_with = "f64_or_nan")]
    pub test_mse: f64,
    /// Treatment effect of each shortcut column (raw scale).
    #[serde(deserialize_with = "vec_f64_or_nan")]
    pub te: Vec<f64>,
    /// `corr(ŷ_test, S_test,j)` per shortcut column.
    #[serde(deserialize_with = "vec_f64_or_nan")]
    pub corr_pred_s: Vec<f64>,
    /// Realized train `corr(U_0, S_0)`.
    #[serde(deserialize_with = "f64_or_nan")]
    pub corr_u_s: f64,
    pub epochs: usize,
    pub converged: bool,
    /// Raw-scale coefficients; for networks, column 2-norms of `W1`.
    #[serde(deserialize_with = "params_or_nan")]
    pub params: ModelParams,
}

impl ResultRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn abs_beta_s(&self) -> f64 {
        self.params.beta_s.iter().map(|v| v.abs()).sum()
    }
}

/// Mean and standard error (`std/√k`, sample std) over the ok rows of one
/// `(regularizer, λ, x)` group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    #[serde(deserialize_with = "f64_or_nan")]
    pub mean: f64,
    #[serde(deserialize_with = "f64_or_nan")]
    pub se: f64,
}

impl Stat {
    pub fn of(v: &[f64]) -> Stat {
        if v.is_empty() {
            return Stat {
                mean: f64::NAN,
                se: f64::NAN,
            };
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        Stat {
            mean,
            se: sample_std(v) / (v.len() as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub scenario: String,
    pub regularizer: String,
    #[serde(deserialize_with = "f64_or_nan")]
    pub lambda: f64,
    pub x: Option<f64>,
    pub n_ok: usize,
    pub n_failed: usize,
    pub train_mse: Stat,
    pub test_mse: Stat,
    /// Treatment effect of shortcut column 0.
    pub te: Stat,
    /// `Σ_j |β̂_s,j|`
    pub abs_beta_s: Stat,
    /// `|corr(ŷ_test, S_test,0)|`
    pub abs_corr_pred_s: Stat,
    /// Share of the us-block L1 mass on the shortcut block.
    pub shortcut_share: Stat,
    pub corr_u_s: Stat,
}

pub(crate) fn shortcut_share(p: &ModelParams) -> f64 {
    let u: f64 = p.beta_u.iter().map(|v| v.abs()).sum();
    let s: f64 = p.beta_s.iter().map(|v| v.abs()).sum();
    if u + s == 0.0 {
        0.0
    } else {
        s / (u + s)
    }
}

/// Group rows by `(regularizer, λ, x)` in first-appearance order.
pub fn aggregate(rows: &[ResultRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<(String, u64, Option<u64>)> = Vec::new();
    let key = |r: &ResultRow| (r.regularizer.clone(), r.lambda.to_bits(), r.x.map(f64::to_bits));
    for r in rows {
        let k = key(r);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|k| {
            let group: Vec<&ResultRow> = rows.iter().filter(|r| key(r) == k).collect();
            let ok: Vec<&&ResultRow> = group.iter().filter(|r| r.ok()).collect();
            let stat = |f: &dyn Fn(&ResultRow) -> f64| Stat::of(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
            AggregateRow {
                scenario: group[0].scenario.clone(),
                regularizer: k.0.clone(),
                lambda: group[0].lambda,
                x: group[0].x,
                n_ok: ok.len(),
                n_failed: group.len() - ok.len(),
                train_mse: stat(&|r| r.train_mse),
                test_mse: stat(&|r| r.test_mse),
                te: stat(&|r| r.te.first().copied().unwrap_or(f64::NAN)),
                abs_beta_s: stat(&|r| r.abs_beta_s()),
                abs_corr_pred_s: stat(&|r| r.corr_pred_s.first().map_or(f64::NAN, |c| c.abs())),
                shortcut_share: stat(&|r| shortcut_share(&r.params)),
                corr_u_s: stat(&|r| r.corr_u_s),
            }
        })
        .collect()
}

/// Per-epoch trace of one regularizer (repeat 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTrace {
    pub regularizer: String,
    pub trace: TrainTrace,
}

/// Wall time of one cell; kept out of the deterministic outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub regularizer: String,
    pub lambda: f64,
    pub x: Option<f64>,
    pub repeat: usize,
    pub millis: f64,
}

/// What the x axis of a table means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKind {
    Run,
    LambdaSweep,
    CorrelationSweep,
    Nonlinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub scenario: String,
    pub kind: TableKind,
    /// Interpretation notes and solver settings that shaped the numbers.
    pub metadata: serde_json::Value,
    pub rows: Vec<ResultRow>,
    pub aggregates: Vec<AggregateRow>,
    #[serde(default)]
    pub traces: Vec<NamedTrace>,
    /// Per-regularizer correlation matrices of `ŷ_test` and every test
    /// column (repeat 0).
    #[serde(default)]
    pub correlations: Vec<(String, crate::eval::CorrelationMatrix)>,
    /// Pooled weight summaries per regularizer.
    #[serde(default)]
    pub weights: Vec<(String, crate::eval::WeightSummary)>,
    #[serde(skip)]
    pub timings: Vec<Timing>,
}

impl Table {
    pub fn aggregate_for(&self, regularizer: &str) -> Vec<&AggregateRow> {
        self.aggregates.iter().filter(|a| a.regularizer == regularizer).collect()
    }

    pub fn rows_for(&self, regularizer: &str) -> Vec<&ResultRow> {
        self.rows.iter().filter(|r| r.regularizer == regularizer).collect()
    }

    pub fn trace_for(&self, regularizer: &str) -> Option<&TrainTrace> {
        self.traces.iter().find(|t| t.regularizer == regularizer).map(|t| &t.trace)
    }
}
