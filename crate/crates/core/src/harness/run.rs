use std::time::Instant;

use rayon::prelude::*;
use serde_json::json;

use crate::dataset::{generate_synthetic, pearson, standardize, Dataset, DatasetSpec, ShortcutKind, StandardizeStats};
use crate::error::{Error, Result};
use crate::eval::{correlation_matrix, te_draws, te_with_draws, weight_summary, CorrelationMatrix, Predictor, Standardized};
use crate::mlp::{mlp_fit, MlpParams};
use crate::regularizers::{ModelParams, PenaltySpec};
use crate::rng::derive_seed;
use crate::solver::{fit_closed_form, fit_iterative, TraceRow, TrainConfig, TrainTrace};

use super::config::{ExperimentConfig, SolverChoice};
use super::{aggregate, NamedTrace, ResultRow, Table, TableKind, Timing};

#[derive(Debug, Clone, Copy)]
struct Cell {
    reg: usize,
    lambda: f64,
    x: Option<f64>,
    delta_u: Option<f64>,
    repeat: usize,
}

struct CellOut {
    row: ResultRow,
    trace: Option<TrainTrace>,
    corr: Option<CorrelationMatrix>,
    millis: f64,
}

#[derive(Clone, Copy, PartialEq)]
enum Model {
    Linear,
    Network,
}

pub(crate) fn cell_seed(cfg: &ExperimentConfig, regularizer: &str, repeat: usize) -> u64 {
    derive_seed(cfg.base_seed, &[&cfg.scenario, regularizer, &repeat.to_string()])
}

fn cell_spec(cfg: &ExperimentConfig, seed: u64, delta_u: Option<f64>) -> Result<DatasetSpec> {
    let mut spec = cfg.dataset.clone();
    spec.seed = seed;
    if let Some(du) = delta_u {
        if spec.shortcut_kind != ShortcutKind::UnknownCorrelated {
            return Err(Error::Config("delta_u_grid needs an UnknownCorrelated dataset".into()));
        }
        for k in 0..spec.u_dim {
            spec.shortcut_coeffs[spec.c_dim + k] = du;
        }
    }
    Ok(spec)
}

/// Map coefficients fitted on standardized data back to raw units.
pub(crate) fn destandardize(p: &ModelParams, st: &StandardizeStats) -> ModelParams {
    let scale = |b: &[f64], sd: &[f64]| -> Vec<f64> { b.iter().zip(sd).map(|(b, s)| b * st.y_std / s).collect() };
    let beta_c = scale(&p.beta_c, &st.c_std);
    let beta_u = scale(&p.beta_u, &st.u_std);
    let beta_s = scale(&p.beta_s, &st.s_std);
    let shift: f64 = beta_c
        .iter()
        .chain(&beta_u)
        .chain(&beta_s)
        .zip(st.feature_means())
        .map(|(b, m)| b * m)
        .sum();
    ModelParams {
        beta_c,
        beta_u,
        beta_s,
        intercept: st.y_mean + p.intercept * st.y_std - shift,
    }
}

fn predictions<P: Predictor + ?Sized>(pred: &P, ds: &Dataset) -> Vec<f64> {
    (0..ds.n()).map(|i| pred.predict_row(&ds.row(i))).collect()
}

struct Prepared {
    train: Dataset,
    test: Dataset,
    fit_on: Dataset,
    stats: Option<StandardizeStats>,
}

fn prepare(cfg: &ExperimentConfig, spec: &DatasetSpec) -> Result<Prepared> {
    let (train, test) = generate_synthetic(spec)?;
    if cfg.standardize {
        let (fit_on, _, stats) = standardize(&train, &test)?;
        Ok(Prepared {
            train,
            test,
            fit_on,
            stats: Some(stats),
        })
    } else {
        Ok(Prepared {
            fit_on: train.clone(),
            train,
            test,
            stats: None,
        })
    }
}

fn train_config(cfg: &ExperimentConfig, lambda: f64, seed: u64) -> TrainConfig {
    TrainConfig {
        lambda_reg: lambda,
        seed,
        record_trace: false,
        ..cfg.train.clone()
    }
}

fn fit_linear(cfg: &ExperimentConfig, spec: &PenaltySpec, lambda: f64, ds: &Dataset, seed: u64) -> Result<(ModelParams, usize, bool)> {
    let closed = cfg.solver == SolverChoice::Auto && spec.quadratic_weights(ds.u_dim() + ds.s_dim()).is_some();
    if closed {
        Ok((fit_closed_form(ds, lambda, spec)?, 0, true))
    } else {
        let (p, trace) = fit_iterative(ds, spec, &train_config(cfg, lambda, seed))?;
        Ok((p, trace.epochs, trace.converged))
    }
}

/// Repeat the final row so every trace spans `epochs` epochs.
fn pad_trace(trace: &mut TrainTrace, epochs: usize) {
    while let Some(last) = trace.rows.last().cloned() {
        if last.epoch >= epochs {
            break;
        }
        trace.rows.push(TraceRow {
            epoch: last.epoch + 1,
            ..last
        });
    }
}

fn metrics<P: Predictor + ?Sized>(pred: &P, prep: &Prepared, te_seed: u64, te_samples: usize) -> Result<(f64, f64, Vec<f64>, Vec<f64>, Vec<f64>)> {
    let yhat_train = predictions(pred, &prep.train);
    let yhat_test = predictions(pred, &prep.test);
    let train_mse = crate::eval::mse(prep.train.y.as_slice(), &yhat_train)?;
    let test_mse = crate::eval::mse(prep.test.y.as_slice(), &yhat_test)?;
    let draws = te_draws(te_seed, te_samples);
    let base = vec![0.0; prep.train.width()];
    let te = (0..prep.test.s_dim())
        .map(|j| te_with_draws(pred, &base, prep.test.shortcut_index(j), &draws))
        .collect::<Result<Vec<_>>>()?;
    let corr = (0..prep.test.s_dim())
        .map(|j| pearson(&yhat_test, prep.test.s.column(j).as_slice()).unwrap_or(f64::NAN))
        .collect();
    Ok((train_mse, test_mse, te, corr, yhat_test))
}

fn test_correlations(prep: &Prepared, yhat_test: Vec<f64>) -> Result<CorrelationMatrix> {
    let ds = &prep.test;
    let mut names = vec!["yhat".to_string()];
    names.extend(ds.column_names());
    let mut cols = vec![yhat_test];
    for j in 0..ds.width() {
        cols.push((0..ds.n()).map(|i| ds.row(i)[j]).collect());
    }
    cols.push(ds.y.iter().copied().collect());
    correlation_matrix(&names, &cols)
}

fn nan_params(spec: &DatasetSpec) -> ModelParams {
    ModelParams {
        beta_c: vec![f64::NAN; spec.c_dim],
        beta_u: vec![f64::NAN; spec.u_dim],
        beta_s: vec![f64::NAN; spec.s_dim],
        intercept: f64::NAN,
    }
}

fn run_cell(cfg: &ExperimentConfig, cell: Cell, model: Model) -> CellOut {
    let start = Instant::now();
    let reg = &cfg.regularizers[cell.reg];
    let seed = cell_seed(cfg, &reg.name, cell.repeat);
    let mut row = ResultRow {
        scenario: cfg.scenario.clone(),
        regularizer: reg.name.clone(),
        lambda: cell.lambda,
        x: cell.x,
        repeat: cell.repeat,
        seed,
        status: "ok".into(),
        train_mse: f64::NAN,
        test_mse: f64::NAN,
        te: vec![f64::NAN; cfg.dataset.s_dim],
        corr_pred_s: vec![f64::NAN; cfg.dataset.s_dim],
        corr_u_s: f64::NAN,
        epochs: 0,
        converged: false,
        params: nan_params(&cfg.dataset),
    };
    let mut trace = None;
    let mut corr = None;
    let outcome = (|| -> Result<()> {
        let spec = cell_spec(cfg, seed, cell.delta_u)?;
        let prep = prepare(cfg, &spec)?;
        row.corr_u_s = pearson(prep.train.u.column(0).as_slice(), prep.train.s.column(0).as_slice()).unwrap_or(f64::NAN);
        let penalty = reg.penalty.resolve()?;
        let te_seed = derive_seed(seed, &["te"]);
        let want_trace = cell.repeat == 0;
        let yhat_test = match model {
            Model::Linear => {
                let (p, epochs, converged) = fit_linear(cfg, &penalty, cell.lambda, &prep.fit_on, seed)?;
                let raw = match &prep.stats {
                    Some(st) => destandardize(&p, st),
                    None => p,
                };
                let (train_mse, test_mse, te, c, yhat) = metrics(&raw, &prep, te_seed, cfg.te_samples)?;
                (row.train_mse, row.test_mse, row.te, row.corr_pred_s) = (train_mse, test_mse, te, c);
                (row.epochs, row.converged, row.params) = (epochs, converged, raw);
                if let (true, Some(epochs)) = (want_trace, cfg.trace_epochs) {
                    let tc = TrainConfig {
                        max_epochs: epochs,
                        record_trace: true,
                        te_trace_samples: cfg.te_samples,
                        seed: te_seed,
                        ..train_config(cfg, cell.lambda, seed)
                    };
                    let (_, mut t) = fit_iterative(&prep.fit_on, &penalty, &tc)?;
                    pad_trace(&mut t, epochs);
                    trace = Some(t);
                }
                yhat
            }
            Model::Network => {
                let tc = TrainConfig {
                    record_trace: want_trace,
                    te_trace_samples: cfg.te_samples,
                    ..train_config(cfg, cell.lambda, derive_seed(seed, &["init"]))
                };
                let (net, mut t): (MlpParams, TrainTrace) = mlp_fit(&prep.fit_on, &penalty, &tc, &cfg.mlp)?;
                let (train_mse, test_mse, te, c, yhat) = match &prep.stats {
                    Some(st) => metrics(&Standardized { inner: &net, stats: st }, &prep, te_seed, cfg.te_samples)?,
                    None => metrics(&net, &prep, te_seed, cfg.te_samples)?,
                };
                (row.train_mse, row.test_mse, row.te, row.corr_pred_s) = (train_mse, test_mse, te, c);
                (row.epochs, row.converged) = (t.epochs, t.converged);
                row.params = net.column_norms(spec.c_dim, spec.u_dim, spec.s_dim);
                if want_trace {
                    pad_trace(&mut t, cfg.train.max_epochs);
                    trace = Some(t);
                }
                yhat
            }
        };
        if want_trace {
            corr = Some(test_correlations(&prep, yhat_test)?);
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        let keep = (row.scenario.clone(), row.regularizer.clone(), row.lambda, row.x, row.repeat, row.seed, row.corr_u_s);
        row = ResultRow {
            status: format!("error: {e}"),
            train_mse: f64::NAN,
            test_mse: f64::NAN,
            te: vec![f64::NAN; cfg.dataset.s_dim],
            corr_pred_s: vec![f64::NAN; cfg.dataset.s_dim],
            epochs: 0,
            converged: false,
            params: nan_params(&cfg.dataset),
            scenario: keep.0,
            regularizer: keep.1,
            lambda: keep.2,
            x: keep.3,
            repeat: keep.4,
            seed: keep.5,
            corr_u_s: keep.6,
        };
        trace = None;
        corr = None;
    }
    CellOut {
        row,
        trace,
        corr,
        millis: start.elapsed().as_secs_f64() * 1e3,
    }
}

fn metadata(cfg: &ExperimentConfig, model: Model) -> serde_json::Value {
    let mut echo = cfg.clone();
    echo.outputs = None;
    let solver = match (model, cfg.solver) {
        (Model::Network, _) => "network: full-batch proximal gradient with backtracking",
        (_, SolverChoice::Auto) => "closed form for L2/WeightedL2, proximal gradient otherwise",
        (_, SolverChoice::Iterative) => "proximal gradient for every penalty",
    };
    json!({
        "config": echo,
        "solver": solver,
        "coefficients": if model == Model::Linear { "raw scale (de-standardized)" } else { "column 2-norms of W1 (fitting scale)" },
        "treatment_effect": {
            "base_row": "zeros (raw scale)",
            "std_divisor": "n-1",
            "draws": "one fixed N(0,1) set per cell"
        },
        "trace_scale": "fitting scale (standardized when enabled); padded with the final state after early stops",
        "causal_weights": "CausalEffect entries are treatment effects; weights are 1/max(|te|, floor)"
    })
}

fn assemble(cfg: &ExperimentConfig, cells: Vec<Cell>, model: Model, kind: TableKind) -> Result<Table> {
    cfg.validate()?;
    if cfg.regularizers.is_empty() {
        return Err(Error::Config(format!("scenario `{}` lists no regularizers", cfg.scenario)));
    }
    // surface configuration errors before spending time on cells
    for c in &cells {
        cell_spec(cfg, 0, c.delta_u)?;
    }
    let outs: Vec<CellOut> = cells.par_iter().map(|c| run_cell(cfg, *c, model)).collect();
    let mut table = Table {
        scenario: cfg.scenario.clone(),
        kind,
        metadata: metadata(cfg, model),
        rows: Vec::with_capacity(outs.len()),
        aggregates: Vec::new(),
        traces: Vec::new(),
        correlations: Vec::new(),
        weights: Vec::new(),
        timings: Vec::with_capacity(outs.len()),
    };
    let mut seen_trace = std::collections::HashSet::new();
    for out in outs {
        table.timings.push(Timing {
            regularizer: out.row.regularizer.clone(),
            lambda: out.row.lambda,
            x: out.row.x,
            repeat: out.row.repeat,
            millis: out.millis,
        });
        // one trace/correlation per regularizer: the first grid point's repeat 0
        if seen_trace.insert(out.row.regularizer.clone()) {
            if let Some(t) = out.trace {
                table.traces.push(NamedTrace {
                    regularizer: out.row.regularizer.clone(),
                    trace: t,
                });
            }
            if let Some(c) = out.corr {
                table.correlations.push((out.row.regularizer.clone(), c));
            }
        }
        table.rows.push(out.row);
    }
    table.aggregates = aggregate(&table.rows);
    for reg in &cfg.regularizers {
        let params: Vec<ModelParams> = table.rows.iter().filter(|r| r.regularizer == reg.name && r.ok()).map(|r| r.params.clone()).collect();
        if !params.is_empty() {
            table.weights.push((reg.name.clone(), weight_summary(&params, 30)?));
        }
    }
    Ok(table)
}

/// Every regularizer at its own `λ`, `repeats` times.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Table> {
    let cells = (0..cfg.regularizers.len())
        .flat_map(|reg| {
            (0..cfg.repeats).map(move |repeat| Cell {
                reg,
                lambda: cfg.regularizers[reg].lambda,
                x: None,
                delta_u: None,
                repeat,
            })
        })
        .collect();
    assemble(cfg, cells, Model::Linear, TableKind::Run)
}

/// Every regularizer at every `λ` of `sweep.lambda_grid`.
pub fn sweep_lambda(cfg: &ExperimentConfig) -> Result<Table> {
    let grid = cfg.lambda_grid()?.to_vec();
    let mut cells = Vec::new();
    for reg in 0..cfg.regularizers.len() {
        for &lambda in &grid {
            for repeat in 0..cfg.repeats {
                cells.push(Cell {
                    reg,
                    lambda,
                    x: Some(lambda),
                    delta_u: None,
                    repeat,
                });
            }
        }
    }
    assemble(cfg, cells, Model::Linear, TableKind::LambdaSweep)
}

/// Every regularizer at every `δ_u` of `sweep.delta_u_grid`; the realized
/// train `corr(U_0, S_0)` is recorded per row.
pub fn sweep_correlation(cfg: &ExperimentConfig) -> Result<Table> {
    let grid = cfg.delta_u_grid()?.to_vec();
    let mut cells = Vec::new();
    for reg in 0..cfg.regularizers.len() {
        for &du in &grid {
            for repeat in 0..cfg.repeats {
                cells.push(Cell {
                    reg,
                    lambda: cfg.regularizers[reg].lambda,
                    x: Some(du),
                    delta_u: Some(du),
                    repeat,
                });
            }
        }
    }
    assemble(cfg, cells, Model::Linear, TableKind::CorrelationSweep)
}

/// As [`run_experiment`] but with the network; repeat 0 of each
/// regularizer keeps its per-epoch trace.
pub fn run_nonlinear(cfg: &ExperimentConfig) -> Result<Table> {
    let cells = (0..cfg.regularizers.len())
        .flat_map(|reg| {
            (0..cfg.repeats).map(move |repeat| Cell {
                reg,
                lambda: cfg.regularizers[reg].lambda,
                x: None,
                delta_u: None,
                repeat,
            })
        })
        .collect();
    assemble(cfg, cells, Model::Network, TableKind::Nonlinear)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::standardize;

    fn cfg() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{
            "scenario": "unit",
            "dataset": {"n_train": 300, "n_test": 300, "beta_c": [4, -0.5], "beta_u": [1, 2],
                        "shortcut_kind": "UnknownCorrelated", "shortcut_coeffs": [0, -0.125, 0.25, 0.5],
                        "noise_sigma": 0.1, "shortcut_noise": 0.1},
            "regularizers": [
                {"name": "L2", "kind": "L2", "lambda": 0.001},
                {"name": "L1", "kind": "L1", "lambda": 0.001}
            ],
            "repeats": 2,
            "train": {"learning_rate": 0.1, "max_epochs": 2000}
        }"#,
        )
        .unwrap()
    }

    #[test]
    fn destandardize_reproduces_predictions() {
        let c = cfg();
        let (train, test) = generate_synthetic(&c.dataset).unwrap();
        let (trs, tes, st) = standardize(&train, &test).unwrap();
        let p = fit_closed_form(&trs, 0.01, &PenaltySpec::L2).unwrap();
        let raw = destandardize(&p, &st);
        for i in 0..20 {
            let z = p.predict_row(&tes.row(i)) * st.y_std + st.y_mean;
            assert!((raw.predict_row(&test.row(i)) - z).abs() < 1e-10);
        }
    }

    #[test]
    fn run_is_deterministic_and_ordered() {
        let c = cfg();
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&c).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.rows.len(), 4);
        assert_eq!(a.rows.iter().map(|r| (r.regularizer.as_str(), r.repeat)).collect::<Vec<_>>(), [("L2", 0), ("L2", 1), ("L1", 0), ("L1", 1)]);
        assert!(a.rows.iter().all(|r| r.ok()));
        assert_eq!(a.aggregates.len(), 2);
        assert_eq!(a.correlations.len(), 2);
    }

    #[test]
    fn sweeps_share_data_across_grid_points() {
        let mut c = cfg();
        c.sweep = Some(super::super::SweepConfig {
            lambda_grid: Some(vec![1e-3, 1e-1]),
            delta_u_grid: None,
        });
        let t = sweep_lambda(&c).unwrap();
        assert_eq!(t.rows.len(), 8);
        assert_eq!(t.rows[0].seed, t.rows[2].seed);
        assert_eq!(t.aggregates.len(), 4);
        assert_eq!(t.aggregates[1].x, Some(1e-1));
    }

    #[test]
    fn failed_cells_become_sentinel_rows() {
        let mut c = cfg();
        c.dataset.shortcut_kind = ShortcutKind::ConceptCorrelated;
        c.dataset.shortcut_coeffs = vec![1.5, -0.5];
        c.dataset.shortcut_noise = 0.0;
        c.regularizers[0].lambda = 0.0;
        let t = run_experiment(&c).unwrap();
        let r = &t.rows[0];
        assert!(r.status.starts_with("error:"), "{}", r.status);
        assert!(r.test_mse.is_nan());
        assert!(t.rows[2].ok());
        assert_eq!(t.aggregates[0].n_failed, 2);
    }

    #[test]
    fn delta_u_sweep_needs_unknown_kind() {
        let mut c = cfg();
        c.dataset.shortcut_kind = ShortcutKind::Independent;
        c.dataset.shortcut_coeffs = vec![];
        c.sweep = Some(super::super::SweepConfig {
            lambda_grid: None,
            delta_u_grid: Some(vec![0.0, 0.5]),
        });
        assert!(matches!(sweep_correlation(&c), Err(Error::Config(_))));
    }
}
