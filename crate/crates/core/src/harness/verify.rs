//! The `verify` suite: hard properties fail the run, soft ones are reported.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::{generate_synthetic, Dataset, DatasetSpec, ShortcutKind};
use crate::error::{Error, Result};
use crate::regularizers::PenaltySpec;
use crate::rng::{derive_seed, seeded};
use crate::solver::{fit_closed_form, fit_iterative, TrainConfig};
use crate::theory::{
    agreement_sweep, concentration_ratio, condition_holds, oracle_eliminates, random_problem, verify_shrinkage, AgreementConfig, AgreementReport,
    MethodAgreement, Method, OracleGrid, ScalarProblem,
};

use super::config::ExperimentConfig;
use super::run::run_experiment;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShrinkageSuite {
    pub instances: usize,
    pub n: usize,
    pub lambda_grid: Vec<f64>,
    /// WeightedL2 weights are drawn log-uniformly from this range.
    pub weight_range: (f64, f64),
}

impl Default for ShrinkageSuite {
    fn default() -> Self {
        ShrinkageSuite {
            instances: 50,
            n: 200,
            lambda_grid: vec![0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0],
            weight_range: (0.1, 10.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClosedFormSuite {
    pub instances: usize,
    pub n: usize,
    /// `log10 λ` is drawn uniformly from this range.
    pub log10_lambda_range: (f64, f64),
    pub tolerance: f64,
    pub train: TrainConfig,
}

impl Default for ClosedFormSuite {
    fn default() -> Self {
        ClosedFormSuite {
            instances: 100,
            n: 500,
            log10_lambda_range: (-4.0, 0.0),
            tolerance: 1e-5,
            train: TrainConfig {
                learning_rate: 0.5,
                max_epochs: 200_000,
                tol: 1e-13,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    pub seed: u64,
    pub shrinkage: ShrinkageSuite,
    pub closed_form: ClosedFormSuite,
    /// Sweep asserted for L1 (`δ_c > 0`).
    pub agreement: AgreementConfig,
    pub min_agreement: f64,
    pub min_non_boundary: usize,
    /// Extra sweep with signed `δ_c`; reported only.
    pub signed_agreement: Option<AgreementConfig>,
    /// Problems re-solved with a doubled grid.
    pub refinement_problems: usize,
    /// Problems checked with `λ = (1, 1, 1e9)`.
    pub causal_limit_problems: usize,
    pub causal_limit_tolerance: f64,
    /// `δ_c` values paired with `δ_u = 1 − δ_c`.
    pub normalization_delta_c: Vec<f64>,
    /// Scenario whose L1 fits must concentrate on one block.
    pub counterexample: Option<Box<ExperimentConfig>>,
    pub max_concentration_ratio: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            seed: 0,
            shrinkage: ShrinkageSuite::default(),
            closed_form: ClosedFormSuite::default(),
            agreement: AgreementConfig {
                problems: 600,
                ..AgreementConfig::default()
            },
            min_agreement: 0.99,
            min_non_boundary: 500,
            signed_agreement: Some(AgreementConfig {
                problems: 600,
                signed_delta_c: true,
                ..AgreementConfig::default()
            }),
            refinement_problems: 100,
            causal_limit_problems: 100,
            causal_limit_tolerance: 1e-4,
            normalization_delta_c: vec![0.125, 0.25, 0.5, 0.75, 0.875],
            counterexample: None,
            max_concentration_ratio: 0.01,
        }
    }
}

impl VerifyConfig {
    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Hard,
    Soft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Property {
    pub name: String,
    pub kind: Kind,
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub seed: u64,
    /// True iff every hard property passes.
    pub pass: bool,
    pub properties: Vec<Property>,
    pub agreement: AgreementReport,
    pub signed_agreement: Option<Vec<MethodAgreement>>,
}

impl VerifyReport {
    pub fn property(&self, name: &str) -> Option<&Property> {
        self.properties.iter().find(|p| p.name == name)
    }
}

fn log_uniform(rng: &mut crate::rng::SeededRng, (lo, hi): (f64, f64)) -> f64 {
    10f64.powf(lo + (hi - lo) * rng.random::<f64>())
}

/// A small UnknownCorrelated dataset with noisy `S` so every system is
/// well posed at `λ = 0`.
fn random_instance(seed: u64, n: usize) -> Result<Dataset> {
    let mut rng = seeded(seed);
    let mut coef = |k: usize| -> Vec<f64> { (0..k).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect() };
    let spec = DatasetSpec {
        n_train: n,
        n_test: 2,
        c_dim: 2,
        u_dim: 2,
        s_dim: 1,
        beta_c: coef(2),
        beta_u: coef(2),
        noise_sigma: 0.5,
        shortcut_kind: ShortcutKind::UnknownCorrelated,
        shortcut_coeffs: coef(4),
        shortcut_noise: 0.5,
        seed: derive_seed(seed, &["data"]),
    };
    Ok(generate_synthetic(&spec)?.0)
}

fn random_weights(seed: u64, k: usize, range: (f64, f64)) -> PenaltySpec {
    let mut rng = seeded(seed);
    let (lo, hi) = (range.0.log10(), range.1.log10());
    PenaltySpec::WeightedL2 {
        weights: (0..k).map(|_| log_uniform(&mut rng, (lo, hi))).collect(),
    }
}

fn shrinkage(cfg: &VerifyConfig) -> Result<Property> {
    let s = &cfg.shrinkage;
    let failures: Vec<String> = (0..s.instances)
        .into_par_iter()
        .map(|i| -> Result<Vec<String>> {
            let seed = derive_seed(cfg.seed, &["shrinkage", &i.to_string()]);
            let ds = random_instance(seed, s.n)?;
            let mut bad = Vec::new();
            for spec in [PenaltySpec::L2, random_weights(derive_seed(seed, &["weights"]), 3, s.weight_range)] {
                if !verify_shrinkage(&ds, &spec, &s.lambda_grid)?.monotone {
                    bad.push(format!("instance {i} {}", spec.name()));
                }
            }
            Ok(bad)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(Property {
        name: "shrinkage_path".into(),
        kind: Kind::Hard,
        pass: failures.is_empty(),
        value: failures.len() as f64,
        threshold: 0.0,
        detail: format!("{} instances x (L2, WeightedL2); non-monotone paths: {:?}", s.instances, failures),
    })
}

fn closed_form(cfg: &VerifyConfig) -> Result<Property> {
    let s = &cfg.closed_form;
    let diffs: Vec<(f64, bool)> = (0..s.instances)
        .into_par_iter()
        .map(|i| -> Result<(f64, bool)> {
            let seed = derive_seed(cfg.seed, &["closed_form", &i.to_string()]);
            let ds = random_instance(seed, s.n)?;
            let lambda = log_uniform(&mut seeded(derive_seed(seed, &["lambda"])), s.log10_lambda_range);
            let spec = if i % 2 == 0 {
                PenaltySpec::L2
            } else {
                random_weights(derive_seed(seed, &["weights"]), 3, (0.5, 2.0))
            };
            let cf = fit_closed_form(&ds, lambda, &spec)?;
            let (it, trace) = fit_iterative(&ds, &spec, &TrainConfig { lambda_reg: lambda, ..s.train.clone() })?;
            let d = cf.flat().iter().zip(it.flat()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            Ok((d, trace.converged))
        })
        .collect::<Result<_>>()?;
    let worst = diffs.iter().map(|d| d.0).fold(0.0, f64::max);
    let unconverged = diffs.iter().filter(|d| !d.1).count();
    Ok(Property {
        name: "closed_form_matches_iterative".into(),
        kind: Kind::Hard,
        pass: worst < s.tolerance,
        value: worst,
        threshold: s.tolerance,
        detail: format!("{} instances, n={}; max coefficient gap; {unconverged} iterative fits hit max_epochs", s.instances, s.n),
    })
}

fn agreement_property(name: &str, kind: Kind, report: &AgreementReport, method: Method, min_rate: f64, min_nb: usize) -> Property {
    let rate = report.rate(method);
    let nb = report.non_boundary(method);
    let disagreements: Vec<usize> = report
        .records
        .iter()
        .filter(|r| r.verdicts.iter().any(|v| v.method == method && !v.boundary && v.agree == Some(false)))
        .map(|r| r.index)
        .collect();
    let shown = &disagreements[..disagreements.len().min(20)];
    Property {
        name: name.into(),
        kind,
        pass: rate >= min_rate && nb >= min_nb,
        value: rate,
        threshold: min_rate,
        detail: format!("{nb} non-boundary problems (need {min_nb}); disagreeing problem indices (first 20): {shown:?}"),
    }
}

fn refinement(cfg: &VerifyConfig) -> Result<Property> {
    let a = &cfg.agreement;
    let fine = OracleGrid {
        points: 2 * a.grid.points - 1,
        ..a.grid
    };
    let ratios: Vec<f64> = (0..cfg.refinement_problems)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let prob = random_problem(derive_seed(a.seed, &["problem", &i.to_string()]), a);
            let mut worst: f64 = 0.0;
            for m in Method::ALL {
                let r1 = oracle_eliminates(m, &prob, &a.grid)?;
                let r2 = oracle_eliminates(m, &prob, &fine)?;
                worst = worst.max((r1.argmin_beta_c_hat - r2.argmin_beta_c_hat).abs() / r1.atol);
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    let ratio = ratios.into_iter().fold(0.0, f64::max);
    Ok(Property {
        name: "oracle_refinement_drift".into(),
        kind: Kind::Hard,
        pass: ratio < 1.0,
        value: ratio,
        threshold: 1.0,
        detail: format!("{} problems x 4 methods, {} vs {} grid points; value is max |Δargmin|/atol", cfg.refinement_problems, a.grid.points, fine.points),
    })
}

fn causal_limit(cfg: &VerifyConfig) -> Result<Property> {
    let a = &cfg.agreement;
    let results: Vec<(f64, bool)> = (0..cfg.causal_limit_problems)
        .into_par_iter()
        .map(|i| -> Result<(f64, bool)> {
            let mut prob = random_problem(derive_seed(cfg.seed, &["causal_limit", &i.to_string()]), a);
            prob.causal_lambdas = Some([1.0, 1.0, 1e9]);
            let r = oracle_eliminates(Method::Causal, &prob, &a.grid)?;
            let c = condition_holds(Method::Causal, &prob)?;
            let rel = (c.value - prob.beta_c).abs() / prob.beta_c.abs().max(1.0);
            Ok(((r.argmin_beta_c_hat - prob.beta_c).abs(), rel <= 1e-6))
        })
        .collect::<Result<_>>()?;
    let worst = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let cond_ok = results.iter().all(|r| r.1);
    Ok(Property {
        name: "causal_limit_eliminates".into(),
        kind: Kind::Hard,
        pass: worst < cfg.causal_limit_tolerance && cond_ok,
        value: worst,
        threshold: cfg.causal_limit_tolerance,
        detail: format!(
            "{} problems with λ=(1,1,1e9); value is max |argmin − β_c|; condition expression within 1e-6 of β_c: {cond_ok}",
            cfg.causal_limit_problems
        ),
    })
}

fn normalization(cfg: &VerifyConfig) -> Result<Property> {
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for &dc in &cfg.normalization_delta_c {
        for (bc, bu) in [(1.0, 1.0), (0.5, 2.0), (2.5, 0.3)] {
            let prob = ScalarProblem {
                beta_c: bc,
                beta_u: bu,
                delta_c: dc,
                delta_u: 1.0 - dc,
                causal_lambdas: None,
            };
            let c = condition_holds(Method::L1, &prob)?;
            let r = oracle_eliminates(Method::L1, &prob, &cfg.agreement.grid)?;
            worst = worst.max(c.value.abs());
            if !(c.holds && c.value == 0.0 && r.eliminates) {
                failures.push(format!("δ_c={dc} β=({bc},{bu}): value {} oracle {}", c.value, r.eliminates));
            }
        }
    }
    Ok(Property {
        name: "normalization_l1_eliminates".into(),
        kind: Kind::Hard,
        pass: failures.is_empty(),
        value: worst,
        threshold: 0.0,
        detail: format!("δ_c ∈ {:?}, δ_u = 1 − δ_c; failures: {failures:?}", cfg.normalization_delta_c),
    })
}

fn counterexample(cfg: &VerifyConfig, scenario: &ExperimentConfig) -> Result<Property> {
    let table = run_experiment(scenario)?;
    let rows: Vec<_> = table.rows.iter().filter(|r| r.ok()).collect();
    let worst = rows.iter().map(|r| concentration_ratio(&r.params)).fold(0.0, f64::max);
    let failed = table.rows.len() - rows.len();
    Ok(Property {
        name: "l1_collinear_concentration".into(),
        kind: Kind::Hard,
        pass: !rows.is_empty() && failed == 0 && worst < cfg.max_concentration_ratio,
        value: worst,
        threshold: cfg.max_concentration_ratio,
        detail: format!("scenario `{}`: max over {} rows of min/max(|β_u|₁, |β_s|₁); {failed} failed rows", scenario.scenario, rows.len()),
    })
}

/// Run every property. Errors only on malformed configs; failing
/// properties are reported in the result.
pub fn verify(cfg: &VerifyConfig) -> Result<VerifyReport> {
    if cfg.agreement.signed_delta_c {
        return Err(Error::Config("the asserted agreement sweep must use delta_c > 0; put signed sweeps in signed_agreement".into()));
    }
    let agreement_cfg = AgreementConfig {
        seed: derive_seed(cfg.seed, &["agreement"]),
        ..cfg.agreement
    };
    let report = agreement_sweep(&agreement_cfg)?;
    let cfg = &VerifyConfig {
        agreement: agreement_cfg,
        ..cfg.clone()
    };
    let mut properties = vec![shrinkage(cfg)?, closed_form(cfg)?];
    properties.push(agreement_property("l1_condition_agreement", Kind::Hard, &report, Method::L1, cfg.min_agreement, cfg.min_non_boundary));
    for m in [Method::L2, Method::Eye, Method::Causal] {
        properties.push(agreement_property(&format!("{}_condition_agreement", m.name().to_lowercase()), Kind::Soft, &report, m, cfg.min_agreement, 0));
    }
    let signed_agreement = match &cfg.signed_agreement {
        Some(s) => {
            let s = AgreementConfig {
                seed: derive_seed(cfg.seed, &["signed_agreement"]),
                ..*s
            };
            let r = agreement_sweep(&s)?;
            properties.push(agreement_property("l1_condition_agreement_signed_delta_c", Kind::Soft, &r, Method::L1, cfg.min_agreement, 0));
            Some(r.summary)
        }
        None => None,
    };
    properties.push(refinement(cfg)?);
    properties.push(causal_limit(cfg)?);
    properties.push(normalization(cfg)?);
    if let Some(scenario) = &cfg.counterexample {
        properties.push(counterexample(cfg, scenario)?);
    }
    let pass = properties.iter().all(|p| p.kind == Kind::Soft || p.pass);
    Ok(VerifyReport {
        schema_version: SCHEMA_VERSION,
        seed: cfg.seed,
        pass,
        properties,
        agreement: report,
        signed_agreement,
    })
}

fn field<'a>(v: &'a Value, key: &str, at: &str) -> Result<&'a Value> {
    v.get(key).ok_or_else(|| Error::Config(format!("{at}: missing `{key}`")))
}

fn expect(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}

fn is_num_or_null(v: &Value) -> bool {
    v.is_number() || v.is_null()
}

/// Structural check of a report against the documented schema
/// (`docs/verify-report.md`).
pub fn validate_report(v: &Value) -> Result<()> {
    expect(v.is_object(), || "report must be an object".into())?;
    expect(field(v, "schema_version", "report")?.as_u64() == Some(SCHEMA_VERSION as u64), || "unsupported schema_version".into())?;
    expect(field(v, "seed", "report")?.is_u64(), || "seed must be an unsigned integer".into())?;
    let pass = field(v, "pass", "report")?.as_bool().ok_or_else(|| Error::Config("pass must be a boolean".into()))?;
    let props = field(v, "properties", "report")?.as_array().ok_or_else(|| Error::Config("properties must be an array".into()))?;
    expect(!props.is_empty(), || "properties is empty".into())?;
    let mut hard_ok = true;
    for (i, p) in props.iter().enumerate() {
        let at = format!("properties[{i}]");
        expect(field(p, "name", &at)?.is_string(), || format!("{at}.name must be a string"))?;
        let kind = field(p, "kind", &at)?.as_str();
        expect(matches!(kind, Some("hard" | "soft")), || format!("{at}.kind must be hard or soft"))?;
        let ok = field(p, "pass", &at)?.as_bool().ok_or_else(|| Error::Config(format!("{at}.pass must be a boolean")))?;
        expect(is_num_or_null(field(p, "value", &at)?), || format!("{at}.value must be a number"))?;
        expect(is_num_or_null(field(p, "threshold", &at)?), || format!("{at}.threshold must be a number"))?;
        expect(field(p, "detail", &at)?.is_string(), || format!("{at}.detail must be a string"))?;
        if kind == Some("hard") {
            hard_ok &= ok;
        }
    }
    expect(pass == hard_ok, || "pass disagrees with the hard properties".into())?;
    let ag = field(v, "agreement", "report")?;
    let summary = field(ag, "summary", "agreement")?.as_array().ok_or_else(|| Error::Config("agreement.summary must be an array".into()))?;
    for (i, m) in summary.iter().enumerate() {
        let at = format!("agreement.summary[{i}]");
        for k in ["method", "evaluated", "non_boundary", "agree"] {
            field(m, k, &at)?;
        }
        expect(is_num_or_null(field(m, "rate", &at)?), || format!("{at}.rate must be a number"))?;
    }
    let records = field(ag, "records", "agreement")?.as_array().ok_or_else(|| Error::Config("agreement.records must be an array".into()))?;
    for (i, r) in records.iter().enumerate() {
        let at = format!("agreement.records[{i}]");
        let prob = field(r, "problem", &at)?;
        for k in ["beta_c", "beta_u", "delta_c", "delta_u"] {
            expect(field(prob, k, &at)?.is_number(), || format!("{at}.problem.{k} must be a number"))?;
        }
        let verdicts = field(r, "verdicts", &at)?.as_array().ok_or_else(|| Error::Config(format!("{at}.verdicts must be an array")))?;
        for v in verdicts {
            for k in ["method", "condition", "oracle_argmin", "oracle_eliminates", "boundary", "agree"] {
                field(v, k, &at)?;
            }
        }
    }
    Ok(())
}
