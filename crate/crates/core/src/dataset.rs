//! Synthetic datasets with a controllable shortcut column block.
//!
//! A [`Dataset`] holds the three feature blocks of the linear head (known
//! concepts `C`, unknown concepts `U`, shortcuts `S`) plus the target `Y`.
//! Training splits carry the configured shortcut correlation; test splits
//! always draw `S` as independent standard normals, so any reliance on the
//! shortcut shows up as a distribution-shift penalty.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{normal, seeded};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShortcutKind {
    /// `S = Σ δ_ci C_i`
    ConceptCorrelated,
    /// `S = Σ δ_ci C_i + Σ δ_uj U_j`
    UnknownCorrelated,
    /// `S = Y + η`, `η ~ N(0, coeffs[0]²)`
    OutputCorrelated,
    /// `S ~ N(0, 1)`
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Test,
}

fn default_dim_2() -> usize {
    2
}
fn default_dim_1() -> usize {
    1
}
fn default_n() -> usize {
    10_000
}

/// Recipe for [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    #[serde(default = "default_n")]
    pub n_train: usize,
    #[serde(default = "default_n")]
    pub n_test: usize,
    #[serde(default = "default_dim_2")]
    pub c_dim: usize,
    #[serde(default = "default_dim_2")]
    pub u_dim: usize,
    #[serde(default = "default_dim_1")]
    pub s_dim: usize,
    pub beta_c: Vec<f64>,
    pub beta_u: Vec<f64>,
    #[serde(default)]
    pub noise_sigma: f64,
    pub shortcut_kind: ShortcutKind,
    #[serde(default)]
    pub shortcut_coeffs: Vec<f64>,
    /// Standard deviation of extra Gaussian noise added to the training `S`
    /// for the concept/unknown-correlated kinds. Zero keeps `S` an exact
    /// linear combination.
    #[serde(default)]
    pub shortcut_noise: f64,
    #[serde(default)]
    pub seed: u64,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.n_train == 0 || self.n_test == 0 {
            return bad("sample counts must be >= 1".into());
        }
        if self.c_dim == 0 || self.u_dim == 0 || self.s_dim == 0 {
            return bad("all block dimensions must be >= 1".into());
        }
        if self.beta_c.len() != self.c_dim {
            return bad(format!("beta_c has {} entries, c_dim is {}", self.beta_c.len(), self.c_dim));
        }
        if self.beta_u.len() != self.u_dim {
            return bad(format!("beta_u has {} entries, u_dim is {}", self.beta_u.len(), self.u_dim));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be finite and >= 0, got {}", self.noise_sigma));
        }
        if !(self.shortcut_noise >= 0.0 && self.shortcut_noise.is_finite()) {
            return bad(format!("shortcut_noise must be finite and >= 0, got {}", self.shortcut_noise));
        }
        let expected = match self.shortcut_kind {
            ShortcutKind::ConceptCorrelated => self.c_dim,
            ShortcutKind::UnknownCorrelated => self.c_dim + self.u_dim,
            ShortcutKind::OutputCorrelated => 1,
            ShortcutKind::Independent => 0,
        };
        if self.shortcut_coeffs.len() != expected {
            return bad(format!(
                "{:?} needs {} shortcut coefficients, got {}",
                self.shortcut_kind,
                expected,
                self.shortcut_coeffs.len()
            ));
        }
        if self.beta_c.iter().chain(&self.beta_u).chain(&self.shortcut_coeffs).any(|v| !v.is_finite()) {
            return bad("coefficients must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub c: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub y: DVector<f64>,
    pub role: Role,
}

impl Dataset {
    pub fn new(c: DMatrix<f64>, u: DMatrix<f64>, s: DMatrix<f64>, y: DVector<f64>, role: Role) -> Result<Self> {
        let n = y.len();
        for (got, _name) in [(c.nrows(), "C"), (u.nrows(), "U"), (s.nrows(), "S")] {
            if got != n {
                return Err(Error::DimensionMismatch { expected: n, got });
            }
        }
        if c.iter().chain(u.iter()).chain(s.iter()).chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("dataset contains non-finite entries".into()));
        }
        Ok(Dataset { c, u, s, y, role })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn c_dim(&self) -> usize {
        self.c.ncols()
    }

    pub fn u_dim(&self) -> usize {
        self.u.ncols()
    }

    pub fn s_dim(&self) -> usize {
        self.s.ncols()
    }

    /// Total feature width `c + u + s`.
    pub fn width(&self) -> usize {
        self.c_dim() + self.u_dim() + self.s_dim()
    }

    /// Index of shortcut column `j` within a full feature row.
    pub fn shortcut_index(&self, j: usize) -> usize {
        self.c_dim() + self.u_dim() + j
    }

    /// `[C U S]` as one `n × (c+u+s)` matrix.
    pub fn features(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.n(), self.width());
        h.columns_mut(0, self.c_dim()).copy_from(&self.c);
        h.columns_mut(self.c_dim(), self.u_dim()).copy_from(&self.u);
        h.columns_mut(self.c_dim() + self.u_dim(), self.s_dim()).copy_from(&self.s);
        h
    }

    /// `[U S]`
    pub fn h_us(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.n(), self.u_dim() + self.s_dim());
        h.columns_mut(0, self.u_dim()).copy_from(&self.u);
        h.columns_mut(self.u_dim(), self.s_dim()).copy_from(&self.s);
        h
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        let mut r = Vec::with_capacity(self.width());
        r.extend(self.c.row(i).iter());
        r.extend(self.u.row(i).iter());
        r.extend(self.s.row(i).iter());
        r
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    /// Column names in file order: `c0.., u0.., s0.., y`.
    pub fn column_names(&self) -> Vec<String> {
        column_names(self.c_dim(), self.u_dim(), self.s_dim())
    }
}

pub(crate) fn column_names(c: usize, u: usize, s: usize) -> Vec<String> {
    let mut names: Vec<String> = (0..c).map(|i| format!("c{i}")).collect();
    names.extend((0..u).map(|i| format!("u{i}")));
    names.extend((0..s).map(|i| format!("s{i}")));
    names.push("y".into());
    names
}

/// Draw a train/test pair. Deterministic in `spec` (including its seed).
///
/// Draw order is fixed: train `C`, `U` (row-major), target noise, shortcut
/// noise, then the same for test, then test `S`. Sweeps that only change
/// shortcut coefficients therefore see identical `C`, `U` and noise draws.
pub fn generate_synthetic(spec: &DatasetSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let mut rng = seeded(spec.seed);
    let train = draw_split(spec, spec.n_train, Role::Train, &mut rng)?;
    let test = draw_split(spec, spec.n_test, Role::Test, &mut rng)?;
    Ok((train, test))
}

fn draw_split(spec: &DatasetSpec, n: usize, role: Role, rng: &mut crate::rng::SeededRng) -> Result<Dataset> {
    let mut c = DMatrix::zeros(n, spec.c_dim);
    for i in 0..n {
        for j in 0..spec.c_dim {
            c[(i, j)] = normal(rng);
        }
    }
    let mut u = DMatrix::zeros(n, spec.u_dim);
    for i in 0..n {
        for j in 0..spec.u_dim {
            u[(i, j)] = normal(rng);
        }
    }
    let beta_c = DVector::from_column_slice(&spec.beta_c);
    let beta_u = DVector::from_column_slice(&spec.beta_u);
    let mut y = &c * &beta_c + &u * &beta_u;
    for v in y.iter_mut() {
        // always consume the draw so noise_sigma = 0 and > 0 share a stream
        let e = normal(rng);
        *v += spec.noise_sigma * e;
    }

    let mut s = DMatrix::zeros(n, spec.s_dim);
    match role {
        Role::Test => {
            for i in 0..n {
                for j in 0..spec.s_dim {
                    s[(i, j)] = normal(rng);
                }
            }
        }
        Role::Train => {
            for i in 0..n {
                for j in 0..spec.s_dim {
                    let extra = normal(rng);
                    s[(i, j)] = match spec.shortcut_kind {
                        ShortcutKind::ConceptCorrelated => {
                            let d = &spec.shortcut_coeffs;
                            (0..spec.c_dim).map(|k| d[k] * c[(i, k)]).sum::<f64>() + spec.shortcut_noise * extra
                        }
                        ShortcutKind::UnknownCorrelated => {
                            let d = &spec.shortcut_coeffs;
                            let from_c: f64 = (0..spec.c_dim).map(|k| d[k] * c[(i, k)]).sum();
                            let from_u: f64 = (0..spec.u_dim).map(|k| d[spec.c_dim + k] * u[(i, k)]).sum();
                            from_c + from_u + spec.shortcut_noise * extra
                        }
                        ShortcutKind::OutputCorrelated => y[i] + spec.shortcut_coeffs[0] * extra,
                        ShortcutKind::Independent => extra,
                    };
                }
            }
        }
    }
    Dataset::new(c, u, s, y, role)
}

/// Train-split column statistics (population convention, divisor `n`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizeStats {
    pub c_mean: Vec<f64>,
    pub c_std: Vec<f64>,
    pub u_mean: Vec<f64>,
    pub u_std: Vec<f64>,
    pub s_mean: Vec<f64>,
    pub s_std: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
}

impl StandardizeStats {
    /// Feature means in row order `[c.., u.., s..]`.
    pub fn feature_means(&self) -> Vec<f64> {
        self.c_mean.iter().chain(&self.u_mean).chain(&self.s_mean).copied().collect()
    }

    pub fn feature_stds(&self) -> Vec<f64> {
        self.c_std.iter().chain(&self.u_std).chain(&self.s_std).copied().collect()
    }
}

fn column_stats(m: &DMatrix<f64>, prefix: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = m.nrows() as f64;
    let mut means = Vec::with_capacity(m.ncols());
    let mut stds = Vec::with_capacity(m.ncols());
    for (j, col) in m.column_iter().enumerate() {
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        if !(sd > 0.0) {
            return Err(Error::DegenerateColumn(format!("{prefix}{j}")));
        }
        means.push(mean);
        stds.push(sd);
    }
    Ok((means, stds))
}

fn apply(m: &DMatrix<f64>, means: &[f64], stds: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] - means[j]) / stds[j])
}

/// Standardize every column (including `Y`) with train statistics.
pub fn standardize(train: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset, StandardizeStats)> {
    if train.c_dim() != test.c_dim() || train.u_dim() != test.u_dim() || train.s_dim() != test.s_dim() {
        return Err(Error::DimensionMismatch {
            expected: train.width(),
            got: test.width(),
        });
    }
    let (c_mean, c_std) = column_stats(&train.c, "c")?;
    let (u_mean, u_std) = column_stats(&train.u, "u")?;
    let (s_mean, s_std) = column_stats(&train.s, "s")?;
    let ym = DMatrix::from_column_slice(train.n(), 1, train.y.as_slice());
    let (y_mean, y_std) = column_stats(&ym, "y")?;
    let stats = StandardizeStats {
        c_mean,
        c_std,
        u_mean,
        u_std,
        s_mean,
        s_std,
        y_mean: y_mean[0],
        y_std: y_std[0],
    };
    Ok((transform(train, &stats)?, transform(test, &stats)?, stats))
}

/// Apply previously computed statistics to any split.
pub fn transform(ds: &Dataset, st: &StandardizeStats) -> Result<Dataset> {
    Dataset::new(
        apply(&ds.c, &st.c_mean, &st.c_std),
        apply(&ds.u, &st.u_mean, &st.u_std),
        apply(&ds.s, &st.s_mean, &st.s_std),
        ds.y.map(|v| (v - st.y_mean) / st.y_std),
        ds.role,
    )
}

/// Write as CSV: header `c0..,u0..,s0..,y`, LF endings, shortest round-trip floats.
pub fn write_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = ds.column_names().join(",");
    out.push('\n');
    for i in 0..ds.n() {
        let row = ds.row(i);
        for v in row.iter().chain(std::iter::once(&ds.y[i])) {
            let _ = write!(out, "{v:?},");
        }
        out.pop();
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}

/// Parse the CSV layout produced by [`write_dataset`]. The split role is set
/// to [`Role::Train`]; callers can override it with [`Dataset::with_role`].
pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "missing header".into(),
    })?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let (mut c, mut u, mut s) = (0, 0, 0);
    let mut saw_y = false;
    for (k, name) in names.iter().enumerate() {
        let bad = || Error::Parse {
            line: 1,
            msg: format!("unexpected column `{name}` at position {k}"),
        };
        let idx: Option<usize> = name.get(1..).and_then(|t| t.parse().ok());
        match (name.chars().next(), idx) {
            (Some('c'), Some(i)) if i == c && u == 0 && s == 0 && !saw_y => c += 1,
            (Some('u'), Some(i)) if i == u && s == 0 && !saw_y => u += 1,
            (Some('s'), Some(i)) if i == s && !saw_y => s += 1,
            _ if *name == "y" && !saw_y && k == names.len() - 1 => saw_y = true,
            _ => return Err(bad()),
        }
    }
    if c == 0 || u == 0 || s == 0 || !saw_y {
        return Err(Error::Parse {
            line: 1,
            msg: "header must contain c0.., u0.., s0.. and a trailing y".into(),
        });
    }
    let width = names.len();
    let mut values: Vec<f64> = Vec::new();
    let mut n = 0;
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != width {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("expected {width} fields, found {}", cells.len()),
            });
        }
        for cell in cells {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                line: idx + 1,
                msg: format!("non-numeric cell `{cell}`"),
            })?;
            values.push(v);
        }
        n += 1;
    }
    let at = |i: usize, j: usize| values[i * width + j];
    let c_m = DMatrix::from_fn(n, c, |i, j| at(i, j));
    let u_m = DMatrix::from_fn(n, u, |i, j| at(i, c + j));
    let s_m = DMatrix::from_fn(n, s, |i, j| at(i, c + u + j));
    let y = DVector::from_fn(n, |i, _| at(i, width - 1));
    Dataset::new(c_m, u_m, s_m, y, Role::Train)
}

/// Sample Pearson correlation (divisor cancels). `None` when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa > 0.0 && sbb > 0.0 {
        Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_spec(kind: ShortcutKind, coeffs: Vec<f64>) -> DatasetSpec {
        DatasetSpec {
            n_train: 10_000,
            n_test: 10_000,
            c_dim: 2,
            u_dim: 2,
            s_dim: 1,
            beta_c: vec![4.0, -0.5],
            beta_u: vec![1.0, 2.0],
            noise_sigma: 0.0,
            shortcut_kind: kind,
            shortcut_coeffs: coeffs,
            shortcut_noise: 0.0,
            seed: 11,
        }
    }

    fn col(m: &DMatrix<f64>, j: usize) -> Vec<f64> {
        m.column(j).iter().copied().collect()
    }

    #[test]
    fn concept_correlated_shortcut_is_exact_combination() {
        let (train, _) = generate_synthetic(&paper_spec(ShortcutKind::ConceptCorrelated, vec![1.5, -0.5])).unwrap();
        for i in 0..train.n() {
            let expect = 1.5 * train.c[(i, 0)] - 0.5 * train.c[(i, 1)];
            assert_eq!(train.s[(i, 0)], expect);
        }
        let bound = 4.0 / (train.n() as f64).sqrt();
        for j in 0..2 {
            assert!(pearson(&col(&train.s, 0), &col(&train.u, j)).unwrap().abs() < bound);
        }
    }

    #[test]
    fn independent_shortcut_uncorrelated_with_target() {
        for seed in [1, 2, 3] {
            let mut spec = paper_spec(ShortcutKind::Independent, vec![]);
            spec.seed = seed;
            let (train, test) = generate_synthetic(&spec).unwrap();
            let bound = 4.0 / (train.n() as f64).sqrt();
            let y: Vec<f64> = train.y.iter().copied().collect();
            assert!(pearson(&col(&train.s, 0), &y).unwrap().abs() < bound);
            let yt: Vec<f64> = test.y.iter().copied().collect();
            assert!(pearson(&col(&test.s, 0), &yt).unwrap().abs() < bound);
        }
    }

    #[test]
    fn output_correlated_matches_sample_correlation_target() {
        let (train, test) = generate_synthetic(&paper_spec(ShortcutKind::OutputCorrelated, vec![1.0])).unwrap();
        let y: Vec<f64> = train.y.iter().copied().collect();
        let s = col(&train.s, 0);
        // oracle: corr(Y, Y+η) = sd_Y / sqrt(sd_Y² + 1) using the drawn sample's sd_Y
        let n = y.len() as f64;
        let m = y.iter().sum::<f64>() / n;
        let var_y = y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        let target = (var_y / (var_y + 1.0)).sqrt();
        let got = pearson(&s, &y).unwrap();
        assert!((got - target).abs() < 4.0 / n.sqrt(), "{got} vs {target}");
        let yt: Vec<f64> = test.y.iter().copied().collect();
        assert!(pearson(&col(&test.s, 0), &yt).unwrap().abs() < 4.0 / n.sqrt());
    }

    #[test]
    fn generation_is_pure() {
        let spec = paper_spec(ShortcutKind::UnknownCorrelated, vec![0.0, -0.5, 1.0, 2.0]);
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn coefficient_count_checked() {
        let spec = paper_spec(ShortcutKind::UnknownCorrelated, vec![1.0, 2.0]);
        assert!(matches!(generate_synthetic(&spec), Err(Error::InvalidSpec(_))));
        let mut spec = paper_spec(ShortcutKind::Independent, vec![]);
        spec.u_dim = 0;
        assert!(matches!(spec.validate(), Err(Error::InvalidSpec(_))));
    }

    fn tiny(values: &[f64]) -> Dataset {
        let n = values.len();
        let c = DMatrix::from_column_slice(n, 1, values);
        Dataset::new(c.clone(), c.map(|v| v * 2.0 + 1.0), c.map(|v| -v), DVector::from_column_slice(values), Role::Train).unwrap()
    }

    #[test]
    fn standardize_population_divisor() {
        let ds = tiny(&[1.0, 2.0, 3.0]);
        let (tr, _, stats) = standardize(&ds, &ds).unwrap();
        let k = 1.224_744_871_391_589;
        assert!((tr.c[(0, 0)] + k).abs() < 1e-12);
        assert!(tr.c[(1, 0)].abs() < 1e-12);
        assert!((tr.c[(2, 0)] - k).abs() < 1e-12);
        assert!((stats.c_std[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn test_split_uses_train_statistics() {
        let train = tiny(&[1.0, 2.0, 3.0, 6.0]);
        let test = tiny(&[0.5, 10.0]);
        let (_, te, _) = standardize(&train, &test).unwrap();
        // two-pass oracle on the train column
        let xs = [1.0, 2.0, 3.0, 6.0];
        let mut mean = 0.0;
        for x in xs {
            mean += x;
        }
        mean /= 4.0;
        let mut ss: f64 = 0.0;
        for x in xs {
            ss += (x - mean) * (x - mean);
        }
        let sd = (ss / 4.0).sqrt();
        assert_eq!(te.c[(0, 0)], (0.5 - mean) / sd);
        assert_eq!(te.c[(1, 0)], (10.0 - mean) / sd);
        let m = (te.c[(0, 0)] + te.c[(1, 0)]) / 2.0;
        assert!(m.abs() > 0.1);
    }

    #[test]
    fn standardize_is_idempotent_on_train() {
        let (train, test) = generate_synthetic(&paper_spec(ShortcutKind::OutputCorrelated, vec![1.0])).unwrap();
        let (a, at, _) = standardize(&train, &test).unwrap();
        let (b, _, _) = standardize(&a, &at).unwrap();
        for (x, y) in a.features().iter().zip(b.features().iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        for (x, y) in a.y.iter().zip(b.y.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_variance_column_rejected() {
        let ds = tiny(&[1.0, 1.0, 1.0]);
        assert!(matches!(standardize(&ds, &ds), Err(Error::DegenerateColumn(_))));
    }

    #[test]
    fn parse_hand_built_file() {
        let text = "c0,c1,u0,u1,s0,y\n1,2,3,4,5,6\n0.5,-1,2e-3,4,5,7\n";
        let ds = parse_dataset(text).unwrap();
        assert_eq!((ds.n(), ds.c_dim(), ds.u_dim(), ds.s_dim()), (2, 2, 2, 1));
        assert_eq!(ds.u[(1, 0)], 0.002);
        assert_eq!(ds.y[1], 7.0);
    }

    #[test]
    fn ragged_row_reports_line() {
        let text = "c0,u0,s0,y\n1,2,3,4\n1,2,3\n";
        match parse_dataset(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let text = "c0,u0,s0,y\n1,2,x,4\n";
        assert!(matches!(parse_dataset(text), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_dataset("u0,c0,s0,y\n"), Err(Error::Parse { line: 1, .. })));
    }
}
