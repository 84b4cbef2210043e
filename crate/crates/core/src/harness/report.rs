use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::{AggregateRow, ResultRow, Stat, Table, TableKind};

/// Which artifacts [`emit_report`] writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Formats {
    pub csv: bool,
    pub json: bool,
    pub svg: bool,
}

impl Default for Formats {
    fn default() -> Self {
        Formats {
            csv: true,
            json: true,
            svg: true,
        }
    }
}

impl Formats {
    /// Comma-separated subset of `csv,json,svg`.
    pub fn parse(s: &str) -> Result<Formats> {
        let mut f = Formats {
            csv: false,
            json: false,
            svg: false,
        };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "csv" => f.csv = true,
                "json" => f.json = true,
                "svg" => f.svg = true,
                other => return Err(Error::Config(format!("unknown format `{other}` (expected csv, json, svg)"))),
            }
        }
        if !(f.csv || f.json || f.svg) {
            return Err(Error::Config("no output format selected".into()));
        }
        Ok(f)
    }
}

fn num(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:?}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn file_label(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

/// `scenario,regularizer,lambda,x,repeat,seed,status,train_mse,test_mse,
/// te_s*,corr_pred_s*,corr_u_s,epochs,converged,beta_c*,beta_u*,beta_s*,intercept`
pub fn rows_csv(rows: &[ResultRow]) -> String {
    let Some(first) = rows.first() else {
        return String::new();
    };
    let p = &first.params;
    let mut head: Vec<String> = ["scenario", "regularizer", "lambda", "x", "repeat", "seed", "status", "train_mse", "test_mse"]
        .map(String::from)
        .to_vec();
    head.extend((0..first.te.len()).map(|j| format!("te_s{j}")));
    head.extend((0..first.corr_pred_s.len()).map(|j| format!("corr_pred_s{j}")));
    head.extend(["corr_u_s", "epochs", "converged"].map(String::from));
    head.extend((0..p.beta_c.len()).map(|j| format!("beta_c{j}")));
    head.extend((0..p.beta_u.len()).map(|j| format!("beta_u{j}")));
    head.extend((0..p.beta_s.len()).map(|j| format!("beta_s{j}")));
    head.push("intercept".into());
    let mut out = head.join(",");
    out.push('\n');
    for r in rows {
        let mut f = vec![
            r.scenario.clone(),
            r.regularizer.clone(),
            num(r.lambda),
            opt(r.x),
            r.repeat.to_string(),
            r.seed.to_string(),
            // statuses may carry commas
            format!("\"{}\"", r.status.replace('"', "'")),
            num(r.train_mse),
            num(r.test_mse),
        ];
        f.extend(r.te.iter().chain(&r.corr_pred_s).map(|v| num(*v)));
        f.extend([num(r.corr_u_s), r.epochs.to_string(), r.converged.to_string()]);
        f.extend(r.params.flat().into_iter().map(num));
        f.push(num(r.params.intercept));
        out.push_str(&f.join(","));
        out.push('\n');
    }
    out
}

const AGG_METRICS: [&str; 7] = ["train_mse", "test_mse", "te", "abs_beta_s", "abs_corr_pred_s", "shortcut_share", "corr_u_s"];

fn agg_stats(a: &AggregateRow) -> [&Stat; 7] {
    [&a.train_mse, &a.test_mse, &a.te, &a.abs_beta_s, &a.abs_corr_pred_s, &a.shortcut_share, &a.corr_u_s]
}

/// `scenario,regularizer,lambda,x,n_ok,n_failed` then `<metric>_mean,<metric>_se`.
pub fn aggregates_csv(aggs: &[AggregateRow]) -> String {
    let mut out = String::from("scenario,regularizer,lambda,x,n_ok,n_failed");
    for m in AGG_METRICS {
        let _ = write!(out, ",{m}_mean,{m}_se");
    }
    out.push('\n');
    for a in aggs {
        let _ = write!(out, "{},{},{},{},{},{}", a.scenario, a.regularizer, num(a.lambda), opt(a.x), a.n_ok, a.n_failed);
        for s in agg_stats(a) {
            let _ = write!(out, ",{},{}", num(s.mean), num(s.se));
        }
        out.push('\n');
    }
    out
}

fn timings_csv(t: &Table) -> String {
    let mut out = String::from("regularizer,lambda,x,repeat,millis\n");
    for r in &t.timings {
        let _ = writeln!(out, "{},{},{},{},{:.3}", r.regularizer, num(r.lambda), opt(r.x), r.repeat, r.millis);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Half-width of the shaded band around `y`.
    pub se: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub series: Vec<Series>,
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];
const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

/// Line chart with one polyline per series and a ±SE band where given.
/// Non-finite points are skipped; the output depends only on the input.
pub fn svg_chart(chart: &Chart) -> String {
    let tx = |x: f64| if chart.log_x { x.log10() } else { x };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in &chart.series {
        for (k, (&x, &y)) in s.x.iter().zip(&s.y).enumerate() {
            let x = tx(x);
            if !(x.is_finite() && y.is_finite()) {
                continue;
            }
            xs.push(x);
            let e = s.se.as_ref().and_then(|e| e.get(k)).copied().filter(|e| e.is_finite()).unwrap_or(0.0);
            ys.push(y - e);
            ys.push(y + e);
        }
    }
    let range = |v: &[f64]| -> (f64, f64) {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = range(&xs);
    let (y0, y1) = range(&ys);
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, escape(&chart.title));
    let _ = writeln!(out, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let xl = if chart.log_x { format!("1e{xv:.1}") } else { tick(xv) };
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xl}</text>"#, px(xv), TOP + ph + 16.0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, LEFT - 4.0, py(yv) + 4.0, tick(yv));
        let _ = writeln!(out, r##"<line x1="{LEFT}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="#dddddd"/>"##, LEFT + pw, py(yv), py(yv));
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 12.0, escape(&chart.x_label));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&chart.y_label)
    );
    for (i, s) in chart.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64, f64)> = s
            .x
            .iter()
            .zip(&s.y)
            .enumerate()
            .filter_map(|(k, (&x, &y))| {
                let x = tx(x);
                let e = s.se.as_ref().and_then(|e| e.get(k)).copied().filter(|e| e.is_finite()).unwrap_or(0.0);
                (x.is_finite() && y.is_finite()).then_some((x, y, e))
            })
            .collect();
        if s.se.is_some() && pts.len() > 1 {
            let mut band: Vec<String> = pts.iter().map(|(x, y, e)| format!("{:.2},{:.2}", px(*x), py(y + e))).collect();
            band.extend(pts.iter().rev().map(|(x, y, e)| format!("{:.2},{:.2}", px(*x), py(y - e))));
            let _ = writeln!(out, r#"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#, band.join(" "));
        }
        let line: Vec<String> = pts.iter().map(|(x, y, _)| format!("{:.2},{:.2}", px(*x), py(*y))).collect();
        if line.len() > 1 {
            let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, line.join(" "));
        }
        for (x, y, _) in pts.iter().take(200) {
            let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{color}"/>"#, px(*x), py(*y));
        }
        let ly = TOP + 14.0 * i as f64 + 8.0;
        let _ = writeln!(out, r#"<line x1="{:.1}" x2="{:.1}" y1="{ly:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#, W - RIGHT + 10.0, W - RIGHT + 30.0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, W - RIGHT + 35.0, ly + 4.0, escape(&s.name));
    }
    out.push_str("</svg>\n");
    out
}

fn regularizers(t: &Table) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for a in &t.aggregates {
        if !names.contains(&a.regularizer) {
            names.push(a.regularizer.clone());
        }
    }
    names
}

fn metric_chart(t: &Table, metric: usize, x_label: &str, log_x: bool) -> Chart {
    let series = regularizers(t)
        .into_iter()
        .map(|name| {
            let aggs = t.aggregate_for(&name);
            let x = aggs.iter().enumerate().map(|(k, a)| a.x.unwrap_or(k as f64)).collect();
            Series {
                y: aggs.iter().map(|a| agg_stats(a)[metric].mean).collect(),
                se: Some(aggs.iter().map(|a| agg_stats(a)[metric].se).collect()),
                name,
                x,
            }
        })
        .collect();
    Chart {
        title: format!("{}: {}", t.scenario, AGG_METRICS[metric]),
        x_label: x_label.into(),
        y_label: AGG_METRICS[metric].into(),
        log_x,
        series,
    }
}

fn trace_chart(t: &Table, what: &str) -> Chart {
    let series = t
        .traces
        .iter()
        .map(|nt| Series {
            name: nt.regularizer.clone(),
            x: nt.trace.rows.iter().map(|r| r.epoch as f64).collect(),
            y: nt
                .trace
                .rows
                .iter()
                .map(|r| match what {
                    "te" => r.te.first().copied().unwrap_or(f64::NAN),
                    _ => r.loss,
                })
                .collect(),
            se: None,
        })
        .collect();
    Chart {
        title: format!("{}: {what} per epoch", t.scenario),
        x_label: "epoch".into(),
        y_label: what.into(),
        log_x: false,
        series,
    }
}

/// Charts a table gets, keyed by file stem.
pub fn charts(t: &Table) -> Vec<(String, Chart)> {
    let mut out = Vec::new();
    let (x_label, log_x, metrics): (&str, bool, &[usize]) = match t.kind {
        TableKind::LambdaSweep => ("lambda", true, &[2, 1, 3]),
        TableKind::CorrelationSweep => ("delta_u", false, &[2, 4, 1, 6]),
        TableKind::Run | TableKind::Nonlinear => ("", false, &[]),
    };
    for &m in metrics {
        out.push((format!("{}_vs_{x_label}", AGG_METRICS[m]), metric_chart(t, m, x_label, log_x)));
    }
    if !t.traces.is_empty() {
        out.push(("trace_te".into(), trace_chart(t, "te")));
        out.push(("trace_loss".into(), trace_chart(t, "loss")));
    }
    out
}

fn write(path: PathBuf, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Write a table's artifacts into `dir` and return the paths written.
///
/// csv: `rows.csv`, `aggregates.csv`, `timings.csv`, `trace_<reg>.csv`,
/// `corr_<reg>.csv`, `weights_<reg>.csv`, `weights_hist_<reg>.csv`.
/// json: `table.json` (everything) and `rows.json` (array of rows). svg: one file per chart.
/// Everything except `timings.csv` is a pure function of the table.
pub fn emit_report(table: &Table, formats: Formats, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    if formats.csv {
        write(dir.join("rows.csv"), &rows_csv(&table.rows), &mut written)?;
        write(dir.join("aggregates.csv"), &aggregates_csv(&table.aggregates), &mut written)?;
        if !table.timings.is_empty() {
            write(dir.join("timings.csv"), &timings_csv(table), &mut written)?;
        }
        for nt in &table.traces {
            write(dir.join(format!("trace_{}.csv", file_label(&nt.regularizer))), &nt.trace.to_csv(), &mut written)?;
        }
        for (name, m) in &table.correlations {
            write(dir.join(format!("corr_{}.csv", file_label(name))), &m.to_csv(), &mut written)?;
        }
        for (name, w) in &table.weights {
            write(dir.join(format!("weights_{}.csv", file_label(name))), &w.to_csv(), &mut written)?;
            write(dir.join(format!("weights_hist_{}.csv", file_label(name))), &w.histogram_csv(), &mut written)?;
        }
    }
    if formats.json {
        let text = serde_json::to_string_pretty(table)? + "\n";
        write(dir.join("table.json"), &text, &mut written)?;
        let text = serde_json::to_string_pretty(&table.rows)? + "\n";
        write(dir.join("rows.json"), &text, &mut written)?;
    }
    if formats.svg {
        for (stem, chart) in charts(table) {
            write(dir.join(format!("{stem}.svg")), &svg_chart(&chart), &mut written)?;
        }
    }
    Ok(written)
}

/// Load a `table.json` (or a directory containing one).
pub fn read_table(path: impl AsRef<Path>) -> Result<Table> {
    let mut path = path.as_ref().to_path_buf();
    if path.is_dir() {
        path = path.join("table.json");
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}
