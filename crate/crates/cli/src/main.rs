use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use shortcut_core::harness::{self, emit_report, ExperimentConfig, Formats, Table, VerifyConfig};
use shortcut_core::{generate_synthetic, write_dataset};

#[derive(Parser)]
#[command(name = "shortcut", version, about = "Shortcut-mitigation experiments on synthetic concept data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the file's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the file's `outputs` or `out/<scenario>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated subset of csv,json,svg.
    #[arg(long, default_value = "csv,json,svg")]
    format: String,
}

#[derive(Subcommand)]
enum Command {
    /// Write the train/test split of the scenario's dataset as CSV.
    Gen(Common),
    /// Fit every regularizer at its own λ.
    Fit(Common),
    /// Sweep `sweep.lambda_grid`.
    SweepLambda(Common),
    /// Sweep `sweep.delta_u_grid`.
    SweepCorr(Common),
    /// Fit the network for every regularizer and record TE traces.
    Nonlinear(Common),
    /// Run the property suite; exits 2 if a hard property fails.
    Verify(Common),
    /// Re-render a saved `table.json` (or a directory holding one).
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "csv,json,svg")]
        format: String,
    },
}

enum Failure {
    Usage(String),
    Assertion(String),
}

impl From<shortcut_core::Error> for Failure {
    fn from(e: shortcut_core::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn load(c: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::from_path(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.base_seed = seed;
    }
    Ok(cfg)
}

fn out_dir(c: &Common, cfg: &ExperimentConfig) -> PathBuf {
    c.out.clone().unwrap_or_else(|| cfg.output_dir())
}

fn emit(table: &Table, formats: Formats, dir: &Path) -> Result<(), Failure> {
    let written = emit_report(table, formats, dir)?;
    let failed: usize = table.aggregates.iter().map(|a| a.n_failed).sum();
    println!("{}: {} rows ({} failed), {} files in {}", table.scenario, table.rows.len(), failed, written.len(), dir.display());
    for a in &table.aggregates {
        let x = a.x.map(|x| format!(" x={x}")).unwrap_or_default();
        println!(
            "  {:<12} λ={:<8}{x}  test_mse={:.4e}  te={:.4}  |β_s|={:.4}",
            a.regularizer, a.lambda, a.test_mse.mean, a.te.mean, a.abs_beta_s.mean
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Gen(c) => {
            let cfg = load(&c)?;
            let mut spec = cfg.dataset.clone();
            if let Some(seed) = c.seed {
                spec.seed = seed;
            }
            let (train, test) = generate_synthetic(&spec)?;
            let dir = out_dir(&c, &cfg);
            std::fs::create_dir_all(&dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?;
            write_dataset(&train, dir.join("train.csv"))?;
            write_dataset(&test, dir.join("test.csv"))?;
            println!("wrote {} and {} rows to {}", train.n(), test.n(), dir.display());
        }
        Command::Fit(c) => {
            let cfg = load(&c)?;
            emit(&harness::run_experiment(&cfg)?, Formats::parse(&c.format)?, &out_dir(&c, &cfg))?;
        }
        Command::SweepLambda(c) => {
            let cfg = load(&c)?;
            emit(&harness::sweep_lambda(&cfg)?, Formats::parse(&c.format)?, &out_dir(&c, &cfg))?;
        }
        Command::SweepCorr(c) => {
            let cfg = load(&c)?;
            emit(&harness::sweep_correlation(&cfg)?, Formats::parse(&c.format)?, &out_dir(&c, &cfg))?;
        }
        Command::Nonlinear(c) => {
            let cfg = load(&c)?;
            emit(&harness::run_nonlinear(&cfg)?, Formats::parse(&c.format)?, &out_dir(&c, &cfg))?;
        }
        Command::Verify(c) => {
            let mut cfg = VerifyConfig::from_path(&c.config)?;
            if let Some(seed) = c.seed {
                cfg.seed = seed;
            }
            let dir = c.out.clone().unwrap_or_else(|| PathBuf::from("out/verify"));
            let report = harness::verify(&cfg)?;
            std::fs::create_dir_all(&dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?;
            let path = dir.join("verify_report.json");
            let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::Usage(e.to_string()))? + "\n";
            std::fs::write(&path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            for p in &report.properties {
                let verdict = if p.pass { "PASS" } else { "FAIL" };
                println!("{verdict} [{:?}] {} value={} threshold={}", p.kind, p.name, p.value, p.threshold);
            }
            println!("report: {}", path.display());
            if !report.pass {
                return Err(Failure::Assertion("a hard property failed".into()));
            }
        }
        Command::Report { input, out, format } => {
            let table = harness::read_table(&input)?;
            let dir = out.unwrap_or_else(|| if input.is_dir() { input.clone() } else { input.parent().map(Path::to_path_buf).unwrap_or_default() });
            emit(&table, Formats::parse(&format)?, &dir)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Assertion(m)) => {
            eprintln!("verify failed: {m}");
            ExitCode::from(2)
        }
    }
}
