use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_shortcut"))
}

fn scenarios() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

// Shrinks a shipped scenario so each test runs in well under a second.
fn small_config(dir: &Path, name: &str, n: u64) -> PathBuf {
    let text = std::fs::read_to_string(scenarios().join(format!("{name}.json"))).unwrap();
    let mut v: Value = serde_json::from_str(&text).unwrap();
    v["dataset"]["n_train"] = n.into();
    v["dataset"]["n_test"] = n.into();
    v["repeats"] = 2.into();
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
    path
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|f| f.file_name().unwrap() != "timings.csv")
        .map(|f| (f.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&f).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["fit", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["fit"]).status.code(), Some(1));
    assert_eq!(run(&["fit", "--config", "/nonexistent/x.json"]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "fig2A", 200);
    let out = run(&["fit", "--config", p(&cfg), "--format", "csv,xml", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    // a λ sweep needs a lambda grid
    assert_eq!(run(&["sweep-lambda", "--config", p(&cfg), "--out", p(dir.path())]).status.code(), Some(1));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(run(&["fit", "--config", p(&bad)]).status.code(), Some(1));
}

#[test]
fn gen_writes_train_and_test() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "fig2B", 50);
    let out = run(&["gen", "--config", p(&cfg), "--out", p(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let train = std::fs::read_to_string(dir.path().join("train.csv")).unwrap();
    assert_eq!(train.lines().count(), 51);
    assert!(dir.path().join("test.csv").exists());

    let other = dir.path().join("other");
    assert!(run(&["gen", "--config", p(&cfg), "--out", p(&other), "--seed", "9"]).status.success());
    assert_ne!(std::fs::read(other.join("train.csv")).unwrap(), train.as_bytes());
}

#[test]
fn fit_is_byte_identical_across_output_dirs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "fig2C", 300);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&["fit", "--config", p(&cfg), "--out", p(&a)]).status.success());
    assert!(run(&["fit", "--config", p(&cfg), "--out", p(&b)]).status.success());
    let fa = files(&a);
    assert!(fa.iter().any(|(n, _)| n == "rows.csv"));
    assert!(fa.iter().any(|(n, _)| n == "table.json"));
    assert!(fa.iter().any(|(n, _)| n.ends_with(".svg")));
    assert_eq!(fa, files(&b));

    let c = dir.path().join("c");
    assert!(run(&["fit", "--config", p(&cfg), "--out", p(&c), "--seed", "1"]).status.success());
    assert_ne!(fa, files(&c));
}

#[test]
fn format_subset_limits_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "fig2A", 200);
    let out = dir.path().join("o");
    assert!(run(&["fit", "--config", p(&cfg), "--out", p(&out), "--format", "json"]).status.success());
    let names: Vec<String> = files(&out).into_iter().map(|(n, _)| n).collect();
    assert!(names.iter().all(|n| n.ends_with(".json")), "{names:?}");
}

#[test]
fn sweeps_and_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let lam = small_config(dir.path(), "fig4_lambda", 300);
    let a = dir.path().join("lam");
    assert!(run(&["sweep-lambda", "--config", p(&lam), "--out", p(&a)]).status.success());
    assert!(a.join("te_vs_lambda.svg").exists());

    let corr = small_config(dir.path(), "table1_corr", 300);
    let c = dir.path().join("corr");
    assert!(run(&["sweep-corr", "--config", p(&corr), "--out", p(&c)]).status.success());

    let r = dir.path().join("rerender");
    let out = run(&["report", "--input", p(&a.join("table.json")), "--out", p(&r)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let original: Vec<_> = files(&a).into_iter().filter(|(n, _)| n != "table.json").collect();
    let rerendered: Vec<_> = files(&r).into_iter().filter(|(n, _)| n != "table.json").collect();
    assert_eq!(original, rerendered);
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let small = serde_json::json!({
        "seed": 5,
        "shrinkage": { "instances": 3, "n": 100 },
        "closed_form": { "instances": 3, "n": 100 },
        "agreement": { "problems": 60 },
        "min_non_boundary": 20,
        "signed_agreement": null,
        "refinement_problems": 5,
        "causal_limit_problems": 5,
        "counterexample": null
    });
    let ok = dir.path().join("ok.json");
    std::fs::write(&ok, small.to_string()).unwrap();
    let out_ok = dir.path().join("ok");
    let o = run(&["verify", "--config", p(&ok), "--out", p(&out_ok)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let report: Value = serde_json::from_slice(&std::fs::read(out_ok.join("verify_report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));

    let mut impossible = small.clone();
    impossible["min_non_boundary"] = 1_000_000.into();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, impossible.to_string()).unwrap();
    let out_bad = dir.path().join("bad");
    let o = run(&["verify", "--config", p(&bad), "--out", p(&out_bad)]);
    assert_eq!(o.status.code(), Some(2));
    let report: Value = serde_json::from_slice(&std::fs::read(out_bad.join("verify_report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], false);
}
