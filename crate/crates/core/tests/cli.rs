use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rarebayes::bernstein::certificate_for_prior;
use rarebayes::priors::PriorConfig;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rarebayes"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json_line(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("json output")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn gamma_uniform() {
    let cfg = configs().join("gamma_uniform.json");
    let out = run(&["gamma", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_line(&out);
    assert_eq!(v["gamma"], 2.0);
    assert_eq!(v["method"], "dirichlet_exact");
}

#[test]
fn gamma_rejects_exp_boundary() {
    let cfg = configs().join("gamma_exp_boundary.json");
    let out = run(&["gamma", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not Condition 𝒫"));
}

#[test]
fn gamma_grid_matches_library() {
    let cfg = configs().join("gamma_grid.json");
    let out = run(&["gamma", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text: Value = serde_json::from_str(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    let prior: PriorConfig = serde_json::from_value(text["prior"].clone()).unwrap();
    let cert = certificate_for_prior(&prior.build(&configs()).unwrap(), 0.5, 1024).unwrap();
    // Output goes through a sorted-key JSON value.
    let expected = format!("{}\n", serde_json::to_value(&cert).unwrap());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), expected);
    assert_eq!(cert.method, rarebayes::bernstein::GammaMethod::BernsteinSearch);
}

#[test]
fn bounds_outputs() {
    let cfg = configs().join("bounds_theorem1.json");
    let v = json_line(&run(&["bounds", "--config", cfg.to_str().unwrap()]));
    assert_eq!(v["N"], 8060);

    let cfg = configs().join("bounds_theorem2.json");
    let v = json_line(&run(&["bounds", "--config", cfg.to_str().unwrap()]));
    for key in ["beta", "c_prime", "d", "M", "N1", "N2", "N"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn bounds_rejects_bad_delta() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "b.json",
        r#"{"mode":"theorem2","c":1,"delta":1.0,"eta":0.5,"epsilon":0.2,
            "pi":{"type":"dirichlet","alpha":[1,1]},"rho":{"type":"dirichlet","alpha":[1,1]}}"#,
    );
    let out = run(&["bounds", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn posterior_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "p.json", r#"{"prior":{"type":"dirichlet","alpha":[1,1]},"counts":[1,1]}"#);
    let v = json_line(&run(&["posterior", "--config", cfg.to_str().unwrap()]));
    assert_eq!(v["mean"], 0.5);

    let cfg = configs().join("posterior_exp_boundary.json");
    let v = json_line(&run(&["posterior", "--config", cfg.to_str().unwrap()]));
    assert!(v["mean"].as_f64().unwrap() >= 0.0125);
    assert_eq!(v["lemma2_lower_bound"], 0.0125);

    // n = 20, n_1 = 4, box [1, 3]: [(4+1)/(20+6), (4+3)/(20+2)].
    let cfg = configs().join("posterior_mixture.json");
    let v = json_line(&run(&["posterior", "--config", cfg.to_str().unwrap()]));
    assert_eq!(v["bracket"]["lower"], 5.0 / 26.0);
    assert_eq!(v["bracket"]["upper"], 7.0 / 22.0);
    let mean = v["mean"].as_f64().unwrap();
    assert!(5.0 / 26.0 <= mean && mean <= 7.0 / 22.0);
}

fn experiment(dir: &Path, cfg: &Path, seed: u64, extra: &[&str]) -> (Output, PathBuf) {
    let out_path = dir.join(format!("out-{seed}-{}.jsonl", extra.len()));
    let mut args = vec!["experiment", "--config", cfg.to_str().unwrap(), "--seed"];
    let seed_text = seed.to_string();
    args.push(&seed_text);
    args.extend_from_slice(&["--out", out_path.to_str().unwrap()]);
    args.extend_from_slice(extra);
    (run(&args), out_path)
}

fn records(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn experiment_writes_results_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("theorem1_markov.json");
    let (out, path) = experiment(dir.path(), &cfg, 7, &[]);
    assert_eq!(out.status.code(), Some(0));
    let recs = records(&path);
    assert_eq!(recs.len(), 6);
    assert!(recs.iter().all(|r| r["pass"] == true && r["seed"] == 7));
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out-7-0.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "experiment");
    assert_eq!(manifest["spec_hash"], recs[0]["spec_hash"]);
}

#[test]
fn example1_spec_gives_witness() {
    let dir = tempfile::tempdir().unwrap();
    let (out, path) = experiment(dir.path(), &configs().join("example1.json"), 1, &[]);
    assert_eq!(out.status.code(), Some(0));
    let recs = records(&path);
    assert_eq!(recs[0]["n"], 257);
    assert_eq!(recs[0]["certificate_holds"], true);
}

#[test]
fn seeds_change_rates_not_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("example4.json");
    let (_, a) = experiment(dir.path(), &cfg, 1, &[]);
    let (_, b) = experiment(dir.path(), &cfg, 2, &[]);
    let (ra, rb) = (records(&a), records(&b));
    assert_eq!(ra.len(), rb.len());
    let keys = |v: &Value| v.as_object().unwrap().keys().cloned().collect::<Vec<_>>();
    assert_eq!(keys(&ra[0]), keys(&rb[0]));
    assert_ne!(ra[0]["empirical_rate"], rb[0]["empirical_rate"]);
}

#[test]
fn precondition_and_schema_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("corollary2.json");
    let (out, _) = experiment(dir.path(), &cfg, 1, &[]);
    assert_eq!(out.status.code(), Some(3));
    let (out, path) = experiment(dir.path(), &cfg, 1, &["--exploratory"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(records(&path)[0]["tag"], "exploratory");

    let bad = write_config(dir.path(), "bad.json", r#"{"experiment":"theorem1","epsilon":0.1}"#);
    let (out, _) = experiment(dir.path(), &bad, 1, &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn csv_output() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("r.csv");
    let cfg = configs().join("theorem1_markov.json");
    let out = run(&[
        "experiment",
        "--config",
        cfg.to_str().unwrap(),
        "--format",
        "csv",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let mut reader = csv::Reader::from_path(&out_path).unwrap();
    let headers = reader.headers().unwrap().clone();
    assert!(headers.iter().any(|h| h == "empirical_rate"));
    assert_eq!(reader.records().count(), 6);
}
