use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ibia::uai::{parse_mpe, serialize_evidence, UaiModel};
use ibia_core::oracle::{brute_force_mpe, random_network, RandomNetworkParams};
use ibia_core::Assignment;

fn ibia(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ibia")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a 10-variable network and returns its path and exact natural-log MPE.
fn instance(dir: &Path) -> (PathBuf, f64) {
    let net = random_network(&RandomNetworkParams { n_vars: 10, seed: 5, ..Default::default() });
    let (_, exact) = brute_force_mpe(&net, &Assignment::new()).unwrap();
    let path = dir.join("net.uai");
    std::fs::write(&path, UaiModel::from_network(&net).serialize()).unwrap();
    (path, exact)
}

fn value<'a>(metrics: &'a str, key: &str) -> Option<&'a str> {
    metrics.lines().find_map(|l| l.strip_prefix(key)?.strip_prefix('='))
}

#[test]
fn solves_and_writes_result() {
    let dir = tempfile::tempdir().unwrap();
    let (model, exact) = instance(dir.path());
    let exact10 = format!("{}", exact / std::f64::consts::LN_10);
    let out = ibia(&["--model", s(&model), "--exact-log", &exact10]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = String::from_utf8(out.stdout).unwrap();
    assert_eq!(value(&metrics, "status"), Some("solved"));
    assert_eq!(value(&metrics, "delta_mpe"), Some("0.000000000"));
    let states = parse_mpe(&std::fs::read_to_string(dir.path().join("net.uai.MPE")).unwrap()).unwrap();
    assert_eq!(states.len(), 10);
}

#[test]
fn natural_log_base() {
    let dir = tempfile::tempdir().unwrap();
    let (model, exact) = instance(dir.path());
    let e = std::f64::consts::E.to_string();
    let out = ibia(&["--model", s(&model), "--log-base", &e, "--exact-log", &exact.to_string()]);
    let metrics = String::from_utf8(out.stdout).unwrap();
    let got: f64 = value(&metrics, "log_mpe").unwrap().parse().unwrap();
    assert!((got - exact).abs() < 1e-8);
    assert_eq!(value(&metrics, "delta_mpe"), Some("0.000000000"));
}

#[test]
fn evidence_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let (model, _) = instance(dir.path());
    let ev = dir.path().join("net.uai.evid");
    std::fs::write(&ev, serialize_evidence(&Assignment::from_pairs([(3, 1)]).unwrap())).unwrap();
    let result = dir.path().join("out.MPE");
    let out = ibia(&["--model", s(&model), "--evidence", s(&ev), "--output", s(&result), "--sweep-seeds", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let metrics = String::from_utf8(out.stdout).unwrap();
    assert_eq!(value(&metrics, "sweep.0.priority"), Some("fewest-cliques"));
    assert_eq!(value(&metrics, "sweep.2.priority"), Some("random"));
    assert_eq!(value(&metrics, "sweep.2.seed"), Some("2"));
    assert_eq!(parse_mpe(&std::fs::read_to_string(result).unwrap()).unwrap()[3], 1);
}

#[test]
fn bad_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.uai");
    std::fs::write(&bad, "BAYES\n2\n2 2\n").unwrap();
    let out = ibia(&["--model", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    assert_eq!(ibia(&["--model", s(&dir.path().join("missing.uai"))]).status.code(), Some(1));
    assert_eq!(ibia(&[]).status.code(), Some(1));
}

#[test]
fn zero_probability_evidence_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("det.uai");
    // b copies a, so a=0, b=1 is impossible
    std::fs::write(&model, "BAYES\n2\n2 2\n2\n1 0\n2 0 1\n\n2\n0.5 0.5\n\n4\n1 0 0 1\n").unwrap();
    let ev = dir.path().join("det.evid");
    std::fs::write(&ev, "2 0 0 1 1\n").unwrap();
    let out = ibia(&["--model", s(&model), "--evidence", s(&ev)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("det.uai.MPE").exists());
    assert_eq!(value(&String::from_utf8(out.stdout).unwrap(), "status"), Some("dead_end"));
}

#[test]
fn batch_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (_, exact) = instance(dir.path());
    let manifest = dir.path().join("list.txt");
    std::fs::write(
        &manifest,
        format!("# model evid exact\nnet.uai - {}\nnope.uai - -\n", exact / std::f64::consts::LN_10),
    )
    .unwrap();
    let out = ibia(&["batch", s(&manifest)]);
    assert_eq!(out.status.code(), Some(0));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.starts_with("name\tstatus\tI\tP\t"));
    assert!(table.contains("net.uai\tsolved\t"));
    assert!(table.contains("nope.uai\terror\t"));
    assert!(table.contains("solved=1/2\n"));

    let empty = dir.path().join("empty.txt");
    std::fs::write(&empty, "").unwrap();
    let out = ibia(&["batch", s(&empty)]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().last(), Some("solved=0/0"));
}
