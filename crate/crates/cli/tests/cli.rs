use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qbmsym::verifier::{random_state, symmetrize};
use qbmsym::{assembly, fixtures};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn qbmsym(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qbmsym"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("stdout is json")
}

fn write_state(dir: &Path, name: &str, symmetric: bool, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rho = random_state(2, 0.2, &mut rng);
    if symmetric {
        let report = assembly::analyze(&fixtures::load("H_I").unwrap()).unwrap();
        let k = report.names().iter().position(|n| *n == "S_12").unwrap();
        rho = symmetrize(&rho, &report.pair_unitary(k).unwrap()).unwrap();
    }
    let path = dir.join(name);
    fs::write(&path, rho.to_string()).unwrap();
    path.display().to_string()
}

#[test]
fn analyze_h_i() {
    let o = qbmsym(&["analyze", "H_I"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("G_c = {I}"));
    assert!(text.contains("S_12"));
    assert!(text.contains("P_{1,2}"));
}

#[test]
fn analyze_h_iii_flags_absorbed_exchanges() {
    let o = qbmsym(&["analyze", "H_III_n2", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let doc = json(&o);
    assert_eq!(doc["continuous_visible"], serde_json::json!(["YI", "IY"]));
    let pairs = doc["discrete_pairs"].as_array().unwrap();
    assert_eq!(pairs.len(), 8);
    for p in pairs {
        let name = p["name"].as_str().unwrap();
        let absorbed = p["absorbed_by_continuous"].as_bool().unwrap();
        assert_eq!(absorbed, !name.starts_with("S_12"), "{name}");
    }
}

#[test]
fn analyze_reads_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.qbm");
    fs::write(&path, fixtures::document("H_II_n3").unwrap()).unwrap();
    let o = qbmsym(&["analyze", path.to_str().unwrap(), "--json"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&o)["order"], 6);
}

#[test]
fn input_errors_exit_2() {
    assert_eq!(qbmsym(&["analyze", "/no/such/machine.qbm"]).status.code(), Some(2));
    assert_eq!(qbmsym(&["solve", "H_I", "--restarts", "0"]).status.code(), Some(2));
    assert_eq!(qbmsym(&["solve", "H_I", "--branch", "sideways"]).status.code(), Some(2));
    assert_eq!(qbmsym(&["--threads", "0", "analyze", "H_I"]).status.code(), Some(2));
    assert_eq!(qbmsym(&["frobnicate"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.qbm");
    fs::write(&bad, "name = bad\nvisible = 2\nhidden = 0\nXQ\n").unwrap();
    let o = qbmsym(&["analyze", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
}

#[test]
fn solve_h_i_finds_both_classes() {
    let o = qbmsym(&["solve", "H_I", "--restarts", "500", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("local minima"));
    let o = qbmsym(&["solve", "H_I", "--restarts", "500", "--seed", "7", "--json"]);
    let freq = &json(&o)["solutions"]["frequencies"];
    assert!(freq["I"].as_u64().unwrap() > 0);
    assert!(freq["S_12"].as_u64().unwrap() > 0);
}

#[test]
fn equations_compare_against_reference_totals() {
    let o = qbmsym(&["equations", "H_I"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("# reference total: 81"));
    for tag in ["E45", "E17", "E46", "E16"] {
        assert!(text.contains(&format!("#   {tag}: ")), "{tag}");
    }
    let doc = json(&qbmsym(&["equations", "H_II_n3", "--json"]));
    assert_eq!(doc["comparison"]["reference_total"], 393);
    let total = doc["total"].as_i64().unwrap();
    assert_eq!(doc["comparison"]["deviation"].as_i64().unwrap(), total - 393);
    assert_eq!(doc["equations"].as_array().unwrap().len() as i64, total);
    let o = qbmsym(&["equations", "H_IV"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(!stdout(&o).contains("reference total"));
}

#[test]
fn verify_equivalence_passes_for_swap() {
    let dir = tempfile::tempdir().unwrap();
    let target = write_state(dir.path(), "t.txt", false, 3);
    let o = qbmsym(&["verify", "H_I", "--target", &target, "--element", "S_12", "--check", "equivalence"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).trim_end().ends_with("PASS"));
}

#[test]
fn verify_degeneracy_passes_on_symmetric_target() {
    let dir = tempfile::tempdir().unwrap();
    let target = write_state(dir.path(), "t.txt", true, 4);
    let o = qbmsym(&["verify", "H_I", "--target", &target, "--element", "1", "--check", "degeneracy", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let doc = json(&o);
    assert_eq!(doc["degeneracy"]["passed"], true);
}

#[test]
fn verify_precondition_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let target = write_state(dir.path(), "t.txt", false, 5);
    let o = qbmsym(&["verify", "H_I", "--target", &target, "--element", "S_12", "--check", "degeneracy"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not fix the target"));
}

#[test]
fn verify_rejects_unknown_elements_and_bad_targets() {
    let dir = tempfile::tempdir().unwrap();
    let target = write_state(dir.path(), "t.txt", false, 6);
    let o = qbmsym(&["verify", "H_I", "--target", &target, "--element", "S_99", "--check", "equivalence"]);
    assert_eq!(o.status.code(), Some(2));
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "2\n1 0\n0 0\n").unwrap();
    let o = qbmsym(&["verify", "H_I", "--target", bad.to_str().unwrap(), "--element", "I", "--check", "equivalence"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn identical_runs_give_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, threads) in [(&a, "1"), (&b, "2")] {
        let o = qbmsym(&[
            "--threads",
            threads,
            "solve",
            "H_II_n3",
            "--restarts",
            "40",
            "--seed",
            "3",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    let ra = fs::read(a.join("report.json")).unwrap();
    assert_eq!(ra, fs::read(b.join("report.json")).unwrap());
    let manifest: Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "solve");
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["config"]["restarts"], 40);
    assert!(manifest["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 3);
}
