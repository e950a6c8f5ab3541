//! The command line as a black box.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_legendre-bvp"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().args(args).current_dir(dir).output().expect("binary runs")
}

fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).expect("valid JSON")
}

#[test]
fn check_mu_reports_resonant_index() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["check", "--mu", "6"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out.stdout);
    assert_eq!(v["resonant"], true);
    assert_eq!(v["k"], 2);
    assert!(v["norm_bound"].is_null());

    let out = run_in(dir.path(), &["check", "--mu", "1"]);
    let v = json(&out.stdout);
    assert_eq!(v["resonant"], false);
    assert!(v["norm_bound"].as_f64().unwrap() > 2f64.sqrt());
}

#[test]
fn check_k_reports_solvability() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["check", "--k", "1", "--f", "atan(s)"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out.stdout);
    assert_eq!(v["verdict"], "k_ge1_distinct_limits");
    assert!((v["sign_integral_pos"].as_f64().unwrap() - 0.5).abs() < 1e-12);

    let out = run_in(dir.path(), &["check", "--k", "0", "--f", "exp(-s^2) + 1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out.stdout)["verdict"], "not_established");

    let out = run_in(
        dir.path(),
        &["check", "--k", "2", "--f", "s^3", "--f-limit-neg", "-1", "--f-limit-pos", "1"],
    );
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn refused_resonant_solve_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("p.cfg"), "k = 0\nf = \"1/(1+s^2) + 1\"\n").unwrap();
    let out = run_in(dir.path(), &["solve", "--config", "p.cfg"]);
    assert_eq!(out.status.code(), Some(2));
    let report = json(&fs::read(dir.path().join("out/report.json")).unwrap());
    assert_eq!(report["status"], "refused");
    assert_eq!(report["verdict"]["case"], "not_established");
    assert!(!dir.path().join("out/solution.csv").exists());

    fs::write(
        dir.path().join("q.cfg"),
        "k = 0\nf = \"1/(1+s^2) + 1\"\noverride_solvability = true\nmax_iters = 20\nmode = \"picard\"\n",
    )
    .unwrap();
    let out = run_in(dir.path(), &["solve", "--config", "q.cfg", "--out", "forced"]);
    // f > 0 everywhere: no solution, the iteration drifts
    assert_eq!(out.status.code(), Some(2));
    let report = json(&fs::read(dir.path().join("forced/report.json")).unwrap());
    assert_eq!(report["status"], "not_converged");
}

#[test]
fn config_errors_exit_1_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("p.cfg"), "mu = 1\nf = \"cos(s)\"\ntoll = 1e-9\n").unwrap();
    let out = run_in(dir.path(), &["solve", "--config", "p.cfg"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("toll"));

    fs::write(dir.path().join("q.cfg"), "mu = 1\nf = cos(s)\n").unwrap();
    let out = run_in(dir.path(), &["solve", "--config", "q.cfg"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`f`"));

    let out = run_in(dir.path(), &["solve"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run_in(dir.path(), &["solve", "--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stderr.is_empty());
}

#[test]
fn solve_outputs_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("p.cfg"), "mu = 1\nf = \"cos(s)\"\nN = 32\n").unwrap();
    let out = run_in(dir.path(), &["solve", "--config", "p.cfg"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let sol = fs::read_to_string(dir.path().join("out/solution.csv")).unwrap();
    let mut lines = sol.lines();
    assert_eq!(lines.next(), Some("t,x"));
    assert_eq!(lines.count(), 401);
    let coeffs = fs::read_to_string(dir.path().join("out/coefficients.csv")).unwrap();
    assert_eq!(coeffs.lines().count(), 34);
    assert!(!sol.contains('\r'));

    let out = run_in(
        dir.path(),
        &["verify", "--solution", "out/coefficients.csv", "--config", "p.cfg"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out.stdout);
    assert_eq!(v["verdict"], "pass");
    assert_eq!(v["cross_check"]["refined_degree"], 64);

    // a perturbed solution is no longer a solution
    let bad = coeffs.replacen("\n0,", "\n0,1", 1);
    fs::write(dir.path().join("bad.csv"), bad).unwrap();
    let out = run_in(dir.path(), &["verify", "--solution", "bad.csv", "--config", "p.cfg"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out.stdout)["verdict"], "inconclusive");
}

#[test]
fn branch_outputs() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("b.cfg"),
        "k = 1\nf = \"s^3 - s\"\nalpha_interval = [0.5, 5]\neps_max = 0.1\neps_min = 0.001\neps_points = 3\nN = 24\n",
    )
    .unwrap();
    let out = run_in(dir.path(), &["branch", "--config", "b.cfg"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let o = dir.path().join("out");
    for name in ["branch_eps_0e0.csv", "branch_eps_1e-1.csv", "branch_eps_1e-2.csv", "branch_eps_1e-3.csv"] {
        let text = fs::read_to_string(o.join(name)).unwrap();
        assert_eq!(text.lines().count(), 202, "{name}");
    }
    let table = fs::read_to_string(o.join("branch.csv")).unwrap();
    assert_eq!(table.lines().next(), Some("epsilon,alpha,sup_distance_to_xbar,residual"));
    assert_eq!(table.lines().count(), 5);
    let report = json(&fs::read(o.join("branch.json")).unwrap());
    assert_eq!(report["status"], "complete");
    assert_eq!(report["roots"].as_array().unwrap().len(), 1);

    fs::write(dir.path().join("none.cfg"), "k = 1\nf = \"cos(s)\"\n").unwrap();
    let out = run_in(dir.path(), &["branch", "--config", "none.cfg", "--out", "none"]);
    assert_eq!(out.status.code(), Some(2));
    let report = json(&fs::read(dir.path().join("none/branch.json")).unwrap());
    assert_eq!(report["status"], "no_simple_root");
}

#[test]
fn basis_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["basis", "--poly", "2", "--samples", "3"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        "t,P_k(t)\n-1.0000000000000000e0,1.0000000000000000e0\n\
         0.0000000000000000e0,-5.0000000000000000e-1\n\
         1.0000000000000000e0,1.0000000000000000e0\n"
    );
    let out = run_in(dir.path(), &["basis", "--rule", "2"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("node,weight"));
    let weights: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(weights.len(), 2);
    assert!(weights.iter().all(|w| (w - 1.0).abs() < 1e-15));
}

#[test]
fn batch_respects_thread_cap() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["solve".to_string()];
    for (i, mu) in ["0.5", "1", "3", "7"].iter().enumerate() {
        let name = format!("c{i}.cfg");
        fs::write(
            dir.path().join(&name),
            format!("mu = {mu}\nf = \"cos(s)\"\nN = 16\noutput_dir = \"out{i}\"\n"),
        )
        .unwrap();
        args.push("--config".into());
        args.push(name);
    }
    let out = bin()
        .args(&args)
        .env("LEGENDRE_BVP_THREADS", "2")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for i in 0..4 {
        assert!(dir.path().join(format!("out{i}/report.json")).exists());
    }
    let first = fs::read(dir.path().join("out1/coefficients.csv")).unwrap();
    let single = run_in(dir.path(), &["solve", "--config", "c1.cfg", "--out", "again"]);
    assert_eq!(single.status.code(), Some(0));
    assert_eq!(fs::read(dir.path().join("again/coefficients.csv")).unwrap(), first);

    let out = run_in(dir.path(), &["solve", "--config", "c0.cfg", "--config", "c1.cfg", "--out", "x"]);
    assert_eq!(out.status.code(), Some(1));
}
