use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mdcert_core::sim::{make_objective, ObjectiveKind};
use mdcert_core::SectorBounds;
use serde_json::{json, Value};
use tempfile::TempDir;

fn mdcert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdcert"))
        .args(args)
        .env_remove("MIRROR_CERT_SEED")
        .output()
        .expect("run mdcert")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Dir(TempDir);

impl Dir {
    fn new() -> Self {
        Dir(tempfile::tempdir().unwrap())
    }

    fn at(&self, name: &str) -> PathBuf {
        self.0.path().join(name)
    }
}

fn certify_centralized(dir: &Dir, name: &str, class: [&str; 4], extra: &[&str]) -> PathBuf {
    let out = dir.at(name);
    let mut args = vec![
        "certify-centralized", "--mu-f", class[0], "--L-f", class[1], "--mu-phi", class[2], "--L-phi", class[3], "--out",
        s(&out),
    ];
    args.extend_from_slice(extra);
    let o = mdcert(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}

fn csv_rows(p: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(p)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn centralized_rate_is_within_the_closed_form() {
    let d = Dir::new();
    let p = certify_centralized(&d, "c.json", ["1", "3", "1", "2"], &["--optimize-eta", "--mode", "sc"]);
    let c = read_json(&p);
    assert!(c["rho"].as_f64().unwrap() <= 0.8126);
    assert_eq!(c["topology"], "centralized");
    assert_eq!(c["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(c["config"]["class"]["L_f"], 3.0);
    assert!(c["residual"].as_f64().unwrap() <= 0.0);
}

#[test]
fn euclidean_mirror_map_gives_the_gradient_descent_rate() {
    let d = Dir::new();
    let p = certify_centralized(&d, "c.json", ["1", "3", "1", "1"], &["--optimize-eta", "--mode", "sc"]);
    let rho = read_json(&p)["rho"].as_f64().unwrap();
    assert!((rho - 0.25).abs() < 2e-4, "{rho}");
}

#[test]
fn missing_class_flag_is_a_usage_error() {
    let d = Dir::new();
    let out = d.at("c.json");
    let o = mdcert(&["certify-centralized", "--mu-f", "1", "--mu-phi", "1", "--L-phi", "2", "--optimize-eta", "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--L-f"));
    assert!(!out.exists());
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&mdcert(&["--help"])), 0);
    assert_eq!(code(&mdcert(&["--version"])), 0);
    assert_eq!(code(&mdcert(&["no-such-command"])), 1);
}

#[test]
fn mode_must_match_strong_convexity() {
    let d = Dir::new();
    let out = d.at("c.json");
    let o = mdcert(&["certify-centralized", "--mu-f", "0", "--L-f", "1", "--mu-phi", "1", "--L-phi", "2", "--eta", "0.5", "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(!out.exists());
}

#[test]
fn unstable_fixed_step_has_no_certificate() {
    let d = Dir::new();
    let out = d.at("c.json");
    let o = mdcert(&["certify-centralized", "--mu-f", "1", "--L-f", "3", "--mu-phi", "1", "--L-phi", "2", "--eta", "50", "--out", s(&out)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn convex_centralized_certificate() {
    let d = Dir::new();
    let p = certify_centralized(&d, "c.json", ["0", "1", "1", "2"], &["--optimize-eta", "--mode", "convex"]);
    let c = read_json(&p);
    assert_eq!(c["mode"], "convex");
    let (eps, eta) = (c["eps"].as_f64().unwrap(), c["eta"].as_f64().unwrap());
    assert!(eps > 0.0);
    assert!((eps - (eta - eta * eta / 2.0)).abs() < 1e-4);
}

#[test]
fn ring_of_five_spectral_norm() {
    let d = Dir::new();
    let out = d.at("d.json");
    let o = mdcert(&[
        "certify-distributed", "--graph", "ring", "--n", "5", "--eta2", "auto", "--mode", "sc", "--mu-f", "1", "--L-f", "2",
        "--mu-phi", "1", "--L-phi", "2", "--eta1-grid", "1e-3:1:64", "--out", s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let c = read_json(&out);
    assert!(c["rho"].as_f64().unwrap() < 1.0);
    assert!((c["lambda"].as_f64().unwrap() - 0.4472).abs() < 1e-4);
    assert_eq!(c["graph"]["kind"], "ring");
    assert_eq!(c["graph"]["edges"].as_array().unwrap().len(), 5);
    assert!(c["graph"]["eta2_auto"].as_bool().unwrap());
    let p = c["P"].as_array().unwrap();
    let trace = p[0][0].as_f64().unwrap() + p[1][1].as_f64().unwrap();
    assert!((trace - 1.0).abs() < 1e-12);
    assert!(c["Sigma_eq"].is_array() && c["sigma_lambda"].is_number() && c["eta1"].is_number());
}

#[test]
fn better_mixing_never_hurts() {
    let d = Dir::new();
    let rho_at = |lambda: &str| {
        let out = d.at(&format!("d{lambda}.json"));
        let o = mdcert(&[
            "certify-distributed", "--lambda", lambda, "--mu-f", "1", "--L-f", "2", "--mu-phi", "1", "--L-phi", "2",
            "--eta1-grid", "1e-3:1:32", "--out", s(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        read_json(&out)["rho"].as_f64().unwrap()
    };
    assert!(rho_at("0") <= rho_at("0.5"));
}

#[test]
fn spectral_norm_of_one_has_no_certificate() {
    let d = Dir::new();
    let out = d.at("d.json");
    let o = mdcert(&["certify-distributed", "--lambda", "1", "--mu-f", "1", "--L-f", "2", "--mu-phi", "1", "--L-phi", "2", "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
}

#[test]
fn graph_files() {
    let d = Dir::new();
    let split = d.at("split.txt");
    std::fs::write(&split, "4 2\n0 1\n2 3\n").unwrap();
    let out = d.at("d.json");
    let args = |g: &Path| {
        mdcert(&[
            "certify-distributed", "--graph-file", s(g), "--mu-f", "1", "--L-f", "2", "--mu-phi", "1", "--L-phi", "2",
            "--eta1-grid", "1e-3:1:16", "--out", s(&out),
        ])
    };
    let o = args(&split);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("not connected"));
    assert!(!out.exists());

    let bad = d.at("bad.txt");
    std::fs::write(&bad, "3 2\n0 1\n1 7\n").unwrap();
    let o = args(&bad);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let path = d.at("path.txt");
    std::fs::write(&path, "# a path\n3 2\n0 1\n1 2\n").unwrap();
    let o = args(&path);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(read_json(&out)["graph"]["kind"], "file");
}

#[test]
fn euclidean_simulation_is_gradient_descent() {
    let d = Dir::new();
    let cert = certify_centralized(&d, "c.json", ["1", "3", "1", "1"], &["--optimize-eta"]);
    let eta = read_json(&cert)["eta"].as_f64().unwrap();
    let x0 = vec![1.0, -2.0, 0.5, 3.0];
    let problem = d.at("p.json");
    std::fs::write(&problem, json!({"objective": "quadratic", "dgf": "euclidean", "dim": 4, "x0": x0}).to_string()).unwrap();
    let traj = d.at("t.csv");
    let o = mdcert(&["simulate", "--cert", s(&cert), "--problem", s(&problem), "--iters", "60", "--seed", "11", "--out", s(&traj)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let meta = read_json(&d.at("t.csv.meta.json"));
    let obj = make_objective(ObjectiveKind::Quadratic, SectorBounds::new(1.0, 3.0).unwrap(), 1, 4, 11).unwrap();
    let x_min: Vec<f64> = serde_json::from_value(meta["record"]["x_min"].clone()).unwrap();
    let f_star = obj.value(&x_min);
    let rows = csv_rows(&traj);
    assert_eq!(rows.len(), 60);
    let mut x = x0;
    for (k, row) in rows.iter().enumerate() {
        assert_eq!(row[0], k.to_string());
        let dist: f64 = x.iter().zip(&x_min).map(|(a, b)| (a - b) * (a - b)).sum();
        let gap = obj.value(&x) - f_star;
        let (cd, cg): (f64, f64) = (row[2].parse().unwrap(), row[4].parse().unwrap());
        assert!((cd - dist).abs() <= 1e-12 * (1.0 + dist), "k = {k}: {cd} vs {dist}");
        assert!((cg - gap).abs() <= 1e-12 * (1.0 + gap), "k = {k}: {cg} vs {gap}");
        let g = obj.grad(&x);
        x.iter_mut().zip(&g).for_each(|(xi, gi)| *xi -= eta * gi);
    }
}

#[test]
fn zero_iterations_write_only_the_header() {
    let d = Dir::new();
    let cert = certify_centralized(&d, "c.json", ["1", "3", "1", "2"], &["--optimize-eta"]);
    let traj = d.at("t.csv");
    let o = mdcert(&["simulate", "--cert", s(&cert), "--iters", "0", "--out", s(&traj)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&traj).unwrap(), "k,bregman,dist_sq,pnorm_sq,fgap\n");
}

#[test]
fn problem_class_must_match_the_certificate() {
    let d = Dir::new();
    let cert = certify_centralized(&d, "c.json", ["1", "3", "1", "2"], &["--optimize-eta"]);
    let problem = d.at("p.json");
    std::fs::write(&problem, json!({"class": {"mu_f": 1.0, "L_f": 5.0, "mu_phi": 1.0, "L_phi": 2.0}}).to_string()).unwrap();
    let traj = d.at("t.csv");
    let o = mdcert(&["simulate", "--cert", s(&cert), "--problem", s(&problem), "--iters", "5", "--out", s(&traj)]);
    assert_eq!(code(&o), 1);
    assert!(!traj.exists());

    std::fs::write(&problem, json!({"dim": 3, "bogus": 1}).to_string()).unwrap();
    let o = mdcert(&["simulate", "--cert", s(&cert), "--problem", s(&problem), "--iters", "5", "--out", s(&traj)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));
}

#[test]
fn mirror_map_must_fit_the_certified_class() {
    let d = Dir::new();
    let cert = certify_centralized(&d, "c.json", ["1", "3", "1", "2"], &["--optimize-eta"]);
    let traj = d.at("t.csv");
    let o = mdcert(&["simulate", "--cert", s(&cert), "--dgf", "separable-smooth", "--alpha", "4", "--iters", "5", "--out", s(&traj)]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    let o = mdcert(&["simulate", "--cert", s(&cert), "--dgf", "separable-smooth", "--iters", "5", "--out", s(&traj)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn seed_comes_from_the_environment_when_no_flag_is_given() {
    let d = Dir::new();
    let cert = certify_centralized(&d, "c.json", ["1", "3", "1", "2"], &["--optimize-eta"]);
    let (a, b) = (d.at("a.csv"), d.at("b.csv"));
    let o = mdcert(&["simulate", "--cert", s(&cert), "--iters", "10", "--seed", "7", "--out", s(&a)]);
    assert_eq!(code(&o), 0);
    let o = Command::new(env!("CARGO_BIN_EXE_mdcert"))
        .args(["simulate", "--cert", s(&cert), "--iters", "10", "--out", s(&b)])
        .env("MIRROR_CERT_SEED", "7")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(read_json(&d.at("b.csv.meta.json"))["seeds"]["base"], 7);

    let o = Command::new(env!("CARGO_BIN_EXE_mdcert"))
        .args(["simulate", "--cert", s(&cert), "--iters", "10", "--out", s(&b)])
        .env("MIRROR_CERT_SEED", "seven")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
}

fn distributed_setup(d: &Dir) -> (PathBuf, PathBuf) {
    let cert = d.at("d.json");
    let o = mdcert(&[
        "certify-distributed", "--graph", "er", "--n", "6", "--p", "0.9", "--graph-seed", "4", "--mu-f", "1", "--L-f", "3",
        "--mu-phi", "1", "--L-phi", "1.5", "--eta1-grid", "1e-3:2:32", "--out", s(&cert),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(read_json(&cert)["seeds"].as_array().unwrap().contains(&json!(4)));
    let traj = d.at("d.csv");
    let o = mdcert(&["simulate", "--cert", s(&cert), "--dim", "3", "--objective", "logistic-l2", "--iters", "150", "--seed", "2", "--out", s(&traj)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    (cert, traj)
}

#[test]
fn distributed_simulation_and_verification() {
    let d = Dir::new();
    let (cert, traj) = distributed_setup(&d);
    let meta = read_json(&d.at("d.csv.meta.json"));
    assert_eq!(meta["record"]["n"], 6);
    assert_eq!(meta["record"]["d"], 3);
    assert_eq!(meta["record"]["x_min"].as_array().unwrap().len(), 3);
    let rows = csv_rows(&traj);
    assert_eq!(rows.len(), 150);
    assert_eq!(meta["ergodic_gap"].as_array().unwrap().len(), 150);
    assert!(rows.iter().all(|r| r.len() == 5 && r[1..].iter().all(|v| v.parse::<f64>().unwrap().is_finite())));

    let report = d.at("r.json");
    let o = mdcert(&["verify", "--cert", s(&cert), "--traj", s(&traj), "--out", s(&report)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = read_json(&report);
    assert_eq!(r["holds"], true);
    assert!(r["first_violation_k"].is_null());
    assert!(r["empirical_rate"].as_f64().unwrap() <= r["certified_value"].as_f64().unwrap());
}

#[test]
fn verification_flags_a_tightened_certificate() {
    let d = Dir::new();
    let cert = certify_centralized(&d, "c.json", ["1", "3", "1", "2"], &["--optimize-eta"]);
    let traj = d.at("t.csv");
    let o = mdcert(&["simulate", "--cert", s(&cert), "--iters", "200", "--seed", "3", "--out", s(&traj)]);
    assert_eq!(code(&o), 0);
    let report = d.at("r.json");
    let o = mdcert(&["verify", "--cert", s(&cert), "--traj", s(&traj), "--out", s(&report)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = read_json(&report);
    assert_eq!(r["kind"], "thm1");
    assert_eq!(r["cert_matches_trajectory"], true);

    let mut c = read_json(&cert);
    c["rho"] = json!(c["rho"].as_f64().unwrap() * 0.5);
    let half = d.at("half.json");
    std::fs::write(&half, c.to_string()).unwrap();
    let o = mdcert(&["verify", "--cert", s(&half), "--traj", s(&traj), "--out", s(&report)]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let r = read_json(&report);
    assert!(r["first_violation_k"].is_u64());
    assert_eq!(r["cert_matches_trajectory"], false);
}

#[test]
fn verification_input_errors() {
    let d = Dir::new();
    let cert = certify_centralized(&d, "c.json", ["1", "3", "1", "2"], &["--optimize-eta"]);
    let report = d.at("r.json");
    let o = mdcert(&["verify", "--cert", s(&cert), "--traj", s(&d.at("none.csv")), "--out", s(&report)]);
    assert_eq!(code(&o), 1);
    assert!(!report.exists());

    // A trajectory from a different step-size is a metadata mismatch.
    let other = certify_centralized(&d, "o.json", ["1", "3", "1", "2"], &["--eta", "0.1"]);
    let traj = d.at("t.csv");
    assert_eq!(code(&mdcert(&["simulate", "--cert", s(&other), "--iters", "20", "--out", s(&traj)])), 0);
    let o = mdcert(&["verify", "--cert", s(&cert), "--traj", s(&traj), "--out", s(&report)]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));

    // Rows out of order.
    let text = std::fs::read_to_string(&traj).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.swap(2, 3);
    std::fs::write(&traj, lines.join("\n")).unwrap();
    let o = mdcert(&["verify", "--cert", s(&other), "--traj", s(&traj), "--out", s(&report)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("expected k = 1"), "{}", stderr(&o));
}

#[test]
fn convex_trajectory_verifies() {
    let d = Dir::new();
    let cert = certify_centralized(&d, "c.json", ["0", "1", "1", "2"], &["--optimize-eta", "--mode", "convex"]);
    let traj = d.at("t.csv");
    let o = mdcert(&["simulate", "--cert", s(&cert), "--iters", "301", "--dim", "4", "--out", s(&traj)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = d.at("r.json");
    let o = mdcert(&["verify", "--cert", s(&cert), "--traj", s(&traj), "--out", s(&report)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = read_json(&report);
    assert_eq!(r["kind"], "thm2");
    assert!((r["bound_exponent"].as_f64().unwrap() + 1.0).abs() < 1e-9);
}

#[test]
fn single_cell_sweep_matches_the_certifier() {
    let d = Dir::new();
    let cfg = d.at("s.json");
    std::fs::write(&cfg, json!({"mode": "centralized_sc", "kappa_f": [3.0], "kappa_phi": [2.0], "eta1": [0.3]}).to_string()).unwrap();
    let out = d.at("s.csv");
    let o = mdcert(&["sweep", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][5], "certified");
    let cert = certify_centralized(&d, "c.json", ["1", "3", "1", "2"], &["--eta", "0.3"]);
    let rho: f64 = rows[0][4].parse().unwrap();
    assert_eq!(rho, read_json(&cert)["rho"].as_f64().unwrap());
    let meta = read_json(&d.at("s.csv.meta.json"));
    assert_eq!(meta["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(meta["config"]["kappa_f"], json!([3.0]));
}

#[test]
fn sweep_is_deterministic_across_thread_counts() {
    let d = Dir::new();
    let cfg = d.at("s.json");
    std::fs::write(
        &cfg,
        json!({"mode": "distributed_sc", "kappa_f": [2.0, 3.0], "kappa_phi": [1.5], "lambda": [0.1, 0.6], "eta1": {"lo": 0.01, "hi": 1.0, "steps": 6}})
            .to_string(),
    )
    .unwrap();
    let (a, b) = (d.at("a.csv"), d.at("b.csv"));
    assert_eq!(code(&mdcert(&["sweep", "--config", s(&cfg), "--out", s(&a), "--jobs", "1"])), 0);
    assert_eq!(code(&mdcert(&["sweep", "--config", s(&cfg), "--out", s(&b), "--jobs", "4"])), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let rows = csv_rows(&a);
    assert_eq!(rows.len(), 24);
    assert_eq!((rows[0][0].as_str(), rows[6][2].as_str()), ("2.0000000000000000e0", "5.9999999999999998e-1"));
}

#[test]
fn malformed_sweep_config_names_the_field() {
    let d = Dir::new();
    let cfg = d.at("s.json");
    let out = d.at("s.csv");
    for (text, pointer) in [
        (json!({"mode": "distributed_sc", "kappa_f": [2.0, "x"], "kappa_phi": [1.5], "lambda": [0.1]}), "/kappa_f/1"),
        (json!({"mode": "sideways", "kappa_f": [2.0], "kappa_phi": [1.5]}), "/mode"),
        (json!({"mode": "distributed_sc", "kappa_f": [2.0], "kappa_phi": [1.5], "lambda": [1.5]}), "/lambda"),
        (json!({"mode": "centralized_sc", "kappa_f": [2.0], "kappa_phi": [0.5]}), "/kappa_phi"),
    ] {
        std::fs::write(&cfg, text.to_string()).unwrap();
        let o = mdcert(&["sweep", "--config", s(&cfg), "--out", s(&out)]);
        assert_eq!(code(&o), 1);
        assert!(stderr(&o).contains(&format!("`{pointer}`")), "{pointer}: {}", stderr(&o));
        assert!(!out.exists());
    }
}
