use std::path::Path;
use std::process::{Command, Output};

fn rcctl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcctl"))
        .current_dir(dir)
        .env_remove("RCCTL_OUT_DIR")
        .args(args)
        .output()
        .expect("spawn rcctl")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = rcctl(dir, args);
    assert!(
        out.status.success(),
        "rcctl {args:?} exited {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(dir: &Path, f: &str) -> String {
    std::fs::read_to_string(dir.join(f)).unwrap()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(rcctl(d, &["--help"]).status.code(), Some(0));
    assert_eq!(rcctl(d, &["simulate", "--steps", "ten"]).status.code(), Some(2));
    assert_eq!(rcctl(d, &["simulate", "--system", "roessler", "--sigma", "3"]).status.code(), Some(2));
    assert_eq!(rcctl(d, &["measure", "--input", "missing.csv"]).status.code(), Some(2));
    assert_eq!(rcctl(d, &["predict", "--model", "missing.json", "--input", "missing.csv"]).status.code(), Some(2));

    let diverged = rcctl(d, &["simulate", "--rho", "28", "--dt", "2", "--steps", "200"]);
    assert_eq!(diverged.status.code(), Some(3), "{}", String::from_utf8_lossy(&diverged.stderr));
}

#[test]
fn simulate_writes_header_and_requested_samples() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--steps", "1000", "--out", "t.csv"]);
    let text = read(dir.path(), "t.csv");
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x,y,z"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 1001);
    assert!(rows[0].starts_with("0.0000000000000000e0,"));
    let last_t: f64 = rows[1000].split(',').next().unwrap().parse().unwrap();
    assert!((last_t - 20.0).abs() < 1e-9);
}

#[test]
fn out_dir_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_rcctl"))
        .current_dir(dir.path())
        .env("RCCTL_OUT_DIR", "results")
        .args(["simulate", "--steps", "10"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("results/trajectory.csv").exists());
}

#[test]
fn zero_gain_control_reproduces_free_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--rho", "28", "--steps", "3000", "--transient", "500", "--out", "orig.csv"]);
    ok(d, &["train", "--input", "orig.csv", "--d-r", "100", "--t-w", "500", "--t-t", "2000", "--model", "m.json"]);
    ok(
        d,
        &[
            "control", "--model", "m.json", "--input", "orig.csv", "--rho", "50", "--k", "0", "--steps", "1000",
            "--out", "ctl",
        ],
    );

    let plant = read(d, "ctl/plant.csv");
    let u0 = plant.lines().nth(1).unwrap().split(',').skip(1).collect::<Vec<_>>().join(",");
    ok(d, &["simulate", "--rho", "50", &format!("--x0={u0}"), "--steps", "1000", "--out", "free.csv"]);
    assert_eq!(plant, read(d, "free.csv"));
    assert!(d.join("ctl/target.csv").exists() && d.join("ctl/force.csv").exists());
    let sidecar: serde_json::Value = serde_json::from_str(&read(d, "ctl/control.json")).unwrap();
    assert_eq!(sidecar["config"]["k_gain"], 0.0);
}

#[test]
fn saved_model_predicts_identically_after_reload() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--rho", "28", "--steps", "3000", "--transient", "500", "--out", "orig.csv"]);
    ok(
        d,
        &[
            "--seed", "4", "train", "--input", "orig.csv", "--d-r", "120", "--t-w", "500", "--t-t", "2000", "--model",
            "a.json",
        ],
    );
    ok(
        d,
        &[
            "--seed", "4", "train", "--input", "orig.csv", "--d-r", "120", "--t-w", "500", "--t-t", "2000", "--model",
            "b.json",
        ],
    );
    assert_eq!(read(d, "a.json"), read(d, "b.json"));

    ok(d, &["predict", "--model", "a.json", "--input", "orig.csv", "--steps", "500", "--out", "p1.csv"]);
    ok(d, &["predict", "--model", "b.json", "--input", "orig.csv", "--steps", "500", "--out", "p2.csv"]);
    assert_eq!(read(d, "p1.csv"), read(d, "p2.csv"));

    let model = d.join("a.json");
    let trained = reservoir_control::reservoir::load_model(&model).unwrap();
    let copy = d.join("c.json");
    reservoir_control::reservoir::save_model(&trained, &copy).unwrap();
    assert_eq!(read(d, "a.json"), read(d, "c.json"));
}

#[test]
fn measure_separates_periodic_and_chaotic_flows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let lambda = |rho: &str| -> f64 {
        let csv = format!("r{rho}.csv");
        let json = format!("r{rho}.json");
        ok(d, &["simulate", "--rho", rho, "--steps", "20000", "--transient", "2000", "--out", &csv]);
        ok(d, &["measure", "--input", &csv, "--out", &json]);
        let v: serde_json::Value = serde_json::from_str(&read(d, &json)).unwrap();
        assert!(v["corr_dim"].as_f64().unwrap() > 0.5);
        v["lambda_max"].as_f64().unwrap()
    };
    let periodic = lambda("166");
    let chaotic = lambda("167.2");
    assert!(periodic.abs() < 0.1, "periodic {periodic}");
    assert!(chaotic > 0.5, "chaotic {chaotic}");
}

#[test]
fn reproduce_fig4_writes_scatter_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let stdout = ok(d, &["reproduce", "fig4", "--n", "2", "--out", "f4"]);
    assert!(stdout.contains("chaoticB_to_chaoticA"));

    let scatter = read(d, "f4/scatter.csv");
    let mut lines = scatter.lines();
    assert_eq!(
        lines.next(),
        Some("scenario,seed,lambda_orig,lambda_changed,lambda_controlled,vol_orig,vol_changed,vol_controlled")
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 8);
        assert!(cols[2..].iter().all(|c| c.parse::<f64>().unwrap().is_finite()), "{row}");
    }

    let summary = reservoir_control::experiments::read_summary_csv(&d.join("f4/summary.csv")).unwrap();
    assert_eq!(summary.len(), 1);
    assert_eq!(summary[0].n, 2);
    assert_eq!(read(d, "f4/realizations.jsonl").lines().count(), 2);
    assert!(d.join("f4/table.txt").exists());
}
