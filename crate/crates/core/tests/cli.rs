use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dicke-ising")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr_json(o: &Output) -> serde_json::Value {
    let text = String::from_utf8(o.stderr.clone()).unwrap();
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

#[test]
fn profile_repeats_every_five_sites_at_golden_angle() {
    let o = run(&["profile", "--phi", "golden", "--sites", "10"]);
    assert!(o.status.success());
    let j: Vec<f64> = stdout(&o).lines().map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(j.len(), 10);
    let c = (1.0 + 5f64.sqrt()) / 4.0;
    let want = [-c, c - 0.5, c - 0.5, -c, 1.0];
    for (n, v) in j.iter().enumerate() {
        assert!((v - want[n % 5]).abs() < 1e-12, "site {}: {v}", n + 1);
    }
}

#[test]
fn solve_without_pump_is_normal() {
    let o = run(&["solve", "--sites", "6", "--backend", "ed", "--v-pump", "0", "--j-ising", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["order_parameters"]["phase"], "II");
    assert_eq!(v["converged"], true);
    assert!(v["order_parameters"]["alpha_abs"].as_f64().unwrap() < 1e-9);
}

#[test]
fn conflicting_flags_are_usage_errors() {
    let o = run(&["solve", "--phi", "0", "--m-modes", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "usage");
}

#[test]
fn empty_config_names_required_keys() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.toml");
    std::fs::write(&path, "").unwrap();
    let o = run(&["sweep", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr_json(&o);
    assert_eq!(err["error"], "config");
    let msg = err["message"].as_str().unwrap();
    for key in ["n_sites", "j_ising", "delta_c", "v_pump"] {
        assert!(msg.contains(key), "{msg}");
    }
}

#[test]
fn sweep_then_classify_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = dir.path().join("scan.toml");
    std::fs::write(
        &cfg,
        format!(
            "n_sites = 4\nj_ising = -1\ndelta_c = -10\nv_pump = [0, 4]\nout_dir = {:?}\n[scf]\nbackend = \"ed\"\n",
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let o = run(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(summary["points"], 2);

    let rows = out.join("rows.csv");
    let relabelled = dir.path().join("relabelled.csv");
    let o = run(&["classify", "--rows", rows.to_str().unwrap(), "--eps", "1e-3", "--output", relabelled.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(&rows).unwrap(), std::fs::read(&relabelled).unwrap());

    let o = run(&[
        "verify",
        "--sites",
        "4",
        "--sets",
        "2",
        "--config",
        cfg.to_str().unwrap(),
        "--rows",
        rows.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).lines().all(|l| l.starts_with("PASS")));
}
