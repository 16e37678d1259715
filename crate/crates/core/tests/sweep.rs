use dicke_ising::scf::analytic_threshold;
use dicke_ising::sweep::{parse_config_str, read_points_json, run_sweep, SweepConfig, POINTS_JSON, ROWS_CSV};

fn config(body: &str, dir: &std::path::Path) -> SweepConfig {
    let mut cfg = parse_config_str(body).unwrap();
    cfg.out_dir = dir.to_path_buf();
    cfg
}

const SMALL: &str = r#"
n_sites = 6
j_ising = [-1, 1]
delta_c = [-10, -5]
v_pump = [0, 2, 5]
phi = [0, "golden"]
seed = 3

[scf]
backend = "ed"
"#;

#[test]
fn worker_count_does_not_change_output() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut one = config(SMALL, a.path());
    one.workers = 1;
    let mut two = config(SMALL, b.path());
    two.workers = 2;
    let out = run_sweep(&one).unwrap();
    run_sweep(&two).unwrap();
    assert_eq!(out.points.len(), 24);
    assert_eq!(std::fs::read(a.path().join(ROWS_CSV)).unwrap(), std::fs::read(b.path().join(ROWS_CSV)).unwrap());
    // the embedded config differs in `workers`, the records must not
    let (pa, pb) = (read_points_json(a.path().join(POINTS_JSON)).unwrap(), read_points_json(b.path().join(POINTS_JSON)).unwrap());
    assert_eq!(pa.points.len(), out.points.len());
    assert_eq!(serde_json::to_string(&pa.points).unwrap(), serde_json::to_string(&pb.points).unwrap());
    assert!(!a.path().join("points.partial.jsonl").exists());
}

#[test]
fn superradiant_boundary_brackets_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        r#"
n_sites = 4
j_ising = 0
delta_c = [-20, -10, -5, -2, -1]
v_pump = [0.5, 1, 1.5, 3, 6]
workers = 2

[scf]
backend = "ed"
"#,
        dir.path(),
    );
    let out = run_sweep(&cfg).unwrap();
    for &dc in &cfg.delta_c {
        let vc = analytic_threshold(&cfg.params(0.0, 0.0, dc, 0.0)).unwrap();
        for r in out.rows().filter(|r| r.delta_c == dc) {
            if (r.v_pump / vc - 1.0).abs() < 0.05 {
                continue;
            }
            let sr = r.alpha_abs > 1e-3;
            assert_eq!(sr, r.v_pump > vc, "dc={dc} vp={} vc={vc} |alpha|={}", r.v_pump, r.alpha_abs);
        }
    }
}
