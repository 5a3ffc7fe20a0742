use std::path::Path;
use std::process::{Command, Output};

use choquard_cli::config::{Experiment, ExperimentConfig, ShapeKind};
use choquard_cli::schema::{schema, schema_for_artifact};
use choquard_cli::{emit_plot, run_experiment, PlotKind};
use serde_json::Value;

fn choquard(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_choquard"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn assert_valid(schema_text: &str, instance: &Value) {
    let schema: Value = serde_json::from_str(schema_text).unwrap();
    let compiled = jsonschema::JSONSchema::compile(&schema).expect("schema compiles");
    let msgs: Vec<String> = match compiled.validate(instance) {
        Ok(()) => Vec::new(),
        Err(errors) => errors.map(|e| e.to_string()).collect(),
    };
    assert!(msgs.is_empty(), "schema violations: {msgs:?}");
}

#[test]
fn constants_json_matches_oracle_and_schema() {
    let o = choquard(&["constants", "--dim", "3", "--mu", "1", "--json"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    let mut expected = vec![
        "dim", "mu", "sobolev_exp", "upper_crit", "lower_crit", "hls_const", "sobolev_S", "nonlocal_S_HL", "ps_threshold",
    ];
    expected.sort();
    let mut got = keys.clone();
    got.sort();
    assert_eq!(got, expected);
    assert!((v["nonlocal_S_HL"].as_f64().unwrap() - 4.6397580731475459921).abs() < 1e-9);
    assert_valid(schema("constants.v1").unwrap(), &v);
}

#[test]
fn constants_csv_has_header() {
    let o = choquard(&["constants", "--dim", "4", "--mu", "2", "--csv"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "dim,mu,sobolev_exp,upper_crit,lower_crit,hls_const,sobolev_S,nonlocal_S_HL,ps_threshold"
    );
    assert!(lines.next().unwrap().starts_with("4,2.0,"));
}

#[test]
fn bad_parameters_exit_3() {
    let o = choquard(&["constants", "--dim", "3", "--mu", "3"]);
    assert_eq!(o.status.code(), Some(3));
    // eps below 2h
    let o = choquard(&["bubble-scan", "--n", "11", "--eps-grid", "0.1"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn missing_snapshot_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.chqf");
    let o = choquard(&["energy", "--field", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn budget_exhaustion_exits_2() {
    let o = choquard(&["solve", "--n", "9", "--lambda", "1", "--max-iters", "1", "--tol", "1e-14"]);
    assert_eq!(o.status.code(), Some(2));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["report"]["verdict"], "budget_exhausted");
    assert_valid(schema("solve_report.v1").unwrap(), &v);
}

#[test]
fn field_round_trip_and_energy() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e1.chqf");
    let p = path.to_str().unwrap();
    let o = choquard(&["field", "dump", "--n", "9", "--shape", "ball", "--out", p]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("e1.json").exists());

    let o = choquard(&["field", "load", p]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_valid(schema("field_summary.v1").unwrap(), &v);
    assert_eq!(v["points_per_axis"], 9);
    // the eigenfunction is L2-normalised
    assert!((v["l2_sq"].as_f64().unwrap() - 1.0).abs() < 1e-10);

    let o = choquard(&["energy", "--field", p, "--lambda", "2", "--json"]);
    assert!(o.status.success());
    let e: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_valid(schema("energy.v1").unwrap(), &e);
    assert!((e["l2_term"].as_f64().unwrap() - 1.0).abs() < 1e-10);
}

#[test]
fn spectrum_csv() {
    let o = choquard(&["spectrum", "--dim", "3", "--n", "9", "--k", "3", "--csv"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "index,eigenvalue,residual");
    assert_eq!(lines.len(), 4);
}

#[test]
fn bench_riesz_columns() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bench.csv");
    let o = choquard(&["bench-riesz", "--dim", "3", "--sizes", "6,8", "--repeats", "1", "--csv", csv.to_str().unwrap()]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "size,path,wall_ns_median,max_rel_err_vs_direct");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("6,direct,") && lines[2].starts_with("6,fft,"));
}

fn read_manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn identical_runs_give_identical_artifacts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = |d: &Path| {
        vec![
            "--seed".to_string(),
            "7".into(),
            "--out-dir".into(),
            d.display().to_string(),
            "bubble-scan".into(),
            "--n".into(),
            "33".into(),
            "--eps-grid".into(),
            "0.25,0.2,0.15,0.125".into(),
            "--lambda".into(),
            "20".into(),
        ]
    };
    for d in [a.path(), b.path()] {
        let args = args(d);
        let o = choquard(&args.iter().map(String::as_str).collect::<Vec<_>>());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let csv_a = std::fs::read(a.path().join("bubble_scan.csv")).unwrap();
    let csv_b = std::fs::read(b.path().join("bubble_scan.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
    let header = String::from_utf8(csv_a).unwrap();
    assert!(header.starts_with("epsilon,grad_sq,l2_sq,nl_double,a_epsilon,tail_D,tail_E,deficit\n"));

    let (ma, mb) = (read_manifest(a.path()), read_manifest(b.path()));
    assert_eq!(ma["files"], mb["files"]);
    assert_eq!(ma["seed"], 7);
    assert_valid(schema("manifest.v1").unwrap(), &ma);
    assert!(a.path().join("rate_fit.svg").exists());
}

#[test]
fn run_from_kv_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = dir.path().join("exp.cfg");
    let text = format!(
        "command = solve\ndim = 3\nmu = 1\nlambda = 2\nn = 11\nshape = ball\nmax_iters = 200\nout_dir = {}\n",
        out.display()
    );
    std::fs::write(&cfg, text).unwrap();
    let o = choquard(&["run", cfg.to_str().unwrap()]);
    assert!(o.status.code() == Some(0) || o.status.code() == Some(2));
    let m = read_manifest(&out);
    let names: Vec<&str> = m["files"].as_array().unwrap().iter().map(|f| f["name"].as_str().unwrap()).collect();
    for want in ["solve_report.json", "trace.svg", "radial_profile.svg", "solution.chqf", "solution.json"] {
        assert!(names.contains(&want), "{want} missing from {names:?}");
    }
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("solve_report.json")).unwrap()).unwrap();
    assert_valid(schema_for_artifact("solve_report.json").unwrap(), &report);
    assert_eq!(report["seed"], 1);
    // the quotient trace of an accepted-step descent never rises
    let trace: Vec<f64> = report["report"]["trace"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(trace.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn linking_and_probe_reports_validate() {
    let mut c = ExperimentConfig::for_command(Experiment::Linking);
    (c.dim, c.mu, c.n, c.half_width, c.delta) = (3, 1.0, 13, 0.5, 0.25);
    c.eps = vec![2.0 * 2.0 * 0.5 / 12.0];
    let out = run_experiment(&c).unwrap();
    let v: Value = serde_json::from_slice(&out.artifacts[0].bytes).unwrap();
    assert_valid(schema("linking_report.v1").unwrap(), &v);
    assert!(v["report"]["m_value"].as_f64().unwrap() >= v["report"]["a_epsilon"].as_f64().unwrap() - 1e-9);

    let mut c = ExperimentConfig::for_command(Experiment::Nonexist);
    (c.n, c.shape, c.starts, c.max_iters) = (11, ShapeKind::Ball, 2, 50);
    let out = run_experiment(&c).unwrap();
    let v: Value = serde_json::from_slice(&out.artifacts[0].bytes).unwrap();
    assert_valid(schema("probe_report.v1").unwrap(), &v);
    assert_eq!(v["report"]["runs"].as_array().unwrap().len(), 2);
}

#[test]
fn emit_plot_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.svg");
    emit_plot(&[(0.0, 3.0), (1.0, 2.5), (2.0, 2.4)], PlotKind::Trace, &path).unwrap();
    let svg = std::fs::read_to_string(&path).unwrap();
    assert!(svg.contains("<polyline"));
    assert_eq!(svg.matches("<circle").count(), 3);
}
