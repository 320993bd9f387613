use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_spatial-match");

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("SPATIAL_MATCH_THREADS")
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn schema_check(summary: &Value) {
    let schema_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas/summary.v1.json");
    let schema = read_json(&schema_path);
    let compiled = jsonschema::JSONSchema::compile(&schema).expect("schema compiles");
    if let Err(errors) = compiled.validate(summary) {
        let msgs: Vec<String> = errors.map(|e| format!("{e} at {}", e.instance_path)).collect();
        panic!("summary does not match schema: {msgs:?}");
    };
}

fn stderr_text(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn simulate_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let out = run(&[
        "simulate", "--model", "semi_dynamic", "--d", "1", "--N", "4096", "--M", "0", "--policy", "hg",
        "--seed", "7", "--out-dir", out_dir,
    ]);
    assert!(out.status.success(), "{}", stderr_text(&out));
    let summary = read_json(&dir.path().join("summary.json"));
    assert!(summary["report"]["mean_cost"].as_f64().unwrap() > 0.0);
    schema_check(&summary);
    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["outputs"].as_array().unwrap().iter().any(|p| p == "summary.json"));
}

#[test]
fn missing_m_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate", "--model", "fully_dynamic", "--d", "2", "--N", "1000", "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_text(&out).contains("`m`"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let args = |d: &str| {
        vec![
            "simulate".to_string(),
            "--model=fully_dynamic".into(),
            "--d=2".into(),
            "--N=3000".into(),
            "--m=64".into(),
            "--reps=3".into(),
            "--seed=11".into(),
            "--periods-csv".into(),
            format!("--out-dir={d}"),
        ]
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let argv = args(d.path().to_str().unwrap());
        let argv: Vec<&str> = argv.iter().map(String::as_str).collect();
        let out = run(&argv);
        assert!(out.status.success(), "{}", stderr_text(&out));
    }
    for name in ["summary.json", "periods.csv"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name} differs"
        );
    }
    let ma = read_json(&a.path().join("manifest.json"));
    let mb = read_json(&b.path().join("manifest.json"));
    assert_eq!(ma["config_sha256"], mb["config_sha256"]);
    schema_check(&read_json(&a.path().join("summary.json")));
    let periods = fs::read_to_string(a.path().join("periods.csv")).unwrap();
    assert_eq!(periods.lines().next(), Some("replication,sample,distance"));
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "[run]\nmodel = \"semi_dynamic\"\nd = 2\nN = 256\nseed = 1\n\n[semi_dynamic]\nM = 16\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "simulate", "--config", cfg.to_str().unwrap(), "--N", "512", "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_text(&out));
    let summary = read_json(&out_dir.join("summary.json"));
    assert_eq!(summary["config"]["N"], 512);
    assert_eq!(summary["config"]["M"], 16);
    assert_eq!(summary["config"]["d"], 2);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[run]\nmodel = \"static\"\nd = 1\nN = 8\nhorizon = 9\n").unwrap();
    let out = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn static_line_recipe_reports_an_exponent() {
    let recipe = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../recipes/static_line.toml");
    let dir = tempfile::tempdir().unwrap();
    // Fewer replications than the recipe keeps the test quick.
    let out = run(&[
        "sweep", "--config", recipe.to_str().unwrap(), "--reps", "20", "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_text(&out));
    let fit = read_json(&dir.path().join("fit.json"));
    let e = fit["exponent"].as_f64().expect("exponent field");
    assert!((e + 0.5).abs() < 0.2, "exponent {e}");
    assert_eq!(fit["weighted"], true);
    assert!(fit["exponent_ci"].is_array());

    let mut rdr = csv::Reader::from_path(dir.path().join("sweep.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(
        headers.iter().collect::<Vec<_>>(),
        ["scale_param", "value", "mean_cost", "stderr", "per_level_json"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 7);
    for r in &rows {
        assert_eq!(&r[0], "N");
        let levels: Value = serde_json::from_str(&r[4]).unwrap();
        assert!(levels.is_array());
    }
    schema_check(&read_json(&dir.path().join("summary.json")));
}

#[test]
fn single_replication_sweep_has_null_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    fs::write(
        &cfg,
        "[run]\nmodel = \"semi_dynamic\"\nd = 1\nreps = 1\n\n[sweep]\nparam = \"N\"\nvalues = [64, 128, 256, 512]\n",
    )
    .unwrap();
    let out = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr_text(&out));
    let mut rdr = csv::Reader::from_path(dir.path().join("sweep.csv")).unwrap();
    for r in rdr.records() {
        assert_eq!(&r.unwrap()[3], "");
    }
    let fit = read_json(&dir.path().join("fit.json"));
    assert_eq!(fit["weighted"], false);
    assert!(fit["exponent_ci"].is_null());
    let summary = read_json(&dir.path().join("summary.json"));
    assert!(summary["points"][0]["report"]["stderr"].is_null());
    schema_check(&summary);
}

#[test]
fn empty_grid_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    fs::write(
        &cfg,
        "[run]\nmodel = \"semi_dynamic\"\nd = 1\n\n[sweep]\nparam = \"N\"\nvalues = []\n",
    )
    .unwrap();
    let out = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_text(&out).contains("empty grid"));
}

#[test]
fn capacity_plan_writes_boundary_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("plan.toml");
    fs::write(
        &cfg,
        "[run]\nmodel = \"capacity\"\nd = 2\npolicy = \"greedy\"\n\n[plan]\nn = [64, 128, 256]\npoints = 8\nhorizon_per_free = 50\n",
    )
    .unwrap();
    let out = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr_text(&out));
    let summary = read_json(&dir.path().join("summary.json"));
    assert!(summary["plan"]["boundary_hit"].is_boolean());
    assert_eq!(summary["plan"]["rows"].as_array().unwrap().len(), 3);
    schema_check(&summary);
}

#[test]
fn unknown_suite_is_a_config_error() {
    let out = run(&["verify", "no-such-suite"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_oracles_passes() {
    let out = run(&["verify", "oracles"]);
    assert!(out.status.success(), "{}", stderr_text(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("criterion 1 [PASS]"), "{text}");
}

#[test]
fn thread_count_does_not_change_results() {
    let base = [
        "simulate", "--model", "semi_dynamic", "--d", "2", "--N", "2000", "--reps", "4", "--seed", "5",
    ];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut args_a = base.to_vec();
    args_a.extend(["--threads", "1", "--out-dir", a.path().to_str().unwrap()]);
    let mut args_b = base.to_vec();
    args_b.extend(["--threads", "3", "--out-dir", b.path().to_str().unwrap()]);
    assert!(run(&args_a).status.success());
    assert!(run(&args_b).status.success());
    assert_eq!(
        fs::read(a.path().join("summary.json")).unwrap(),
        fs::read(b.path().join("summary.json")).unwrap()
    );
}
