use std::path::Path;
use std::process::{Command, Output};

fn armlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_armlab")).args(args).output().expect("spawn armlab")
}

fn ok(args: &[&str]) -> String {
    let out = armlab(args);
    assert!(
        out.status.success(),
        "armlab {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn model_text_round_trips_through_validate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ur5.model");
    std::fs::write(&path, ok(&["model", "show", "--text"])).unwrap();
    assert!(ok(&["model", "validate", s(&path)]).contains("6 links"));
    let summary = ok(&["model", "show", s(&path)]);
    assert!(summary.starts_with("links     6"));
}

#[test]
fn broken_model_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.model");
    let text = ok(&["model", "show", "--text"]).replacen("mass = 3", "mass = -3", 1);
    std::fs::write(&path, text).unwrap();
    let out = armlab(&["model", "validate", s(&path)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    assert!(!armlab(&["model", "validate", "/nonexistent/file"]).status.success());
}

#[test]
fn run_writes_trace_that_score_reads() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("pd.csv"), dir.path().join("pid.csv"));
    let json: serde_json::Value = serde_json::from_str(&ok(&["run", "--fb", "pd", "--trace", s(&a), "--json"])).unwrap();
    ok(&["run", "--fb", "pid", "--trace", s(&b)]);
    let rmse = json["metrics"]["rmse"].as_f64().unwrap();

    let table = ok(&["score", s(&a), s(&b)]);
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("trace,rmse"));
    let pd: Vec<&str> = rows[1].split(',').collect();
    let from_csv: f64 = pd[1].parse().unwrap();
    assert!((from_csv - rmse).abs() < 1e-5, "{from_csv} vs {rmse}");
    // with two traces each metric normalizes to 0 and 1 unless tied, in which case both get 0
    let fields: Vec<Vec<f64>> = rows[1..]
        .iter()
        .map(|r| r.split(',').skip(1).map(|v| v.parse().unwrap()).collect())
        .collect();
    let weights = [0.1, 0.1, 0.1, 0.1, 0.3, 0.3];
    let expected: f64 = (0..6).filter(|&k| fields[0][k] != fields[1][k]).map(|k| weights[k]).sum();
    let total = fields[0][6] + fields[1][6];
    assert!((total - expected).abs() < 1e-5, "{total} vs {expected}");
}

#[test]
fn score_rejects_garbage() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("junk.csv");
    std::fs::write(&p, "t,e1\n0,0.1\nx,0.2\n").unwrap();
    assert!(!armlab(&["score", s(&p)]).status.success());
}

#[test]
fn stability_json_has_all_conditions() {
    let out = ok(&["check-stability", "--fb", "pd", "--samples", "20", "--json"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    for k in ["cond1", "cond2", "cond3", "overall", "lambda_min_fd", "rhs1"] {
        assert!(v.get(k).is_some(), "missing {k}");
    }
    assert_eq!(v["overall"], false);
    assert!(!armlab(&["check-stability", "--region", "q=1:0"]).status.success());
}

#[test]
fn small_campaign_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("c.campaign");
    std::fs::write(&spec, "laws = pd pid\nmodes = fb\nconditions = 1\nseeds = 0\noutput = out\n").unwrap();
    let table = ok(&["campaign", s(&spec), "--traces"]);
    let out = dir.path().join("out");
    assert!(out.join("summary.json").exists());
    assert_eq!(std::fs::read_to_string(out.join("table1.csv")).unwrap(), table);
    assert!(table.lines().count() >= 3);

    std::fs::write(&spec, "laws = pd\nmodes = warp\n").unwrap();
    assert!(!armlab(&["campaign", s(&spec)]).status.success());
}

#[test]
fn sample_train_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (data, net) = (dir.path().join("d.csv"), dir.path().join("n.mlp"));
    ok(&["sample", "--budget", "300", "--conditions", "2", "--out", s(&data)]);
    ok(&["train", "--data", s(&data), "--out", s(&net), "--epochs", "2", "--hidden", "16,16"]);
    let mse: f64 = ok(&["eval", "--net", s(&net), "--data", s(&data)])
        .trim()
        .strip_prefix("mse ")
        .unwrap()
        .parse()
        .unwrap();
    assert!(mse.is_finite() && mse >= 0.0);
    let run = ok(&["run", "--mode", "lmpc", "--net", s(&net), "--json"]);
    assert!(run.contains("\"lmpc\""));
    assert!(!armlab(&["run", "--mode", "lmpc"]).status.success());
}

#[test]
fn config_files_override_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let (gains, mpc) = (dir.path().join("soft.gains"), dir.path().join("fine.mpc"));
    std::fs::write(&gains, "pd.kp = 1 1 1 1 1 1\npd.kd = 0.5 0.5 0.5 0.5 0.5 0.5\n").unwrap();
    std::fs::write(&mpc, "dt = 0.001\nselection = 0.5:0.25:1.5\n").unwrap();
    // the default gains stop chattering against the velocity limits at 1 ms
    let fine: serde_json::Value = serde_json::from_str(&ok(&["run", "--mpc", s(&mpc), "--json"])).unwrap();
    assert!(fine["clamp_events"].as_u64().unwrap() < 10, "{fine}");
    let coarse: serde_json::Value = serde_json::from_str(&ok(&["run", "--json"])).unwrap();
    assert!(coarse["clamp_events"].as_u64().unwrap() > 500);
    let soft: serde_json::Value = serde_json::from_str(&ok(&["run", "--gains", s(&gains), "--json"])).unwrap();
    assert_ne!(soft["metrics"]["rmse"], coarse["metrics"]["rmse"]);

    std::fs::write(&gains, "pd.kp = 1 1\n").unwrap();
    assert!(!armlab(&["run", "--gains", s(&gains)]).status.success());
    std::fs::write(&mpc, "horizon = 0\n").unwrap();
    assert!(!armlab(&["run", "--mpc", s(&mpc)]).status.success());
}
