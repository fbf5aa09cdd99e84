use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn homoflow(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homoflow"))
        .args(args)
        .current_dir(cwd)
        .env("HOMOFLOW_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stock_config(dir: &Path) -> Value {
    let out = homoflow(&["print-config", "--experiment", "two_round_spin"], dir);
    assert!(out.status.success());
    serde_json::from_slice(&out.stdout).unwrap()
}

fn write_config(dir: &Path, name: &str, v: &Value) -> String {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn train_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = homoflow(
        &["train", "--experiment", "two_round_spin", "--steps", "30", "--seed", "2", "--out", "run"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("run");
    for f in ["config.json", "model.json", "loss.csv", "generated.csv", "scatter.svg", "metrics.json", "run.log"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    assert!(!run.join("failure.json").exists());

    let metrics: Value = serde_json::from_str(&fs::read_to_string(run.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["dataset"], "two_round_spin");
    assert_eq!(metrics["loss_config"], "M1+M2+SC");
    assert_eq!(metrics["seed"], 2);
    assert!(metrics["euclidean_distance"].as_f64().unwrap() > 0.0);

    let loss = fs::read_to_string(run.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().next().unwrap(), "step,total,m1,m2,m3,sc");
    assert_eq!(loss.lines().count(), 31);

    let generated = fs::read_to_string(run.join("generated.csv")).unwrap();
    let n_generated = generated.lines().count() - 1;
    let svg = fs::read_to_string(run.join("scatter.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let circles = doc.descendants().filter(|n| n.has_tag_name("circle")).count();
    assert_eq!(circles, 3 * n_generated);

    // The checkpoint feeds the sampler and the result scores like metrics.json.
    let s = homoflow(
        &[
            "sample",
            "--model",
            "run/model.json",
            "--dataset",
            "two_round_spin",
            "--seed",
            "2",
            "--out",
            "again.csv",
            "--trajectory",
            "traj.csv",
        ],
        dir.path(),
    );
    assert!(s.status.success(), "{}", String::from_utf8_lossy(&s.stderr));
    assert_eq!(fs::read_to_string(dir.path().join("again.csv")).unwrap(), generated);
    let traj = fs::read_to_string(dir.path().join("traj.csv")).unwrap();
    assert_eq!(traj.lines().count(), 1 + n_generated * 17);
}

#[test]
fn repeated_train_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let out = homoflow(
            &["train", "--experiment", "eight_mode", "--steps", "20", "--seed", "5", "--out", name],
            dir.path(),
        );
        assert!(out.status.success());
    }
    for f in ["metrics.json", "model.json", "loss.csv", "generated.csv"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn sweep_writes_cells_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = stock_config(dir.path());
    cfg["optimizer"]["steps"] = json!(5);
    cfg["optimizer"]["batch_size"] = json!(64);
    cfg["sweep"] = json!({"seeds": [0, 1, 2, 3, 4], "loss_configs": ["M1+SC", "M1+M2+SC", "M1+M2+M3+SC"]});
    let path = write_config(dir.path(), "sweep.json", &cfg);
    let out = homoflow(&["train", "--config", &path, "--out", "sweep"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let root = dir.path().join("sweep");
    let cells: Vec<_> = fs::read_dir(&root).unwrap().filter_map(|e| e.ok()).filter(|e| e.path().is_dir()).collect();
    assert_eq!(cells.len(), 15);
    assert!(root.join("M1-M2-M3-SC_seed4").join("metrics.json").is_file());
    let summary: Value = serde_json::from_str(&fs::read_to_string(root.join("summary.json")).unwrap()).unwrap();
    assert!(summary.to_string().contains("M1+M2+M3+SC"));
    let table = fs::read_to_string(root.join("table.txt")).unwrap();
    assert_eq!(table.lines().count(), 5);
    assert_eq!(String::from_utf8_lossy(&out.stdout), table);
}

#[test]
fn bad_config_reports_key_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = stock_config(dir.path());
    cfg["optimizer"]["steps"] = json!("many");
    let path = write_config(dir.path(), "bad.json", &cfg);
    let out = homoflow(&["train", "--config", &path], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("optimizer.steps"));

    let mut cfg = stock_config(dir.path());
    cfg["loss"]["bogus"] = json!(1);
    let path = write_config(dir.path(), "bad2.json", &cfg);
    let out = homoflow(&["train", "--config", &path], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("loss"));

    let out = homoflow(&["train", "--experiment", "nine_mode"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn divergence_exits_with_failure_record() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = stock_config(dir.path());
    cfg["optimizer"]["learning_rate"] = json!(1e200);
    cfg["optimizer"]["steps"] = json!(20);
    cfg["optimizer"]["batch_size"] = json!(64);
    let path = write_config(dir.path(), "hot.json", &cfg);
    let out = homoflow(&["train", "--config", &path, "--out", "hot"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let failure: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("hot/failure.json")).unwrap()).unwrap();
    assert!(failure["completed_steps"].as_u64().unwrap() < 20);
    assert_eq!(failure["loss_config"], "M1+M2+SC");
    assert!(!dir.path().join("hot/metrics.json").exists());
}

#[test]
fn print_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = stock_config(dir.path());
    let path = write_config(dir.path(), "stock.json", &cfg);
    let text = fs::read_to_string(&path).unwrap();
    let run = homoflow::config::TrainRun::from_json(&text).unwrap();
    assert_eq!(run, homoflow::config::TrainRun::for_experiment("two_round_spin").unwrap());
}

#[test]
fn count_params_prints_cost_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = homoflow(&["count-params", "--loss", "M1", "--loss", "M1+M2", "--loss", "M1+SC"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for n in ["10702", "21604", "10802"] {
        assert!(text.contains(n), "{text}");
    }
}

#[test]
fn eval_scores_two_clouds() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.csv"), "x,y,label\n0,0,generated\n").unwrap();
    fs::write(dir.path().join("b.csv"), "x,y,label\n3,4,target\n").unwrap();
    let out = homoflow(&["eval", "--generated", "a.csv", "--target", "b.csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "5");
}
