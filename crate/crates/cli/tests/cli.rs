use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qhedge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qhedge"))
        .args(args)
        .env_remove("QHEDGE_SEED")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is json")
}

const TINY: &[&str] = &["--epochs", "4", "--batch", "16", "--hidden", "3", "--eval-size", "64"];

fn train_tiny(dir: &Path, model: &str, steps: &str) -> Output {
    let mut args = vec!["train", "--model", model, "--steps", steps, "--seed", "5", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(TINY);
    qhedge(&args)
}

#[test]
fn price_routes() {
    let bs = stdout_json(&qhedge(&["price", "--model", "bs", "--route", "analytic"]));
    assert!((bs["price"].as_f64().unwrap() - 0.500).abs() < 5e-4);
    assert_eq!(bs["method"], "analytic");

    let merton = stdout_json(&qhedge(&["price", "--model", "merton", "--route", "series"]));
    assert!((merton["price"].as_f64().unwrap() - 0.515).abs() < 1e-3);
}

#[test]
fn kou_monte_carlo_is_refused() {
    let out = qhedge(&["price", "--model", "kou", "--route", "mc"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("1 + G(e^Y - 1) > 0"), "{err}");
}

#[test]
fn series_on_kou_is_a_config_error() {
    let out = qhedge(&["price", "--model", "kou", "--route", "series"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_keys_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    fs::write(&path, "[claim]\nstrike = 0.5\nstrikke = 0.6\n").unwrap();
    let out = qhedge(&["price", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("strikke"));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    fs::write(&path, "seed = 4\n[model]\ntype = \"bs\"\nsigma0 = 0.3\n[claim]\nstrike = 0.9\n").unwrap();
    let p = path.to_str().unwrap();
    let from_file = stdout_json(&qhedge(&["price", "--config", p]));
    assert_eq!(from_file["params"]["K"], 0.9);
    assert_eq!(from_file["params"]["sigma"], 0.3);
    let flagged = stdout_json(&qhedge(&["price", "--config", p, "--strike", "0.5"]));
    assert_eq!(flagged["params"]["K"], 0.5);
}

#[test]
fn seed_falls_back_to_environment() {
    let run = |env: Option<&str>, extra: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_qhedge"));
        cmd.args(["price", "--model", "bs", "--route", "mc", "--paths", "1000"]).args(extra);
        match env {
            Some(v) => cmd.env("QHEDGE_SEED", v),
            None => cmd.env_remove("QHEDGE_SEED"),
        };
        stdout_json(&cmd.output().unwrap())
    };
    assert_eq!(run(Some("17"), &[])["seed"], 17);
    assert_eq!(run(Some("17"), &["--seed", "3"])["seed"], 3);
    assert_eq!(run(None, &[])["seed"], 0);
}

#[test]
fn help_lists_config_keys() {
    let out = qhedge(&["train", "--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for key in ["negative_path_policy", "epochs = 1500", "lr = 0.0005", "strike = 0.5", "QHEDGE_SEED"] {
        assert!(text.contains(key), "missing {key}");
    }
}

#[test]
fn simulate_writes_paths() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = qhedge(&["simulate", "--model", "merton", "--steps", "20", "--paths", "3", "--write-increments", "--out", d]);
    assert_eq!(stdout_json(&out)["paths"], 3);
    let csv = fs::read_to_string(dir.path().join("paths.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("path,step,time,stock,wealth"));
    assert_eq!(csv.lines().count(), 1 + 3 * 21);
    assert!(dir.path().join("increments.qhin").exists());
}

#[test]
fn train_outputs_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let summary = stdout_json(&train_tiny(a.path(), "bs", "6"));
    stdout_json(&train_tiny(b.path(), "bs", "6"));
    assert_eq!(summary["checkpoint"], "bs_1_6_5.ckpt");
    let curve = fs::read_to_string(a.path().join("loss_curve.csv")).unwrap();
    assert_eq!(curve.lines().next(), Some("epoch,loss,x0"));
    let epochs: Vec<usize> = curve.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(epochs, vec![1, 2, 3, 4]);
    for name in ["loss_curve.csv", "bs_1_6_5.ckpt", "train_summary.json"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn evaluate_and_compare_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    stdout_json(&train_tiny(dir.path(), "merton", "10"));
    let ck = dir.path().join("merton_1_10_5.ckpt");
    let c = ck.to_str().unwrap();

    let eval = stdout_json(&qhedge(&["evaluate", "--model", "merton", "--checkpoint", c, "--paths", "200", "--out", d]));
    assert_eq!(eval["steps"], 10);
    assert!(eval["x0"].as_f64().unwrap() > 0.0);

    let cmp = stdout_json(&qhedge(&["compare", "--model", "merton", "--checkpoint", c, "--paths", "50", "--out", d]));
    let names: Vec<&str> = cmp["strategies"].as_array().unwrap().iter().map(|s| s["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["learned", "merton_delta"]);
    let csv = fs::read_to_string(dir.path().join("residuals.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("strategy,path,residual"));
    assert!(csv.lines().any(|l| l.starts_with("merton_delta,")));

    let wrong = qhedge(&["evaluate", "--model", "merton", "--checkpoint", c, "--steps", "20"]);
    assert_eq!(wrong.status.code(), Some(2));
    let missing = qhedge(&["compare", "--model", "merton"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let mut args = vec!["sweep", "--model", "bs", "--grid", "T=0.5,1,2;R=4,8,16", "--jobs", "2", "--out", d];
    args.extend_from_slice(&["--epochs", "2", "--batch", "8", "--hidden", "2", "--eval-size", "32"]);
    let out = qhedge(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("model,T,R,loss,abs_price_err,l2"));
    assert_eq!(csv.lines().count(), 10);
    assert!(dir.path().join("bs_2_16_0.ckpt").exists());
}

#[test]
fn bad_sweep_grid_exits_2() {
    let out = qhedge(&["sweep", "--grid", "T=1"]);
    assert_eq!(out.status.code(), Some(2));
}
