use std::path::Path;
use std::process::{Command, Output};

fn covlab(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_covlab"));
    cmd.args(args).env_remove("COVLAB_OUT");
    if let Some(p) = env_out {
        cmd.env("COVLAB_OUT", p);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn depth_rate_writes_artifacts_and_slope() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("dr");
    ok(&covlab(&["depth-rate", "--l-list", "8,16,32,64,128,256,512,1024", "--out", out.to_str().unwrap()], None));
    for f in ["depth_rate.csv", "depth_rate.dat", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let m = manifest(&out);
    let slope = m["results"]["slope"].as_f64().unwrap();
    assert!((slope + 1.0).abs() < 0.1, "{slope}");
    assert_eq!(m["config"]["master_seed"], 42);
    assert!(std::fs::read_to_string(out.join("depth_rate.dat")).unwrap().starts_with("# Figure 4"));
}

#[test]
fn theory_emits_dual_table() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&covlab(&["theory", "--c0", "0", "--out", tmp.path().to_str().unwrap()], None));
    let dual = std::fs::read_to_string(tmp.path().join("dual.csv")).unwrap();
    let row = dual.lines().find(|l| l.starts_with("0.0000000000000000e0,")).unwrap();
    let f: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!((f - std::f64::consts::FRAC_1_PI).abs() < 1e-15);
    for f in ["flow.csv", "flow.dat", "euler.csv", "manifest.json"] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
}

#[test]
fn reruns_and_worker_counts_give_identical_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str, workers: &str| {
        let dir = tmp.path().join(name);
        ok(&covlab(
            &["grid", "--n-list", "8,32", "--l-list", "2,8", "--trials", "12", "--workers", workers, "--out", dir.to_str().unwrap()],
            None,
        ));
        std::fs::read(dir.join("grid.csv")).unwrap()
    };
    let a = run("a", "1");
    assert_eq!(a, run("b", "1"));
    assert_eq!(a, run("c", "4"));
    let text = String::from_utf8(a).unwrap();
    assert!(!text.contains('\r'));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn manifest_config_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"study":"joint","n_list":[8,16],"trials":6,"archs":["scaled-resnet","shaped-mlp"],"master_seed":7}"#,
    )
    .unwrap();
    ok(&covlab(&["joint", "--config", cfg.to_str().unwrap(), "--out", first.to_str().unwrap()], None));

    let echoed = tmp.path().join("echo.json");
    std::fs::write(&echoed, manifest(&first)["config"].to_string()).unwrap();
    let second = tmp.path().join("second");
    // the echoed config carries its own output_dir; the flag wins
    ok(&covlab(&["joint", "--config", echoed.to_str().unwrap(), "--out", second.to_str().unwrap()], None));
    assert_eq!(std::fs::read(first.join("joint.csv")).unwrap(), std::fs::read(second.join("joint.csv")).unwrap());
    let mut c1 = manifest(&first)["config"].clone();
    let mut c2 = manifest(&second)["config"].clone();
    c1["output_dir"] = serde_json::Value::Null;
    c2["output_dir"] = serde_json::Value::Null;
    assert_eq!(c1, c2);
}

#[test]
fn unwritable_output_fails_without_partial_files() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "not a directory").unwrap();
    let out = blocker.join("sub");
    let o = covlab(&["depth-rate", "--l-list", "8,16,32", "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(4));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "io");
    assert_eq!(std::fs::read_dir(tmp.path()).unwrap().count(), 1);
}

#[test]
fn config_errors_exit_2_and_name_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    for (text, key) in [
        (r#"{"study":"grid","scaling":{"kind":"uniform","gamma":-1}}"#, "gamma"),
        (r#"{"study":"grid","n_lst":[8]}"#, "n_lst"),
        (r#"{"study":"grid","arch":"transformer"}"#, "arch"),
        (r#"{"study":"joint"}"#, "study"),
        (r#"{"study":"grid","L_list":[]}"#, "L_list"),
    ] {
        std::fs::write(&cfg, text).unwrap();
        let o = covlab(&["grid", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("x").to_str().unwrap()], None);
        assert_eq!(o.status.code(), Some(2), "{text}");
        let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
        assert_eq!(err["error"]["key"], key, "{text}");
    }
    assert!(!tmp.path().join("x").exists());
}

#[test]
fn instability_has_its_own_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    std::fs::write(&cfg, r#"{"study":"grid","scaling":{"kind":"uniform","gamma":0.05},"n_list":[64],"L_list":[4000],"trials":2}"#)
        .unwrap();
    let o = covlab(&["grid", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("x").to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("instability"));
}

#[test]
fn env_output_dir_is_honored_and_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("from-env");
    ok(&covlab(&["depth-rate", "--l-list", "8,16,32"], Some(&out)));
    let m = manifest(&out);
    assert_eq!(m["output_dir_source"], "env");
    assert_eq!(m["config"]["output_dir"], out.to_str().unwrap());
}

#[test]
fn simulate_with_auxiliary_process() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    std::fs::write(&cfg, r#"{"study":"simulate","n_list":[32],"L_list":[8],"trials":20,"auxiliary":true}"#).unwrap();
    ok(&covlab(&["simulate", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()], None));
    let csv = std::fs::read_to_string(tmp.path().join("simulate.csv")).unwrap();
    assert_eq!(csv.lines().count(), 10);
    assert!(manifest(tmp.path())["results"]["final_mean_deviation"].as_f64().unwrap() > 0.0);
}
