use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

const BIN: &str = env!("CARGO_BIN_EXE_nhep");

const SWEEP: &str = r#"
[model]
l = 3
m = 0.7

[run]
sector = 0

[run.grid]
phi = { lo = 0.6, hi = 1.0, steps = 9 }
u = { lo = -0.4, hi = 0.4, steps = 5 }
"#;

fn nhep(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

/// Every listed file exists with the recorded size and digest.
fn check_manifest(dir: &Path) -> serde_json::Value {
    let m = manifest(dir);
    for f in m["files"].as_array().unwrap() {
        let data = fs::read(dir.join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(data.len() as u64, f["bytes"].as_u64().unwrap());
        assert_eq!(hex(&data), f["sha256"].as_str().unwrap());
    }
    m
}

#[test]
fn sweep_writes_csv_heatmap_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.toml", SWEEP);
    let out = tmp.path().join("run");
    let o = nhep(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--format", "csv+pgm"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = check_manifest(&out);
    assert_eq!(m["command"], "sweep");
    assert_eq!(m["config"]["model"]["l"], 3);
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("phi,u_re,u_im,min_angle,argmin_i,argmin_j"));
    assert_eq!(lines.count(), 45);
    assert!(fs::read(out.join("sweep.pgm")).unwrap().starts_with(b"P5\n9 5\n255\n"));
}

#[test]
fn outputs_do_not_depend_on_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.toml", SWEEP);
    let digests: Vec<_> = ["1", "3"]
        .iter()
        .map(|w| {
            let out = tmp.path().join(format!("w{w}"));
            let o = nhep(&["--workers", w, "sweep", "-c", &cfg, "--out", out.to_str().unwrap()]);
            assert!(o.status.success());
            check_manifest(&out)["files"].clone()
        })
        .collect();
    assert_eq!(digests[0], digests[1]);
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), "bad.toml", &SWEEP.replace("m = 0.7", "m = 0.7\nmass = 1"));
    let out = tmp.path().join("never");
    let o = nhep(&["sweep", "-c", &bad, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    // the config is valid TOML but carries no circle block
    let cfg = write_config(tmp.path(), "s.toml", SWEEP);
    assert_eq!(nhep(&["probe-circle", "-c", &cfg]).status.code(), Some(2));
    assert_eq!(nhep(&["sweep", "-c", "/nonexistent.toml"]).status.code(), Some(2));
}

#[test]
fn numerical_errors_exit_3_and_clean_up() {
    let tmp = tempfile::tempdir().unwrap();
    // a filled L = 2 chain has total momentum 0, so sector 1 is empty
    let text = r#"
[model]
l = 2
m = 0.7

[run]
n = 4
sector = 1

[run.grid]
phi = { lo = 0.1, hi = 0.2, steps = 3 }
u = { lo = 0.0, hi = 0.1, steps = 3 }
"#;
    let cfg = write_config(tmp.path(), "n.toml", text);
    let out = tmp.path().join("run");
    let o = nhep(&["sweep", "-c", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
}

#[test]
fn io_errors_exit_4() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.toml", SWEEP);
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = blocker.join("sub");
    let o = nhep(&["sweep", "-c", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn predict_and_trace_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
[model]
l = 6
m = 0.7

[run.predict]
family = "inherited"
phi = { lo = 4.7, hi = 4.8, steps = 2 }
"#;
    let cfg = write_config(tmp.path(), "p.toml", text);
    let out = tmp.path().join("p");
    assert!(nhep(&["predict", "-c", &cfg, "--out", out.to_str().unwrap()]).status.success());
    check_manifest(&out);
    let mut rdr = csv::Reader::from_path(out.join("predict.csv")).unwrap();
    assert_eq!(
        rdr.headers().unwrap(),
        vec!["phi", "u_re", "u_im", "realness", "branch_id", "state_labels"]
    );
    // one twist in the window, two bands for each of the other five momenta
    assert_eq!(rdr.records().count(), 10);

    let text = r#"
[model]
l = 3
m = 0.7

[run]
sector = 0

[run.trace]
step = 0.01
min_step = 1e-5
max_points = 20
phi_bounds = [0.0, 6.2831853]
u_bounds = [-1.0, 1.0]
lines = [{ name = "a", start = [0.8028, 0.0], direction = [0.0, 1.0] }]
"#;
    let cfg = write_config(tmp.path(), "t.toml", text);
    let out = tmp.path().join("t");
    let o = nhep(&["trace", "-c", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    check_manifest(&out);
    let csv = fs::read_to_string(out.join("trace_a.csv")).unwrap();
    assert!(csv.starts_with("idx,phi,u_re,u_im,min_angle,endpoint_tag\n"));
    let last = csv.lines().last().unwrap();
    assert!(!last.ends_with(','), "last row carries the endpoint tag: {last}");
}

#[test]
fn selftest_passes() {
    let o = nhep(&["selftest"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{text}");
    assert_eq!(text.matches("[PASS]").count(), 3);
}

#[test]
fn verify_detects_edits() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.toml", SWEEP);
    let out = tmp.path().join("run");
    assert!(nhep(&["sweep", "-c", &cfg, "--out", out.to_str().unwrap()]).status.success());
    assert!(nhep(&["verify", out.to_str().unwrap()]).status.success());
    fs::write(out.join("sweep.csv"), "phi\n").unwrap();
    assert_eq!(nhep(&["verify", out.to_str().unwrap()]).status.code(), Some(4));
}
