use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn batchps(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_batchps"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

const SMALL_RUN: &[&str] = &["--b-max", "3", "run", "--xgrid", "0.5:2:0.5", "--grid", "2"];

#[test]
fn run_is_byte_identical_across_invocations() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(batchps(a.path(), SMALL_RUN).status.success());
    assert!(batchps(b.path(), &["--threads", "1"].iter().chain(SMALL_RUN).copied().collect::<Vec<_>>())
        .status
        .success());
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert_eq!(fa.len(), 5);
    assert_eq!(fa, fb);
}

#[test]
fn unstable_scenario_exits_with_invalid_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = batchps(dir.path(), &["--rho", "0.85", "--q", "0.2", "spectral"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("unstable") && msg.contains("1 - q"), "{msg}");
    assert!(fs::read_dir(dir.path()).map(|d| d.count() == 0).unwrap_or(true));
}

#[test]
fn malformed_inputs_exit_with_invalid_input() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["invert", "--n", "1", "--b", "1", "--xgrid", "2:1:0.5"][..],
        &["unconditional", "--xgrid", "0.5:1"],
        &["--q", "1.5", "spectral"],
        &["--scenario", "/nonexistent/scenario.json", "spectral"],
    ] {
        assert_eq!(batchps(dir.path(), args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn scenario_file_and_seed_set_the_content_address() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scenario.json");
    fs::write(&scenario, r#"{"rho": 0.5, "q": 0.2, "seed": 7}"#).unwrap();
    let out = dir.path().join("out");
    let from_file = batchps(&out, &["--scenario", scenario.to_str().unwrap(), "spectral", "--s", "2"]);
    let from_flags = batchps(&out, &["--rho", "0.5", "--q", "0.2", "--seed", "7", "spectral", "--s", "2"]);
    let other_seed = batchps(&out, &["--rho", "0.5", "--q", "0.2", "--seed", "8", "spectral", "--s", "2"]);
    assert_eq!(from_file.stdout, from_flags.stdout);
    assert_ne!(from_file.stdout, other_seed.stdout);
    let path = String::from_utf8(from_file.stdout).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(path.trim()).unwrap()).unwrap();
    assert_eq!(doc["seed"], 7);
    let sha = doc["scenario_sha256"].as_str().unwrap();
    assert!(path.contains(&sha[..16]));
}

#[test]
fn boundary_and_transform_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = batchps(dir.path(), &["boundary", "--s", "1", "--bmax", "6"]);
    assert!(out.status.success());
    let path = String::from_utf8(out.stdout).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(path.trim()).unwrap()).unwrap();
    let e = doc["result"]["e"].as_array().unwrap();
    assert_eq!(e.len(), 6);
    let residual = doc["result"]["residual"].as_array().unwrap();
    assert!(residual.iter().all(|r| r.as_f64().unwrap() < 1e-8));

    let out = batchps(dir.path(), &["transform", "--s", "1", "--nmax", "2", "--bmax", "2"]);
    assert!(out.status.success());
    let text = fs::read_to_string(String::from_utf8(out.stdout).unwrap().trim()).unwrap();
    let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(lines[0], "s,n,b,transform");
    assert_eq!(lines.len(), 1 + 3 * 2);
    for row in &lines[1..] {
        let v: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!(v > 0.0 && v <= 1.0);
    }
}

#[test]
fn oracle_subcommands_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["oracle", "ode", "--ntrunc", "60", "--btrunc", "2", "--nmax", "2", "--xgrid", "1:2:1"][..],
        &["oracle", "ctmc", "--ntrunc", "60", "--btrunc", "2", "--nmax", "2", "--xgrid", "1:2:1"],
        &["oracle", "sim", "--batches", "20000", "--replications", "2", "--xgrid", "1:2:1"],
    ] {
        let out = batchps(dir.path(), args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(files(dir.path()).len(), 4);
}
