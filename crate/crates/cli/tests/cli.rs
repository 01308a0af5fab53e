use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cmcflow"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn invoke(sub: &str, config: &Path, out: &Path) -> (i32, String) {
    let o = bin()
        .args([sub, "--quiet", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap();
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stderr).into_owned())
}

fn summary(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn exact_sphere_converges_immediately() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"metric":{"mass":2},"initial":{"r0":3,"band_limit":12},"flow":{"dt":0.1}}"#,
    );
    let out = tmp.path().join("o");
    let (code, err) = invoke("flow", &cfg, &out);
    assert_eq!(code, 0, "{err}");
    let s = summary(&out);
    assert_eq!(s["termination"], "converged");
    assert_eq!(s["steps"], 0);
    assert!(s["final_max_dev"].as_f64().unwrap() < 1e-10);
    assert!((s["r_ref"].as_f64().unwrap() - 3.0).abs() < 1e-10);
    assert!(out.join("series.csv").is_file());
    assert!(out.join("snap_0.csv").is_file());
}

#[test]
fn flow_outputs_are_deterministic() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"metric":{"mass":2},
            "initial":{"r0":3,"band_limit":12,"modes":[{"l":2,"m":0,"eps":0.05},{"l":3,"m":1,"eps":0.02}]},
            "flow":{"dt":0.1,"t_max":3},
            "output":{"snapshot_every":10}}"#,
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(invoke("flow", &cfg, &a).0, 2);
    assert_eq!(invoke("flow", &cfg, &b).0, 2);
    for f in ["series.csv", "snap_0.csv", "snap_10.csv", "snap_30.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let s = summary(&a);
    assert_eq!(s["termination"], "max_time");
    assert_eq!(s["config"]["initial"]["modes"][1]["m"], 1);
    assert!(s["conservation_drift"].as_f64().unwrap().abs() < 1e-10);
    let rows = fs::read_to_string(a.join("series.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 31);
}

#[test]
fn snapshot_restart_reproduces_surface() {
    let tmp = TempDir::new().unwrap();
    let first = write_config(
        tmp.path(),
        "a.json",
        r#"{"metric":{"mass":2},"initial":{"r0":3,"band_limit":10,"modes":[{"l":2,"m":2,"eps":0.04}]},
            "flow":{"dt":0.1,"t_max":1}}"#,
    );
    let a = tmp.path().join("a");
    assert_eq!(invoke("flow", &first, &a).0, 2);
    let second = write_config(
        tmp.path(),
        "b.json",
        r#"{"metric":{"mass":2},"initial":{"r0":3,"band_limit":10,"snapshot":"a/snap_10.csv"},
            "flow":{"dt":0.1,"t_max":1}}"#,
    );
    let b = tmp.path().join("b");
    assert_eq!(invoke("geometry", &second, &b).0, 0);
    let geo = fs::read_to_string(b.join("geometry.csv")).unwrap();
    assert!(geo.starts_with("theta,phi,rho,H,kappa1,kappa2,ring_norm,chi,area_element"));
    let snap = fs::read_to_string(a.join("snap_10.csv")).unwrap();
    assert_eq!(geo.lines().count(), snap.lines().count());
}

#[test]
fn config_errors_exit_64_with_distinct_messages() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let cases = [
        (r#"{"metric":{"massd":2},"initial":{"r0":3}}"#, "massd"),
        (r#"{"metric":{"mass":2},"initial":{"r0":0.9}}"#, "horizon"),
        (r#"{"metric":{"mass":2},"initial":{"r0":3},"flow":{"dt":"fast"}}"#, "flow.dt"),
        (r#"{"metric":{"mass":2},"initial":{"r0":3}"#, "malformed"),
    ];
    let mut seen = Vec::new();
    for (i, (body, needle)) in cases.iter().enumerate() {
        let cfg = write_config(tmp.path(), &format!("c{i}.json"), body);
        let (code, err) = invoke("flow", &cfg, &out);
        assert_eq!(code, 64, "{body}");
        assert!(err.contains(needle), "{err}");
        seen.push(err);
    }
    seen.dedup();
    assert_eq!(seen.len(), cases.len());
    let (code, _) = invoke("flow", &tmp.path().join("missing.json"), &out);
    assert_eq!(code, 64);
}

#[test]
fn command_mismatch_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"command":"spectrum","metric":{"mass":2},"initial":{"r0":3}}"#,
    );
    assert_eq!(invoke("flow", &cfg, &tmp.path().join("o")).0, 64);
}

#[test]
fn invalid_initial_graph_exits_3_and_names_node() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"metric":{"mass":2},"initial":{"r0":1.2,"band_limit":12,"modes":[{"l":2,"m":0,"eps":-1.0}]}}"#,
    );
    let out = tmp.path().join("o");
    let (code, err) = invoke("flow", &cfg, &out);
    assert_eq!(code, 3, "{err}");
    let s = summary(&out);
    assert_eq!(s["termination"], "graph_fail");
    assert!(s["termination_detail"].as_str().unwrap().contains("node"));
}

#[test]
fn spectrum_reports_rate_for_sphere() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"metric":{"mass":2},"initial":{"r0":3,"band_limit":16},"spectrum":{"l_op":6}}"#,
    );
    let out = tmp.path().join("o");
    assert_eq!(invoke("spectrum", &cfg, &out).0, 0);
    let s = summary(&out);
    let rate = s["predicted_rate"].as_f64().unwrap();
    assert!((rate - 0.0791).abs() < 1e-3, "{rate}");
    assert!(out.join("spectrum.csv").is_file());
}

#[test]
fn sweep_flags_basin_larger_than_probe_range() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"metric":{"mass":2},"initial":{"r0":3,"band_limit":12},"flow":{"dt":0.1},
            "sweep":{"mode":{"l":2,"m":0},"bisection_steps":3}}"#,
    );
    let out = tmp.path().join("o");
    assert_eq!(invoke("sweep", &cfg, &out).0, 0);
    let s = summary(&out);
    assert_eq!(s["basin_exceeds_probe"], true);
    assert_eq!(s["eps_star"], s["eps_max"]);
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(out.join("probe_00/summary.json").is_file());
    assert!(out.join("probe_01/summary.json").is_file());
}
