//! Exit codes, validation output and output files of the `nfs` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nfs_tool::output::{read_density, read_grid};
use nfs_core::scenario::{builtin, compute_diagnostics, CaseId, MetricsReport, OutputConfig, ScenarioConfig, SliceSpec, SnapshotSpec};
use serde_json::Value;

fn nfs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nfs"))
        .args(args)
        .env_remove("NFS_THREADS")
        .output()
        .expect("binary runs")
}

fn small(case: CaseId) -> ScenarioConfig {
    let mut cfg = builtin(case);
    cfg.name = format!("small_{case}");
    cfg.degree = 6;
    cfg.morozov.delta = 0.05;
    let s = &mut cfg.sampling;
    s.control_points_per_edge = 5;
    s.null_sphere_rule = [8, 16];
    s.interior_grid = [3, 3, 3];
    s.far_field_radii = vec![10.0, 100.0];
    s.far_field_directions = [5, 10];
    s.power_rule = [12, 24];
    s.trace_rule = [4, 8];
    cfg.outputs = OutputConfig {
        slices: vec![SliceSpec::square("near", 0.02, 7)],
        snapshots: Some(SnapshotSpec {
            slice: "near".into(),
            kct: vec![0.0, 1.5],
        }),
        error_slice: Some("near".into()),
        density_map: Some([4, 8]),
        traces: true,
    };
    cfg
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> String {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p.to_string_lossy().into_owned()
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr is not empty");
    serde_json::from_str(line).expect("stderr is JSON")
}

#[test]
fn malformed_config_exits_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, "{\"name\": \"x\", \"case\": ").unwrap();
    let out_dir = dir.path().join("out");
    let out = nfs(&["run", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "parse");
    assert!(!out_dir.exists());
    // nothing staged next to it either
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn unknown_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = serde_json::to_value(builtin(CaseId::I)).unwrap();
    v["wave"]["frequency"] = 3.0.into();
    let p = write_config(dir.path(), "c.json", &v);
    let out = nfs(&["validate", &p]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out)["message"].as_str().unwrap().contains("frequency"));
}

#[test]
fn validate_builtin_ii_reports_unit_mu() {
    let out = nfs(&["validate", "--builtin", "ii"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["valid"], true);
    assert_eq!(v["mu"].as_f64(), Some(1.0));
    assert_eq!(v["config"]["case"], "ii");
}

#[test]
fn validate_lists_overlap_violation() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = serde_json::to_value(builtin(CaseId::I)).unwrap();
    v["d1"]["r_min"] = 0.005.into();
    let p = write_config(dir.path(), "overlap.json", &v);
    let out = nfs(&["validate", &p]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "validation");
    let list: Vec<&str> = err["violations"].as_array().unwrap().iter().map(|s| s.as_str().unwrap()).collect();
    assert!(list.iter().any(|s| s.starts_with("regions must not intersect source")), "{list:?}");
}

#[test]
fn omitted_weights_echo_their_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = serde_json::to_value(builtin(CaseId::I)).unwrap();
    v["wave"] = serde_json::json!({ "k": 7.5 });
    let p = write_config(dir.path(), "eta.json", &v);
    let out = nfs(&["validate", &p]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["config"]["wave"]["eta1"].as_f64(), Some(1.0));
    assert_eq!(v["config"]["wave"]["eta2"].as_f64(), Some(7.5));
    assert_eq!(v["config"]["wave"]["rho"].as_f64(), Some(1.0));
}

#[test]
fn list_builtins_names_three_cases() {
    let out = nfs(&["list-builtins"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let cases: Vec<&str> = v.as_array().unwrap().iter().map(|c| c["case"].as_str().unwrap()).collect();
    assert_eq!(cases, ["i", "ii", "iii"]);
}

#[test]
fn zero_threads_is_a_usage_error() {
    let out = nfs(&["--threads", "0", "list-builtins"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bin_and_csv_runs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(CaseId::Ii);
    let p = write_config(dir.path(), "small.json", &serde_json::to_value(&cfg).unwrap());
    let bin = dir.path().join("bin");
    let csv = dir.path().join("csv");
    for (out, fmt) in [(&bin, "bin"), (&csv, "csv")] {
        let o = nfs(&["run", &p, "--out", out.to_str().unwrap(), "--format", fmt, "--threads", "2"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }

    let names = ["grids/near", "grids/near_error", "grids/density", "frames/frame_0000", "frames/frame_0001"];
    for name in names {
        let (hb, vb) = read_grid(&bin.join(format!("{name}.grid"))).unwrap();
        let (hc, vc) = read_grid(&csv.join(format!("{name}.csv"))).unwrap();
        assert_eq!((hb.nx, hb.ny, hb.z), (hc.nx, hc.ny, hc.z));
        assert_eq!(hb.scenario_hash, hc.scenario_hash);
        for (a, b) in vb.iter().zip(&vc) {
            for (x, y) in [(a.re, b.re), (a.im, b.im)] {
                assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()), "{name}: {x} vs {y}");
            }
        }
    }

    let m: MetricsReport = serde_json::from_slice(&fs::read(bin.join("metrics.json")).unwrap()).unwrap();
    let mc: MetricsReport = serde_json::from_slice(&fs::read(csv.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m, mc);
    assert_eq!(m.mu, 1.0);
    assert_eq!(m.summary.median_rel_error_D1, m.diagnostics.d1_error.median);

    // diagnostics reproduce from the written density and effective config
    let eff: ScenarioConfig = serde_json::from_slice(&fs::read(bin.join("config.json")).unwrap()).unwrap();
    assert_eq!(eff.hash().unwrap(), m.config_hash);
    let w = read_density(&bin.join("density.json")).unwrap();
    let d = compute_diagnostics(&eff, &w).unwrap();
    assert_eq!(d, m.diagnostics);

    let ff = fs::read_to_string(bin.join("far_field.csv")).unwrap();
    assert_eq!(ff.lines().next(), Some("r,r_sup_u"));
    assert_eq!(ff.lines().count(), 3);
    let traces = fs::read_to_string(bin.join("traces.csv")).unwrap();
    assert_eq!(traces.lines().count(), 1 + 32);
}

#[test]
fn overrides_reach_the_solver() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(CaseId::I);
    cfg.outputs = OutputConfig::default();
    let p = write_config(dir.path(), "small.json", &serde_json::to_value(&cfg).unwrap());
    let out = dir.path().join("o");
    let o = nfs(&[
        "run", &p, "--out", out.to_str().unwrap(), "--delta", "1e-9", "--alpha-range", "1e-3", "1e-1",
    ]);
    // an unreachable discrepancy target is reported, not fatal
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    let m: MetricsReport = serde_json::from_slice(&fs::read(out.join("metrics.json")).unwrap()).unwrap();
    assert!(!m.solve.morozov_converged);
    assert_eq!(m.solve.alpha, 1e-3);
    assert_eq!(m.solve.delta, Some(1e-9));
    assert!(!out.join("grids").exists());
}

#[test]
fn existing_output_is_replaced_on_success() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(CaseId::I);
    cfg.outputs = OutputConfig::default();
    let p = write_config(dir.path(), "small.json", &serde_json::to_value(&cfg).unwrap());
    let out = dir.path().join("o");
    fs::create_dir(&out).unwrap();
    fs::write(out.join("stale.txt"), "old").unwrap();
    let o = nfs(&["run", &p, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(!out.join("stale.txt").exists());
    assert!(out.join("metrics.json").exists());
}
