use cellwave_core::boundary::TraceBundle;
use cellwave_core::grid::{read_gfn, write_gfn};
use cellwave_core::{Bbox, GridFunction};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn cellwave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cellwave")).args(args).output().expect("spawn cellwave")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn grid_file(dir: &Path, name: &str, level: i32, f: impl Fn(&[f64]) -> f64 + Sync) -> PathBuf {
    let path = dir.join(name);
    write_gfn(&path, &GridFunction::from_fn(Bbox::unit(2), level, f).unwrap()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn norm_of_zero_grid_prints_zero() {
    let dir = tempfile::tempdir().unwrap();
    let g = grid_file(dir.path(), "zero.gfn", 6, |_| 0.0);
    let o = cellwave(&["norm", "--grid", s(&g), "--method", "haar", "--s", "0.4", "--p", "2", "--q", "2"]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(stdout(&o).trim(), "0");
}

#[test]
fn usage_errors_exit_2() {
    let o = cellwave(&["norm", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    let o = cellwave(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.gfn");
    let o = cellwave(&["norm", "--grid", s(&missing), "--s", "0.4", "--p", "2", "--q", "2"]);
    assert_eq!(o.status.code(), Some(2));
    // Haar cannot measure s = 0.7 at p = 2
    let g = grid_file(dir.path(), "g.gfn", 6, |x| x[0]);
    let o = cellwave(&["norm", "--grid", s(&g), "--method", "haar", "--s", "0.7", "--p", "2", "--q", "2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn hardy_assertions_drive_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h/report.json");
    let o = cellwave(&["hardy", "--mode", "critical", "--kappa", "log", "--J", "3..8", "--assert", "grows:1.5", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let v = json(&out);
    assert_eq!(v["schema"], "cellwave/1");
    assert_eq!(v["report"]["rows"].as_array().unwrap().len(), 6);
    let csv = std::fs::read_to_string(out.with_extension("csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.starts_with("J,level,functional,norm,ratio"));

    let o = cellwave(&["hardy", "--kappa", "log", "--J", "3..8", "--assert", "bounded:1.2"]);
    assert_eq!(o.status.code(), Some(3));
    let o = cellwave(&["hardy", "--kappa", "1", "--J", "3..8", "--assert", "bounded:4"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn whitney_report_lists_cubes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("dec.json");
    let o = cellwave(&["whitney", "--domain", "cube", "--n", "2", "--max-level", "6", "--out", s(&out), "--assert"]);
    assert!(o.status.success(), "{o:?}");
    let v = json(&out);
    let cubes = v["report"]["decomposition"]["cubes"].as_array().unwrap();
    assert!(!cubes.is_empty());
    for key in ["nu", "m", "dist", "flags"] {
        assert!(cubes[0].get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["report"]["verification"]["disjoint_violations"], 0);
    assert!(dir.path().join("dec.csv").exists());
}

#[test]
fn analyze_synthesize_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = grid_file(dir.path(), "f.gfn", 6, |x| (3.0 * x[0]).sin() + x[1] * x[1]);
    let coeffs = dir.path().join("c.json");
    let sys = dir.path().join("sys.json");
    let back = dir.path().join("back.gfn");
    let o = cellwave(&["analyze", "--grid", s(&g), "--u", "0", "--jmax", "5", "--out", s(&coeffs), "--system-out", s(&sys)]);
    assert!(o.status.success(), "{o:?}");
    let o = cellwave(&["synthesize", "--coeffs", s(&coeffs), "--system", s(&sys), "--out", s(&back)]);
    assert!(o.status.success(), "{o:?}");
    let f = read_gfn(&g).unwrap();
    let h = read_gfn(&back).unwrap();
    assert!(f.zip_map(&h, |a, b| a - b).unwrap().max_abs() < 1e-12);

    // b norm against a flat sum over the coefficient file
    let bq = cellwave(&["seqnorm", "--coeffs", s(&coeffs), "--p", "2", "--q", "2", "--s", "0.3", "--kind", "b"]);
    let bv: f64 = stdout(&bq).trim().parse().unwrap();
    let mut by_level = std::collections::BTreeMap::<u64, f64>::new();
    for e in json(&coeffs)["entries"].as_array().unwrap() {
        let lam = e["lambda"].as_f64().unwrap();
        *by_level.entry(e["j"].as_u64().unwrap()).or_default() += lam * lam;
    }
    let brute: f64 = by_level.iter().map(|(&j, sum)| 2f64.powf(0.6 * j as f64) * sum).sum::<f64>().sqrt();
    assert!(bv > 0.0 && ((bv - brute) / brute).abs() < 1e-12, "{bv} vs {brute}");
}

#[test]
fn trace_then_extend_reproduces_the_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let g = grid_file(dir.path(), "f.gfn", 9, |x| (2.0 * x[0]).cos() * (1.0 + x[1]));
    let bundle = dir.path().join("b/bundle.json");
    let o = cellwave(&["trace", "--grid", s(&g), "--face", "1,0", "--r", "1", "--s", "2", "--p", "2", "--out", s(&bundle)]);
    assert!(o.status.success(), "{o:?}");
    let ext = dir.path().join("ext.gfn");
    let o = cellwave(&["extend", "--bundle", s(&bundle), "--u", "3", "--out", s(&ext)]);
    assert!(o.status.success(), "{o:?}");
    let retraced = dir.path().join("b/again.json");
    let o = cellwave(&["trace", "--grid", s(&ext), "--face", "1,0", "--r", "1", "--out", s(&retraced)]);
    assert!(o.status.success(), "{o:?}");
    let a = TraceBundle::read(&bundle).unwrap();
    let b = TraceBundle::read(&retraced).unwrap();
    assert!(a.max_abs_diff(&b).unwrap() <= 5.0 * 2f64.powi(-9) * a.max_abs());
}

#[test]
fn trace_window_is_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let g = grid_file(dir.path(), "f.gfn", 6, |x| x[0]);
    let out = dir.path().join("b.json");
    // s = 1/2 at p = 2 sits on the edge of the trace window for l = 1
    let o = cellwave(&["trace", "--grid", s(&g), "--face", "1,0", "--r", "0", "--s", "1/2", "--p", "2", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn decompose_writes_declared_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let g = grid_file(dir.path(), "f.gfn", 8, |x| 1.0 + x[0] * x[1] + (x[0] - x[1]).sin());
    let out = dir.path().join("dec");
    let o = cellwave(&["decompose", "--grid", s(&g), "--s", "1", "--p", "2", "--q", "2", "--u", "2", "--out", s(&out), "--assert"]);
    assert!(o.status.success(), "{o:?}");
    for name in ["plan.json", "interior.coeffs.json", "remainder.gfn", "verify.json", "verify.csv"] {
        assert!(out.join(name).exists(), "missing {name}");
    }
    let plan = json(&out.join("plan.json"));
    assert_eq!(plan["report"]["l0"], 1);
    assert_eq!(plan["report"]["orders"]["1"], 0);
    assert_eq!(plan["report"]["critical_set"], serde_json::json!([0]));
    let bundles: Vec<_> = std::fs::read_dir(out.join("bundles"))
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".json"))
        .collect();
    assert_eq!(bundles.len(), 4);
}

#[test]
fn identity_diffeomorphism_has_ratio_one() {
    let dir = tempfile::tempdir().unwrap();
    let g = grid_file(dir.path(), "f.gfn", 7, |x| (6.0 * x[0]).sin() * (4.0 * x[1]).cos());
    let out = dir.path().join("d.json");
    let o = cellwave(&["op", "diffeo", "--grid", s(&g), "--s", "3/4", "--p", "2", "--q", "2", "--rho", "2", "--out", s(&out)]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(json(&out)["report"]["composition"]["ratio"], 1.0);
}

#[test]
fn preset_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(cellwave(&["preset", "w21-cube", "--J", "9", "--out", s(&a)]).status.success());
    assert!(cellwave(&["--threads", "2", "preset", "w21-cube", "--J", "9", "--out", s(&b)]).status.success());
    for name in ["report.json", "reinforce.json", "reinforce.csv", "decompose/verify.json", "decompose/interior.coeffs.json"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name} differs");
    }
    let table = json(&a.join("reinforce.json"));
    for row in table["report"].as_array().unwrap() {
        // the remainder vanishes at the corners; f itself does not
        let expect = row["function"] == "remainder";
        assert_eq!(row["pass"], expect, "{row}");
    }
    // a different seed draws a different function
    let c = dir.path().join("c");
    assert!(cellwave(&["--seed", "7", "preset", "w21-cube", "--J", "8", "--out", s(&c)]).status.success());
    assert_ne!(std::fs::read(a.join("input.f64")).unwrap(), std::fs::read(c.join("input.f64")).unwrap());
}
