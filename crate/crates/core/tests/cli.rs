use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_equiaffine"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn shape(dir: &Path, kind: &str, subdivisions: &str) -> String {
    let out = dir.join(kind);
    ok(&["shape", "--kind", kind, "--subdivisions", subdivisions, "--out", out.to_str().unwrap()]);
    out.join("mesh.off").to_str().unwrap().to_string()
}

#[test]
fn distance_writes_data_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let mesh = shape(tmp.path(), "icosphere", "2");
    let out = tmp.path().join("dist");
    ok(&["distance", "--mesh", &mesh, "--source", "0,5", "--out", out.to_str().unwrap()]);
    for f in ["distances.csv", "distances.ply", "manifest.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let m = manifest(&out);
    assert_eq!(m["command"], "distance");
    assert_eq!(m["schema"], 1);
    assert_eq!(m["config"]["metric"], "equi_affine");
    let outputs: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(outputs.contains(&"distances.csv"));
    let csv = fs::read_to_string(out.join("distances.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 162);
}

#[test]
fn non_unit_determinant_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let mesh = shape(tmp.path(), "icosphere", "1");
    let out = run(&["transform", "--mesh", &mesh, "--det", "2", "--out", tmp.path().join("t").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("invalid det"), "{err}");
    assert!(err.contains("determinant"), "{err}");
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(&["distance", "--source", "0"]).status.code(), Some(2));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn out_of_range_source_names_the_option() {
    let tmp = tempfile::tempdir().unwrap();
    let mesh = shape(tmp.path(), "icosphere", "1");
    let out = run(&["distance", "--mesh", &mesh, "--source", "9999", "--out", tmp.path().join("d").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid source"));
}

#[test]
fn invariance_report_has_both_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let mesh = shape(tmp.path(), "icosphere", "3");
    let out = tmp.path().join("inv");
    ok(&[
        "invariance", "--mesh", &mesh, "--strength", "2", "--seed", "7", "--k", "40", "--voronoi-k", "8",
        "--canonical-k", "60", "--match-k", "20", "--restarts", "4", "--out", out.to_str().unwrap(),
    ]);
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("invariance.json")).unwrap()).unwrap();
    assert_eq!(report["schema"], 1);
    for metric in ["equi_affine", "euclidean"] {
        for field in ["histogram_l1", "voronoi_agreement", "canonical_rmsd", "identity_distortion", "matched_distortion"] {
            assert!(report[metric][field].is_number(), "{metric}.{field}");
        }
    }
    assert!((report["transform"]["determinant"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    let ea = report["equi_affine"]["histogram_l1"].as_f64().unwrap();
    let eu = report["euclidean"]["histogram_l1"].as_f64().unwrap();
    assert!(ea < eu, "{ea} vs {eu}");
}

#[test]
fn symmetry_command_finds_the_mirror() {
    let tmp = tempfile::tempdir().unwrap();
    let mesh = shape(tmp.path(), "symmetric", "3");
    let out = tmp.path().join("sym");
    ok(&["symmetry", "--mesh", &mesh, "--k", "30", "--restarts", "8", "--out", out.to_str().unwrap()]);
    let m = manifest(&out);
    assert_eq!(m["counts"]["found"], true);
    let csv = fs::read_to_string(out.join("symmetry.csv")).unwrap();
    assert_eq!(csv.lines().count(), 31);
    assert!(out.join("symmetry_mapped.ply").is_file());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let mesh = shape(tmp.path(), "random-bumps", "3");
    let dirs = [tmp.path().join("a"), tmp.path().join("b")];
    for d in &dirs {
        ok(&["voronoi", "--mesh", &mesh, "--k", "12", "--out", d.to_str().unwrap()]);
    }
    for f in ["labels.csv", "voronoi.ply"] {
        assert_eq!(fs::read(dirs[0].join(f)).unwrap(), fs::read(dirs[1].join(f)).unwrap(), "{f}");
    }
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("timings_ms");
        v
    };
    assert_eq!(strip(manifest(&dirs[0])), strip(manifest(&dirs[1])));
}
