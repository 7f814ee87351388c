use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use onsager_cli::io::{format_density, format_kernel_matrix, read_density};

fn onsager(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_onsager")).args(args).env_remove("ONSAGER_OUT").output().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = r#"
version = 1
name = "small"
[space]
axes = [{ kind = "interval", lo = 0.0, hi = 1.5707963267948966, resolution = 32 }]
[kernel]
kind = "rhombus_symdiff"
[solver]
b_schedule = [1.0, 5.0]
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("cfg.toml");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn decreasing_schedule_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("[1.0, 5.0]", "[5.0, 1.0]"));
    let o = onsager(&["sweep", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("b_schedule"));
}

#[test]
fn schema_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("version = 1", ""));
    let o = onsager(&["run", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("version"));
    let cfg = write_config(dir.path(), &SMALL.replace("resolution = 32", "resolution = \"many\""));
    let o = onsager(&["run", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("space.axes[0]"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_config_is_a_usage_error() {
    assert_eq!(onsager(&["sweep"]).status.code(), Some(2));
    assert_eq!(onsager(&["branches", "--example", "3"]).status.code(), Some(2));
}

#[test]
fn non_convergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("[solver]", "[solver]\nmax_iterations = 1"));
    let out = dir.path().join("o");
    let o = onsager(&["sweep", "--config", s(&cfg), "--out", s(&out), "--quiet"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(o.stdout.is_empty());
    let report = json(&out.join("sweep.json"));
    assert_eq!(report["states"][1]["converged"], false);
    assert!(out.join("density_001.txt").exists());
}

#[test]
fn zeroset_of_rhombi_is_diagonal() {
    let dir = tempfile::tempdir().unwrap();
    let o = onsager(&["zeroset", "--example", "3", "--tau", "1e-6", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let r = json(&dir.path().join("zeroset.json"));
    assert_eq!(r["diagonal_only"], true);
    assert_eq!(r["pair_count"], 256);
}

#[test]
fn branches_of_two_rods_at_200() {
    let dir = tempfile::tempdir().unwrap();
    let o = onsager(&["branches", "--example", "1", "--b", "200", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let r = json(&dir.path().join("branches.json"));
    let roots = r["branches"][0]["roots"].as_array().unwrap();
    assert_eq!(roots.len(), 3);
    let a: Vec<f64> = roots.iter().map(|p| p["a"].as_f64().unwrap()).collect();
    assert!(a[2] > 0.9 && a[0] == -a[2] && a[1] == 0.0);
    let csv = fs::read_to_string(dir.path().join("branches.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn validate_kernel_reports_rhombus_constants() {
    let dir = tempfile::tempdir().unwrap();
    let o = onsager(&["validate-kernel", "--example", "3", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let r = json(&dir.path().join("validate-kernel.json"));
    assert_eq!(r["passed"], true);
    assert!(r["sup_norm"].as_f64().unwrap() > 0.9);
    assert!(r["lipschitz_estimate"].as_f64().unwrap() > 0.0);
}

#[test]
fn faulty_tabulated_kernel_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let mut entries = vec![0.0; 16];
    for i in 0..4 {
        for j in 0..4 {
            entries[i * 4 + j] = (i as f64 - j as f64).abs();
        }
    }
    entries[1 * 4 + 2] = -0.5;
    fs::write(dir.path().join("k.txt"), format_kernel_matrix(4, &entries)).unwrap();
    let text = r#"
version = 1
[space]
axes = [{ kind = "periodic", resolution = 4 }]
[kernel]
kind = "tabulated"
path = "k.txt"
[solver]
b_schedule = [1.0]
"#;
    let cfg = write_config(dir.path(), text);
    let out = dir.path().join("o");
    let o = onsager(&["validate-kernel", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(4));
    let r = json(&out.join("validate-kernel.json"));
    assert_eq!(r["min_witness"], serde_json::json!([1, 2]));
    assert_eq!(onsager(&["sweep", "--config", s(&cfg), "--out", s(&out)]).status.code(), Some(4));
}

#[test]
fn emitted_densities_round_trip_and_seed_a_solve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("o");
    assert_eq!(onsager(&["sweep", "--config", s(&cfg), "--out", s(&out), "--quiet"]).status.code(), Some(0));
    let path = out.join("density_001.txt");
    let text = fs::read_to_string(&path).unwrap();
    let d = read_density(&path).unwrap();
    assert_eq!(d.values.len(), 32);
    assert_eq!(format_density(&d.descriptor, d.b, &d.values), text);

    let warm = SMALL.replace("[solver]", "[solver]\ninit = { kind = \"tabulated\", path = \"o/density_001.txt\" }");
    let cfg = write_config(dir.path(), &warm);
    let o = onsager(&["solve", "--b", "5", "--config", s(&cfg), "--out", s(&dir.path().join("w"))]);
    assert_eq!(o.status.code(), Some(0));
    // a converged start needs at most a couple of steps
    let r = json(&dir.path().join("w/solve.json"));
    assert!(r["states"][0]["iterations"].as_u64().unwrap() <= 2);

    let other = warm.replace("resolution = 32", "resolution = 33");
    let cfg = write_config(dir.path(), &other);
    let o = onsager(&["solve", "--b", "5", "--config", s(&cfg), "--out", s(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
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

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for example in ["1", "3"] {
        let a = dir.path().join(format!("a{example}"));
        let b = dir.path().join(format!("b{example}"));
        for out in [&a, &b] {
            let o = onsager(&["run", "--example", example, "--resolution", "24", "--seed", "7", "--quiet", "--out", s(out)]);
            assert!(o.status.code() == Some(0) || o.status.code() == Some(4), "{o:?}");
        }
        let (fa, fb) = (files(&a), files(&b));
        assert!(fa.len() > 5);
        assert_eq!(fa, fb);
    }
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_onsager"))
        .args(["zeroset", "--example", "3", "--quiet"])
        .env("ONSAGER_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("zeroset.json").exists());
}
