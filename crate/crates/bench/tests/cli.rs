use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asmd-bench")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.ini");
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

const GRID: &str = "\
dataset = synthetic
N = 60
D = 5
stages = 12

[asmd-i]
solver = asmd

[asmd-ii]
solver = asmd
variant = II

[fista]
solver = fista
";

#[test]
fn run_writes_csvs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), GRID);
    let out = dir.path().join("out");
    let o = bench(&["run", &cfg, "--out-dir", out.to_str().unwrap(), "--threads", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["asmd-i", "asmd-ii", "fista"] {
        let csv = fs::read_to_string(out.join(format!("{name}.csv"))).unwrap();
        assert!(csv.starts_with("stage_or_iter,grads_over_n,objective,gap,wall_ms,max_z_norm"));
        assert_eq!(csv.lines().count(), 14, "{name}");
    }
    let manifest = fs::read_to_string(out.join("manifest.ini")).unwrap();
    assert!(manifest.contains("[asmd-ii]") && manifest.contains("variant = II"));
    // no stray temporary files
    assert_eq!(fs::read_dir(&out).unwrap().count(), 4);
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), GRID);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(bench(&["run", &cfg, "--out-dir", a.to_str().unwrap(), "--threads", "1"]).status.success());
    assert!(bench(&["run", &cfg, "--out-dir", b.to_str().unwrap(), "--threads", "3"]).status.success());
    for f in ["asmd-i.csv", "asmd-ii.csv", "fista.csv", "manifest.ini"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn empty_solver_list_writes_only_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "N = 10\nD = 2\n");
    let out = dir.path().join("out");
    let o = bench(&["run", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success());
    let names: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, vec![std::ffi::OsString::from("manifest.ini")]);
}

#[test]
fn bad_configs_fail_with_a_helpful_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[x]\nsolver = asmd\nN = 10\nD = 2\nstages = 2\nstepsize = 3\n");
    let o = bench(&["run", &cfg, "--out-dir", dir.path().join("o").to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("stepsize") && err.contains("valid keys"), "{err}");

    let o = bench(&["run", dir.path().join("missing.ini").to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn reference_and_rate_commands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), GRID);
    let o = bench(&["reference", &cfg]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let values: Vec<f64> = text.lines().map(|l| l.split(" = ").nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 3);
    assert!(values.windows(2).all(|w| w[0] == w[1]));

    let out = dir.path().join("out");
    assert!(bench(&["run", &cfg, "--out-dir", out.to_str().unwrap()]).status.success());
    let csv = out.join("fista.csv");
    let o = bench(&["rate", csv.to_str().unwrap(), "--window", "2:12"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let slope: f64 = String::from_utf8(o.stdout).unwrap().trim().parse().unwrap();
    assert!(slope < -1.0, "{slope}");

    let o = bench(&["rate", csv.to_str().unwrap(), "--window", "9:3"]);
    assert!(!o.status.success());
}
