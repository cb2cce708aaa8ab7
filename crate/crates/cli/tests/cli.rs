use std::path::Path;
use std::process::{Command, Output};

fn dwl(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dwl"));
    c.args(args).env_remove("DWL_THREADS");
    for (k, v) in envs {
        c.env(k, v);
    }
    c.output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const CHEAP: &str = r#"
seed = 11
output = "out"

[grid]
points = 32
half_period = 3.141592653589793

[probes.null_symbol]
angles = [0.2, 0.4, 0.8]
radius = 6.0
trials = 1

[probes.decay]
times = [1.0, 2.0, 4.0]
grid = { points = 48, half_period = 24.0 }
"#;

#[test]
fn empty_selection_writes_manifest_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 5\noutput = \"out\"\n");
    let o = dwl(&["run", &cfg], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let files: Vec<_> = std::fs::read_dir(dir.path().join("out")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(files, vec!["manifest.json"]);
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 5);
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn strichartz_sweep_writes_report_and_summary_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
seed = 2
output = "out"
[grid]
points = 32
half_period = 3.141592653589793
[probes.strichartz]
lambdas = [2, 4, 8]
window = 4.0
trials = 1
"#,
    );
    let o = dwl(&["run", &cfg], &[]);
    let code = o.status.code().unwrap();
    let summary = std::fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    let row = summary.lines().find(|l| l.starts_with("strichartz.lambda,")).expect("summary row");
    let pass = row.contains(",PASS,");
    assert!(pass || row.contains(",FAIL,"));
    assert_eq!(code, if pass { 0 } else { 2 });
    let rep: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/strichartz.json")).unwrap()).unwrap();
    assert_eq!(rep["reports"][0]["report"]["samples"].as_array().unwrap().len(), 3);
    assert_eq!(rep["reports"][0]["report"]["environment"]["seed"], 2);
    let shown = dwl(&["show-report", dir.path().join("out/strichartz.json").to_str().unwrap()], &[]);
    assert_eq!(shown.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&shown.stdout).contains("strichartz.lambda"));
}

#[test]
fn malformed_config_exits_one_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\n[probes.decay]\ntimes = [1.0, 2.0\n");
    let o = dwl(&["run", &cfg], &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");
    let cfg = write_config(dir.path(), "seed = 1\n[probes.decay]\ntimes = [1.0]\nstep = 2\n");
    let err = String::from_utf8_lossy(&dwl(&["run", &cfg], &[]).stderr).to_string();
    assert!(err.contains("line 4") && err.contains("step"), "{err}");
    let o = dwl(&["run", dir.path().join("missing.toml").to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn list_probes_and_schema() {
    let o = dwl(&["list-probes"], &[]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for p in ["bernstein", "strichartz", "concentration", "high_modulation", "bilinear", "trilinear", "decay"] {
        assert!(text.lines().any(|l| l == p), "{p}");
    }
    let o = dwl(&["list-probes", "--json"], &[]);
    let schema: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(schema["properties"]["probes"].is_object());
    let o = dwl(&["frobnicate"], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn csv_outputs_are_deterministic_across_runs_and_threads() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ca = write_config(a.path(), CHEAP);
    let cb = write_config(b.path(), CHEAP);
    dwl(&["run", &ca], &[]);
    dwl(&["run", &cb], &[("DWL_THREADS", "2")]);
    for f in ["null_symbol.csv", "decay.csv", "summary.csv"] {
        let x = std::fs::read(a.path().join("out").join(f)).unwrap();
        let y = std::fs::read(b.path().join("out").join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f}");
    }
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(b.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["threads"], 2);
    let o = dwl(&["run", &ca], &[("DWL_THREADS", "zero")]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn failing_estimate_exits_two_and_names_the_target() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{CHEAP}\n[slack]\n\"decay.t\" = 1e-9\n"));
    let o = dwl(&["run", &cfg], &[]);
    assert_eq!(o.status.code(), Some(2));
    let summary = std::fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    let mut rd = csv::Reader::from_reader(summary.as_bytes());
    let row = rd.records().map(|r| r.unwrap()).find(|r| &r[0] == "decay.t").unwrap();
    assert_eq!(&row[1], "FAIL");
    assert!(row[2].parse::<f64>().is_ok());
    assert!(row[3].starts_with("in ["));
    assert_eq!(&row[5], "1e-9");
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn solve_entries_write_reports_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
seed = 1
output = "out"
[grid]
points = 16
half_period = 6.0

[[solve]]
name = "dirac"
system = "dirac_hartree"
epsilon = 0.01
window = 2.0
dt = 0.1
scattering_times = [0.5, 1.0, 1.5, 2.0]
snapshot_stride = 10

[[solve]]
name = "wave"
system = "wave_null"
form = "q0"
epsilon = 0.01
window = 1.0
dt = 0.1
"#,
    );
    let o = dwl(&["run", &cfg], &[]);
    assert!(matches!(o.status.code(), Some(0) | Some(2)), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.contains("solve.dirac.contraction,PASS"), "{summary}");
    assert!(summary.contains("solve.dirac.charge,PASS"), "{summary}");
    assert!(summary.contains("solve.wave.contraction,PASS"), "{summary}");
    for f in ["solve_dirac.json", "solve_dirac.csv", "solve_wave.csv", "solve_dirac_00000.bin", "solve_dirac_00020.bin", "solve_wave.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let shown = dwl(&["show-report", out.join("solve_dirac.json").to_str().unwrap()], &[]);
    assert!(String::from_utf8_lossy(&shown.stdout).contains("iterations"));
    let shown = dwl(&["show-report", out.join("manifest.json").to_str().unwrap()], &[]);
    assert!(String::from_utf8_lossy(&shown.stdout).contains("sha256"));
}
