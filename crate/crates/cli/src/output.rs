use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::probes::{Check, ProbeOutput, SolveOutput};

/// Writes through a temporary sibling and renames into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    std::fs::write(&tmp, bytes).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| CliError::Io {
        path: PathBuf::from("<csv>"),
        source: e.into_error(),
    })
}

fn num(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else if x.is_finite() {
        format!("{x:e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn probe_csv(p: &ProbeOutput) -> Result<Vec<u8>, CliError> {
    let rows = p.reports.iter().flat_map(|lr| {
        lr.report.samples.iter().map(move |s| {
            vec![
                lr.report.probe.clone(),
                lr.label.clone(),
                lr.report.parameter.clone(),
                num(s.scale),
                num(s.value),
            ]
        })
    });
    csv_bytes(&["probe", "label", "parameter", "scale", "value"], rows)
}

pub fn solve_csv(s: &SolveOutput) -> Result<Vec<u8>, CliError> {
    let r = &s.report;
    let mut rows = Vec::new();
    let mut push = |q: &str, i: String, v: f64| rows.push(vec![q.to_string(), i, num(v)]);
    for (n, d) in r.differences.iter().enumerate() {
        push("difference", n.to_string(), *d);
    }
    for (n, d) in r.contraction_ratios.iter().enumerate() {
        push("contraction_ratio", (n + 1).to_string(), *d);
    }
    for (t, d) in &r.scattering {
        push("scattering_difference", num(*t), *d);
    }
    if let Some(v) = r.residual {
        push("residual", String::new(), v);
    }
    if let Some(v) = r.charge_drift {
        push("charge_drift", String::new(), v);
    }
    push("projector_leak", String::new(), r.projector_leak);
    push("data_norm", String::new(), r.data_norm);
    push("data_norm_weighted", String::new(), r.data_norm_weighted);
    csv_bytes(&["quantity", "index", "value"], rows)
}

pub fn summary_csv(checks: &[Check]) -> Result<Vec<u8>, CliError> {
    let rows = checks.iter().map(|c| {
        vec![
            c.estimate.clone(),
            status(c).into(),
            c.fitted.map(num).unwrap_or_else(|| "none".into()),
            c.target.clone(),
            num(c.predicted),
            num(c.slack),
        ]
    });
    csv_bytes(&["estimate", "status", "fitted", "target", "predicted", "slack"], rows)
}

pub fn status(c: &Check) -> &'static str {
    if c.pass {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn summary_table(checks: &[Check]) -> String {
    let width = checks.iter().map(|c| c.estimate.len()).max().unwrap_or(8).max(8);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:<6}  {:>12}  {:<24}  slack", "estimate", "status", "fitted", "target");
    for c in checks {
        let fitted = c
            .fitted
            .map(|f| if f != 0.0 && f.abs() < 1e-3 { format!("{f:.3e}") } else { format!("{f:.4}") })
            .unwrap_or_else(|| "none".into());
        let _ = writeln!(
            out,
            "{:<width$}  {:<6}  {:>12}  {:<24}  {}",
            c.estimate,
            status(c),
            fitted,
            c.target,
            c.slack
        );
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub config: PathBuf,
    pub config_sha256: String,
    pub dwl_version: String,
    pub core_version: String,
    pub seed: u64,
    pub threads: usize,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub files: Vec<String>,
    pub passed: usize,
    pub failed: usize,
}

pub fn config_hash(raw: &str) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(raw.as_bytes()).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Human-readable rendering of any file written by `run`.
pub fn render(path: &Path) -> Result<String, CliError> {
    let raw = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |reason: String| CliError::Report {
        path: path.to_path_buf(),
        reason,
    };
    let value: serde_json::Value = serde_json::from_str(&raw).map_err(|e| bad(e.to_string()))?;
    let mut out = String::new();
    if let Ok(p) = serde_json::from_value::<ProbeOutput>(value.clone()) {
        let _ = writeln!(out, "probe {} ({:.1} s)", p.probe, p.seconds);
        for lr in &p.reports {
            let r = &lr.report;
            let fit = r
                .fit
                .map(|f| format!("exponent {:.4}, constant {:.4e}, residual {:.3}", f.slope, f.constant(), f.residual))
                .unwrap_or_else(|| "no fit".into());
            let _ = writeln!(out, "  [{}] {} sweep: {fit}", lr.label, r.parameter);
            for s in &r.samples {
                let _ = writeln!(out, "    {:>12.5}  {:.6e}", s.scale, s.value);
            }
            for w in &r.warnings {
                let _ = writeln!(out, "    warning: {w}");
            }
        }
        out.push_str(&summary_table(&p.checks));
    } else if let Ok(s) = serde_json::from_value::<SolveOutput>(value.clone()) {
        let r = &s.report;
        let _ = writeln!(out, "solve {} ({:.1} s)", s.name, s.seconds);
        let _ = writeln!(out, "  iterations {} converged {} contracting {}", r.iterations, r.converged, r.contracting);
        let _ = writeln!(out, "  differences {:?}", r.differences);
        let _ = writeln!(out, "  contraction ratios {:?}", r.contraction_ratios);
        if let Some(v) = r.residual {
            let _ = writeln!(out, "  residual {v:.3e}");
        }
        if let Some(v) = r.charge_drift {
            let _ = writeln!(out, "  charge drift {v:.3e}");
        }
        for (t, d) in &r.scattering {
            let _ = writeln!(out, "  scattering difference at T={t}: {d:.3e}");
        }
        let _ = writeln!(out, "  note: {}", r.note);
        for w in &r.warnings {
            let _ = writeln!(out, "  warning: {w}");
        }
        out.push_str(&summary_table(&s.checks));
    } else if let Ok(checks) = serde_json::from_value::<Vec<Check>>(value.clone()) {
        out.push_str(&summary_table(&checks));
    } else if let Ok(m) = serde_json::from_value::<Manifest>(value.clone()) {
        let _ = writeln!(out, "run of {} (sha256 {})", m.config.display(), m.config_sha256);
        let _ = writeln!(out, "  dwl {} / core {}, seed {}, threads {}", m.dwl_version, m.core_version, m.seed, m.threads);
        let _ = writeln!(out, "  {} passed, {} failed", m.passed, m.failed);
        for f in &m.files {
            let _ = writeln!(out, "  {f}");
        }
    } else {
        return Err(bad("not a probe, solve, summary or manifest file".into()));
    }
    Ok(out)
}
