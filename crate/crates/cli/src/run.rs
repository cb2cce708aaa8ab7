use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{self, write_atomic, Manifest};
use crate::probes::{self, Check, Job, JobOutput};

pub struct RunOutcome {
    pub checks: Vec<Check>,
    pub output: PathBuf,
}

impl RunOutcome {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn threads(cfg: &RunConfig) -> Result<usize, CliError> {
    match std::env::var("DWL_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Config(format!("DWL_THREADS: expected a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(cfg.threads),
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn pool(jobs: Vec<Job>, workers: usize) -> Vec<Result<JobOutput, CliError>> {
    let n = jobs.len();
    let queue = Mutex::new(jobs.into_iter().enumerate().collect::<VecDeque<_>>());
    let results = Mutex::new((0..n).map(|_| None).collect::<Vec<_>>());
    std::thread::scope(|s| {
        for _ in 0..workers.min(n) {
            s.spawn(|| loop {
                let next = queue.lock().expect("queue lock").pop_front();
                let Some((i, job)) = next else { break };
                let r = job();
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

pub fn run(path: &Path) -> Result<RunOutcome, CliError> {
    let started = now();
    let (cfg, raw) = RunConfig::load(path)?;
    let targets = probes::targets(&cfg)?;
    let workers = threads(&cfg)?;
    let out = if cfg.output.is_absolute() {
        cfg.output.clone()
    } else {
        path.parent().unwrap_or(Path::new(".")).join(&cfg.output)
    };
    std::fs::create_dir_all(&out).map_err(|source| CliError::Io {
        path: out.clone(),
        source,
    })?;

    let results = pool(probes::jobs(&cfg, &targets), workers);
    let mut files = Vec::new();
    let mut checks = Vec::new();
    let mut write = |name: String, bytes: &[u8]| -> Result<(), CliError> {
        write_atomic(&out.join(&name), bytes)?;
        files.push(name);
        Ok(())
    };
    for r in results {
        let r = r?;
        checks.extend_from_slice(r.checks());
        match r {
            JobOutput::Probe(p) => {
                write(format!("{}.json", p.probe), &serde_json::to_vec_pretty(&p)?)?;
                write(format!("{}.csv", p.probe), &output::probe_csv(&p)?)?;
            }
            JobOutput::Solve(s) => {
                write(format!("solve_{}.json", s.name), &serde_json::to_vec_pretty(&s)?)?;
                write(format!("solve_{}.csv", s.name), &output::solve_csv(&s)?)?;
                for (name, bytes) in &s.snapshots {
                    write(name.clone(), bytes)?;
                }
            }
        }
    }
    if !checks.is_empty() {
        write("summary.json".into(), &serde_json::to_vec_pretty(&checks)?)?;
        write("summary.csv".into(), &output::summary_csv(&checks)?)?;
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    let manifest = Manifest {
        config: path.to_path_buf(),
        config_sha256: output::config_hash(&raw),
        dwl_version: env!("CARGO_PKG_VERSION").into(),
        core_version: dwl_core::VERSION.into(),
        seed: cfg.seed,
        threads: workers,
        started_unix: started,
        finished_unix: now(),
        files,
        passed: checks.len() - failed,
        failed,
    };
    write_atomic(&out.join("manifest.json"), &serde_json::to_vec_pretty(&manifest)?)?;
    Ok(RunOutcome { checks, output: out })
}
