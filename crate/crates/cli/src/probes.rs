use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use dwl_core::grid::{GridSpec, C64};
use dwl_core::multiplier::{bernstein_probe, DyadicScale, Sign};
use dwl_core::normbench::{
    self, combine_worst, BilinearSettings, Direction, EstimateParameters, ExponentTarget, HighModulationSettings,
    TrilinearSettings,
};
use dwl_core::propagator::{self, DispersionLaw, StrichartzSettings};
use dwl_core::solver::{self, InitialData, PicardConfig, SolveReport, System};
use dwl_core::{angular, nonlinear, ProbeReport};

use crate::config::{parse_form, parse_signs, GridConfig, RunConfig, SolveConfig, SystemKind};
use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub estimate: String,
    pub fitted: Option<f64>,
    pub target: String,
    pub predicted: f64,
    pub slack: f64,
    pub pass: bool,
}

impl Check {
    fn exponent(t: &ExponentTarget, fitted: Option<f64>) -> Self {
        Self {
            estimate: t.name.clone(),
            fitted,
            target: t.describe(),
            predicted: t.predicted,
            slack: t.slack,
            pass: fitted.is_some_and(|f| t.check(f)),
        }
    }

    fn bound(name: String, value: f64, bound: f64, direction: Direction) -> Self {
        let pass = match direction {
            Direction::AtLeast => value >= bound,
            _ => value <= bound,
        };
        let op = if direction == Direction::AtLeast { ">=" } else { "<=" };
        Self {
            estimate: name,
            fitted: Some(value),
            target: format!("{op} {bound}"),
            predicted: bound,
            slack: 0.0,
            pass,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LabeledReport {
    pub label: String,
    pub report: ProbeReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeOutput {
    pub probe: String,
    pub reports: Vec<LabeledReport>,
    pub checks: Vec<Check>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveOutput {
    pub name: String,
    pub config: PicardConfig,
    pub report: SolveReport,
    pub checks: Vec<Check>,
    pub seconds: f64,
    #[serde(skip)]
    pub snapshots: Vec<(String, Vec<u8>)>,
}

pub enum JobOutput {
    Probe(ProbeOutput),
    Solve(SolveOutput),
}

impl JobOutput {
    pub fn checks(&self) -> &[Check] {
        match self {
            JobOutput::Probe(p) => &p.checks,
            JobOutput::Solve(s) => &s.checks,
        }
    }
}

pub struct ProbeInfo {
    pub name: &'static str,
    pub estimate: &'static str,
    pub parameters: &'static str,
}

pub const CATALOGUE: &[ProbeInfo] = &[
    ProbeInfo {
        name: "bernstein",
        estimate: "L^inf / L^2 ratio of cap-and-annulus pieces grows at most like lambda^{3/2} (bernstein.lambda)",
        parameters: "lambdas (required), alpha = 0.25, p = inf, trials = 3",
    },
    ProbeInfo {
        name: "strichartz",
        estimate: "angular Strichartz bound L^2_t L^q_x with q = 4/(1-eta): exponents in lambda and N (strichartz.lambda, strichartz.N)",
        parameters: "lambdas, n_values (one of them required), n_lambda = 16, window = 8, trials = 3, mass = none",
    },
    ProbeInfo {
        name: "concentration",
        estimate: "cap restriction of angularly localized data gains (alpha N)^s in L^4 (concentration.alpha_N)",
        parameters: "lambda, pairs = [[alpha, N], ...] (required), p = 4, trials = 3",
    },
    ProbeInfo {
        name: "decay",
        estimate: "dispersive L^inf decay t^{-1} of free half-waves (decay.t)",
        parameters: "times (required)",
    },
    ProbeInfo {
        name: "null_symbol",
        estimate: "Q_ij gains one power of the angle between interacting frequencies (null_symbol.angle)",
        parameters: "angles, radius (required), trials = 3",
    },
    ProbeInfo {
        name: "high_modulation",
        estimate: "high-modulation pieces of adapted-space functions: normalized ratio bounded across d (high_modulation.spread)",
        parameters: "d (required, units of 2 pi / window), sign = \"+\", window = 8, count = 128, jumps = 1, q = 2, trials = 3, spread_bound = 5",
    },
    ProbeInfo {
        name: "bilinear",
        estimate: "low-output bilinear Klein-Gordon estimate: gain (mu/lambda)^delta and N^{1-eta} loss (bilinear.ratio, bilinear.N)",
        parameters: "lambda (required), mu, n_values, n_mu, signs = [\"++\", \"+-\"], window = 2, dt = 1/32, mass = 1, trials = 2",
    },
    ProbeInfo {
        name: "trilinear",
        estimate: "null-form trilinear estimate for the wave system with the same gains (trilinear.ratio, trilinear.N)",
        parameters: "lambda (required), mu, n_values, n_mu, signs = [\"+++\", \"++-\"], form = \"q12\", window = 2, dt = 1/32, trials = 2",
    },
];

pub type Targets = BTreeMap<String, ExponentTarget>;

pub fn targets(cfg: &RunConfig) -> Result<Targets, CliError> {
    let e = cfg.estimates;
    let params = EstimateParameters {
        delta: e.delta,
        eta: e.eta,
        s: e.s,
        sigma: e.sigma,
    };
    params.validate().map_err(|err| CliError::Config(format!("estimates: {err}")))?;
    let mut out = Targets::new();
    for t in params.targets() {
        let t = match cfg.slack.get(&t.name) {
            Some(&s) => t.with_slack(s).map_err(|err| CliError::Config(format!("slack.{}: {err}", t.name)))?,
            None => t,
        };
        out.insert(t.name.clone(), t);
    }
    Ok(out)
}

fn grid_of(default: &GridConfig, own: &Option<GridConfig>) -> Result<GridSpec, dwl_core::Error> {
    let g = own.as_ref().unwrap_or(default);
    GridSpec::new(g.half_period, g.points)
}

fn scales(v: &[f64]) -> Result<Vec<DyadicScale>, dwl_core::Error> {
    v.iter().map(|&x| DyadicScale::from_value(x)).collect()
}

fn exponent_check(targets: &Targets, name: &str, rep: &ProbeReport) -> Check {
    Check::exponent(&targets[name], rep.fitted_exponent)
}

fn single(label: &str, report: ProbeReport) -> LabeledReport {
    LabeledReport {
        label: label.into(),
        report,
    }
}

pub type Job = Box<dyn FnOnce() -> Result<JobOutput, CliError> + Send>;

fn probe_job(
    name: &'static str,
    f: impl FnOnce() -> Result<(Vec<LabeledReport>, Vec<Check>), dwl_core::Error> + Send + 'static,
) -> Job {
    Box::new(move || {
        let t0 = Instant::now();
        log::info!("running probe {name}");
        let (reports, checks) = f().map_err(|source| CliError::Probe {
            probe: name.into(),
            source,
        })?;
        Ok(JobOutput::Probe(ProbeOutput {
            probe: name.into(),
            reports,
            checks,
            seconds: t0.elapsed().as_secs_f64(),
        }))
    })
}

pub fn jobs(cfg: &RunConfig, targets: &Targets) -> Vec<Job> {
    let mut out: Vec<Job> = Vec::new();
    let seed = cfg.seed;
    let base = cfg.grid;
    let eta = cfg.estimates.eta;
    let s_exp = cfg.estimates.s;
    let p = cfg.probes.clone();

    if let Some(c) = p.bernstein {
        let t = targets.clone();
        out.push(probe_job("bernstein", move || {
            let g = grid_of(&base, &c.grid)?;
            let rep = bernstein_probe(&g, &scales(&c.lambdas)?, c.alpha, c.p, c.trials, seed)?;
            let check = exponent_check(&t, "bernstein.lambda", &rep);
            Ok((vec![single("sweep", rep)], vec![check]))
        }));
    }
    if let Some(c) = p.strichartz {
        let t = targets.clone();
        out.push(probe_job("strichartz", move || {
            let g = grid_of(&base, &c.grid)?;
            let law = match c.mass {
                Some(m) => DispersionLaw::klein_gordon(m)?,
                None => DispersionLaw::Wave,
            };
            let set = StrichartzSettings {
                eta,
                window: c.window,
                trials: c.trials,
                law,
                theta: Sign::Plus,
            };
            let (mut reps, mut checks) = (Vec::new(), Vec::new());
            if !c.lambdas.is_empty() {
                let rep = propagator::strichartz_probe(&g, &scales(&c.lambdas)?, &[DyadicScale::ONE], &set, seed)?;
                checks.push(exponent_check(&t, "strichartz.lambda", &rep));
                reps.push(single("lambda", rep));
            }
            if !c.n_values.is_empty() {
                let l = DyadicScale::from_value(c.n_lambda)?;
                let rep = propagator::strichartz_probe(&g, &[l], &scales(&c.n_values)?, &set, seed)?;
                checks.push(exponent_check(&t, "strichartz.N", &rep));
                reps.push(single("N", rep));
            }
            Ok((reps, checks))
        }));
    }
    if let Some(c) = p.concentration {
        let t = targets.clone();
        out.push(probe_job("concentration", move || {
            let g = grid_of(&base, &c.grid)?;
            let pairs = c
                .pairs
                .iter()
                .map(|[a, n]| DyadicScale::from_value(*n).map(|n| (*a, n)))
                .collect::<Result<Vec<_>, _>>()?;
            let l = DyadicScale::from_value(c.lambda)?;
            let rep = angular::concentration_probe(&g, l, &pairs, c.p, s_exp, c.trials, seed)?;
            let check = exponent_check(&t, "concentration.alpha_N", &rep);
            Ok((vec![single("sweep", rep)], vec![check]))
        }));
    }
    if let Some(c) = p.decay {
        let t = targets.clone();
        out.push(probe_job("decay", move || {
            let g = grid_of(&base, &c.grid)?;
            let rep = propagator::decay_probe(&propagator::quadrupole_datum(&g), &c.times)?;
            let check = exponent_check(&t, "decay.t", &rep);
            Ok((vec![single("sweep", rep)], vec![check]))
        }));
    }
    if let Some(c) = p.null_symbol {
        let t = targets.clone();
        out.push(probe_job("null_symbol", move || {
            let g = grid_of(&base, &c.grid)?;
            let rep = nonlinear::null_symbol_probe(&g, &c.angles, c.radius, c.trials)?;
            let check = exponent_check(&t, "null_symbol.angle", &rep);
            Ok((vec![single("sweep", rep)], vec![check]))
        }));
    }
    if let Some(c) = p.high_modulation {
        out.push(probe_job("high_modulation", move || {
            let g = grid_of(&base, &c.grid)?;
            let set = HighModulationSettings {
                window: c.window,
                count: c.count,
                jumps: c.jumps,
                q: c.q,
                trials: c.trials,
            };
            let ds: Vec<f64> = c.d.iter().map(|d| d * 2.0 * PI / c.window).collect();
            let theta = parse_signs(&c.sign, 1).expect("validated")[0];
            let rep = normbench::high_modulation_probe(&g, &ds, theta, &set, seed)?;
            let spread = rep.max_value() / rep.min_value();
            let check = Check::bound("high_modulation.spread".into(), spread, c.spread_bound, Direction::AtMost);
            Ok((vec![single("sweep", rep)], vec![check]))
        }));
    }
    if let Some(c) = p.bilinear {
        let t = targets.clone();
        out.push(probe_job("bilinear", move || {
            let g = grid_of(&base, &c.grid)?;
            let set = BilinearSettings {
                window: c.window,
                dt: c.dt,
                eta,
                mass: c.mass,
                trials: c.trials,
            };
            let l = DyadicScale::from_value(c.lambda)?;
            let signs: Vec<[Sign; 2]> = c
                .signs
                .iter()
                .map(|s| {
                    let v = parse_signs(s, 2).expect("validated");
                    [v[0], v[1]]
                })
                .collect();
            let (mut reps, mut checks) = (Vec::new(), Vec::new());
            let mut sweep = |param: &str, mus: Vec<DyadicScale>, ns: Vec<[DyadicScale; 2]>| -> Result<(), dwl_core::Error> {
                let mut per = Vec::new();
                for (label, th) in c.signs.iter().zip(&signs) {
                    let rep = normbench::bilinear_probe(&g, &mus, [l, l], &ns, *th, &set, seed)?;
                    reps.push(single(&format!("{param}:{label}"), rep.clone()));
                    per.push(rep);
                }
                let worst = combine_worst("bilinear", &per)?;
                checks.push(exponent_check(&t, &format!("bilinear.{param}"), &worst));
                reps.push(single(&format!("{param}:worst"), worst));
                Ok(())
            };
            if !c.mu.is_empty() {
                sweep("ratio", scales(&c.mu)?, vec![[DyadicScale::ONE; 2]])?;
            }
            if !c.n_values.is_empty() {
                let mu = DyadicScale::from_value(c.n_mu.expect("validated"))?;
                let ns = scales(&c.n_values)?.into_iter().map(|n| [n, n]).collect();
                sweep("N", vec![mu], ns)?;
            }
            Ok((reps, checks))
        }));
    }
    if let Some(c) = p.trilinear {
        let t = targets.clone();
        out.push(probe_job("trilinear", move || {
            let g = grid_of(&base, &c.grid)?;
            let set = TrilinearSettings {
                window: c.window,
                dt: c.dt,
                eta,
                trials: c.trials,
                kind: parse_form(&c.form).expect("validated"),
            };
            let l = DyadicScale::from_value(c.lambda)?;
            let signs: Vec<[Sign; 3]> = c
                .signs
                .iter()
                .map(|s| {
                    let v = parse_signs(s, 3).expect("validated");
                    [v[0], v[1], v[2]]
                })
                .collect();
            let (mut reps, mut checks) = (Vec::new(), Vec::new());
            let mut sweep = |param: &str, mus: Vec<DyadicScale>, ns: Vec<[DyadicScale; 3]>| -> Result<(), dwl_core::Error> {
                let mut per = Vec::new();
                for (label, th) in c.signs.iter().zip(&signs) {
                    let rep = normbench::trilinear_probe(&g, &mus, [l, l], &ns, *th, &set, seed)?;
                    reps.push(single(&format!("{param}:{label}"), rep.clone()));
                    per.push(rep);
                }
                let worst = combine_worst("trilinear", &per)?;
                checks.push(exponent_check(&t, &format!("trilinear.{param}"), &worst));
                reps.push(single(&format!("{param}:worst"), worst));
                Ok(())
            };
            if !c.mu.is_empty() {
                sweep("ratio", scales(&c.mu)?, vec![[DyadicScale::ONE; 3]])?;
            }
            if !c.n_values.is_empty() {
                let mu = DyadicScale::from_value(c.n_mu.expect("validated"))?;
                let ns = scales(&c.n_values)?.into_iter().map(|n| [n, n, n]).collect();
                sweep("N", vec![mu], ns)?;
            }
            Ok((reps, checks))
        }));
    }
    for s in cfg.solve.clone() {
        out.push(Box::new(move || solve_job(&base, s)));
    }
    out
}

fn solve_job(base: &GridConfig, c: SolveConfig) -> Result<JobOutput, CliError> {
    let t0 = Instant::now();
    log::info!("running solve {}", c.name);
    let wrap = |source| CliError::Probe {
        probe: format!("solve.{}", c.name),
        source,
    };
    let g = grid_of(base, &c.grid).map_err(wrap)?;
    let system = match c.system {
        SystemKind::WaveNull => System::WaveNull {
            kind: parse_form(&c.form).expect("validated"),
        },
        SystemKind::DiracHartree => System::DiracHartree { b: c.b, mass: c.mass },
    };
    let mut pc = PicardConfig::new(system, c.epsilon, c.window, c.dt);
    pc.max_iterations = c.max_iterations;
    pc.tolerance = c.tolerance;
    pc.scattering_times = c.scattering_times.clone();
    let size = c.size.unwrap_or(c.epsilon);
    let data = match system {
        System::WaveNull { .. } => InitialData::Wave(solver::gaussian_wave_data(&g, c.width, size).map_err(wrap)?),
        System::DiracHartree { mass, .. } => {
            let mut e0 = [C64::new(0.0, 0.0); 4];
            e0[0] = C64::new(1.0, 0.0);
            InitialData::Dirac(solver::gaussian_spinor(&g, c.width, e0, mass, Sign::Plus, size).map_err(wrap)?)
        }
    };
    let (sol, rep) = solver::picard_solve(&data, &pc).map_err(wrap)?;
    let key = |q: &str| format!("solve.{}.{q}", c.name);
    let worst_ratio = rep.contraction_ratios.iter().copied().fold(0.0, f64::max);
    let mut checks = vec![Check::bound(key("contraction"), worst_ratio, c.contraction_bound, Direction::AtMost)];
    if rep.scattering.len() >= 2 {
        let factor = rep
            .scattering
            .windows(2)
            .map(|w| if w[1].1 > 0.0 { w[0].1 / w[1].1 } else { f64::INFINITY })
            .fold(f64::INFINITY, f64::min);
        checks.push(Check::bound(key("scattering"), factor, c.scattering_factor, Direction::AtLeast));
    }
    if let Some(d) = rep.charge_drift {
        checks.push(Check::bound(key("charge"), d, c.charge_bound, Direction::AtMost));
    }
    let mut snapshots = Vec::new();
    if c.snapshot_stride > 0 {
        for k in (0..sol.sample_count()).step_by(c.snapshot_stride) {
            let mut push = |suffix: String, f: &dyn Fn(&mut Vec<u8>) -> dwl_core::Result<()>| -> Result<(), CliError> {
                let mut buf = Vec::new();
                f(&mut buf).map_err(wrap)?;
                snapshots.push((format!("solve_{}_{k:05}{suffix}.bin", c.name), buf));
                Ok(())
            };
            if let Some(psi) = sol.spinor(k) {
                push(String::new(), &|b| dwl_core::grid::write_snapshot(&psi, b))?;
            }
            for th in Sign::both() {
                if let Some(u) = sol.wave_component(k, th) {
                    let suffix = if th == Sign::Plus { "_plus" } else { "_minus" };
                    push(suffix.into(), &|b| dwl_core::grid::write_snapshot(&u, b))?;
                }
            }
        }
    }
    Ok(JobOutput::Solve(SolveOutput {
        name: c.name.clone(),
        config: pc,
        report: rep,
        checks,
        seconds: t0.elapsed().as_secs_f64(),
        snapshots,
    }))
}
