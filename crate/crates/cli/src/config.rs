use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Points per axis `M`.
    pub points: usize,
    /// Half period `L` of the box `[-L, L)^3`, in length units.
    pub half_period: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            points: 48,
            half_period: std::f64::consts::PI,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateConfig {
    pub delta: f64,
    pub eta: f64,
    pub s: f64,
    pub sigma: f64,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        let p = dwl_core::normbench::EstimateParameters::default();
        Self {
            delta: p.delta,
            eta: p.eta,
            s: p.s,
            sigma: p.sigma,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Output directory, relative to the config file.
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Worker count; `DWL_THREADS` overrides.
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub estimates: EstimateConfig,
    /// Slack overrides keyed by estimate name, e.g. `"strichartz.lambda" = 0.2`.
    #[serde(default)]
    pub slack: BTreeMap<String, f64>,
    #[serde(default)]
    pub probes: Probes,
    #[serde(default)]
    pub solve: Vec<SolveConfig>,
}

fn default_output() -> PathBuf {
    PathBuf::from("dwl-out")
}

fn default_threads() -> usize {
    1
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Probes {
    pub bernstein: Option<BernsteinConfig>,
    pub strichartz: Option<StrichartzConfig>,
    pub concentration: Option<ConcentrationConfig>,
    pub decay: Option<DecayConfig>,
    pub null_symbol: Option<NullSymbolConfig>,
    pub high_modulation: Option<HighModulationConfig>,
    pub bilinear: Option<BilinearConfig>,
    pub trilinear: Option<TrilinearConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct BernsteinConfig {
    pub grid: Option<GridConfig>,
    /// Dyadic frequencies `lambda`.
    pub lambdas: Vec<f64>,
    #[serde(default = "quarter")]
    pub alpha: f64,
    /// Lebesgue exponent; `inf` for the max norm.
    #[serde(default = "infinity")]
    pub p: f64,
    #[serde(default = "three")]
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct StrichartzConfig {
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub n_values: Vec<f64>,
    /// Frequency held fixed during the `N` sweep.
    #[serde(default = "sixteen")]
    pub n_lambda: f64,
    /// Time window, in time units.
    #[serde(default = "eight")]
    pub window: f64,
    #[serde(default = "three")]
    pub trials: usize,
    /// Klein-Gordon mass; the half-wave law when absent.
    pub mass: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ConcentrationConfig {
    pub grid: Option<GridConfig>,
    pub lambda: f64,
    /// `[alpha, N]` pairs.
    pub pairs: Vec<[f64; 2]>,
    #[serde(default = "four")]
    pub p: f64,
    #[serde(default = "three")]
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct DecayConfig {
    pub grid: Option<GridConfig>,
    pub times: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct NullSymbolConfig {
    pub grid: Option<GridConfig>,
    /// Target angles in radians.
    pub angles: Vec<f64>,
    pub radius: f64,
    #[serde(default = "three")]
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct HighModulationConfig {
    pub grid: Option<GridConfig>,
    /// Modulation scales in units of `2 pi / window`.
    pub d: Vec<f64>,
    #[serde(default = "plus")]
    pub sign: String,
    #[serde(default = "eight")]
    pub window: f64,
    #[serde(default = "samples")]
    pub count: usize,
    #[serde(default = "one")]
    pub jumps: usize,
    #[serde(default = "two")]
    pub q: f64,
    #[serde(default = "three")]
    pub trials: usize,
    /// Largest allowed max/min ratio across the sweep.
    #[serde(default = "five")]
    pub spread_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct BilinearConfig {
    pub grid: Option<GridConfig>,
    /// Input frequency, shared by both factors.
    pub lambda: f64,
    /// Output frequencies for the ratio sweep.
    #[serde(default)]
    pub mu: Vec<f64>,
    /// Angular scales for the `N` sweep, shared by the factors.
    #[serde(default)]
    pub n_values: Vec<f64>,
    /// Output frequency held fixed during the `N` sweep.
    pub n_mu: Option<f64>,
    /// Sign configurations such as `"++"`; the worst case is checked.
    #[serde(default = "pair_signs")]
    pub signs: Vec<String>,
    #[serde(default = "two")]
    pub window: f64,
    #[serde(default = "dt")]
    pub dt: f64,
    #[serde(default = "one_f")]
    pub mass: f64,
    #[serde(default = "two_u")]
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TrilinearConfig {
    pub grid: Option<GridConfig>,
    pub lambda: f64,
    #[serde(default)]
    pub mu: Vec<f64>,
    #[serde(default)]
    pub n_values: Vec<f64>,
    pub n_mu: Option<f64>,
    #[serde(default = "triple_signs")]
    pub signs: Vec<String>,
    /// `"q12"`, `"q13"`, `"q23"` or `"q0"`.
    #[serde(default = "q12")]
    pub form: String,
    #[serde(default = "two")]
    pub window: f64,
    #[serde(default = "dt")]
    pub dt: f64,
    #[serde(default = "two_u")]
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    WaveNull,
    DiracHartree,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub name: String,
    pub system: SystemKind,
    pub grid: Option<GridConfig>,
    /// Null form for the wave system.
    #[serde(default = "q12")]
    pub form: String,
    /// Yukawa range parameter for the Dirac system.
    #[serde(default = "one_f")]
    pub b: f64,
    #[serde(default = "one_f")]
    pub mass: f64,
    pub epsilon: f64,
    pub window: f64,
    pub dt: f64,
    #[serde(default = "eight_u")]
    pub max_iterations: usize,
    #[serde(default = "tolerance")]
    pub tolerance: f64,
    /// Gaussian width of the data, in length units.
    #[serde(default = "width")]
    pub width: f64,
    /// L2 size of the data; defaults to `epsilon`.
    pub size: Option<f64>,
    #[serde(default)]
    pub scattering_times: Vec<f64>,
    #[serde(default = "half")]
    pub contraction_bound: f64,
    #[serde(default = "two")]
    pub scattering_factor: f64,
    #[serde(default = "charge")]
    pub charge_bound: f64,
    /// Write every `k`-th frame as a binary snapshot; 0 disables.
    #[serde(default)]
    pub snapshot_stride: usize,
}

fn quarter() -> f64 {
    0.25
}
fn half() -> f64 {
    0.5
}
fn one() -> usize {
    1
}
fn one_f() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn two_u() -> usize {
    2
}
fn three() -> usize {
    3
}
fn four() -> f64 {
    4.0
}
fn five() -> f64 {
    5.0
}
fn eight() -> f64 {
    8.0
}
fn eight_u() -> usize {
    8
}
fn sixteen() -> f64 {
    16.0
}
fn samples() -> usize {
    128
}
fn infinity() -> f64 {
    f64::INFINITY
}
fn dt() -> f64 {
    1.0 / 32.0
}
fn tolerance() -> f64 {
    1e-12
}
fn width() -> f64 {
    1.5
}
fn charge() -> f64 {
    1e-4
}
fn plus() -> String {
    "+".into()
}
fn q12() -> String {
    "q12".into()
}
fn pair_signs() -> Vec<String> {
    vec!["++".into(), "+-".into()]
}
fn triple_signs() -> Vec<String> {
    vec!["+++".into(), "++-".into()]
}

impl RunConfig {
    pub fn parse(raw: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(raw).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate(raw)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, String), CliError> {
        let raw = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let cfg = Self::parse(&raw).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        Ok((cfg, raw))
    }

    fn validate(&self, raw: &str) -> Result<(), CliError> {
        let fail = |section: &str, key: &str, msg: &str| {
            let at = locate(raw, section, key).map(|l| format!("line {l}: ")).unwrap_or_default();
            let path = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
            Err(CliError::Config(format!("{at}{path}: {msg}")))
        };
        let grid_ok = |g: &GridConfig| g.points >= 4 && g.half_period > 0.0;
        if !grid_ok(&self.grid) {
            return fail("grid", "points", "need points >= 4 and half_period > 0");
        }
        if self.threads == 0 {
            return fail("", "threads", "must be at least 1");
        }
        let known: Vec<String> = dwl_core::normbench::EstimateParameters::default()
            .targets()
            .into_iter()
            .map(|t| t.name)
            .collect();
        for (name, v) in &self.slack {
            if !known.contains(name) {
                return fail("slack", name, &format!("unknown estimate; expected one of {}", known.join(", ")));
            }
            if !(*v > 0.0) {
                return fail("slack", name, "slack must be positive");
            }
        }
        let p = &self.probes;
        let nonempty = |section: &str, key: &str, n: usize| if n == 0 { fail(section, key, "sweep must be nonempty") } else { Ok(()) };
        let check_grid = |section: &str, g: &Option<GridConfig>| match g {
            Some(g) if !grid_ok(g) => fail(section, "grid", "need points >= 4 and half_period > 0"),
            _ => Ok(()),
        };
        if let Some(c) = &p.bernstein {
            check_grid("probes.bernstein", &c.grid)?;
            nonempty("probes.bernstein", "lambdas", c.lambdas.len())?;
        }
        if let Some(c) = &p.strichartz {
            check_grid("probes.strichartz", &c.grid)?;
            nonempty("probes.strichartz", "lambdas", c.lambdas.len() + c.n_values.len())?;
        }
        if let Some(c) = &p.concentration {
            check_grid("probes.concentration", &c.grid)?;
            nonempty("probes.concentration", "pairs", c.pairs.len())?;
        }
        if let Some(c) = &p.decay {
            check_grid("probes.decay", &c.grid)?;
            nonempty("probes.decay", "times", c.times.len())?;
        }
        if let Some(c) = &p.null_symbol {
            check_grid("probes.null_symbol", &c.grid)?;
            nonempty("probes.null_symbol", "angles", c.angles.len())?;
        }
        if let Some(c) = &p.high_modulation {
            check_grid("probes.high_modulation", &c.grid)?;
            nonempty("probes.high_modulation", "d", c.d.len())?;
            if parse_signs(&c.sign, 1).is_none() {
                return fail("probes.high_modulation", "sign", "expected \"+\" or \"-\"");
            }
        }
        if let Some(c) = &p.bilinear {
            check_grid("probes.bilinear", &c.grid)?;
            nonempty("probes.bilinear", "mu", c.mu.len() + c.n_values.len())?;
            nonempty("probes.bilinear", "signs", c.signs.len())?;
            if !c.n_values.is_empty() && c.n_mu.is_none() {
                return fail("probes.bilinear", "n_mu", "required with n_values");
            }
            if let Some(s) = c.signs.iter().find(|s| parse_signs(s, 2).is_none()) {
                return fail("probes.bilinear", "signs", &format!("bad sign configuration {s:?}"));
            }
        }
        if let Some(c) = &p.trilinear {
            check_grid("probes.trilinear", &c.grid)?;
            nonempty("probes.trilinear", "mu", c.mu.len() + c.n_values.len())?;
            nonempty("probes.trilinear", "signs", c.signs.len())?;
            if !c.n_values.is_empty() && c.n_mu.is_none() {
                return fail("probes.trilinear", "n_mu", "required with n_values");
            }
            if let Some(s) = c.signs.iter().find(|s| parse_signs(s, 3).is_none()) {
                return fail("probes.trilinear", "signs", &format!("bad sign configuration {s:?}"));
            }
            if parse_form(&c.form).is_none() {
                return fail("probes.trilinear", "form", "expected q12, q13, q23 or q0");
            }
        }
        let mut names = std::collections::BTreeSet::new();
        for c in &self.solve {
            check_grid("solve", &c.grid)?;
            if !names.insert(c.name.clone()) {
                return fail("solve", "name", &format!("duplicate solve name {:?}", c.name));
            }
            if c.name.is_empty() || !c.name.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '_' || ch == '-') {
                return fail("solve", "name", "use letters, digits, '-' and '_'");
            }
            if parse_form(&c.form).is_none() {
                return fail("solve", "form", "expected q12, q13, q23 or q0");
            }
            if !(c.epsilon > 0.0) {
                return fail("solve", "epsilon", "must be positive");
            }
            if c.max_iterations < 2 {
                return fail("solve", "max_iterations", "must be at least 2");
            }
        }
        Ok(())
    }
}

/// First line (1-based) assigning `key` within `[section]`, falling back to the section header.
fn locate(raw: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (i, line) in raw.lines().enumerate() {
        let t = line.trim();
        if let Some(h) = t.strip_prefix('[') {
            current = h.trim_start_matches('[').trim_end_matches(']').trim().to_string();
            if current == section && header.is_none() {
                header = Some(i + 1);
            }
            continue;
        }
        if current == section {
            let k = t.split('=').next().unwrap_or("").trim().trim_matches('"');
            if k == key && t.contains('=') {
                return Some(i + 1);
            }
        }
    }
    header
}

pub fn parse_signs(s: &str, n: usize) -> Option<Vec<dwl_core::multiplier::Sign>> {
    use dwl_core::multiplier::Sign;
    if s.chars().count() != n {
        return None;
    }
    s.chars()
        .map(|c| match c {
            '+' => Some(Sign::Plus),
            '-' => Some(Sign::Minus),
            _ => None,
        })
        .collect()
}

pub fn parse_form(s: &str) -> Option<dwl_core::nonlinear::NullFormKind> {
    use dwl_core::nonlinear::NullFormKind;
    match s.to_ascii_lowercase().as_str() {
        "q0" => Some(NullFormKind::Q0),
        "q12" => NullFormKind::qij(1, 2).ok(),
        "q13" => NullFormKind::qij(1, 3).ok(),
        "q23" => NullFormKind::qij(2, 3).ok(),
        _ => None,
    }
}

pub fn schema() -> serde_json::Value {
    serde_json::to_value(schemars::schema_for!(RunConfig)).expect("schema serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_configs_validate() {
        for raw in [include_str!("../../../configs/quick.toml"), include_str!("../../../configs/full.toml")] {
            RunConfig::parse(raw).unwrap();
        }
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = RunConfig::parse("seed = 3\n").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.grid.points, 48);
        assert!(cfg.probes.strichartz.is_none() && cfg.solve.is_empty());
    }

    #[test]
    fn errors_name_line_and_field() {
        let raw = "seed = 1\n[probes.strichartz]\nlambdas = []\n";
        let e = RunConfig::parse(raw).unwrap_err().to_string();
        assert!(e.contains("line 3") && e.contains("probes.strichartz.lambdas"), "{e}");
        let e = RunConfig::parse("seed = 1\n[probes.nope]\nx = 1\n").unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("nope"), "{e}");
        let e = RunConfig::parse("seed = 1\n[slack]\n\"made.up\" = 0.1\n").unwrap_err().to_string();
        assert!(e.contains("line 3") && e.contains("slack.made.up"), "{e}");
        let e = RunConfig::parse("seed = \"x\"\n").unwrap_err().to_string();
        assert!(e.contains("line 1"), "{e}");
    }

    #[test]
    fn sign_and_form_parsing() {
        assert_eq!(parse_signs("+-", 2).unwrap().len(), 2);
        assert!(parse_signs("+-", 3).is_none());
        assert!(parse_signs("+x", 2).is_none());
        assert!(parse_form("Q0").is_some());
        assert!(parse_form("q11").is_none());
    }

    #[test]
    fn schema_lists_sections() {
        let s = schema().to_string();
        for key in ["probes", "solve", "slack", "grid", "seed"] {
            assert!(s.contains(key), "{key}");
        }
    }
}
