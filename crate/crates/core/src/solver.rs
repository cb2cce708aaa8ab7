//! Small-data Picard iteration for the reduced wave and Dirac-Hartree systems, with
//! residual, scattering and conservation diagnostics.
//!
//! Each sign component solves `(-i d_t + theta h(D)) u_theta = G_theta(u)` as
//! `u_theta(t) = e^{-i theta t h} u_theta(0) + i int_0^t e^{-i theta (t-s) h} G_theta(s) ds`.

use serde::{Deserialize, Serialize};

use crate::angular::AngularAnalyzer;
use crate::dirac::{build_projector, DiracProjectorField};
use crate::error::{invalid, Error, Result};
use crate::grid::{self, Field, GridSpec, ScalarField, SpinorField, C64};
use crate::multiplier::Sign;
use crate::nonlinear::{hartree_term, wave_rhs, NullFormKind, YukawaKernel};
use crate::propagator::{evolve_spectral, halfwave_decompose, DispersionLaw, WaveDataPair};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "snake_case")]
pub enum System {
    WaveNull { kind: NullFormKind },
    DiracHartree { b: f64, mass: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PicardConfig {
    pub system: System,
    pub epsilon: f64,
    pub window: f64,
    pub dt: f64,
    pub max_iterations: usize,
    /// Stop once the sup-in-time difference is below `tolerance * ||data||`.
    pub tolerance: f64,
    /// Angular weight exponent for the reported data norm.
    pub sigma: f64,
    #[serde(default)]
    pub scattering_times: Vec<f64>,
}

impl PicardConfig {
    pub fn new(system: System, epsilon: f64, window: f64, dt: f64) -> Self {
        Self {
            system,
            epsilon,
            window,
            dt,
            max_iterations: 8,
            tolerance: 1e-12,
            sigma: 1.0,
            scattering_times: Vec::new(),
        }
    }

    pub fn dirac(epsilon: f64, window: f64, dt: f64) -> Self {
        Self::new(System::DiracHartree { b: 1.0, mass: 1.0 }, epsilon, window, dt)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(invalid("epsilon", "must be positive"));
        }
        if !(self.window > 0.0 && self.dt > 0.0 && self.dt < self.window) {
            return Err(invalid("window", "need 0 < dt < window"));
        }
        if self.max_iterations < 2 {
            return Err(invalid("max_iterations", "must be at least 2"));
        }
        if let System::DiracHartree { b, mass } = self.system {
            YukawaKernel::new(b)?;
            DispersionLaw::klein_gordon(mass)?;
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        (self.window / self.dt).round() as usize + 1
    }

    fn step(&self) -> f64 {
        self.window / (self.sample_count() - 1) as f64
    }
}

#[derive(Clone, Debug)]
pub enum InitialData {
    Wave(WaveDataPair),
    Dirac(SpinorField),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// `sup_t ||u^{(n+1)} - u^{(n)}||_{L^2}`, starting from the free evolution.
    pub differences: Vec<f64>,
    pub contraction_ratios: Vec<f64>,
    pub converged: bool,
    pub contracting: bool,
    pub residual: Option<f64>,
    pub scattering: Vec<(f64, f64)>,
    pub charge_drift: Option<f64>,
    pub projector_leak: f64,
    pub data_norm: f64,
    pub data_norm_weighted: f64,
    pub zero_mode_removed: f64,
    pub note: String,
    pub warnings: Vec<String>,
}

trait Reduced: Sync {
    type Comp: Field;
    type Frame: Clone + Send + Sync;

    fn law(&self) -> DispersionLaw;
    fn split(&self, f: &Self::Frame) -> [Self::Comp; 2];
    fn join(&self, c: [Self::Comp; 2]) -> Self::Frame;
    fn forcing(&self, f: &Self::Frame) -> Result<[Self::Comp; 2]>;
    fn distance(&self, a: &Self::Frame, b: &Self::Frame) -> f64;

    fn leak(&self, _c: &Self::Comp, _theta: Sign) -> f64 {
        0.0
    }
}

struct WaveSystem {
    kind: NullFormKind,
}

impl Reduced for WaveSystem {
    type Comp = ScalarField;
    type Frame = [ScalarField; 2];

    fn law(&self) -> DispersionLaw {
        DispersionLaw::Wave
    }

    fn split(&self, f: &Self::Frame) -> [ScalarField; 2] {
        f.clone()
    }

    fn join(&self, c: [ScalarField; 2]) -> Self::Frame {
        c
    }

    fn forcing(&self, f: &Self::Frame) -> Result<[ScalarField; 2]> {
        let g = wave_rhs(&grid::fft_inverse(&f[0]), &grid::fft_inverse(&f[1]), self.kind)?;
        Ok([grid::fft_forward(&g.plus), grid::fft_forward(&g.minus)])
    }

    fn distance(&self, a: &Self::Frame, b: &Self::Frame) -> f64 {
        let d = |k: usize| a[k].sub(&b[k]).expect("common grid").spectral_l2().powi(2);
        (d(0) + d(1)).sqrt()
    }
}

struct DiracSystem {
    kernel: YukawaKernel,
    mass: f64,
    proj: [DiracProjectorField; 2],
}

impl DiracSystem {
    fn project(&self, f: &SpinorField, theta: Sign) -> SpinorField {
        let mut out = f.clone();
        self.proj[idx(theta)].apply_spectral(&mut out);
        out
    }
}

fn idx(theta: Sign) -> usize {
    match theta {
        Sign::Plus => 0,
        Sign::Minus => 1,
    }
}

impl Reduced for DiracSystem {
    type Comp = SpinorField;
    type Frame = SpinorField;

    fn law(&self) -> DispersionLaw {
        DispersionLaw::KleinGordon { mass: self.mass }
    }

    fn split(&self, f: &SpinorField) -> [SpinorField; 2] {
        [self.project(f, Sign::Plus), self.project(f, Sign::Minus)]
    }

    fn join(&self, c: [SpinorField; 2]) -> SpinorField {
        c[0].add(&c[1]).expect("common grid")
    }

    fn forcing(&self, f: &SpinorField) -> Result<[SpinorField; 2]> {
        let n = grid::fft_forward(&hartree_term(&grid::fft_inverse(f), &self.kernel)?);
        Ok(self.split(&n))
    }

    fn distance(&self, a: &SpinorField, b: &SpinorField) -> f64 {
        a.sub(b).expect("common grid").spectral_l2()
    }

    fn leak(&self, c: &SpinorField, theta: Sign) -> f64 {
        self.project(c, theta.flip()).spectral_l2()
    }
}

fn twist<F: Field>(mut f: F, h: &[f64], theta: Sign, t: f64) -> F {
    evolve_spectral(&mut f, h, theta, -t);
    f
}

fn free_frames<S: Reduced>(sys: &S, data: &[S::Comp; 2], count: usize, dt: f64, h: &[f64]) -> Vec<S::Frame> {
    (0..count)
        .map(|k| {
            let t = k as f64 * dt;
            let c = [Sign::Plus, Sign::Minus].map(|th| {
                let mut x = data[idx(th)].clone();
                evolve_spectral(&mut x, h, th, t);
                x
            });
            sys.join(c)
        })
        .collect()
}

/// One Picard sweep: the new trajectory, the sup difference to `old`, and the
/// projector leak of the new sign components.
fn picard_step<S: Reduced>(
    sys: &S,
    data: &[S::Comp; 2],
    old: &[S::Frame],
    dt: f64,
    h: &[f64],
) -> Result<(Vec<S::Frame>, f64, f64)> {
    let signs = [Sign::Plus, Sign::Minus];
    let zero = || data[0].scaled(C64::new(0.0, 0.0));
    let mut acc = [zero(), zero()];
    let mut prev: Option<[S::Comp; 2]> = None;
    let mut out = Vec::with_capacity(old.len());
    let mut diff: f64 = 0.0;
    let mut leak: f64 = 0.0;
    for (k, frame) in old.iter().enumerate() {
        let t = k as f64 * dt;
        let g = sys.forcing(frame)?;
        let g = [0, 1].map(|s| twist(g[s].clone(), h, signs[s], t));
        if let Some(p) = &prev {
            for s in 0..2 {
                acc[s].add_scaled(&p[s], C64::new(0.5 * dt, 0.0))?;
                acc[s].add_scaled(&g[s], C64::new(0.5 * dt, 0.0))?;
            }
        }
        let comps = [0, 1].map(|s| {
            let mut x = data[s].clone();
            x.add_scaled(&acc[s], C64::new(0.0, 1.0)).expect("common grid");
            evolve_spectral(&mut x, h, signs[s], t);
            x
        });
        for s in 0..2 {
            leak = leak.max(sys.leak(&comps[s], signs[s]));
        }
        let next = sys.join(comps);
        diff = diff.max(sys.distance(&next, frame));
        out.push(next);
        prev = Some(g);
    }
    Ok((out, diff, leak))
}

fn residual_of<S: Reduced>(sys: &S, frames: &[S::Frame], dt: f64, h: &[f64]) -> Result<f64> {
    if frames.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: frames.len(),
        });
    }
    let signs = [Sign::Plus, Sign::Minus];
    let profile = |k: usize| {
        let c = sys.split(&frames[k]);
        let t = k as f64 * dt;
        let [a, b] = c;
        [twist(a, h, signs[0], t), twist(b, h, signs[1], t)]
    };
    let mut back = profile(0);
    let mut here = profile(1);
    let mut worst: f64 = 0.0;
    for k in 1..frames.len() - 1 {
        let ahead = profile(k + 1);
        let g = sys.forcing(&frames[k])?;
        let t = k as f64 * dt;
        let mut sq = 0.0;
        for s in 0..2 {
            // -i d_t v - e^{i theta t h} G
            let dv = ahead[s].sub(&back[s])?.scaled(C64::new(0.0, -1.0 / (2.0 * dt)));
            let r = dv.sub(&twist(g[s].clone(), h, signs[s], t))?;
            sq += r.spectral_l2().powi(2);
        }
        worst = worst.max(sq.sqrt());
        back = here;
        here = ahead;
    }
    Ok(worst)
}

fn scattering_of<S: Reduced>(sys: &S, frames: &[S::Frame], dt: f64, h: &[f64], times: &[f64]) -> Result<Vec<(f64, f64)>> {
    let window = (frames.len() - 1) as f64 * dt;
    let mut profiles = Vec::new();
    for &t in times {
        if !(0.0..=window + 1e-9).contains(&t) {
            return Err(invalid("scattering_times", format!("{t} outside [0, {window}]")));
        }
        let k = (t / dt).round() as usize;
        let tk = k as f64 * dt;
        let [a, b] = sys.split(&frames[k]);
        profiles.push((tk, [twist(a, h, Sign::Plus, tk), twist(b, h, Sign::Minus, tk)]));
    }
    let mut out = Vec::new();
    for w in profiles.windows(2) {
        let d0 = w[1].1[0].sub(&w[0].1[0])?.spectral_l2();
        let d1 = w[1].1[1].sub(&w[0].1[1])?.spectral_l2();
        out.push((w[1].0, (d0 * d0 + d1 * d1).sqrt()));
    }
    Ok(out)
}

#[derive(Clone, Debug)]
enum Frames {
    Wave(Vec<[ScalarField; 2]>),
    Dirac(Vec<SpinorField>),
}

/// Stored trajectory, kept spectrally.
#[derive(Clone, Debug)]
pub struct Solution {
    grid: GridSpec,
    dt: f64,
    system: System,
    frames: Frames,
}

impl Solution {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn system(&self) -> System {
        self.system
    }

    pub fn sample_count(&self) -> usize {
        match &self.frames {
            Frames::Wave(f) => f.len(),
            Frames::Dirac(f) => f.len(),
        }
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// `u_theta(t_k)` for the wave system.
    pub fn wave_component(&self, k: usize, theta: Sign) -> Option<ScalarField> {
        match &self.frames {
            Frames::Wave(f) => Some(grid::fft_inverse(&f[k][idx(theta)])),
            Frames::Dirac(_) => None,
        }
    }

    /// `psi(t_k)` for the Dirac system.
    pub fn spinor(&self, k: usize) -> Option<SpinorField> {
        match &self.frames {
            Frames::Dirac(f) => Some(grid::fft_inverse(&f[k])),
            Frames::Wave(_) => None,
        }
    }

    /// `Pi_theta psi(t_k)` for the Dirac system.
    pub fn spinor_component(&self, k: usize, theta: Sign) -> Result<Option<SpinorField>> {
        match (&self.frames, self.system) {
            (Frames::Dirac(f), System::DiracHartree { mass, .. }) => {
                let p = build_projector(&self.grid, mass, theta)?;
                let mut x = f[k].clone();
                p.apply_spectral(&mut x);
                Ok(Some(grid::fft_inverse(&x)))
            }
            _ => Ok(None),
        }
    }
}

fn dirac_system(grid: &GridSpec, b: f64, mass: f64) -> Result<DiracSystem> {
    Ok(DiracSystem {
        kernel: YukawaKernel::new(b)?,
        mass,
        proj: [build_projector(grid, mass, Sign::Plus)?, build_projector(grid, mass, Sign::Minus)?],
    })
}

fn weighted_norm<F: Field>(comps: &[F], sigma: f64) -> Result<f64> {
    let g = *comps[0].grid();
    let l_max = (g.points_per_axis() / 4).min(16);
    let an = AngularAnalyzer::new(&g, l_max)?;
    let mut sq = 0.0;
    for c in comps {
        sq += grid::lp(&an.apply_omega_weight(c, sigma)?, grid::Exponent::new(2.0)?).powi(2);
    }
    Ok(sq.sqrt())
}

fn run<S: Reduced>(
    sys: &S,
    data: [S::Comp; 2],
    cfg: &PicardConfig,
    rep: &mut SolveReport,
) -> Result<Vec<S::Frame>> {
    let grid = *data[0].grid();
    let h = sys.law().table(&grid);
    let count = cfg.sample_count();
    let dt = cfg.step();
    let mut frames = free_frames(sys, &data, count, dt, &h);
    let scale = rep.data_norm.max(f64::MIN_POSITIVE);
    for n in 0..cfg.max_iterations {
        let (next, diff, leak) = picard_step(sys, &data, &frames, dt, &h)?;
        frames = next;
        rep.iterations = n + 1;
        rep.projector_leak = rep.projector_leak.max(leak / scale);
        if let Some(&last) = rep.differences.last() {
            if last > 0.0 {
                let r = diff / last;
                rep.contraction_ratios.push(r);
                if r >= 1.0 {
                    rep.contracting = false;
                    let msg = format!("iteration {} did not contract (ratio {r:.3}); epsilon may be too large", n + 1);
                    log::warn!("{msg}");
                    rep.warnings.push(msg);
                }
            }
        }
        rep.differences.push(diff);
        if diff <= cfg.tolerance * rep.data_norm {
            rep.converged = true;
            break;
        }
    }
    rep.residual = Some(residual_of(sys, &frames, dt, &h)?);
    if !cfg.scattering_times.is_empty() {
        rep.scattering = scattering_of(sys, &frames, dt, &h, &cfg.scattering_times)?;
    }
    Ok(frames)
}

/// Picard iteration from the free evolution of the data.
pub fn picard_solve(data: &InitialData, cfg: &PicardConfig) -> Result<(Solution, SolveReport)> {
    cfg.validate()?;
    let mut rep = SolveReport {
        contracting: true,
        note: "finite window: uniform bounds over the admissible window stand in for global existence".into(),
        ..Default::default()
    };
    let (grid, frames) = match (data, cfg.system) {
        (InitialData::Wave(pair), System::WaveNull { kind }) => {
            let hw = halfwave_decompose(pair)?;
            rep.zero_mode_removed = hw.zero_mode_removed;
            if hw.zero_mode_removed > 1e-10 {
                rep.warnings.push(format!("velocity zero mode {:.3e} removed", hw.zero_mode_removed));
            }
            let comps = [grid::fft_forward(&hw.plus), grid::fft_forward(&hw.minus)];
            rep.data_norm = (comps[0].spectral_l2().powi(2) + comps[1].spectral_l2().powi(2)).sqrt();
            rep.data_norm_weighted = weighted_norm(&[hw.plus.clone(), hw.minus.clone()], cfg.sigma)?;
            check_size(&rep, cfg)?;
            let g = *pair.u0.grid();
            let f = run(&WaveSystem { kind }, comps, cfg, &mut rep)?;
            (g, Frames::Wave(f))
        }
        (InitialData::Dirac(psi), System::DiracHartree { b, mass }) => {
            let g = *psi.grid();
            let sys = dirac_system(&g, b, mass)?;
            let comps = sys.split(&grid::fft_forward(psi));
            rep.data_norm = (comps[0].spectral_l2().powi(2) + comps[1].spectral_l2().powi(2)).sqrt();
            rep.data_norm_weighted = weighted_norm(std::slice::from_ref(psi), cfg.sigma)?;
            check_size(&rep, cfg)?;
            let f = run(&sys, comps, cfg, &mut rep)?;
            let n0 = rep.data_norm;
            if n0 > 0.0 {
                let drift = f.iter().map(|x| (x.spectral_l2() - n0).abs()).fold(0.0, f64::max);
                rep.charge_drift = Some(drift / n0);
            } else {
                rep.charge_drift = Some(0.0);
            }
            (g, Frames::Dirac(f))
        }
        _ => return Err(invalid("data", "initial data do not match the configured system")),
    };
    Ok((
        Solution {
            grid,
            dt: cfg.step(),
            system: cfg.system,
            frames,
        },
        rep,
    ))
}

fn check_size(rep: &SolveReport, cfg: &PicardConfig) -> Result<()> {
    if rep.data_norm > cfg.epsilon * (1.0 + 1e-9) {
        return Err(invalid(
            "data",
            format!("norm {:.3e} exceeds epsilon {:.3e}", rep.data_norm, cfg.epsilon),
        ));
    }
    Ok(())
}

/// `sup_k ||(-i d_t + theta h(D)) u_theta - G_theta(u)||_{L^2}` over interior frames,
/// summed in quadrature over the signs.
pub fn residual_check(sol: &Solution) -> Result<f64> {
    match (&sol.frames, sol.system) {
        (Frames::Wave(f), System::WaveNull { kind }) => {
            let h = DispersionLaw::Wave.table(&sol.grid);
            residual_of(&WaveSystem { kind }, f, sol.dt, &h)
        }
        (Frames::Dirac(f), System::DiracHartree { b, mass }) => {
            let sys = dirac_system(&sol.grid, b, mass)?;
            let h = sys.law().table(&sol.grid);
            residual_of(&sys, f, sol.dt, &h)
        }
        _ => unreachable!("frames always match the system"),
    }
}

/// Cauchy differences `||f_{T_{k+1}} - f_{T_k}||` of `f_T = e^{theta i T h} u_theta(T)`.
pub fn scattering_diagnostic(sol: &Solution, times: &[f64]) -> Result<Vec<(f64, f64)>> {
    match (&sol.frames, sol.system) {
        (Frames::Wave(f), System::WaveNull { kind }) => {
            let h = DispersionLaw::Wave.table(&sol.grid);
            scattering_of(&WaveSystem { kind }, f, sol.dt, &h, times)
        }
        (Frames::Dirac(f), System::DiracHartree { b, mass }) => {
            let sys = dirac_system(&sol.grid, b, mass)?;
            let h = sys.law().table(&sol.grid);
            scattering_of(&sys, f, sol.dt, &h, times)
        }
        _ => unreachable!("frames always match the system"),
    }
}

/// Gaussian spinor `e^{-|x|^2 / (2 w^2)}` along `spinor`, projected to `Pi_theta` and
/// scaled to L2 norm `size`.
pub fn gaussian_spinor(grid: &GridSpec, width: f64, spinor: [C64; 4], mass: f64, theta: Sign, size: f64) -> Result<SpinorField> {
    let profile = ScalarField::from_fn(*grid, |x| {
        C64::new((-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / (2.0 * width * width)).exp(), 0.0)
    });
    let psi = SpinorField::from_profile(&profile, spinor);
    let p = crate::dirac::apply_projector(&psi, &build_projector(grid, mass, theta)?)?;
    let n = grid::fft_forward(&p).spectral_l2();
    if n == 0.0 {
        return Err(invalid("spinor", "projects to zero"));
    }
    Ok(p.scaled(C64::new(size / n, 0.0)))
}

/// Complex wave data: a Gaussian displacement and an imaginary, shifted Gaussian
/// velocity, scaled so the half-wave pair has L2 norm `size`.
pub fn gaussian_wave_data(grid: &GridSpec, width: f64, size: f64) -> Result<WaveDataPair> {
    let bump = |c: [f64; 3], phase: C64| {
        ScalarField::from_fn(*grid, move |x| {
            let r2 = (0..3).map(|a| (x[a] - c[a]).powi(2)).sum::<f64>();
            phase * (-r2 / (2.0 * width * width)).exp()
        })
    };
    let u0 = bump([0.0; 3], C64::new(1.0, 0.0));
    let u1 = bump([0.5 * width, 0.0, -0.3 * width], C64::new(0.0, 1.0 / width));
    let hw = halfwave_decompose(&WaveDataPair::new(u0.clone(), u1.clone())?)?;
    let n = (grid::fft_forward(&hw.plus).spectral_l2().powi(2) + grid::fft_forward(&hw.minus).spectral_l2().powi(2)).sqrt();
    if n == 0.0 {
        return Err(invalid("width", "data vanish on this grid"));
    }
    let s = C64::new(size / n, 0.0);
    WaveDataPair::new(u0.scaled(s), u1.scaled(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn e(k: usize) -> [C64; 4] {
        let mut s = [C64::new(0.0, 0.0); 4];
        s[k] = C64::new(1.0, 0.0);
        s
    }

    #[test]
    fn zero_data_is_a_fixed_point() {
        let g = GridSpec::new(PI, 8).unwrap();
        let cfg = PicardConfig::dirac(1e-2, 1.0, 0.25);
        let (sol, rep) = picard_solve(&InitialData::Dirac(SpinorField::zeros(&g)), &cfg).unwrap();
        assert_eq!(rep.iterations, 1);
        assert_eq!(rep.differences, vec![0.0]);
        assert!(sol.spinor(4).unwrap().components().iter().all(|c| c.iter().all(|v| v.norm() == 0.0)));
        let wave = PicardConfig::new(System::WaveNull { kind: NullFormKind::Q0 }, 1e-2, 1.0, 0.25);
        let pair = WaveDataPair::new(ScalarField::zeros(&g), ScalarField::zeros(&g)).unwrap();
        let (_, rep) = picard_solve(&InitialData::Wave(pair), &wave).unwrap();
        assert_eq!(rep.iterations, 1);
    }

    #[test]
    fn symmetric_real_wave_data_stay_free() {
        let g = GridSpec::new(4.0, 16).unwrap();
        let u0 = ScalarField::from_fn(g, |x| C64::new(1e-3 * (-(x[0] * x[0] + 2.0 * x[1] * x[1] + x[2] * x[2])).exp(), 0.0));
        let pair = WaveDataPair::new(u0, ScalarField::zeros(&g)).unwrap();
        let cfg = PicardConfig::new(System::WaveNull { kind: NullFormKind::qij(1, 2).unwrap() }, 1.0, 2.0, 0.1);
        let (_, rep) = picard_solve(&InitialData::Wave(pair), &cfg).unwrap();
        assert!(rep.differences[0] < 1e-14, "{:?}", rep.differences);
        assert!(rep.residual.unwrap() < 1e-12);
    }

    #[test]
    fn rejects_bad_configs() {
        let g = GridSpec::new(PI, 8).unwrap();
        let psi = gaussian_spinor(&g, 1.0, e(0), 1.0, Sign::Plus, 1.0).unwrap();
        let cfg = PicardConfig::dirac(1e-2, 1.0, 0.25);
        assert!(picard_solve(&InitialData::Dirac(psi.clone()), &cfg).is_err());
        let mut bad = PicardConfig::dirac(1.0, 1.0, 0.25);
        bad.max_iterations = 1;
        assert!(bad.validate().is_err());
        let pair = WaveDataPair::new(ScalarField::zeros(&g), ScalarField::zeros(&g)).unwrap();
        assert!(picard_solve(&InitialData::Wave(pair), &PicardConfig::dirac(1.0, 1.0, 0.25)).is_err());
    }

    #[test]
    fn dirac_solution_structure() {
        let g = GridSpec::new(6.0, 16).unwrap();
        let psi = gaussian_spinor(&g, 1.0, e(0), 1.0, Sign::Plus, 0.5).unwrap();
        let mut cfg = PicardConfig::dirac(0.5, 2.0, 0.1);
        cfg.scattering_times = vec![0.0, 1.0, 2.0];
        let (sol, rep) = picard_solve(&InitialData::Dirac(psi.clone()), &cfg).unwrap();
        assert!(rep.converged && rep.contracting, "{rep:?}");
        assert!(rep.projector_leak < 1e-8);
        assert!(rep.charge_drift.unwrap() < 1e-4, "{:?}", rep.charge_drift);
        assert!(rep.data_norm_weighted >= rep.data_norm * (1.0 - 1e-9));
        assert_eq!(rep.scattering.len(), 2);
        let direct = scattering_diagnostic(&sol, &cfg.scattering_times).unwrap();
        assert_eq!(direct, rep.scattering);
        assert_eq!(residual_check(&sol).unwrap(), rep.residual.unwrap());
        let plus = sol.spinor_component(3, Sign::Plus).unwrap().unwrap();
        let minus = sol.spinor_component(3, Sign::Minus).unwrap().unwrap();
        let total = sol.spinor(3).unwrap();
        assert!(plus.add(&minus).unwrap().sub(&total).unwrap().spectral_l2() < 1e-12);
        assert!(sol.wave_component(0, Sign::Plus).is_none());
    }

    #[test]
    fn free_dirac_wave_has_constant_profile() {
        let g = GridSpec::new(6.0, 16).unwrap();
        let psi = gaussian_spinor(&g, 1.0, e(1), 1.0, Sign::Minus, 1e-6).unwrap();
        let mut cfg = PicardConfig::dirac(1e-6, 2.0, 0.1);
        cfg.scattering_times = vec![0.5, 1.0, 1.5];
        let (_, rep) = picard_solve(&InitialData::Dirac(psi), &cfg).unwrap();
        assert!(rep.scattering.iter().all(|(_, d)| *d < 1e-12 * 1e-6 * 1e6), "{:?}", rep.scattering);
    }

    fn gaussian_wave(g: GridSpec, amp: f64) -> WaveDataPair {
        let u0 = ScalarField::from_fn(g, |x| C64::new(amp * (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp(), 0.0));
        let u1 = ScalarField::from_fn(g, |x| {
            let r2 = (x[0] - 0.5).powi(2) + x[1] * x[1] + (x[2] + 0.3).powi(2);
            C64::new(0.0, amp * x[0] * (-r2).exp())
        });
        WaveDataPair::new(u0, u1).unwrap()
    }

    #[test]
    fn plane_wave_matches_nonlinear_phase_rotation() {
        let g = GridSpec::new(PI, 8).unwrap();
        let n = [1, 0, 2];
        let xi = g.frequency(g.index_of_mode(n).unwrap());
        let p = crate::dirac::projector_symbol(xi, 1.0, Sign::Plus);
        let mut s = [C64::new(0.0, 0.0); 4];
        for (a, sa) in s.iter_mut().enumerate() {
            *sa = p[a][0] + p[a][2];
        }
        let norm = s.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let amp = 0.5;
        s.iter_mut().for_each(|v| *v *= amp / norm);
        let psi = SpinorField::from_profile(&ScalarField::plane_wave(g, n), s);
        let mut cfg = PicardConfig::dirac(10.0, 2.0, 1e-2);
        cfg.max_iterations = 40;
        let (sol, rep) = picard_solve(&InitialData::Dirac(psi.clone()), &cfg).unwrap();
        assert!(rep.converged, "{:?}", rep.differences);
        assert!(rep.residual.unwrap() <= 1e-6 * rep.data_norm, "{:?}", rep.residual);
        // psi(t) = e^{-i(<xi> - |psi|^2 / b^2) t} psi_0
        let rate = (1.0 + xi.iter().map(|v| v * v).sum::<f64>()).sqrt() - amp * amp;
        let k = sol.sample_count() - 1;
        let exact = psi.scaled(C64::from_polar(1.0, -rate * sol.time(k)));
        let err = grid::fft_forward(&sol.spinor(k).unwrap().sub(&exact).unwrap()).spectral_l2();
        assert!(err < 1e-5 * rep.data_norm, "{err}");
        assert!(rep.charge_drift.unwrap() < 1e-10);
    }

    #[test]
    fn first_correction_is_homogeneous() {
        let g = GridSpec::new(6.0, 16).unwrap();
        let first = |eps: f64| {
            let psi = gaussian_spinor(&g, 1.0, e(0), 1.0, Sign::Plus, eps).unwrap();
            let cfg = PicardConfig::dirac(eps, 1.0, 0.1);
            picard_solve(&InitialData::Dirac(psi), &cfg).unwrap().1.differences[0]
        };
        let r = first(0.2) / first(0.1);
        assert!((r - 8.0).abs() < 1e-6 * 8.0, "{r}");
        let first = |amp: f64| {
            let cfg = PicardConfig::new(System::WaveNull { kind: NullFormKind::qij(1, 3).unwrap() }, 10.0, 1.0, 0.1);
            picard_solve(&InitialData::Wave(gaussian_wave(g, amp)), &cfg).unwrap().1.differences[0]
        };
        let r = first(0.2) / first(0.1);
        assert!((r - 4.0).abs() < 1e-6 * 4.0, "{r}");
    }

    #[test]
    fn residual_is_second_order_in_dt() {
        let g = GridSpec::new(6.0, 16).unwrap();
        let psi = gaussian_spinor(&g, 1.0, e(0), 1.0, Sign::Plus, 1.0).unwrap();
        let res = |dt: f64| {
            let mut cfg = PicardConfig::dirac(1.0, 2.0, dt);
            cfg.max_iterations = 20;
            let (_, rep) = picard_solve(&InitialData::Dirac(psi.clone()), &cfg).unwrap();
            assert!(rep.converged);
            rep.residual.unwrap()
        };
        let r = res(0.1) / res(0.05);
        assert!(r > 3.5, "{r}");
    }

    #[test]
    fn wave_iteration_contracts() {
        let g = GridSpec::new(6.0, 16).unwrap();
        for kind in [NullFormKind::qij(1, 2).unwrap(), NullFormKind::Q0] {
            let cfg = PicardConfig::new(System::WaveNull { kind }, 10.0, 2.0, 0.1);
            let (sol, rep) = picard_solve(&InitialData::Wave(gaussian_wave(g, 0.5)), &cfg).unwrap();
            assert!(rep.contracting, "{kind:?} {:?}", rep.differences);
            assert!(rep.contraction_ratios.iter().all(|r| *r <= 0.5), "{:?}", rep.contraction_ratios);
            assert!(sol.wave_component(3, Sign::Minus).is_some());
        }
    }
}
