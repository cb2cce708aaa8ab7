//! Estimate-verification harness: the discrete 2-variation norm, exponent targets, the
//! high-modulation bound, and the localized bilinear and trilinear probes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{self, compose_time, Exponent, Field, GridSpec, ScalarField, SpacetimeField, SpinorField, C64};
use crate::multiplier::{annulus_symbol, annulus_warnings, project_modulation, Band, DyadicScale, ModulationOptions, Sign, RHO_ID};
use crate::nonlinear::NullFormKind;
use crate::propagator::{concentrated_data, evolve_spectral, localized_data, DispersionLaw};
use crate::report::{Environment, ProbeReport};

pub use crate::report::{fit_exponent, Fit};

/// `(sum |v(t_k) - v(t_{k-1})|^2)^{1/2}` maximized over increasing subsequences, by dynamic
/// programming over all pairs.
pub fn v2_variation_by(count: usize, dist: impl Fn(usize, usize) -> f64) -> f64 {
    let mut best = vec![0.0f64; count];
    let mut top = 0.0f64;
    for j in 1..count {
        for i in 0..j {
            let d = dist(i, j);
            let cand = best[i] + d * d;
            if cand > best[j] {
                best[j] = cand;
            }
        }
        top = top.max(best[j]);
    }
    top.sqrt()
}

/// Exhaustive enumeration of every nonempty subsequence; only for short paths.
pub fn v2_variation_bruteforce(count: usize, dist: impl Fn(usize, usize) -> f64) -> Result<f64> {
    if count > 20 {
        return Err(invalid("count", format!("{count} samples is too many to enumerate")));
    }
    let mut top = 0.0f64;
    for mask in 1u32..(1u32 << count) {
        let mut sum = 0.0;
        let mut prev: Option<usize> = None;
        for k in (0..count).filter(|k| mask & (1 << k) != 0) {
            if let Some(p) = prev {
                let d = dist(p, k);
                sum += d * d;
            }
            prev = Some(k);
        }
        top = top.max(sum);
    }
    Ok(top.sqrt())
}

pub fn v2_norm_scalars(path: &[f64]) -> Result<f64> {
    if path.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let sup = path.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(sup + v2_variation_by(path.len(), |i, j| (path[j] - path[i]).abs()))
}

/// `||v||_{L^inf_t L^2_x} + |v|_{V^2}` with the L2 distance between samples.
pub fn v2_norm<F: Field>(path: &[F]) -> Result<f64> {
    if path.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let two = Exponent::new(2.0)?;
    let k = path.len();
    let mut dist = vec![0.0; k * k];
    for i in 0..k {
        for j in i + 1..k {
            dist[i * k + j] = grid::lp(&path[j].sub(&path[i])?, two);
        }
    }
    let sup = path.iter().map(|f| grid::lp(f, two)).fold(0.0, f64::max);
    Ok(sup + v2_variation_by(k, |i, j| dist[i * k + j]))
}

/// `e^{theta i t h(D)} u(t)`, the profile whose variation defines the adapted norm.
pub fn twisted_path<F: Field>(u: &SpacetimeField<F>, law: DispersionLaw, theta: Sign) -> Vec<F> {
    let h = law.table(u.grid());
    u.frames()
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let mut g = grid::fft_forward(f);
            evolve_spectral(&mut g, &h, theta, -u.time(k));
            grid::fft_inverse(&g)
        })
        .collect()
}

pub fn v2_norm_adapted<F: Field>(u: &SpacetimeField<F>, law: DispersionLaw, theta: Sign) -> Result<f64> {
    v2_norm(&twisted_path(u, law, theta))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    AtMost,
    AtLeast,
    Within,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentTarget {
    pub name: String,
    pub predicted: f64,
    pub slack: f64,
    pub direction: Direction,
}

impl ExponentTarget {
    pub fn new(name: &str, predicted: f64, slack: f64, direction: Direction) -> Result<Self> {
        if !(slack > 0.0) {
            return Err(invalid("slack", format!("must be positive, got {slack}")));
        }
        Ok(Self {
            name: name.into(),
            predicted,
            slack,
            direction,
        })
    }

    pub fn with_slack(&self, slack: f64) -> Result<Self> {
        Self::new(&self.name, self.predicted, slack, self.direction)
    }

    pub fn check(&self, fitted: f64) -> bool {
        match self.direction {
            Direction::AtMost => fitted <= self.predicted + self.slack,
            Direction::AtLeast => fitted >= self.predicted - self.slack,
            Direction::Within => (fitted - self.predicted).abs() <= self.slack,
        }
    }

    pub fn describe(&self) -> String {
        match self.direction {
            Direction::AtMost => format!("<= {:.4}", self.predicted + self.slack),
            Direction::AtLeast => format!(">= {:.4}", self.predicted - self.slack),
            Direction::Within => format!("in [{:.4}, {:.4}]", self.predicted - self.slack, self.predicted + self.slack),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateParameters {
    pub delta: f64,
    pub eta: f64,
    pub s: f64,
    pub sigma: f64,
}

impl Default for EstimateParameters {
    fn default() -> Self {
        Self {
            delta: 0.125,
            eta: 0.1,
            s: 0.25,
            sigma: 1.0,
        }
    }
}

impl EstimateParameters {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.125 && self.delta <= 0.25) {
            return Err(invalid("delta", format!("{} outside [1/8, 1/4]", self.delta)));
        }
        if !(self.eta > 0.0 && self.eta <= 0.1) {
            return Err(invalid("eta", format!("{} outside (0, 1/10]", self.eta)));
        }
        Ok(())
    }

    /// Targets keyed by probe and swept parameter, with the default slacks.
    pub fn targets(&self) -> Vec<ExponentTarget> {
        let q = crate::propagator::q_eta(self.eta);
        let t = |n, p, s, d| ExponentTarget::new(n, p, s, d).expect("positive slack");
        vec![
            t("strichartz.lambda", 1.0 - 3.0 / q, 0.15, Direction::AtMost),
            t("strichartz.N", 0.5 + self.eta, 0.15, Direction::AtMost),
            t("bernstein.lambda", 1.5, 0.15, Direction::AtMost),
            t("concentration.alpha_N", 0.0, 0.05, Direction::AtLeast),
            t("decay.t", -1.0, 0.2, Direction::Within),
            t("null_symbol.angle", 1.0, 0.1, Direction::Within),
            t("bilinear.ratio", self.delta, 0.05, Direction::AtLeast),
            t("bilinear.N", 1.0 - self.eta, 0.15, Direction::AtMost),
            t("trilinear.ratio", self.delta, 0.05, Direction::AtLeast),
            t("trilinear.N", 1.0 - self.eta, 0.15, Direction::AtMost),
        ]
    }
}

fn environment(grid: &GridSpec, seed: Option<u64>) -> Environment {
    Environment {
        grid: Some(*grid),
        rho_id: RHO_ID.into(),
        seed,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HighModulationSettings {
    pub window: f64,
    pub count: usize,
    pub jumps: usize,
    pub q: f64,
    pub trials: usize,
}

impl Default for HighModulationSettings {
    fn default() -> Self {
        Self {
            window: 8.0,
            count: 128,
            jumps: 1,
            q: 2.0,
            trials: 3,
        }
    }
}

/// Free waves of sign `theta` whose data switch at `jumps` evenly spaced times.
pub fn step_path(data: &[ScalarField], theta: Sign, dt: f64, count: usize) -> Result<SpacetimeField<ScalarField>> {
    if data.is_empty() {
        return Err(invalid("data", "need at least one piece"));
    }
    let h = DispersionLaw::Wave.table(data[0].grid());
    let spectra: Vec<ScalarField> = data.iter().map(grid::fft_forward).collect();
    let pieces = data.len();
    let frames = (0..count)
        .map(|k| {
            let j = (k * pieces / count).min(pieces - 1);
            let mut g = spectra[j].clone();
            evolve_spectral(&mut g, &h, theta, k as f64 * dt);
            grid::fft_inverse(&g)
        })
        .collect();
    SpacetimeField::new(dt, frames)
}

/// `||C_d u||_{L^q_t L^2_x} d^{1/q} / ||u||_{V^2}` over step paths, swept over `d`.
pub fn high_modulation_probe(
    grid: &GridSpec,
    ds: &[f64],
    theta: Sign,
    set: &HighModulationSettings,
    seed: u64,
) -> Result<ProbeReport> {
    let q = Exponent::new(set.q)?;
    let two = Exponent::new(2.0)?;
    let dt = set.window / (set.count - 1) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = ProbeReport::new("high_modulation", "d", environment(grid, Some(seed)))
        .param("theta", theta)
        .param("q", set.q)
        .param("window", set.window)
        .param("count", set.count)
        .param("jumps", set.jumps);
    let mut paths = Vec::new();
    for _ in 0..set.trials.max(1) {
        let data: Vec<ScalarField> = (0..=set.jumps).map(|_| ScalarField::random(*grid, &mut rng)).collect();
        let u = step_path(&data, theta, dt, set.count)?;
        let norm = v2_norm_adapted(&u, DispersionLaw::Wave, theta)?;
        paths.push((u, norm));
    }
    let mut leak: f64 = 0.0;
    for &d in ds {
        let mut best: f64 = 0.0;
        for (u, norm) in &paths {
            if *norm == 0.0 {
                continue;
            }
            let out = project_modulation(u, Band::At(d), theta, ModulationOptions::default())?;
            leak = leak.max(out.leakage);
            let frame_norms: Vec<f64> = out.field.frames().iter().map(|f| grid::lp(f, two)).collect();
            let lhs = compose_time(&frame_norms, dt, q);
            best = best.max(lhs * d.powf(1.0 / set.q) / norm);
        }
        rep.push(d, best);
    }
    rep.diagnostic("max_leakage", leak);
    let (hi, lo) = (rep.max_value(), rep.min_value());
    if lo > 0.0 {
        rep.diagnostic("spread", hi / lo);
    }
    rep.fit();
    Ok(rep)
}

/// Smallest even size at least `n` with no prime factor above 5.
fn smooth_size(n: usize) -> usize {
    let mut m = n.max(8);
    loop {
        if m % 2 == 0 {
            let mut r = m;
            for p in [2, 3, 5] {
                while r % p == 0 {
                    r /= p;
                }
            }
            if r == 1 {
                return m;
            }
        }
        m += 1;
    }
}

/// Largest `|n_k|` over nonzero coefficients.
fn extent(grid: &GridSpec, spectrum: &[C64]) -> i64 {
    spectrum
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != C64::new(0.0, 0.0))
        .map(|(i, _)| grid.mode(i).iter().map(|c| c.abs()).max().unwrap_or(0))
        .max()
        .unwrap_or(0)
}

/// Zeroes roundoff-level coefficients so spectral supports are exact.
fn clean<F: Field>(mut fh: F) -> F {
    let top = fh
        .components()
        .iter()
        .flat_map(|c| c.iter().map(|v| v.norm()))
        .fold(0.0, f64::max);
    for c in fh.components_mut() {
        for v in c.iter_mut() {
            if v.norm() <= 1e-13 * top {
                *v = C64::new(0.0, 0.0);
            }
        }
    }
    fh
}

/// Zero-padded grid on which products of band-limited inputs are exact on a target set.
struct Padding {
    coarse: GridSpec,
    fine: GridSpec,
    map: Vec<usize>,
}

impl Padding {
    /// `input_extent` bounds the summed input supports, `output_extent` the tested modes.
    fn new(coarse: &GridSpec, input_extent: i64, output_extent: i64) -> Result<Self> {
        let need = (input_extent + output_extent + 1).max(coarse.points_per_axis() as i64) as usize;
        let fine = GridSpec::new(coarse.half_period(), smooth_size(need))?;
        let map = (0..coarse.len())
            .map(|i| fine.index_of_mode(coarse.mode(i)).expect("fine grid contains coarse modes"))
            .collect();
        Ok(Self {
            coarse: *coarse,
            fine,
            map,
        })
    }

    fn lift(&self, spectrum: &[C64]) -> Vec<C64> {
        let mut buf = vec![C64::new(0.0, 0.0); self.fine.len()];
        for (i, v) in spectrum.iter().enumerate() {
            buf[self.map[i]] = *v;
        }
        grid::inverse_in_place(&self.fine, &mut buf);
        buf
    }

    fn restrict(&self, mut physical: Vec<C64>) -> Vec<C64> {
        grid::forward_in_place(&self.fine, &mut physical);
        (0..self.coarse.len()).map(|i| physical[self.map[i]]).collect()
    }
}

fn frame_count(window: f64, dt: f64) -> Result<(usize, f64)> {
    if !(window > 0.0 && dt > 0.0) {
        return Err(invalid("window", "window and step must be positive"));
    }
    let count = (window / dt).round().max(2.0) as usize + 1;
    Ok((count, window / (count - 1) as f64))
}

fn check_trichotomy(scales: [f64; 3]) -> Result<()> {
    let mut s = scales;
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite scales"));
    if s[2] > 2.0 * s[1] {
        return Err(invalid(
            "scales",
            format!("{:?} violates min <~ med ~ max", scales),
        ));
    }
    Ok(())
}

fn ratio_of(scales: [f64; 3]) -> f64 {
    let lo = scales.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scales.iter().copied().fold(0.0, f64::max);
    lo / hi
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BilinearSettings {
    pub window: f64,
    pub dt: f64,
    pub eta: f64,
    pub mass: f64,
    pub trials: usize,
}

impl Default for BilinearSettings {
    fn default() -> Self {
        Self {
            window: 2.0,
            dt: 1.0 / 32.0,
            eta: 0.1,
            mass: 1.0,
            trials: 2,
        }
    }
}

/// `||P_{lambda0}(phi^dagger varphi)||_{L^2_t L^2_x}` for free Klein-Gordon waves of `d1`, `d2`.
pub fn bilinear_lhs(
    d1: &SpinorField,
    d2: &SpinorField,
    thetas: [Sign; 2],
    lambda0: DyadicScale,
    set: &BilinearSettings,
) -> Result<f64> {
    if d1.grid() != d2.grid() {
        return Err(Error::GridMismatch);
    }
    let g = *d1.grid();
    let law = DispersionLaw::klein_gordon(set.mass)?;
    let h = law.table(&g);
    let (count, dt) = frame_count(set.window, set.dt)?;
    let s1 = clean(grid::fft_forward(d1));
    let s2 = clean(grid::fft_forward(d2));
    let symbol: Vec<f64> = (0..g.len()).map(|i| annulus_symbol(lambda0, g.frequency_norm(i))).collect();
    let out_extent = extent(&g, &symbol.iter().map(|&w| C64::new(w, 0.0)).collect::<Vec<_>>());
    let ext = |s: &SpinorField| s.components().iter().map(|c| extent(&g, c)).max().unwrap_or(0);
    let pad = Padding::new(&g, ext(&s1) + ext(&s2), out_extent)?;
    let live: Vec<usize> = (0..4)
        .filter(|&a| {
            [&s1, &s2]
                .iter()
                .all(|s| s.components()[a].iter().any(|v| *v != C64::new(0.0, 0.0)))
        })
        .collect();
    let norms: Vec<f64> = (0..count)
        .map(|k| {
            let t = k as f64 * dt;
            let mut a = s1.clone();
            let mut b = s2.clone();
            evolve_spectral(&mut a, &h, thetas[0], t);
            evolve_spectral(&mut b, &h, thetas[1], t);
            let mut acc = vec![C64::new(0.0, 0.0); pad.fine.len()];
            for &c in &live {
                let x = pad.lift(&a.components()[c]);
                let y = pad.lift(&b.components()[c]);
                acc.iter_mut()
                    .zip(x.iter().zip(&y))
                    .for_each(|(z, (p, q))| *z += p.conj() * q);
            }
            let out = pad.restrict(acc);
            let e: f64 = out.iter().zip(&symbol).map(|(v, w)| (v * w).norm_sqr()).sum();
            (e / g.box_volume()).sqrt()
        })
        .collect();
    Ok(compose_time(&norms, dt, Exponent::new(2.0)?))
}

fn random_unit_spinor(rng: &mut ChaCha8Rng) -> [C64; 4] {
    let mut s = [C64::new(0.0, 0.0); 4];
    for v in s.iter_mut() {
        *v = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    }
    let n = s.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    s.map(|v| v / n)
}

/// Spinor data `P_lambda H_N`-localized in every component.
pub fn localized_spinor(
    grid: &GridSpec,
    lambda: DyadicScale,
    n: DyadicScale,
    rng: &mut ChaCha8Rng,
) -> Result<SpinorField> {
    let a = localized_data(grid, lambda, n, rng)?;
    let b = localized_data(grid, lambda, n, rng)?;
    let mut psi = SpinorField::from_profile(&a, random_unit_spinor(rng));
    psi.add_scaled(&SpinorField::from_profile(&b, random_unit_spinor(rng)), C64::new(1.0, 0.0))?;
    Ok(psi)
}

fn data_norm<F: Field>(f: &F) -> f64 {
    clean(grid::fft_forward(f)).spectral_l2()
}

/// Sweeps the output scale `lambda0` (parameter `ratio` = min/max) or the angular scale
/// `N` (`lambda0s` of length one). The witness is a pair of collinear cap-concentrated
/// waves; random spinor draws follow. Samples are the max normalized ratio for the
/// ratio sweep and the ratio times `N^{1-eta}` for the `N` sweep.
#[allow(clippy::too_many_arguments)]
pub fn bilinear_probe(
    grid: &GridSpec,
    lambda0s: &[DyadicScale],
    lambdas: [DyadicScale; 2],
    ns: &[[DyadicScale; 2]],
    thetas: [Sign; 2],
    set: &BilinearSettings,
    seed: u64,
) -> Result<ProbeReport> {
    let sweep_ratio = match (lambda0s.len(), ns.len()) {
        (_, 1) => true,
        (1, _) => false,
        _ => return Err(invalid("sweep", "sweep lambda0 or N, holding the other fixed")),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = ProbeReport::new("bilinear", if sweep_ratio { "ratio" } else { "N" }, environment(grid, Some(seed)))
        .param("lambda1", lambdas[0].value())
        .param("lambda2", lambdas[1].value())
        .param("thetas", thetas)
        .param("settings", set);
    for l in lambdas {
        for w in annulus_warnings(grid, l) {
            rep.warn(w);
        }
    }
    for &l0 in lambda0s {
        let scales = [l0.value(), lambdas[0].value(), lambdas[1].value()];
        check_trichotomy(scales)?;
        for &[n1, n2] in ns {
            let nmin = n1.value().min(n2.value());
            let norm = l0.value() * nmin.powf(1.0 - set.eta);
            let e0 = [C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)];
            let mut pairs = vec![(
                SpinorField::from_profile(&concentrated_data(grid, lambdas[0], n1, [0.0, 0.0, 1.0])?, e0),
                SpinorField::from_profile(&concentrated_data(grid, lambdas[1], n2, [0.0, 0.0, 1.0])?, e0),
            )];
            for _ in 0..set.trials {
                pairs.push((
                    localized_spinor(grid, lambdas[0], n1, &mut rng)?,
                    localized_spinor(grid, lambdas[1], n2, &mut rng)?,
                ));
            }
            let mut best: f64 = 0.0;
            for (a, b) in &pairs {
                let (na, nb) = (data_norm(a), data_norm(b));
                if na == 0.0 || nb == 0.0 {
                    continue;
                }
                best = best.max(bilinear_lhs(a, b, thetas, l0, set)? / (norm * na * nb));
            }
            if sweep_ratio {
                rep.push(ratio_of(scales), best);
            } else {
                rep.push(nmin, best * nmin.powf(1.0 - set.eta));
            }
            rep.diagnostic(format!("normalized@lambda0={},N={}", l0.value(), nmin), best);
        }
    }
    rep.fit();
    Ok(rep)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrilinearSettings {
    pub window: f64,
    pub dt: f64,
    pub eta: f64,
    pub trials: usize,
    pub kind: NullFormKind,
}

impl Default for TrilinearSettings {
    fn default() -> Self {
        Self {
            window: 2.0,
            dt: 1.0 / 32.0,
            eta: 0.1,
            trials: 2,
            kind: NullFormKind::Qij { i: 1, j: 2 },
        }
    }
}

/// Space-time factors of the trilinear form; `time` holds `(d_t u, d_t v)` for `Q0`.
#[derive(Clone, Debug)]
pub struct TrilinearFactors {
    pub w: SpacetimeField<ScalarField>,
    pub u: SpacetimeField<ScalarField>,
    pub v: SpacetimeField<ScalarField>,
    pub time: Option<(SpacetimeField<ScalarField>, SpacetimeField<ScalarField>)>,
    /// Drops imaginary parts of `u` and `v` on the padded grid; used for real-valued waves.
    pub real: bool,
}

/// Free waves of sign `thetas = [theta, theta1, theta2]` for data `(w, u, v)`.
pub fn free_factors(
    data: [&ScalarField; 3],
    thetas: [Sign; 3],
    window: f64,
    dt: f64,
    with_time: bool,
) -> Result<TrilinearFactors> {
    let g = *data[0].grid();
    if data.iter().any(|d| *d.grid() != g) {
        return Err(Error::GridMismatch);
    }
    let (count, dt) = frame_count(window, dt)?;
    let h = DispersionLaw::Wave.table(&g);
    let wave = |f: &ScalarField, th: Sign, deriv: bool| {
        let s = clean(grid::fft_forward(f));
        SpacetimeField::sample(dt, count, |t| {
            let mut x = s.clone();
            evolve_spectral(&mut x, &h, th, t);
            if deriv {
                x.values_mut()
                    .iter_mut()
                    .zip(&h)
                    .for_each(|(v, hv)| *v *= C64::new(0.0, -th.value() * hv));
            }
            grid::fft_inverse(&x)
        })
    };
    let time = if with_time {
        Some((wave(data[1], thetas[1], true)?, wave(data[2], thetas[2], true)?))
    } else {
        None
    };
    Ok(TrilinearFactors {
        w: wave(data[0], thetas[0], false)?,
        u: wave(data[1], thetas[1], false)?,
        v: wave(data[2], thetas[2], false)?,
        time,
        real: false,
    })
}

/// `int_0^T int conj(w) |D|^{-2} Q(conj u, v) dx dt`, trapezoid in time, with the
/// product evaluated exactly on the support of `w`.
pub fn trilinear_integral(f: &TrilinearFactors, kind: NullFormKind) -> Result<C64> {
    let g = *f.w.grid();
    let count = f.w.sample_count();
    if f.u.sample_count() != count || f.v.sample_count() != count {
        return Err(invalid("factors", "sample counts differ"));
    }
    if *f.u.grid() != g || *f.v.grid() != g {
        return Err(Error::GridMismatch);
    }
    let time = match kind {
        NullFormKind::Q0 => Some(f.time.as_ref().ok_or(Error::MissingTimeDerivative)?),
        _ => None,
    };
    let spectra = |s: &SpacetimeField<ScalarField>| -> Vec<ScalarField> {
        s.frames().iter().map(|x| clean(grid::fft_forward(x))).collect()
    };
    let (ws, us, vs) = (spectra(&f.w), spectra(&f.u), spectra(&f.v));
    let ts = time.map(|(a, b)| (spectra(a), spectra(b)));
    let ext = |v: &[ScalarField]| v.iter().map(|s| extent(&g, s.values())).max().unwrap_or(0);
    let mut in_ext = ext(&us) + ext(&vs);
    if let Some((a, b)) = &ts {
        in_ext = in_ext.max(ext(a) + ext(b));
    }
    let pad = Padding::new(&g, in_ext, ext(&ws))?;
    let weights = grid::trapezoid_weights(count, f.w.dt());
    let inv_sq: Vec<f64> = (0..g.len())
        .map(|i| {
            let k = g.frequency_norm(i);
            if k == 0.0 {
                0.0
            } else {
                1.0 / (k * k)
            }
        })
        .collect();
    let deriv = |s: &ScalarField, axis: usize| -> Vec<C64> {
        let xi: Vec<C64> = s
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| v * C64::new(0.0, g.frequency(i)[axis]))
            .collect();
        xi
    };
    let real = f.real;
    let lift = |v: &[C64]| {
        let mut x = pad.lift(v);
        if real {
            x.iter_mut().for_each(|z| z.im = 0.0);
        }
        x
    };
    let mut total = C64::new(0.0, 0.0);
    for k in 0..count {
        if ws[k].values().iter().all(|v| *v == C64::new(0.0, 0.0)) {
            continue;
        }
        let q: Vec<C64> = match kind {
            NullFormKind::Qij { i, j } => {
                let (ui, uj) = (lift(&deriv(&us[k], i - 1)), lift(&deriv(&us[k], j - 1)));
                let (vi, vj) = (lift(&deriv(&vs[k], i - 1)), lift(&deriv(&vs[k], j - 1)));
                (0..pad.fine.len())
                    .map(|p| ui[p].conj() * vj[p] - uj[p].conj() * vi[p])
                    .collect()
            }
            NullFormKind::Q0 => {
                let (ut, vt) = ts.as_ref().map(|(a, b)| (&a[k], &b[k])).expect("checked above");
                let (a, b) = (lift(ut.values()), lift(vt.values()));
                let mut acc: Vec<C64> = a.iter().zip(&b).map(|(x, y)| x.conj() * y).collect();
                for axis in 0..3 {
                    let (x, y) = (lift(&deriv(&us[k], axis)), lift(&deriv(&vs[k], axis)));
                    acc.iter_mut().zip(x.iter().zip(&y)).for_each(|(z, (p, r))| *z -= p.conj() * r);
                }
                acc
            }
        };
        let qh = pad.restrict(q);
        let pair: C64 = ws[k]
            .values()
            .iter()
            .zip(&qh)
            .zip(&inv_sq)
            .map(|((w, x), s)| w.conj() * x * *s)
            .sum();
        total += weights[k] * pair / g.box_volume();
    }
    Ok(total)
}

/// Sweeps `mu` (parameter `ratio`) or the angular scales `[N, N1, N2]`. The witness is a
/// triple of collinear cap-concentrated waves.
#[allow(clippy::too_many_arguments)]
pub fn trilinear_probe(
    grid: &GridSpec,
    mus: &[DyadicScale],
    lambdas: [DyadicScale; 2],
    ns: &[[DyadicScale; 3]],
    thetas: [Sign; 3],
    set: &TrilinearSettings,
    seed: u64,
) -> Result<ProbeReport> {
    let sweep_ratio = match (mus.len(), ns.len()) {
        (_, 1) => true,
        (1, _) => false,
        _ => return Err(invalid("sweep", "sweep mu or N, holding the other fixed")),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = ProbeReport::new("trilinear", if sweep_ratio { "ratio" } else { "N" }, environment(grid, Some(seed)))
        .param("lambda1", lambdas[0].value())
        .param("lambda2", lambdas[1].value())
        .param("thetas", thetas)
        .param("settings", set);
    for l in lambdas {
        for w in annulus_warnings(grid, l) {
            rep.warn(w);
        }
    }
    let with_time = matches!(set.kind, NullFormKind::Q0);
    for &mu in mus {
        let scales = [mu.value(), lambdas[0].value(), lambdas[1].value()];
        check_trichotomy(scales)?;
        for &[n, n1, n2] in ns {
            let nmin = n1.value().min(n2.value());
            let norm = lambdas[0].value().min(lambdas[1].value()).sqrt() * nmin.powf(1.0 - set.eta);
            let z = [0.0, 0.0, 1.0];
            let mut triples = vec![[
                concentrated_data(grid, mu, n, z)?,
                concentrated_data(grid, lambdas[0], n1, z)?,
                concentrated_data(grid, lambdas[1], n2, z)?,
            ]];
            for _ in 0..set.trials {
                triples.push([
                    localized_data(grid, mu, n, &mut rng)?,
                    localized_data(grid, lambdas[0], n1, &mut rng)?,
                    localized_data(grid, lambdas[1], n2, &mut rng)?,
                ]);
            }
            let mut best: f64 = 0.0;
            for d in &triples {
                let nd: f64 = d.iter().map(data_norm).product();
                if nd == 0.0 {
                    continue;
                }
                let f = free_factors([&d[0], &d[1], &d[2]], thetas, set.window, set.dt, with_time)?;
                best = best.max(trilinear_integral(&f, set.kind)?.norm() / (norm * nd));
            }
            if sweep_ratio {
                rep.push(ratio_of(scales), best);
            } else {
                rep.push(nmin, best * nmin.powf(1.0 - set.eta));
            }
            rep.diagnostic(format!("normalized@mu={},N={}", mu.value(), nmin), best);
        }
    }
    rep.fit();
    Ok(rep)
}

/// The symmetric real witness `u = v = cos(t|D|) f` for real `f`, where `Q_ij(u, u)`
/// vanishes identically.
pub fn symmetric_witness(w: &ScalarField, f: &ScalarField, theta: Sign, window: f64, dt: f64) -> Result<TrilinearFactors> {
    let real = f.map(|z| C64::new(z.re, 0.0));
    let mut fac = free_factors([w, &real, &real], [theta, Sign::Plus, Sign::Plus], window, dt, false)?;
    fac.u = fac.u.map_frames(|_, x| x.map(|z| C64::new(z.re, 0.0)));
    fac.v = fac.u.clone();
    fac.real = true;
    Ok(fac)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulationSplit {
    pub d: f64,
    pub i0: f64,
    pub i1: f64,
    pub i2: f64,
    pub leakage: f64,
}

/// Pieces `I0 = (C_d w, C_<<d u, C_<<d v)`, `I1 = (C_<=d w, C_d u, C_<<d v)` and
/// `I2 = (C_<=d w, C_<=d u, C_d v)` of the trilinear form, each factor filtered
/// relative to its own sign.
pub fn trilinear_modulation_split(
    f: &TrilinearFactors,
    thetas: [Sign; 3],
    ds: &[f64],
    kind: NullFormKind,
) -> Result<Vec<ModulationSplit>> {
    let opts = ModulationOptions::default();
    let mut out = Vec::new();
    for &d in ds {
        let mut leakage: f64 = 0.0;
        let mut filt = |s: &SpacetimeField<ScalarField>, band: Band, th: Sign| -> Result<SpacetimeField<ScalarField>> {
            let r = project_modulation(s, band, th, opts)?;
            leakage = leakage.max(r.leakage);
            Ok(r.field)
        };
        let mut piece = |bw: Band, bu: Band, bv: Band| -> Result<f64> {
            let time = match &f.time {
                Some((a, b)) => Some((filt(a, bu, thetas[1])?, filt(b, bv, thetas[2])?)),
                None => None,
            };
            let fac = TrilinearFactors {
                w: filt(&f.w, bw, thetas[0])?,
                u: filt(&f.u, bu, thetas[1])?,
                v: filt(&f.v, bv, thetas[2])?,
                time,
                real: f.real,
            };
            Ok(trilinear_integral(&fac, kind)?.norm())
        };
        let i0 = piece(Band::At(d), Band::WellBelow(d), Band::WellBelow(d))?;
        let i1 = piece(Band::AtMost(d), Band::At(d), Band::WellBelow(d))?;
        let i2 = piece(Band::AtMost(d), Band::AtMost(d), Band::At(d))?;
        out.push(ModulationSplit { d, i0, i1, i2, leakage });
    }
    Ok(out)
}

/// Pointwise maximum over reports that share a sweep, refitted. Used to take the worst
/// case over sign configurations.
pub fn combine_worst(probe: &str, reports: &[ProbeReport]) -> Result<ProbeReport> {
    let first = reports.first().ok_or_else(|| invalid("reports", "need at least one report"))?;
    let mut rep = ProbeReport::new(probe, &first.parameter, first.environment.clone());
    for (k, s) in first.samples.iter().enumerate() {
        let mut best = s.value;
        for r in &reports[1..] {
            let other = r.samples.get(k).ok_or_else(|| invalid("reports", "sweeps differ"))?;
            if other.scale != s.scale {
                return Err(invalid("reports", "sweeps differ"));
            }
            best = best.max(other.value);
        }
        rep.push(s.scale, best);
    }
    for (i, r) in reports.iter().enumerate() {
        if let Some(f) = r.fitted_exponent {
            rep.diagnostic(format!("exponent[{i}]"), f);
        }
        for w in &r.warnings {
            rep.warn(w.clone());
        }
    }
    rep.fit();
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn v2_examples() {
        assert_eq!(v2_norm_scalars(&[3.0, 3.0, 3.0]).unwrap(), 3.0);
        let v = v2_variation_by(3, |i, j| (j as f64 - i as f64).abs());
        assert_eq!(v, 2.0);
        let p = [0.0f64, 1.0, 0.0];
        let v = v2_variation_by(3, |i, j| (p[j] - p[i]).abs());
        assert!((v - 2f64.sqrt()).abs() < 1e-15);
        assert!(v2_norm_scalars(&[]).is_err());
    }

    #[test]
    fn v2_dp_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let k = rng.random_range(1..=9);
            let p: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
            let d = |i: usize, j: usize| (p[j] - p[i]).abs();
            assert_eq!(v2_variation_by(k, d), v2_variation_bruteforce(k, d).unwrap());
        }
    }

    #[test]
    fn one_jump_twisted_path() {
        let g = GridSpec::new(PI, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (f, h) = (ScalarField::random(g, &mut rng), ScalarField::random(g, &mut rng));
        let u = step_path(&[f.clone(), h.clone()], Sign::Plus, 0.1, 10).unwrap();
        let got = v2_norm_adapted(&u, DispersionLaw::Wave, Sign::Plus).unwrap();
        let l2 = |x: &ScalarField| grid::lebesgue_norm(x, 2.0).unwrap();
        let want = l2(&f).max(l2(&h)) + l2(&f.sub(&h).unwrap());
        assert!((got - want).abs() < 1e-10 * want);
    }

    #[test]
    fn exponent_targets() {
        let p = EstimateParameters::default();
        p.validate().unwrap();
        let t = p.targets();
        let s = t.iter().find(|x| x.name == "strichartz.lambda").unwrap();
        assert!(s.check(0.4) && !s.check(0.5));
        let d = t.iter().find(|x| x.name == "decay.t").unwrap();
        assert!(d.check(-1.1) && !d.check(-0.7));
        assert!(ExponentTarget::new("x", 1.0, 0.0, Direction::AtMost).is_err());
        assert!(EstimateParameters { delta: 0.3, ..p }.validate().is_err());
    }

    #[test]
    fn padding_products_are_exact() {
        let g = GridSpec::new(PI, 8).unwrap();
        let a = ScalarField::plane_wave(g, [4, 0, 0].map(|x: i64| -x));
        let b = ScalarField::plane_wave(g, [-3, 2, 0]);
        let sa = clean(grid::fft_forward(&a));
        let sb = clean(grid::fft_forward(&b));
        let pad = Padding::new(&g, extent(&g, sa.values()) + extent(&g, sb.values()), 4).unwrap();
        let (x, y) = (pad.lift(sa.values()), pad.lift(sb.values()));
        let prod: Vec<C64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let out = pad.restrict(prod);
        // (-4,0,0) + (-3,2,0) = (-7,2,0) lies outside the coarse lattice and must not fold back
        let top = out.iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(top < 1e-9, "{top}");
        assert_eq!(smooth_size(65), 72);
    }

    #[test]
    fn single_mode_bilinear() {
        let g = GridSpec::new(PI, 16).unwrap();
        let e0 = [C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)];
        let a = SpinorField::from_profile(&ScalarField::plane_wave(g, [0, 3, 0]), e0);
        let b = SpinorField::from_profile(&ScalarField::plane_wave(g, [0, 3, 1]), e0);
        let set = BilinearSettings {
            window: 2.0,
            dt: 0.25,
            ..Default::default()
        };
        let lhs = bilinear_lhs(&a, &b, [Sign::Plus, Sign::Minus], DyadicScale::ONE, &set).unwrap();
        let want = annulus_symbol(DyadicScale::ONE, 1.0) * 2f64.sqrt() * (2.0 * PI).powf(1.5);
        assert!((lhs - want).abs() < 1e-10 * want, "{lhs} {want}");
    }

    #[test]
    fn bilinear_invariances() {
        let g = GridSpec::new(PI, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l2 = DyadicScale::from_exponent(2);
        let a = localized_spinor(&g, l2, DyadicScale::ONE, &mut rng).unwrap();
        let b = localized_spinor(&g, l2, DyadicScale::ONE, &mut rng).unwrap();
        let set = BilinearSettings {
            window: 1.0,
            dt: 0.125,
            ..Default::default()
        };
        let th = [Sign::Plus, Sign::Plus];
        let l0 = DyadicScale::from_exponent(1);
        let base = bilinear_lhs(&a, &b, th, l0, &set).unwrap() / (data_norm(&a) * data_norm(&b));
        let c = C64::new(0.3, 2.0);
        let scaled = bilinear_lhs(&a.scaled(c), &b, th, l0, &set).unwrap() / (data_norm(&a.scaled(c)) * data_norm(&b));
        assert!((scaled - base).abs() < 1e-10 * base);
        let perm = |s: &SpinorField| {
            let comps: Vec<Vec<C64>> = s
                .components()
                .iter()
                .map(|c| {
                    (0..g.len())
                        .map(|i| {
                            let [x, y, z] = g.coords(i);
                            c[g.index(y, z, x)]
                        })
                        .collect()
                })
                .collect();
            SpinorField::from_components(g, [comps[0].clone(), comps[1].clone(), comps[2].clone(), comps[3].clone()]).unwrap()
        };
        let rotated = bilinear_lhs(&perm(&a), &perm(&b), th, l0, &set).unwrap() / (data_norm(&a) * data_norm(&b));
        assert!((rotated - base).abs() < 1e-8 * base);
    }

    #[test]
    fn trilinear_witnesses() {
        let g = GridSpec::new(PI, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (one, four) = (DyadicScale::ONE, DyadicScale::from_exponent(2));
        let w = localized_data(&g, DyadicScale::from_exponent(1), one, &mut rng).unwrap();
        let f = localized_data(&g, four, one, &mut rng).unwrap();
        let k = NullFormKind::qij(1, 2).unwrap();
        let wit = symmetric_witness(&w, &f, Sign::Plus, 1.0, 0.125).unwrap();
        assert_eq!(trilinear_integral(&wit, k).unwrap(), C64::new(0.0, 0.0));

        // collinear modes, equal signs: Q0 symbol vanishes
        let (a, b) = ([0, 0, 3], [0, 0, 2]);
        let wm = ScalarField::plane_wave(g, [0, 0, -1]);
        let (ua, vb) = (ScalarField::plane_wave(g, a), ScalarField::plane_wave(g, b));
        let th = [Sign::Plus; 3];
        let fac = free_factors([&wm, &ua, &vb], th, 1.0, 0.125, true).unwrap();
        assert!(trilinear_integral(&fac, NullFormKind::Q0).unwrap().norm() < 1e-10);
        let fq = free_factors([&wm, &ua, &vb], th, 1.0, 0.125, false).unwrap();
        assert!(matches!(trilinear_integral(&fq, NullFormKind::Q0), Err(Error::MissingTimeDerivative)));

        // transverse single modes: conj(e^{i a x}) e^{i b x} = e^{i(b - a)x}
        let (a, b) = ([1, 0, 0], [0, 1, 0]);
        let wm = ScalarField::plane_wave(g, [-1, 1, 0]);
        let fac = free_factors(
            [&wm, &ScalarField::plane_wave(g, a), &ScalarField::plane_wave(g, b)],
            [Sign::Plus, Sign::Plus, Sign::Plus],
            1.0,
            0.125,
            false,
        )
        .unwrap();
        let got = trilinear_integral(&fac, k).unwrap();
        // symbol: conj(i a_1) (i b_2) - conj(i a_2)(i b_1) = a_1 b_2 = 1; |D|^{-2} = 1/2;
        // the phases leave e^{i sqrt2 t} under the time integral
        let quad: C64 = grid::trapezoid_weights(9, 0.125)
            .iter()
            .enumerate()
            .map(|(k, w)| w * C64::from_polar(1.0, 2f64.sqrt() * k as f64 * 0.125))
            .sum();
        let want = 0.5 * (2.0 * PI).powi(3) * quad.norm();
        assert!((got.norm() - want).abs() < 1e-9 * want, "{got} {want}");
    }

    #[test]
    fn modulation_split_of_free_waves() {
        let g = GridSpec::new(PI, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let one = DyadicScale::ONE;
        let w = localized_data(&g, DyadicScale::from_exponent(1), one, &mut rng).unwrap();
        let u = localized_data(&g, DyadicScale::from_exponent(2), one, &mut rng).unwrap();
        let v = localized_data(&g, DyadicScale::from_exponent(2), one, &mut rng).unwrap();
        let th = [Sign::Plus, Sign::Plus, Sign::Minus];
        let fac = free_factors([&w, &u, &v], th, 4.0, 0.0625, false).unwrap();
        let k = NullFormKind::qij(1, 2).unwrap();
        let total = trilinear_integral(&fac, k).unwrap().norm();
        let split = trilinear_modulation_split(&fac, th, &[32.0], k).unwrap();
        let s = &split[0];
        // free waves sit on their own cones, so modulation-d pieces are leakage level
        assert!(s.i0 + s.i1 + s.i2 < 0.1 * total, "{s:?} {total}");
        assert!(trilinear_modulation_split(&fac, th, &[1.0], k).is_err());
    }

    #[test]
    fn worst_case_combination() {
        let env = Environment { grid: None, rho_id: RHO_ID.into(), seed: None };
        let mk = |vals: [f64; 3]| {
            let mut r = ProbeReport::new("x", "s", env.clone());
            for (k, v) in vals.iter().enumerate() {
                r.push(2f64.powi(k as i32), *v);
            }
            r.fit();
            r
        };
        let c = combine_worst("x", &[mk([1.0, 2.0, 4.0]), mk([2.0, 2.0, 2.0])]).unwrap();
        let got: Vec<f64> = c.samples.iter().map(|s| s.value).collect();
        assert_eq!(got, vec![2.0, 2.0, 4.0]);
    }

    #[test]
    fn free_wave_has_no_high_modulation() {
        let g = GridSpec::new(PI, 8).unwrap();
        let set = HighModulationSettings {
            jumps: 0,
            trials: 1,
            ..Default::default()
        };
        let d = [4.0, 8.0, 16.0].map(|x| x * 2.0 * PI / set.window);
        let rep = high_modulation_probe(&g, &d, Sign::Plus, &set, 1).unwrap();
        assert!(rep.max_value() < 1e-2, "{}", rep.max_value());
        let jump = high_modulation_probe(&g, &d, Sign::Plus, &HighModulationSettings { jumps: 1, ..set }, 1).unwrap();
        assert!(jump.min_value() > 1e-2);
    }
}
