//! Free half-wave and Klein-Gordon evolution, the half-wave split of second-order data,
//! Duhamel integrals, and the Strichartz and dispersive-decay probes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::angular::{self, RadialProfile};
use crate::error::{invalid, Error, Result};
use crate::grid::{self, compose_time, lp, Exponent, Field, GridSpec, ScalarField, SpacetimeField, C64};
use crate::multiplier::{DyadicScale, Sign, RHO_ID};
use crate::report::{Environment, ProbeReport};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DispersionLaw {
    Wave,
    KleinGordon { mass: f64 },
}

impl DispersionLaw {
    pub fn klein_gordon(mass: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(invalid("mass", format!("must be positive, got {mass}")));
        }
        Ok(Self::KleinGordon { mass })
    }

    /// `h(xi)` as a function of `|xi|`.
    pub fn symbol(&self, k: f64) -> f64 {
        match *self {
            DispersionLaw::Wave => k,
            DispersionLaw::KleinGordon { mass } => (mass * mass + k * k).sqrt(),
        }
    }

    pub fn table(&self, grid: &GridSpec) -> Vec<f64> {
        (0..grid.len())
            .map(|i| self.symbol(grid.frequency_norm(i)))
            .collect()
    }
}

/// Multiplies Fourier coefficients by `e^{-i theta t h}` in place.
pub fn evolve_spectral<F: Field>(fh: &mut F, h: &[f64], theta: Sign, t: f64) {
    let s = -theta.value() * t;
    for c in fh.components_mut() {
        c.iter_mut()
            .zip(h)
            .for_each(|(v, hv)| *v *= C64::from_polar(1.0, s * hv));
    }
}

/// `e^{-i theta t h(D)} f`.
pub fn evolve<F: Field>(f: &F, law: DispersionLaw, theta: Sign, t: f64) -> F {
    let h = law.table(f.grid());
    let mut fh = grid::fft_forward(f);
    evolve_spectral(&mut fh, &h, theta, t);
    grid::fft_inverse(&fh)
}

/// Samples the free evolution of `f` at `t_k = k dt`.
pub fn free_trajectory<F: Field>(
    f: &F,
    law: DispersionLaw,
    theta: Sign,
    dt: f64,
    count: usize,
) -> Result<SpacetimeField<F>> {
    let h = law.table(f.grid());
    let fh = grid::fft_forward(f);
    SpacetimeField::sample(dt, count, |t| {
        let mut g = fh.clone();
        evolve_spectral(&mut g, &h, theta, t);
        grid::fft_inverse(&g)
    })
}

#[derive(Clone, Debug)]
pub struct WaveDataPair {
    pub u0: ScalarField,
    pub u1: ScalarField,
}

impl WaveDataPair {
    pub fn new(u0: ScalarField, u1: ScalarField) -> Result<Self> {
        if u0.grid() != u1.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { u0, u1 })
    }
}

#[derive(Clone, Debug)]
pub struct HalfWaves {
    pub plus: ScalarField,
    pub minus: ScalarField,
    /// `|u1^(0)| / (2L)^3`, the zero-mode amplitude removed from the velocity.
    pub zero_mode_removed: f64,
}

/// `u_pm = (u -/+ (i|D|)^{-1} u1) / 2`; the zero mode of `u1` is dropped and reported.
pub fn halfwave_decompose(d: &WaveDataPair) -> Result<HalfWaves> {
    let g = *d.u0.grid();
    let uh = grid::fft_forward(&d.u0);
    let mut vh = grid::fft_forward(&d.u1);
    let origin = g.index_of_mode([0, 0, 0]).expect("origin is on the lattice");
    let removed = vh.values()[origin].norm() / g.box_volume();
    if removed > 1e-10 {
        log::warn!("velocity zero mode {removed:.3e} removed before the half-wave split");
    }
    vh.values_mut()[origin] = C64::new(0.0, 0.0);
    let mut plus = uh.clone();
    let mut minus = uh;
    for i in 0..g.len() {
        let k = g.frequency_norm(i);
        // (i|xi|)^{-1} = -i/|xi|
        let w = if k == 0.0 {
            C64::new(0.0, 0.0)
        } else {
            vh.values()[i] * C64::new(0.0, -1.0 / k)
        };
        let u = plus.values()[i];
        plus.values_mut()[i] = 0.5 * (u - w);
        minus.values_mut()[i] = 0.5 * (u + w);
    }
    Ok(HalfWaves {
        plus: grid::fft_inverse(&plus),
        minus: grid::fft_inverse(&minus),
        zero_mode_removed: removed,
    })
}

/// `(u, d_t u) = (u_+ + u_-, -i|D|(u_+ - u_-))`.
pub fn recombine(plus: &ScalarField, minus: &ScalarField) -> Result<(ScalarField, ScalarField)> {
    let u = plus.add(minus)?;
    let g = *plus.grid();
    let ut = grid::apply_symbol(&plus.sub(minus)?, |i| C64::new(0.0, -g.frequency_norm(i)));
    Ok((u, ut))
}

/// `|| |D| u ||^2 + || d_t u ||^2`.
pub fn wave_energy(u: &ScalarField, ut: &ScalarField) -> f64 {
    let g = *u.grid();
    let du = grid::apply_symbol(u, |i| C64::new(g.frequency_norm(i), 0.0));
    let two = Exponent::new(2.0).expect("2 is a valid exponent");
    lp(&du, two).powi(2) + lp(ut, two).powi(2)
}

fn twisted_prefix<F: Field>(forcing: &SpacetimeField<F>, h: &[f64], theta: Sign) -> Vec<F> {
    let dt = forcing.dt();
    let mut out = Vec::with_capacity(forcing.sample_count());
    let mut acc = F::zeros(forcing.grid());
    let mut prev: Option<F> = None;
    for (k, f) in forcing.frames().iter().enumerate() {
        let mut g = grid::fft_forward(f);
        evolve_spectral(&mut g, h, theta, -forcing.time(k));
        if let Some(p) = &prev {
            acc.add_scaled(p, C64::new(0.5 * dt, 0.0)).expect("common grid");
            acc.add_scaled(&g, C64::new(0.5 * dt, 0.0)).expect("common grid");
        }
        out.push(acc.clone());
        prev = Some(g);
    }
    out
}

/// `int_0^t e^{-i theta (t - s) h(D)} F(s) ds` by the trapezoid rule on the input samples.
pub fn duhamel<F: Field>(
    forcing: &SpacetimeField<F>,
    law: DispersionLaw,
    theta: Sign,
) -> Result<SpacetimeField<F>> {
    if forcing.sample_count() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: forcing.sample_count(),
        });
    }
    let h = law.table(forcing.grid());
    let prefix = twisted_prefix(forcing, &h, theta);
    let frames = prefix
        .into_iter()
        .enumerate()
        .map(|(k, mut s)| {
            evolve_spectral(&mut s, &h, theta, forcing.time(k));
            grid::fft_inverse(&s)
        })
        .collect();
    SpacetimeField::new(forcing.dt(), frames)
}

/// `sup_k ||(-i d_t + theta h(D)) w - rhs||_{L^2}` over interior frames, with
/// centered differences of the profile `e^{i theta t h} w`.
pub fn equation_residual<F: Field>(
    w: &SpacetimeField<F>,
    rhs: &SpacetimeField<F>,
    law: DispersionLaw,
    theta: Sign,
) -> Result<f64> {
    if w.sample_count() < 3 || w.sample_count() != rhs.sample_count() {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: w.sample_count().min(rhs.sample_count()),
        });
    }
    if w.grid() != rhs.grid() {
        return Err(Error::GridMismatch);
    }
    let h = law.table(w.grid());
    let dt = w.dt();
    let profile = |k: usize| {
        let mut g = grid::fft_forward(&w.frames()[k]);
        evolve_spectral(&mut g, &h, theta, -w.time(k));
        g
    };
    let mut worst: f64 = 0.0;
    let mut back = profile(0);
    let mut here = profile(1);
    for k in 1..w.sample_count() - 1 {
        let ahead = profile(k + 1);
        // (-i d_t + theta h) w = -i e^{-i theta t h} d_t v
        let mut r = ahead.sub(&back)?.scaled(C64::new(0.0, -1.0 / (2.0 * dt)));
        evolve_spectral(&mut r, &h, theta, w.time(k));
        let f = grid::fft_forward(&rhs.frames()[k]);
        worst = worst.max(r.sub(&f)?.spectral_l2());
        back = here;
        here = ahead;
    }
    Ok(worst)
}

/// Data `P_lambda H_N f` with transform `rho(|xi|/lambda) sum_l rho(l/N) c_{l,n} y_{l,n}`.
pub fn localized_data(
    grid: &GridSpec,
    lambda: DyadicScale,
    n: DyadicScale,
    rng: &mut ChaCha8Rng,
) -> Result<ScalarField> {
    let profile = RadialProfile::Annulus {
        lambda: lambda.value(),
    };
    let spec = angular::random_spectrum(angular::hn_degrees(n), profile, rng).project_hn(n);
    angular::synthesize_spectral(&spec, grid)
}

/// Zonal band aimed at `w0`, the cap-concentrated member of the same class.
pub fn concentrated_data(
    grid: &GridSpec,
    lambda: DyadicScale,
    n: DyadicScale,
    w0: [f64; 3],
) -> Result<ScalarField> {
    let profile = RadialProfile::Annulus {
        lambda: lambda.value(),
    };
    let spec = angular::zonal_spectrum(w0, angular::hn_degrees(n), |l| angular::hn_weight(n, l), profile);
    angular::synthesize_spectral(&spec, grid)
}

/// `x_1 x_2 e^{-|x|^2 / 2}`: mean zero, with transform concentrated near `|xi| ~ 1`.
pub fn quadrupole_datum(grid: &GridSpec) -> ScalarField {
    ScalarField::from_fn(*grid, |x| {
        C64::new(x[0] * x[1] * (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 2.0).exp(), 0.0)
    })
}

pub fn q_eta(eta: f64) -> f64 {
    4.0 / (1.0 - eta)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrichartzSettings {
    pub eta: f64,
    pub window: f64,
    pub trials: usize,
    pub law: DispersionLaw,
    pub theta: Sign,
}

impl Default for StrichartzSettings {
    fn default() -> Self {
        Self {
            eta: 0.1,
            window: 8.0,
            trials: 3,
            law: DispersionLaw::Wave,
            theta: Sign::Plus,
        }
    }
}

/// `max ||e^{theta i t h} f||_{L^2_t L^q_x} / ||f||_{L^2}` over the data class.
pub fn strichartz_point(
    grid: &GridSpec,
    lambda: DyadicScale,
    n: DyadicScale,
    set: &StrichartzSettings,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if !(set.eta > 0.0 && set.eta <= 0.1) {
        return Err(invalid("eta", format!("{} outside (0, 1/10]", set.eta)));
    }
    if set.window < 8.0 / lambda.value() {
        return Err(invalid("window", "must be at least 8 / lambda"));
    }
    let q = Exponent::new(q_eta(set.eta))?;
    let two = Exponent::new(2.0)?;
    let dt_target = 1.0 / (2.0 * lambda.value());
    let count = (set.window / dt_target).ceil() as usize + 1;
    let dt = set.window / (count - 1) as f64;
    let mut data = vec![concentrated_data(grid, lambda, n, [0.0, 0.0, 1.0])?];
    for _ in 0..set.trials {
        data.push(localized_data(grid, lambda, n, rng)?);
    }
    let h = set.law.table(grid);
    let mut best: f64 = 0.0;
    for f in &data {
        let norm = lp(f, two);
        if norm == 0.0 {
            continue;
        }
        let fh = grid::fft_forward(f);
        let norms: Vec<f64> = (0..count)
            .map(|k| {
                let mut g = fh.clone();
                evolve_spectral(&mut g, &h, set.theta.flip(), k as f64 * dt);
                lp(&grid::fft_inverse(&g), q)
            })
            .collect();
        best = best.max(compose_time(&norms, dt, two) / norm);
    }
    Ok(best)
}

fn environment(grid: &GridSpec, seed: u64) -> Environment {
    Environment {
        grid: Some(*grid),
        rho_id: RHO_ID.into(),
        seed: Some(seed),
    }
}

/// Sweeps either `lambda` at fixed `N` or `N` at fixed `lambda`. Samples are the raw
/// ratio; the normalized ratio per point goes to the diagnostics.
pub fn strichartz_probe(
    grid: &GridSpec,
    lambdas: &[DyadicScale],
    ns: &[DyadicScale],
    set: &StrichartzSettings,
    seed: u64,
) -> Result<ProbeReport> {
    let (param, sweep_lambda) = match (lambdas.len(), ns.len()) {
        (_, 1) => ("lambda", true),
        (1, _) => ("N", false),
        _ => return Err(invalid("sweep", "sweep lambda or N, holding the other fixed")),
    };
    let q = q_eta(set.eta);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = ProbeReport::new("strichartz", param, environment(grid, seed))
        .param("eta", set.eta)
        .param("q", q)
        .param("window", set.window)
        .param("trials", set.trials)
        .param("law", set.law);
    for &l in lambdas {
        for w in crate::multiplier::annulus_warnings(grid, l) {
            rep.warn(w);
        }
        for &n in ns {
            let raw = strichartz_point(grid, l, n, set, &mut rng)?;
            let norm = l.value().powf(1.0 - 3.0 / q) * n.value().powf(0.5 + set.eta);
            rep.push(if sweep_lambda { l.value() } else { n.value() }, raw);
            rep.diagnostic(format!("normalized@lambda={},N={}", l.value(), n.value()), raw / norm);
        }
    }
    if set.window > grid.half_period() {
        rep.warn("window exceeds the box half-period; waves wrap around the torus");
    }
    rep.fit();
    Ok(rep)
}

/// `||e^{-it|D|} f||_inf` at each requested time, with the fitted decay exponent.
pub fn decay_probe(f: &ScalarField, times: &[f64]) -> Result<ProbeReport> {
    let grid = *f.grid();
    let mut rep = ProbeReport::new(
        "decay",
        "t",
        Environment {
            grid: Some(grid),
            rho_id: RHO_ID.into(),
            seed: None,
        },
    )
    .param("times", times);
    let h = DispersionLaw::Wave.table(&grid);
    let fh = grid::fft_forward(f);
    for &t in times {
        if t > grid.half_period() / 2.0 + 1e-12 {
            rep.warn(format!("time {t} lets the wavefront approach the box boundary"));
        }
        let mut g = fh.clone();
        evolve_spectral(&mut g, &h, Sign::Plus, t);
        rep.push(t, lp(&grid::fft_inverse(&g), Exponent::INFINITY));
    }
    if rep.max_value() > 0.0 {
        rep.fit();
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn l2<F: Field>(f: &F) -> f64 {
        lp(f, Exponent::new(2.0).unwrap())
    }

    fn random(g: GridSpec, seed: u64) -> ScalarField {
        ScalarField::random(g, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn evolution_is_unitary_group() {
        let g = GridSpec::new(PI, 16).unwrap();
        let f = random(g, 1);
        for law in [DispersionLaw::Wave, DispersionLaw::klein_gordon(1.0).unwrap()] {
            assert!(l2(&evolve(&f, law, Sign::Plus, 0.0).sub(&f).unwrap()) < 1e-12 * l2(&f));
            for t in [0.1, 1.0, 10.0] {
                assert!((l2(&evolve(&f, law, Sign::Minus, t)) - l2(&f)).abs() < 1e-12 * l2(&f));
            }
            let a = evolve(&evolve(&f, law, Sign::Plus, 0.3), law, Sign::Plus, 1.1);
            let b = evolve(&f, law, Sign::Plus, 1.4);
            assert!(l2(&a.sub(&b).unwrap()) < 1e-12 * l2(&f));
        }
        let mode = ScalarField::plane_wave(g, [2, 1, 0]);
        let k = 5f64.sqrt();
        let got = evolve(&mode, DispersionLaw::Wave, Sign::Plus, 0.7);
        let want = mode.scaled(C64::from_polar(1.0, -0.7 * k));
        assert!(l2(&got.sub(&want).unwrap()) < 1e-12 * l2(&mode));
    }

    #[test]
    fn halfwave_split() {
        let g = GridSpec::new(PI, 16).unwrap();
        let f = grid::apply_symbol(&random(g, 2), |i| {
            C64::new(if g.mode_norm_sq(i) == 0 { 0.0 } else { 1.0 }, 0.0)
        });
        let grad = |s: f64| grid::apply_symbol(&f, |i| C64::new(0.0, s * g.frequency_norm(i)));
        let fwd = halfwave_decompose(&WaveDataPair::new(f.clone(), grad(-1.0)).unwrap()).unwrap();
        assert!(l2(&fwd.plus.sub(&f).unwrap()) < 1e-12 * l2(&f));
        assert!(l2(&fwd.minus) < 1e-12 * l2(&f));
        let bwd = halfwave_decompose(&WaveDataPair::new(f.clone(), grad(1.0)).unwrap()).unwrap();
        assert!(l2(&bwd.minus.sub(&f).unwrap()) < 1e-12 * l2(&f));

        let v = grid::apply_symbol(&random(g, 3), |i| {
            C64::new(if g.mode_norm_sq(i) == 0 { 0.0 } else { 1.0 }, 0.0)
        });
        let hw = halfwave_decompose(&WaveDataPair::new(f.clone(), v.clone()).unwrap()).unwrap();
        let (u, ut) = recombine(&hw.plus, &hw.minus).unwrap();
        assert!(l2(&u.sub(&f).unwrap()) < 1e-10 * l2(&f));
        assert!(l2(&ut.sub(&v).unwrap()) < 1e-10 * l2(&v));
        assert!(hw.zero_mode_removed < 1e-12);
    }

    #[test]
    fn energy_is_conserved() {
        let g = GridSpec::new(PI, 16).unwrap();
        let u0 = random(g, 4);
        let u1 = grid::apply_symbol(&random(g, 5), |i| {
            C64::new(if g.mode_norm_sq(i) == 0 { 0.0 } else { 1.0 }, 0.0)
        });
        let hw = halfwave_decompose(&WaveDataPair::new(u0, u1).unwrap()).unwrap();
        let e0 = {
            let (u, ut) = recombine(&hw.plus, &hw.minus).unwrap();
            wave_energy(&u, &ut)
        };
        for t in [0.5, 3.0] {
            let p = evolve(&hw.plus, DispersionLaw::Wave, Sign::Plus, t);
            let m = evolve(&hw.minus, DispersionLaw::Wave, Sign::Minus, t);
            let (u, ut) = recombine(&p, &m).unwrap();
            assert!((wave_energy(&u, &ut) - e0).abs() < 1e-8 * e0);
        }
    }

    #[test]
    fn resonant_duhamel_is_exact() {
        let g = GridSpec::new(PI, 8).unwrap();
        let f = random(g, 6);
        let law = DispersionLaw::klein_gordon(1.0).unwrap();
        let free = free_trajectory(&f, law, Sign::Minus, 0.1, 11).unwrap();
        let d = duhamel(&free, law, Sign::Minus).unwrap();
        for (k, fr) in d.frames().iter().enumerate() {
            let want = free.frames()[k].scaled(C64::new(free.time(k), 0.0));
            assert!(l2(&fr.sub(&want).unwrap()) < 1e-12 * l2(&f).max(1.0));
        }
        let zero = SpacetimeField::new(0.1, vec![ScalarField::zeros(&g); 4]).unwrap();
        assert!(duhamel(&zero, law, Sign::Plus).unwrap().frames().iter().all(|x| l2(x) == 0.0));
    }

    #[test]
    fn duhamel_residual_is_second_order() {
        let g = GridSpec::new(PI, 8).unwrap();
        let a = random(g, 7);
        let b = random(g, 8);
        let law = DispersionLaw::Wave;
        let residual = |dt: f64| {
            let count = (2.0 / dt).round() as usize + 1;
            let forcing = SpacetimeField::sample(dt, count, |t| {
                let mut x = a.scaled(C64::from_polar(1.0, 1.3 * t));
                x.add_scaled(&b, C64::new((0.7 * t).sin(), 0.0)).unwrap();
                x
            })
            .unwrap();
            let w = duhamel(&forcing, law, Sign::Plus).unwrap();
            let iw = w.map_frames(|_, f| f.scaled(C64::new(0.0, 1.0)));
            equation_residual(&iw, &forcing, law, Sign::Plus).unwrap()
        };
        let (r1, r2) = (residual(0.02), residual(0.01));
        assert!(r1 / r2 > 3.5, "{r1} {r2}");
    }

    #[test]
    fn duhamel_is_linear() {
        let g = GridSpec::new(PI, 8).unwrap();
        let mk = |s: u64| {
            let base = random(g, s);
            SpacetimeField::sample(0.1, 5, |t| base.scaled(C64::new(1.0 + t, 0.0))).unwrap()
        };
        let (f, h) = (mk(9), mk(10));
        let (a, b) = (C64::new(0.3, -1.0), C64::new(2.0, 0.5));
        let combo = SpacetimeField::new(
            0.1,
            f.frames()
                .iter()
                .zip(h.frames())
                .map(|(x, y)| {
                    let mut z = x.scaled(a);
                    z.add_scaled(y, b).unwrap();
                    z
                })
                .collect(),
        )
        .unwrap();
        let law = DispersionLaw::Wave;
        let lhs = duhamel(&combo, law, Sign::Plus).unwrap();
        let (df, dh) = (duhamel(&f, law, Sign::Plus).unwrap(), duhamel(&h, law, Sign::Plus).unwrap());
        for k in 0..5 {
            let mut want = df.frames()[k].scaled(a);
            want.add_scaled(&dh.frames()[k], b).unwrap();
            assert!(l2(&lhs.frames()[k].sub(&want).unwrap()) < 1e-12 * l2(&want).max(1.0));
        }
    }

    #[test]
    fn evolution_commutes_with_localizations() {
        use crate::angular::AngularAnalyzer;
        use crate::multiplier::{project_annulus, project_cap, CapCollection};
        let g = GridSpec::new(PI, 16).unwrap();
        let f = random(g, 11);
        let law = DispersionLaw::Wave;
        let ev = |x: &ScalarField| evolve(x, law, Sign::Plus, 0.9);
        let lam = DyadicScale::from_exponent(1);
        let a = ev(&project_annulus(&f, lam).unwrap());
        let b = project_annulus(&ev(&f), lam).unwrap();
        assert!(l2(&a.sub(&b).unwrap()) < 1e-8 * l2(&f));
        let caps = CapCollection::new(0.7).unwrap();
        let a = ev(&project_cap(&f, &caps, 3));
        let b = project_cap(&ev(&f), &caps, 3);
        assert!(l2(&a.sub(&b).unwrap()) < 1e-8 * l2(&f));
        let an = AngularAnalyzer::new(&g, 12).unwrap();
        let n = DyadicScale::from_exponent(2);
        let a = ev(&an.project_hn(&f, n).unwrap());
        let b = an.project_hn(&ev(&f), n).unwrap();
        assert!(l2(&a.sub(&b).unwrap()) < 1e-8 * l2(&f));
    }

    #[test]
    fn decay_probe_edge_cases() {
        let g = GridSpec::new(8.0, 16).unwrap();
        let rep = decay_probe(&ScalarField::zeros(&g), &[1.0, 2.0, 3.0]).unwrap();
        assert!(rep.fit.is_none() && rep.max_value() == 0.0);
        let f = ScalarField::from_fn(g, |x| C64::new((-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp(), 0.0));
        let rep = decay_probe(&f, &[1e-9, 6.0]).unwrap();
        let sup = lp(&f, Exponent::INFINITY);
        assert!((rep.samples[0].value - sup).abs() < 1e-6 * sup);
        assert!(!rep.warnings.is_empty());
    }

    #[test]
    fn single_mode_strichartz_norm() {
        let g = GridSpec::new(PI, 8).unwrap();
        let mode = ScalarField::plane_wave(g, [1, 0, 0]);
        let q = q_eta(0.1);
        let traj = free_trajectory(&mode, DispersionLaw::Wave, Sign::Minus, 0.5, 17).unwrap();
        let got = grid::mixed_norm(&traj, 2.0, q).unwrap();
        let want = 8f64.sqrt() * (2.0 * PI).powf(3.0 / q);
        assert!((got - want).abs() < 1e-10 * want);
    }
}
