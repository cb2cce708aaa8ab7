//! Fourier-side localizations built from one bump: dyadic annuli, cubes, caps and
//! space-time modulation bands.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{self, apply_symbol, Field, GridSpec, ScalarField, SpacetimeField, C64};
use crate::report::{Environment, ProbeReport};

pub const RHO_ID: &str = "log2-exp-bump-v1";

/// `exp(-1/(1-s^2))` on `|s| < 1`, zero outside.
pub fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

/// Dyadic bump supported in `1/2 < r < 2`, with `sum_k rho(2^k r) = 1` for `r > 0`.
pub fn rho(r: f64) -> f64 {
    if !(r > 0.5 && r < 2.0) {
        return 0.0;
    }
    let s = r.log2();
    let b = bump(s);
    b / (bump(s - 1.0) + b + bump(s + 1.0))
}

/// `rho_1(r) = sum_{lambda <= 1} rho(r / lambda)`, equal to 1 on `[0,1]` and 0 from 2 on.
pub fn rho_low(r: f64) -> f64 {
    if r <= 1.0 {
        1.0
    } else if r >= 2.0 {
        0.0
    } else {
        1.0 - rho(r / 2.0)
    }
}

/// Power of two `2^k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicScale(i32);

impl DyadicScale {
    pub const ONE: DyadicScale = DyadicScale(0);

    pub fn from_exponent(k: i32) -> Self {
        Self(k)
    }

    pub fn from_value(v: f64) -> Result<Self> {
        if !(v > 0.0) || !v.is_finite() {
            return Err(invalid("scale", format!("{v} is not positive")));
        }
        let k = v.log2().round() as i32;
        if 2f64.powi(k) != v {
            return Err(invalid("scale", format!("{v} is not a power of two")));
        }
        Ok(Self(k))
    }

    pub fn exponent(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        2f64.powi(self.0)
    }

    pub fn octaves_to(self, other: DyadicScale) -> u32 {
        self.0.abs_diff(other.0)
    }
}

/// Symbol of `P_lambda`; scale one carries the whole low-frequency block.
pub fn annulus_symbol(lambda: DyadicScale, r: f64) -> f64 {
    if lambda == DyadicScale::ONE {
        rho_low(r)
    } else {
        rho(r / lambda.value())
    }
}

pub fn annulus_warnings(grid: &GridSpec, lambda: DyadicScale) -> Vec<String> {
    let l = lambda.value();
    let mut w = Vec::new();
    if 2.0 * l > grid.nyquist() {
        w.push(format!(
            "annulus {l} reaches past the Nyquist radius {:.3}; support truncated",
            grid.nyquist()
        ));
    }
    w
}

fn check_annulus(grid: &GridSpec, lambda: DyadicScale) -> Result<()> {
    let l = lambda.value();
    if lambda != DyadicScale::ONE && 2.0 * l <= grid.frequency_unit() {
        return Err(invalid(
            "lambda",
            format!("annulus {l} lies below the lattice spacing {}", grid.frequency_unit()),
        ));
    }
    if l / 2.0 >= grid.nyquist() * 3f64.sqrt() {
        return Err(invalid("lambda", format!("annulus {l} lies beyond the lattice")));
    }
    Ok(())
}

pub fn project_annulus<F: Field>(f: &F, lambda: DyadicScale) -> Result<F> {
    let grid = *f.grid();
    check_annulus(&grid, lambda)?;
    for w in annulus_warnings(&grid, lambda) {
        log::warn!("{w}");
    }
    Ok(apply_symbol(f, |i| {
        C64::new(annulus_symbol(lambda, grid.frequency_norm(i)), 0.0)
    }))
}

/// Homogeneous piece `rho(|xi|/lambda)` for every scale, including one.
pub fn project_annulus_homogeneous<F: Field>(f: &F, lambda: DyadicScale) -> Result<F> {
    let grid = *f.grid();
    check_annulus(&grid, lambda)?;
    let l = lambda.value();
    Ok(apply_symbol(f, |i| C64::new(rho(grid.frequency_norm(i) / l), 0.0)))
}

/// One-dimensional partition `chi(t) = bump(t) / sum_k bump(t - k)`.
fn chi(t: f64) -> f64 {
    let b = bump(t);
    if b == 0.0 {
        return 0.0;
    }
    let base = t.floor();
    let s: f64 = (-1..=2).map(|k| bump(t - (base + k as f64))).sum();
    b / s
}

/// Integer label of a cube center `spacing * id`.
pub type CubeId = [i64; 3];

/// Cubes of side `mu / c0` centered on the scaled integer lattice, tensor-product weights.
#[derive(Clone, Debug)]
pub struct CubeCollection {
    mu: f64,
    c0: f64,
    spacing: f64,
}

impl CubeCollection {
    pub fn new(mu: f64, c0: f64) -> Result<Self> {
        if !(mu > 0.0 && c0 > 0.0) {
            return Err(invalid("cube", "mu and c0 must be positive"));
        }
        Ok(Self {
            mu,
            c0,
            spacing: mu / c0,
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn center(&self, q: CubeId) -> [f64; 3] {
        q.map(|v| v as f64 * self.spacing)
    }

    pub fn weight(&self, q: CubeId, xi: [f64; 3]) -> f64 {
        (0..3)
            .map(|a| chi(xi[a] / self.spacing - q[a] as f64))
            .product()
    }

    /// The at most eight cubes whose weight is nonzero at `xi`.
    pub fn cubes_at(&self, xi: [f64; 3]) -> Vec<(CubeId, f64)> {
        let per_axis: Vec<Vec<(i64, f64)>> = (0..3)
            .map(|a| {
                let t = xi[a] / self.spacing;
                let base = t.floor() as i64;
                (base..=base + 1)
                    .map(|k| (k, chi(t - k as f64)))
                    .filter(|(_, w)| *w > 0.0)
                    .collect()
            })
            .collect();
        let mut out = Vec::with_capacity(8);
        for &(a, wa) in &per_axis[0] {
            for &(b, wb) in &per_axis[1] {
                for &(c, wc) in &per_axis[2] {
                    out.push(([a, b, c], wa * wb * wc));
                }
            }
        }
        out
    }

    /// Every cube meeting the frequency lattice of `grid`.
    pub fn cubes(&self, grid: &GridSpec) -> Vec<CubeId> {
        let u = grid.frequency_unit();
        let half = (grid.points_per_axis() / 2) as f64;
        let lo = ((-half * u) / self.spacing).floor() as i64 - 1;
        let hi = (((half - 1.0) * u) / self.spacing).ceil() as i64 + 1;
        let mut out = Vec::new();
        for a in lo..=hi {
            for b in lo..=hi {
                for c in lo..=hi {
                    out.push([a, b, c]);
                }
            }
        }
        out
    }
}

pub fn project_cube<F: Field>(f: &F, cubes: &CubeCollection, q: CubeId) -> F {
    let grid = *f.grid();
    apply_symbol(f, |i| C64::new(cubes.weight(q, grid.frequency(i)), 0.0))
}

/// Sparse per-lattice cap weights for one grid.
#[derive(Debug)]
pub struct CapTable {
    by_cap: Vec<Vec<(u32, f64)>>,
    max_overlap: usize,
}

impl CapTable {
    pub fn entries(&self, cap: usize) -> &[(u32, f64)] {
        &self.by_cap[cap]
    }

    pub fn max_overlap(&self) -> usize {
        self.max_overlap
    }

    /// Total weight `sum_kappa rho_kappa` at every lattice point.
    pub fn weight_sum(&self, grid: &GridSpec) -> Vec<f64> {
        let mut s = vec![0.0; grid.len()];
        for cap in &self.by_cap {
            for &(i, w) in cap {
                s[i as usize] += w;
            }
        }
        s
    }
}

type GridKey = (u64, usize);

fn grid_key(g: &GridSpec) -> GridKey {
    (g.half_period().to_bits(), g.points_per_axis())
}

/// Quasi-uniform caps of angular radius `alpha` on the unit sphere.
#[derive(Debug)]
pub struct CapCollection {
    alpha: f64,
    centers: Vec<[f64; 3]>,
    order: Vec<usize>,
    tables: Mutex<HashMap<GridKey, Arc<CapTable>>>,
}

impl Clone for CapCollection {
    fn clone(&self) -> Self {
        Self {
            alpha: self.alpha,
            centers: self.centers.clone(),
            order: self.order.clone(),
            tables: Mutex::new(HashMap::new()),
        }
    }
}

impl CapCollection {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(invalid("alpha", format!("{alpha} outside (0, 1]")));
        }
        let n = (12.0 / (alpha * alpha)).ceil() as usize;
        let golden = PI * (3.0 - 5f64.sqrt());
        let centers: Vec<[f64; 3]> = (0..n)
            .map(|k| {
                let z = 1.0 - (2.0 * k as f64 + 1.0) / n as f64;
                let r = (1.0 - z * z).sqrt();
                let phi = golden * k as f64;
                [r * phi.cos(), r * phi.sin(), z]
            })
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| centers[a][2].total_cmp(&centers[b][2]));
        Ok(Self {
            alpha,
            centers,
            order,
            tables: Mutex::new(HashMap::new()),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn center(&self, k: usize) -> [f64; 3] {
        self.centers[k]
    }

    /// Normalized weights `(cap, rho_kappa(w))` at a unit direction.
    pub fn weights_at(&self, w: [f64; 3]) -> Vec<(usize, f64)> {
        let lo = self
            .order
            .partition_point(|&k| self.centers[k][2] < w[2] - self.alpha);
        let mut raw = Vec::new();
        for &k in &self.order[lo..] {
            let c = self.centers[k];
            if c[2] > w[2] + self.alpha {
                break;
            }
            let dot = (c[0] * w[0] + c[1] * w[1] + c[2] * w[2]).clamp(-1.0, 1.0);
            let b = bump(dot.acos() / self.alpha);
            if b > 0.0 {
                raw.push((k, b));
            }
        }
        let total: f64 = raw.iter().map(|r| r.1).sum();
        raw.into_iter().map(|(k, b)| (k, b / total)).collect()
    }

    /// Cap whose center is closest to the direction `w`.
    pub fn nearest(&self, w: [f64; 3]) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for (k, c) in self.centers.iter().enumerate() {
            let dot = c[0] * w[0] + c[1] * w[1] + c[2] * w[2];
            if dot > best.1 {
                best = (k, dot);
            }
        }
        best.0
    }

    pub fn table(&self, grid: &GridSpec) -> Arc<CapTable> {
        let mut tables = self.tables.lock().expect("cap table cache poisoned");
        tables
            .entry(grid_key(grid))
            .or_insert_with(|| Arc::new(self.build_table(grid)))
            .clone()
    }

    fn build_table(&self, grid: &GridSpec) -> CapTable {
        let mut by_cap = vec![Vec::new(); self.centers.len()];
        let mut max_overlap = 0;
        for i in 0..grid.len() {
            let n = grid.mode(i);
            let r2 = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]) as f64;
            if r2 == 0.0 {
                continue;
            }
            let r = r2.sqrt();
            let w = n.map(|v| v as f64 / r);
            let ws = self.weights_at(w);
            max_overlap = max_overlap.max(ws.len());
            for (k, v) in ws {
                by_cap[k].push((i as u32, v));
            }
        }
        CapTable {
            by_cap,
            max_overlap,
        }
    }

    pub fn warnings(&self, grid: &GridSpec, lambda: f64) -> Vec<String> {
        let resolved = grid.frequency_unit() / lambda;
        if self.alpha < resolved {
            vec![format!(
                "cap radius {} under-resolves the angular lattice spacing {:.4} at scale {lambda}",
                self.alpha, resolved
            )]
        } else {
            Vec::new()
        }
    }
}

/// Fourier multiplier by `rho_kappa(xi/|xi|)`; the zero bin gets weight zero.
pub fn project_cap<F: Field>(f: &F, caps: &CapCollection, cap: usize) -> F {
    let grid = *f.grid();
    let table = caps.table(&grid);
    let mut out = grid::fft_forward(f);
    let mut sym = vec![0.0; grid.len()];
    for &(i, w) in table.entries(cap) {
        sym[i as usize] = w;
    }
    for c in out.components_mut() {
        c.iter_mut().zip(&sym).for_each(|(v, w)| *v *= *w);
    }
    grid::fft_inverse(&out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn both() -> [Sign; 2] {
        [Sign::Plus, Sign::Minus]
    }
}

/// Which modulation band to keep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Band {
    /// `C_d`: `rho(|tau + theta|xi|| / d)`.
    At(f64),
    /// `C_{<=d}`: `rho_1(|tau + theta|xi|| / d)`.
    AtMost(f64),
    /// `C_{<<d}`, taken as `C_{<= d/4}`.
    WellBelow(f64),
}

impl Band {
    fn scale(self) -> f64 {
        match self {
            Band::At(d) | Band::AtMost(d) => d,
            Band::WellBelow(d) => d / 4.0,
        }
    }

    fn weight(self, m: f64) -> f64 {
        match self {
            Band::At(d) => rho(m / d),
            Band::AtMost(d) => rho_low(m / d),
            Band::WellBelow(d) => rho_low(m / (d / 4.0)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModulationOptions {
    /// Fraction of the window rolled off at each end; zero disables the taper.
    pub roll_off: f64,
}

impl Default for ModulationOptions {
    fn default() -> Self {
        Self { roll_off: 0.1 }
    }
}

#[derive(Clone, Debug)]
pub struct ModulationOutput<F: Field> {
    pub field: SpacetimeField<F>,
    /// `||(1 - w)(v - mean v)|| / ||u||` over the window, in space-time L2.
    pub leakage: f64,
}

/// Smooth window that is one in the interior and rolls off over `roll_off` of each end.
pub fn taper(count: usize, roll_off: f64) -> Vec<f64> {
    if roll_off <= 0.0 || count < 3 {
        return vec![1.0; count];
    }
    let n = (count - 1) as f64;
    (0..count)
        .map(|k| {
            let s = k as f64 / n;
            let edge = s.min(1.0 - s) / roll_off;
            if edge >= 1.0 {
                1.0
            } else {
                let cut = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
                let (a, b) = (cut(edge), cut(1.0 - edge));
                a / (a + b)
            }
        })
        .collect()
}

/// Smallest modulation the window resolves under the `2 pi (K dt)^{-1} <= d / 4` rule.
pub fn check_modulation_window(count: usize, dt: f64, d: f64) -> Result<()> {
    let window = count as f64 * dt;
    if 2.0 * PI / window > d / 4.0 {
        return Err(Error::UnresolvedModulation { window, d });
    }
    Ok(())
}

/// Space-time modulation projection relative to the cone `tau = -theta|xi|`.
///
/// Each spatial mode is moved to the profile frame `v(t) = e^{i theta t |xi|} u^(t)`,
/// where free waves are constant. The window mean of `v` has modulation zero; its
/// tapered fluctuation is resolved by a time FFT over the window.
pub fn project_modulation<F: Field>(
    u: &SpacetimeField<F>,
    band: Band,
    theta: Sign,
    opts: ModulationOptions,
) -> Result<ModulationOutput<F>> {
    let k = u.sample_count();
    let dt = u.dt();
    check_modulation_window(k, dt, band.scale())?;
    let grid = *u.grid();
    let n = grid.len();
    let w = taper(k, opts.roll_off);
    let spectra: Vec<F> = u.frames().iter().map(grid::fft_forward).collect();
    let ncomp = spectra[0].components().len();
    let mut out: Vec<F> = (0..k).map(|_| F::zeros(&grid)).collect();

    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(k);
    let inv = planner.plan_fft_inverse(k);
    let mut scratch = vec![C64::new(0.0, 0.0); fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len())];
    let sigma: Vec<f64> = (0..k)
        .map(|j| {
            let jj = if j <= k / 2 { j as f64 } else { j as f64 - k as f64 };
            2.0 * PI * jj / (k as f64 * dt)
        })
        .collect();
    let mean_weight = band.weight(0.0);
    let symbol: Vec<f64> = sigma.iter().map(|s| band.weight(s.abs())).collect();
    let th = theta.value();
    let mut series = vec![C64::new(0.0, 0.0); k];
    let mut cut = 0.0;
    let mut total = 0.0;

    for c in 0..ncomp {
        for i in 0..n {
            let h = grid.frequency_norm(i);
            let mut any = false;
            for t in 0..k {
                let v = spectra[t].components()[c][i];
                any |= v != C64::new(0.0, 0.0);
                series[t] = v * C64::from_polar(1.0, th * u.time(t) * h);
            }
            if !any {
                continue;
            }
            let mean = series.iter().sum::<C64>() / k as f64;
            for t in 0..k {
                let fl = series[t] - mean;
                total += series[t].norm_sqr();
                cut += ((1.0 - w[t]) * fl).norm_sqr();
                series[t] = w[t] * fl;
            }
            fwd.process_with_scratch(&mut series, &mut scratch);
            for (s, y) in series.iter_mut().zip(&symbol) {
                *s *= *y / k as f64;
            }
            inv.process_with_scratch(&mut series, &mut scratch);
            for t in 0..k {
                let v = (series[t] + mean_weight * mean)
                    * C64::from_polar(1.0, -th * u.time(t) * h);
                out[t].components_mut()[c][i] = v;
            }
        }
    }
    let frames = out.iter().map(grid::fft_inverse).collect();
    Ok(ModulationOutput {
        field: SpacetimeField::new(dt, frames)?,
        leakage: if total > 0.0 { (cut / total).sqrt() } else { 0.0 },
    })
}

#[derive(Clone, Debug)]
pub struct BernsteinPoint {
    pub max_ratio: f64,
    pub normalized: f64,
    pub skipped: usize,
    pub warnings: Vec<String>,
}

/// `max ||R_kappa P_lambda f||_inf / ||f||_p` over random draws and the kernel extremizer.
pub fn bernstein_point(
    grid: &GridSpec,
    lambda: DyadicScale,
    caps: &CapCollection,
    p: f64,
    trials: usize,
    rng: &mut ChaCha8Rng,
) -> Result<BernsteinPoint> {
    grid::Exponent::new(p)?;
    check_annulus(grid, lambda)?;
    let mut warnings = annulus_warnings(grid, lambda);
    warnings.extend(caps.warnings(grid, lambda.value()));
    let cap = caps.nearest([0.0, 0.0, 1.0]);
    let table = caps.table(grid);
    let mut sym = vec![0.0; grid.len()];
    for &(i, w) in table.entries(cap) {
        sym[i as usize] = w * annulus_symbol(lambda, grid.frequency_norm(i as usize));
    }
    let apply = |f: &ScalarField| {
        let mut fh = grid::fft_forward(f);
        fh.values_mut()
            .iter_mut()
            .zip(&sym)
            .for_each(|(v, s)| *v *= *s);
        grid::fft_inverse(&fh)
    };
    let mut inputs: Vec<ScalarField> = Vec::with_capacity(trials + 1);
    let kernel = ScalarField::from_values(*grid, sym.iter().map(|&s| C64::new(s, 0.0)).collect())?;
    inputs.push(grid::fft_inverse(&kernel));
    for _ in 0..trials {
        let raw = ScalarField::random(*grid, rng);
        // Random data with the probed frequency support, so the ratio is not
        // dominated by frequencies the multiplier removes.
        inputs.push(apply_symbol(&raw, |i| C64::new(sym[i].sqrt(), 0.0)));
    }
    let mut max_ratio: f64 = 0.0;
    let mut skipped = 0;
    for f in &inputs {
        let den = grid::lebesgue_norm(f, p)?;
        if den == 0.0 {
            skipped += 1;
            continue;
        }
        let num = grid::lebesgue_norm(&apply(f), f64::INFINITY)?;
        max_ratio = max_ratio.max(num / den);
    }
    let alpha = caps.alpha();
    let norm = (lambda.value().powi(3) * alpha * alpha).powf(1.0 / p);
    Ok(BernsteinPoint {
        max_ratio,
        normalized: max_ratio / norm,
        skipped,
        warnings,
    })
}

pub fn bernstein_probe(
    grid: &GridSpec,
    lambdas: &[DyadicScale],
    alpha: f64,
    p: f64,
    trials: usize,
    seed: u64,
) -> Result<ProbeReport> {
    let caps = CapCollection::new(alpha)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = ProbeReport::new(
        "bernstein",
        "lambda",
        Environment {
            grid: Some(*grid),
            rho_id: RHO_ID.into(),
            seed: Some(seed),
        },
    )
    .param("alpha", alpha)
    .param("p", p)
    .param("trials", trials);
    for &l in lambdas {
        let pt = bernstein_point(grid, l, &caps, p, trials, &mut rng)?;
        rep.push(l.value(), pt.max_ratio);
        rep.diagnostic(format!("normalized@{}", l.value()), pt.normalized);
        for w in pt.warnings {
            rep.warn(w);
        }
    }
    rep.fit();
    Ok(rep)
}
