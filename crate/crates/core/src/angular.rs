//! Real spherical harmonics, synthesis with prescribed angular content, the angular
//! Littlewood-Paley pieces `H_N`, the weight `<Omega>^sigma` and rotation generators.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{self, Field, GridSpec, ScalarField, C64};
use crate::multiplier::{self, CapCollection, DyadicScale, RHO_ID};
use crate::report::{Environment, ProbeReport};

/// Weight of degree `l` in `H_N`; `N = 1` takes `rho_1(l)`.
pub fn hn_weight(n: DyadicScale, l: usize) -> f64 {
    multiplier::annulus_symbol(n, l as f64)
}

/// Degrees carrying nonzero `H_N` weight.
pub fn hn_degrees(n: DyadicScale) -> std::ops::Range<usize> {
    let v = n.value();
    if n == DyadicScale::ONE {
        0..2
    } else {
        let lo = (v / 2.0).floor() as usize + 1;
        let hi = (2.0 * v).ceil() as usize;
        lo..hi
    }
}

pub fn omega_weight(l: usize, sigma: f64) -> f64 {
    (1.0 + (l * (l + 1)) as f64).powf(sigma / 2.0)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, z);
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    (p1, n as f64 * (z * p1 - p0) / (z * z - 1.0))
}

/// Real orthonormal harmonics up to `l_max`, indexed `l^2 + n` with `m = n - l`.
#[derive(Clone, Debug)]
pub struct SphericalHarmonics {
    l_max: usize,
}

impl SphericalHarmonics {
    pub fn new(l_max: usize) -> Self {
        Self { l_max }
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn count(&self) -> usize {
        (self.l_max + 1).pow(2)
    }

    pub fn index(l: usize, n: usize) -> usize {
        l * l + n
    }

    /// Normalized associated Legendre values divided by `sin^m`, as polynomials in `z`.
    fn reduced_legendre(&self, z: f64) -> Vec<Vec<f64>> {
        let lm = self.l_max;
        let mut q = vec![vec![0.0; lm + 1]; lm + 1];
        let mut mm = (1.0 / (4.0 * PI)).sqrt();
        for m in 0..=lm {
            if m > 0 {
                mm *= ((2 * m + 1) as f64 / (2 * m) as f64).sqrt();
            }
            q[m][m] = mm;
            if m < lm {
                q[m][m + 1] = ((2 * m + 3) as f64).sqrt() * z * mm;
            }
            for l in m + 2..=lm {
                let a = (((4 * l * l - 1) as f64) / ((l * l - m * m) as f64)).sqrt();
                let b = ((((l - 1) * (l - 1) - m * m) as f64) / ((4 * (l - 1) * (l - 1) - 1) as f64))
                    .sqrt();
                q[m][l] = a * (z * q[m][l - 1] - b * q[m][l - 2]);
            }
        }
        q
    }

    /// All harmonics at the unit direction `w`.
    pub fn eval(&self, w: [f64; 3]) -> Vec<f64> {
        let lm = self.l_max;
        let q = self.reduced_legendre(w[2]);
        let base = C64::new(w[0], w[1]);
        let mut pow = vec![C64::new(1.0, 0.0); lm + 1];
        for m in 1..=lm {
            pow[m] = pow[m - 1] * base;
        }
        let mut out = vec![0.0; self.count()];
        let r2 = 2f64.sqrt();
        for l in 0..=lm {
            for n in 0..=2 * l {
                let m = n as i64 - l as i64;
                let am = m.unsigned_abs() as usize;
                out[Self::index(l, n)] = if m == 0 {
                    q[0][l]
                } else if m > 0 {
                    r2 * q[am][l] * pow[am].re
                } else {
                    r2 * q[am][l] * pow[am].im
                };
            }
        }
        out
    }

    /// `y_{l,n}` at `x / |x|` times `|x|^l`; smooth through the origin.
    pub fn solid(&self, x: [f64; 3], l: usize, n: usize) -> f64 {
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        if r == 0.0 {
            return if l == 0 { (1.0 / (4.0 * PI)).sqrt() } else { 0.0 };
        }
        let y = SphericalHarmonics::new(l).eval(x.map(|v| v / r));
        y[Self::index(l, n)] * r.powi(l as i32)
    }
}

/// Harmonics tabulated on a Gauss-Legendre by uniform-longitude product rule.
pub struct SphericalHarmonicBasis {
    harmonics: SphericalHarmonics,
    weights: Vec<f64>,
    table: Vec<Vec<f64>>,
}

impl SphericalHarmonicBasis {
    pub fn new(l_max: usize) -> Result<Self> {
        if l_max > 32 {
            return Err(Error::DegreeOutOfRange { l: l_max, max: 32 });
        }
        let harmonics = SphericalHarmonics::new(l_max);
        let (zs, wz) = gauss_legendre(l_max + 2);
        let nphi = 2 * l_max + 2;
        let mut weights = Vec::new();
        let mut table = Vec::new();
        for (z, wzi) in zs.iter().zip(&wz) {
            let s = (1.0 - z * z).sqrt();
            for j in 0..nphi {
                let phi = 2.0 * PI * j as f64 / nphi as f64;
                weights.push(wzi * 2.0 * PI / nphi as f64);
                table.push(harmonics.eval([s * phi.cos(), s * phi.sin(), *z]));
            }
        }
        Ok(Self {
            harmonics,
            weights,
            table,
        })
    }

    pub fn harmonics(&self) -> &SphericalHarmonics {
        &self.harmonics
    }

    /// Largest deviation of the quadrature Gram matrix from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let c = self.harmonics.count();
        let mut worst: f64 = 0.0;
        for a in 0..c {
            for b in a..c {
                let g: f64 = self
                    .table
                    .iter()
                    .zip(&self.weights)
                    .map(|(y, w)| w * y[a] * y[b])
                    .sum();
                let want = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((g - want).abs());
            }
        }
        worst
    }

    /// Relative residual of `-Delta_{S^2} y = l(l+1) y` for every `(l, m)`, by spectral
    /// differentiation in colatitude along a meridian.
    pub fn laplace_beltrami_residual(&self) -> f64 {
        let lm = self.harmonics.l_max();
        let n = 4 * (lm + 2);
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let thetas: Vec<f64> = (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect();
        let q: Vec<Vec<Vec<f64>>> = thetas
            .iter()
            .map(|t| self.harmonics.reduced_legendre(t.cos()))
            .collect();
        let mut worst: f64 = 0.0;
        for m in 0..=lm {
            for l in m..=lm {
                let g: Vec<C64> = thetas
                    .iter()
                    .zip(&q)
                    .map(|(t, qq)| C64::new(qq[m][l] * t.sin().powi(m as i32), 0.0))
                    .collect();
                let deriv = |order: i32| {
                    let mut buf = g.clone();
                    fwd.process(&mut buf);
                    for (j, v) in buf.iter_mut().enumerate() {
                        let k = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
                        let k = if j == n / 2 { 0.0 } else { k };
                        *v *= C64::new(0.0, k).powi(order) / n as f64;
                    }
                    inv.process(&mut buf);
                    buf
                };
                let d1 = deriv(1);
                let d2 = deriv(2);
                let scale = g.iter().map(|v| v.norm()).fold(0.0, f64::max) * (l * (l + 1)).max(1) as f64;
                for j in 0..n {
                    let t = thetas[j];
                    if !(t > 0.2 && t < PI - 0.2) {
                        continue;
                    }
                    let lap = d2[j].re + t.cos() / t.sin() * d1[j].re
                        - (m * m) as f64 / t.sin().powi(2) * g[j].re;
                    let r = lap + (l * (l + 1)) as f64 * g[j].re;
                    worst = worst.max(r.abs() / scale);
                }
            }
        }
        worst
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "radial_profile_id", content = "params")]
pub enum RadialProfile {
    /// `(r/w)^l exp(-r^2 / 2w^2)`.
    #[serde(rename = "solid-gaussian")]
    SolidGaussian { width: f64 },
    /// `rho(r / lambda)`; meant for frequency-side synthesis.
    #[serde(rename = "annulus")]
    Annulus { lambda: f64 },
    /// `exp(-(r - center)^2 / 2 width^2)`.
    #[serde(rename = "shell")]
    Shell { center: f64, width: f64 },
}

impl RadialProfile {
    pub fn value(&self, l: usize, r: f64) -> f64 {
        match *self {
            RadialProfile::SolidGaussian { width } => {
                let s = r / width;
                s.powi(l as i32) * (-0.5 * s * s).exp()
            }
            RadialProfile::Annulus { lambda } => multiplier::rho(r / lambda),
            RadialProfile::Shell { center, width } => {
                (-0.5 * ((r - center) / width).powi(2)).exp()
            }
        }
    }

    /// Squared `L^2(r^2 dr)` norm, closed form for the solid Gaussian.
    pub fn norm_sq(&self, l: usize) -> Option<f64> {
        match *self {
            RadialProfile::SolidGaussian { width } => {
                // Gamma(l + 3/2) = sqrt(pi) (2l+1)!! / 2^{l+1}
                let mut g = PI.sqrt();
                for k in 0..=l {
                    g *= (2 * k + 1) as f64 / 2.0;
                }
                Some(width.powi(3) * g / 2.0)
            }
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngularTerm {
    pub l: usize,
    pub n: usize,
    pub coeff_re: f64,
    pub coeff_im: f64,
    #[serde(flatten)]
    pub profile: RadialProfile,
}

impl AngularTerm {
    pub fn new(l: usize, n: usize, coeff: C64, profile: RadialProfile) -> Self {
        Self {
            l,
            n,
            coeff_re: coeff.re,
            coeff_im: coeff.im,
            profile,
        }
    }

    pub fn coeff(&self) -> C64 {
        C64::new(self.coeff_re, self.coeff_im)
    }
}

/// Coefficients times radial profiles; serializes as a flat JSON list of terms.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AngularSpectrum {
    pub terms: Vec<AngularTerm>,
}

impl AngularSpectrum {
    pub fn new(terms: Vec<AngularTerm>) -> Result<Self> {
        for t in &terms {
            if t.n > 2 * t.l {
                return Err(invalid("n", format!("index {} exceeds 2l = {}", t.n, 2 * t.l)));
            }
        }
        Ok(Self { terms })
    }

    pub fn max_degree(&self) -> usize {
        self.terms.iter().map(|t| t.l).max().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Coefficient-side `H_N`.
    pub fn weighted(&self, weight: impl Fn(usize) -> f64) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .filter_map(|t| {
                    let w = weight(t.l);
                    (w != 0.0).then(|| AngularTerm::new(t.l, t.n, t.coeff() * w, t.profile))
                })
                .collect(),
        }
    }

    pub fn project_hn(&self, n: DyadicScale) -> Self {
        self.weighted(|l| hn_weight(n, l))
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| AngularTerm::new(t.l, t.n, t.coeff() * s, t.profile))
                .collect(),
        }
    }

    fn evaluate(&self, x: [f64; 3], sh: &SphericalHarmonics) -> C64 {
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        if r == 0.0 {
            return self
                .terms
                .iter()
                .filter(|t| t.l == 0)
                .map(|t| t.coeff() * t.profile.value(0, 0.0) * (1.0 / (4.0 * PI)).sqrt())
                .sum();
        }
        let y = sh.eval(x.map(|v| v / r));
        self.terms
            .iter()
            .map(|t| t.coeff() * t.profile.value(t.l, r) * y[SphericalHarmonics::index(t.l, t.n)])
            .sum()
    }
}

fn check_spectrum(spec: &AngularSpectrum, grid: &GridSpec) -> Result<SphericalHarmonics> {
    let l_max = spec.max_degree();
    if l_max > 32 {
        return Err(Error::DegreeOutOfRange { l: l_max, max: 32 });
    }
    if l_max > grid.points_per_axis() / 4 {
        log::warn!(
            "degree {l_max} exceeds the M/4 guideline for {} points",
            grid.points_per_axis()
        );
    }
    Ok(SphericalHarmonics::new(l_max))
}

/// Samples `sum c g(|x|) y(x/|x|)` on the grid.
pub fn synthesize(spec: &AngularSpectrum, grid: &GridSpec) -> Result<ScalarField> {
    let sh = check_spectrum(spec, grid)?;
    if spec.is_empty() {
        return Ok(ScalarField::zeros(grid));
    }
    Ok(ScalarField::from_fn(*grid, |x| spec.evaluate(x, &sh)))
}

/// Field whose transform is `sum c g(|xi|) y(xi/|xi|)` on the frequency lattice.
pub fn synthesize_spectral(spec: &AngularSpectrum, grid: &GridSpec) -> Result<ScalarField> {
    let sh = check_spectrum(spec, grid)?;
    if spec.is_empty() {
        return Ok(ScalarField::zeros(grid));
    }
    let fh = ScalarField::from_values(
        *grid,
        (0..grid.len())
            .map(|i| spec.evaluate(grid.frequency(i), &sh))
            .collect(),
    )?;
    Ok(grid::fft_inverse(&fh))
}

/// Orthonormal per-shell bases of sampled harmonics, grouped by degree.
struct Shell {
    points: Vec<u32>,
    columns: Vec<Vec<f64>>,
    degree: Vec<usize>,
    dropped: usize,
}

impl Shell {
    fn build(grid: &GridSpec, points: Vec<u32>, l_max: usize) -> Self {
        let sh = SphericalHarmonics::new(l_max);
        let p = points.len();
        let dirs: Vec<Vec<f64>> = points
            .iter()
            .map(|&i| {
                let n = grid.mode(i as usize);
                let r = ((n[0] * n[0] + n[1] * n[1] + n[2] * n[2]) as f64).sqrt();
                if r == 0.0 {
                    let mut v = vec![0.0; sh.count()];
                    v[0] = 1.0;
                    v
                } else {
                    sh.eval(n.map(|v| v as f64 / r))
                }
            })
            .collect();
        let mut columns: Vec<Vec<f64>> = Vec::new();
        let mut degree = Vec::new();
        let mut dropped = 0;
        'outer: for l in 0..=l_max {
            for n in 0..=2 * l {
                if columns.len() == p {
                    dropped += sh.count() - SphericalHarmonics::index(l, n);
                    break 'outer;
                }
                let k = SphericalHarmonics::index(l, n);
                let mut v: Vec<f64> = dirs.iter().map(|d| d[k]).collect();
                let orig = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if orig == 0.0 {
                    dropped += 1;
                    continue;
                }
                for _ in 0..2 {
                    for c in &columns {
                        let dot: f64 = c.iter().zip(&v).map(|(a, b)| a * b).sum();
                        v.iter_mut().zip(c).for_each(|(x, y)| *x -= dot * y);
                    }
                }
                let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if nrm < 1e-9 * orig {
                    dropped += 1;
                    continue;
                }
                v.iter_mut().for_each(|x| *x /= nrm);
                columns.push(v);
                degree.push(l);
            }
        }
        Self {
            points,
            columns,
            degree,
            dropped,
        }
    }
}

/// Degree-resolved analysis of grid fields on the shells `|n|^2 = const` of the
/// frequency lattice. Degrees above `l_max` share one remainder bucket, weighted as
/// degree `l_max + 1`.
pub struct AngularAnalyzer {
    grid: GridSpec,
    l_max: usize,
    shell_points: HashMap<i64, Vec<u32>>,
    shells: Mutex<HashMap<i64, Arc<Shell>>>,
}

impl AngularAnalyzer {
    pub fn new(grid: &GridSpec, l_max: usize) -> Result<Self> {
        if l_max > 32 {
            return Err(Error::DegreeOutOfRange { l: l_max, max: 32 });
        }
        let mut shell_points: HashMap<i64, Vec<u32>> = HashMap::new();
        for i in 0..grid.len() {
            shell_points
                .entry(grid.mode_norm_sq(i))
                .or_default()
                .push(i as u32);
        }
        Ok(Self {
            grid: *grid,
            l_max,
            shell_points,
            shells: Mutex::new(HashMap::new()),
        })
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn shell(&self, key: i64) -> Arc<Shell> {
        if let Some(s) = self.shells.lock().expect("shell cache poisoned").get(&key) {
            return s.clone();
        }
        let built = Arc::new(Shell::build(
            &self.grid,
            self.shell_points[&key].clone(),
            self.l_max,
        ));
        self.shells
            .lock()
            .expect("shell cache poisoned")
            .entry(key)
            .or_insert(built)
            .clone()
    }

    /// Number of harmonic columns dropped as numerically dependent across built shells.
    pub fn dropped_columns(&self) -> usize {
        self.shells
            .lock()
            .expect("shell cache poisoned")
            .values()
            .map(|s| s.dropped)
            .sum()
    }

    /// Multiplies the degree-`l` part on every shell by `weight(l)` in frequency space.
    pub fn apply_spectral(&self, fh: &mut [C64], weight: &dyn Fn(usize) -> f64) {
        let bucket_w = weight(self.l_max + 1);
        let mut keys: Vec<&i64> = self.shell_points.keys().collect();
        keys.sort();
        for key in keys {
            let pts = &self.shell_points[key];
            if pts.iter().all(|&i| fh[i as usize] == C64::new(0.0, 0.0)) {
                continue;
            }
            let shell = self.shell(*key);
            let v: Vec<C64> = shell.points.iter().map(|&i| fh[i as usize]).collect();
            let mut out: Vec<C64> = v.iter().map(|x| x * bucket_w).collect();
            for (col, &l) in shell.columns.iter().zip(&shell.degree) {
                let a: C64 = col.iter().zip(&v).map(|(c, x)| x * *c).sum();
                let dw = weight(l) - bucket_w;
                if dw != 0.0 {
                    out.iter_mut().zip(col).for_each(|(o, c)| *o += a * (dw * c));
                }
            }
            for (&i, o) in shell.points.iter().zip(out) {
                fh[i as usize] = o;
            }
        }
    }

    pub fn apply_degree_weights<F: Field>(&self, f: &F, weight: impl Fn(usize) -> f64) -> Result<F> {
        if *f.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let mut fh = grid::fft_forward(f);
        for c in fh.components_mut() {
            self.apply_spectral(c, &weight);
        }
        Ok(grid::fft_inverse(&fh))
    }

    pub fn project_hn<F: Field>(&self, f: &F, n: DyadicScale) -> Result<F> {
        if n.exponent() < 0 {
            return Err(invalid("N", "angular scale must be at least 1"));
        }
        self.apply_degree_weights(f, |l| hn_weight(n, l))
    }

    pub fn apply_omega_weight<F: Field>(&self, f: &F, sigma: f64) -> Result<F> {
        self.apply_degree_weights(f, |l| omega_weight(l, sigma))
    }

    /// Squared L2 norms of the degree parts `0..=l_max`, then the remainder bucket.
    pub fn degree_norms_sq<F: Field>(&self, f: &F) -> Result<Vec<f64>> {
        if *f.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let fh = grid::fft_forward(f);
        let mut out = vec![0.0; self.l_max + 2];
        let scale = 1.0 / self.grid.box_volume();
        for c in fh.components() {
            for (key, pts) in &self.shell_points {
                if pts.iter().all(|&i| c[i as usize] == C64::new(0.0, 0.0)) {
                    continue;
                }
                let shell = self.shell(*key);
                let v: Vec<C64> = shell.points.iter().map(|&i| c[i as usize]).collect();
                let total: f64 = v.iter().map(|x| x.norm_sqr()).sum();
                let mut captured = 0.0;
                for (col, &l) in shell.columns.iter().zip(&shell.degree) {
                    let a: C64 = col.iter().zip(&v).map(|(c, x)| x * *c).sum();
                    out[l] += a.norm_sqr() * scale;
                    captured += a.norm_sqr();
                }
                out[self.l_max + 1] += (total - captured).max(0.0) * scale;
            }
        }
        Ok(out)
    }
}

/// `Omega_ij f = x_i d_j f - x_j d_i f` with spectral derivatives.
pub fn rotation_apply(f: &ScalarField, i: usize, j: usize) -> Result<ScalarField> {
    if i > 2 || j > 2 || i == j {
        return Err(invalid("axes", format!("({i}, {j}) is not a pair of distinct axes")));
    }
    let b = grid::boundary_ratio(f);
    if b > 1e-8 {
        log::warn!("rotation generator applied to a field with boundary ratio {b:.2e}");
    }
    let g = *f.grid();
    let dj = grid::derivative(f, j);
    let di = grid::derivative(f, i);
    let v = (0..g.len())
        .map(|k| {
            let x = g.position(k);
            x[i] * dj.values()[k] - x[j] * di.values()[k]
        })
        .collect();
    ScalarField::from_values(g, v)
}

/// Random spectrum with unit-variance complex coefficients on the given degrees.
pub fn random_spectrum(
    degrees: std::ops::Range<usize>,
    profile: RadialProfile,
    rng: &mut ChaCha8Rng,
) -> AngularSpectrum {
    let mut terms = Vec::new();
    for l in degrees {
        for n in 0..=2 * l {
            let re: f64 = rng.sample(rand_distr::StandardNormal);
            let im: f64 = rng.sample(rand_distr::StandardNormal);
            terms.push(AngularTerm::new(l, n, C64::new(re, im), profile));
        }
    }
    AngularSpectrum { terms }
}

/// Band of zonal harmonics aimed at `w0`: `sum_l weight(l) sum_n y_{l,n}(w0) y_{l,n}`.
pub fn zonal_spectrum(
    w0: [f64; 3],
    degrees: std::ops::Range<usize>,
    weight: impl Fn(usize) -> f64,
    profile: RadialProfile,
) -> AngularSpectrum {
    let l_max = degrees.end.saturating_sub(1);
    let y = SphericalHarmonics::new(l_max).eval(w0);
    let mut terms = Vec::new();
    for l in degrees {
        let w = weight(l);
        if w == 0.0 {
            continue;
        }
        for n in 0..=2 * l {
            terms.push(AngularTerm::new(
                l,
                n,
                C64::new(w * y[SphericalHarmonics::index(l, n)], 0.0),
                profile,
            ));
        }
    }
    AngularSpectrum { terms }
}

#[derive(Clone, Debug)]
pub struct ConcentrationPoint {
    pub max_ratio: f64,
    pub normalized: f64,
    pub skipped: usize,
}

/// Largest `||R_kappa P_lambda H_N f||_p / ||P_lambda H_N f||_p` over trials and the
/// few caps carrying the most spectral mass.
#[allow(clippy::too_many_arguments)]
pub fn concentration_point(
    grid: &GridSpec,
    lambda: DyadicScale,
    n: DyadicScale,
    caps: &CapCollection,
    p: f64,
    s: f64,
    trials: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ConcentrationPoint> {
    if !(p >= 2.0 && p.is_finite()) || !(0.0..2.0 / p).contains(&s) {
        return Err(invalid("p, s", format!("need 2 <= p < inf and 0 <= s < 2/p, got p={p}, s={s}")));
    }
    let profile = RadialProfile::Annulus {
        lambda: lambda.value(),
    };
    let degrees = hn_degrees(n);
    let mut inputs: Vec<AngularSpectrum> = Vec::new();
    inputs.push(zonal_spectrum(
        [0.0, 0.0, 1.0],
        degrees.clone(),
        |l| hn_weight(n, l),
        profile,
    ));
    for _ in 0..trials {
        inputs.push(random_spectrum(degrees.clone(), profile, rng).project_hn(n));
    }
    let table = caps.table(grid);
    let mut max_ratio: f64 = 0.0;
    let mut skipped = 0;
    for spec in &inputs {
        let f = synthesize_spectral(spec, grid)?;
        let den = grid::lebesgue_norm(&f, p)?;
        if den < 1e-300 {
            skipped += 1;
            continue;
        }
        let fh = grid::fft_forward(&f);
        let mut mass: Vec<(usize, f64)> = (0..caps.len())
            .map(|k| {
                let m: f64 = table
                    .entries(k)
                    .iter()
                    .map(|&(i, w)| w * w * fh.values()[i as usize].norm_sqr())
                    .sum();
                (k, m)
            })
            .collect();
        mass.sort_by(|a, b| b.1.total_cmp(&a.1));
        for &(k, _) in mass.iter().take(4) {
            let mut g = ScalarField::zeros(grid);
            for &(i, w) in table.entries(k) {
                g.values_mut()[i as usize] = fh.values()[i as usize] * w;
            }
            let num = grid::lebesgue_norm(&grid::fft_inverse(&g), p)?;
            max_ratio = max_ratio.max(num / den);
        }
    }
    let an = caps.alpha() * n.value();
    Ok(ConcentrationPoint {
        max_ratio,
        normalized: max_ratio / an.powf(s),
        skipped,
    })
}

/// Sweeps `(alpha, N)` pairs; samples are the normalized ratio against `alpha N`.
#[allow(clippy::too_many_arguments)]
pub fn concentration_probe(
    grid: &GridSpec,
    lambda: DyadicScale,
    pairs: &[(f64, DyadicScale)],
    p: f64,
    s: f64,
    trials: usize,
    seed: u64,
) -> Result<ProbeReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = ProbeReport::new(
        "concentration",
        "alpha_N",
        Environment {
            grid: Some(*grid),
            rho_id: RHO_ID.into(),
            seed: Some(seed),
        },
    )
    .param("lambda", lambda.value())
    .param("p", p)
    .param("s", s)
    .param("trials", trials);
    for &(alpha, n) in pairs {
        let caps = CapCollection::new(alpha)?;
        for w in caps.warnings(grid, lambda.value()) {
            rep.warn(w);
        }
        let pt = concentration_point(grid, lambda, n, &caps, p, s, trials, &mut rng)?;
        rep.push(alpha * n.value(), pt.normalized);
        rep.diagnostic(format!("raw@alpha={alpha},N={}", n.value()), pt.max_ratio);
    }
    rep.fit();
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{lp, Exponent};

    fn l2(f: &impl Field) -> f64 {
        lp(f, Exponent::new(2.0).unwrap())
    }

    #[test]
    fn quadrature_orthonormal() {
        let b = SphericalHarmonicBasis::new(12).unwrap();
        assert!(b.orthonormality_error() < 1e-10);
        assert!(b.laplace_beltrami_residual() < 1e-8);
    }

    #[test]
    fn sin4_type_harmonic() {
        let sh = SphericalHarmonics::new(4);
        let x = [0.3, -0.5, 0.8];
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let poly = x[0] * x[1] * (x[0] * x[0] - x[1] * x[1]);
        let y = sh.solid(x, 4, 0);
        let ratio = y / poly;
        let x2 = [-0.7, 0.2, 0.1];
        let poly2 = x2[0] * x2[1] * (x2[0] * x2[0] - x2[1] * x2[1]);
        assert!((sh.solid(x2, 4, 0) / poly2 - ratio).abs() < 1e-12);
        assert!(r2 > 0.0);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(6);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((s - 2.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn spectrum_json_shape() {
        let spec = AngularSpectrum::new(vec![AngularTerm::new(
            2,
            1,
            C64::new(1.0, -0.5),
            RadialProfile::SolidGaussian { width: 1.5 },
        )])
        .unwrap();
        let j = serde_json::to_value(&spec).unwrap();
        assert_eq!(j[0]["l"], 2);
        assert_eq!(j[0]["radial_profile_id"], "solid-gaussian");
        assert_eq!(j[0]["params"]["width"], 1.5);
        let back: AngularSpectrum = serde_json::from_value(j).unwrap();
        assert_eq!(back, spec);
        assert!(AngularSpectrum::new(vec![AngularTerm::new(1, 3, C64::new(1.0, 0.0), RadialProfile::SolidGaussian { width: 1.0 })]).is_err());
    }

    #[test]
    fn hn_partition_on_grid() {
        let g = GridSpec::new(8.0, 24).unwrap();
        let an = AngularAnalyzer::new(&g, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = multiplier::project_annulus(&ScalarField::random(g, &mut rng), DyadicScale::from_exponent(1)).unwrap();
        let mut sum = ScalarField::zeros(&g);
        for k in 0..6 {
            let part = an.project_hn(&f, DyadicScale::from_exponent(k)).unwrap();
            assert!(l2(&part) <= l2(&f) * (1.0 + 1e-12));
            sum.add_scaled(&part, C64::new(1.0, 0.0)).unwrap();
        }
        assert!(l2(&sum.sub(&f).unwrap()) < 1e-10 * l2(&f));
    }

    #[test]
    fn synthesized_degree_four() {
        let g = GridSpec::new(8.0, 32).unwrap();
        let spec = AngularSpectrum::new(vec![AngularTerm::new(
            4,
            0,
            C64::new(1.0, 0.0),
            RadialProfile::SolidGaussian { width: 1.0 },
        )])
        .unwrap();
        let f = synthesize(&spec, &g).unwrap();
        let an = AngularAnalyzer::new(&g, 8).unwrap();
        let h4 = an.project_hn(&f, DyadicScale::from_exponent(2)).unwrap();
        let h1 = an.project_hn(&f, DyadicScale::ONE).unwrap();
        assert!(l2(&h4.sub(&f).unwrap()) < 1e-6 * l2(&f));
        assert!(l2(&h1) < 1e-6 * l2(&f));
        let want = spec.terms[0].profile.norm_sq(4).unwrap();
        assert!((l2(&f).powi(2) - want).abs() < 1e-6 * want);
    }

    #[test]
    fn radial_and_omega_weight() {
        let g = GridSpec::new(8.0, 24).unwrap();
        let an = AngularAnalyzer::new(&g, 8).unwrap();
        let gauss = |k: [f64; 3]| (-(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) / 2.0).exp();
        let radial = grid::fft_inverse(&ScalarField::from_values(
            g,
            (0..g.len()).map(|i| C64::new(gauss(g.frequency(i)), 0.0)).collect(),
        )
        .unwrap());
        let h1 = an.project_hn(&radial, DyadicScale::ONE).unwrap();
        assert!(l2(&h1.sub(&radial).unwrap()) < 1e-10 * l2(&radial));
        assert!(l2(&an.project_hn(&radial, DyadicScale::from_exponent(2)).unwrap()) < 1e-10 * l2(&radial));

        let dip = grid::fft_inverse(&ScalarField::from_values(
            g,
            (0..g.len())
                .map(|i| {
                    // Shells reaching the Nyquist planes lack their mirror points.
                    if g.mode_norm_sq(i) >= 144 {
                        return C64::new(0.0, 0.0);
                    }
                    let k = g.frequency(i);
                    C64::new(0.0, -k[0] * gauss(k))
                })
                .collect(),
        )
        .unwrap());
        let w = an.apply_omega_weight(&dip, 1.0).unwrap();
        let e = l2(&w.sub(&dip.scaled(C64::new(3f64.sqrt(), 0.0))).unwrap()) / l2(&dip);
        assert!(e < 1e-10, "{e} {:?}", an.degree_norms_sq(&dip).unwrap());
        let id = an.apply_omega_weight(&dip, 0.0).unwrap();
        assert!(l2(&id.sub(&dip).unwrap()) < 1e-12 * l2(&dip));
    }

    #[test]
    fn rotation_generators() {
        let g = GridSpec::new(10.0, 48).unwrap();
        let gauss = |x: [f64; 3]| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 2.0).exp();
        let radial = ScalarField::from_fn(g, |x| C64::new(gauss(x), 0.0));
        assert!(l2(&rotation_apply(&radial, 0, 1).unwrap()) < 1e-8);
        let f = ScalarField::from_fn(g, |x| C64::new(x[0] * gauss(x), 0.0));
        let want = ScalarField::from_fn(g, |x| C64::new(-x[1] * gauss(x), 0.0));
        let got = rotation_apply(&f, 0, 1).unwrap();
        assert!(l2(&got.sub(&want).unwrap()) < 1e-6);
    }

    #[test]
    fn casimir_identity() {
        let g = GridSpec::new(10.0, 48).unwrap();
        let prof = RadialProfile::SolidGaussian { width: 1.0 };
        let coeffs = [(0, 0, 0.7), (1, 2, -0.4), (2, 3, 0.9), (3, 0, 0.5)];
        let spec = AngularSpectrum::new(
            coeffs
                .iter()
                .map(|&(l, n, c)| AngularTerm::new(l, n, C64::new(c, 0.3 * c), prof))
                .collect(),
        )
        .unwrap();
        let f = synthesize(&spec, &g).unwrap();
        let lhs: f64 = [(0, 1), (1, 2), (2, 0)]
            .iter()
            .map(|&(i, j)| l2(&rotation_apply(&f, i, j).unwrap()).powi(2))
            .sum();
        let rhs: f64 = spec
            .terms
            .iter()
            .map(|t| (t.l * (t.l + 1)) as f64 * t.coeff().norm_sqr() * prof.norm_sq(t.l).unwrap())
            .sum();
        assert!((lhs - rhs).abs() < 1e-4 * rhs, "{lhs} vs {rhs}");
    }
}
