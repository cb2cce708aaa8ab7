//! Periodic box `[-L, L)^3`, complex fields on it, and the scaled Fourier pair.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    half_period: f64,
    points_per_axis: usize,
}

impl GridSpec {
    pub fn new(half_period: f64, points_per_axis: usize) -> Result<Self> {
        if !(half_period.is_finite() && half_period > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "half period must be positive, got {half_period}"
            )));
        }
        if points_per_axis < 8 || points_per_axis % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be even and at least 8, got {points_per_axis}"
            )));
        }
        Ok(Self {
            half_period,
            points_per_axis,
        })
    }

    pub fn half_period(&self) -> f64 {
        self.half_period
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn len(&self) -> usize {
        self.points_per_axis.pow(3)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_period / self.points_per_axis as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(3)
    }

    pub fn box_volume(&self) -> f64 {
        (2.0 * self.half_period).powi(3)
    }

    /// Lattice spacing of the frequency grid, `pi / L`.
    pub fn frequency_unit(&self) -> f64 {
        PI / self.half_period
    }

    /// Largest resolved radius `pi M / (2L)`.
    pub fn nyquist(&self) -> f64 {
        self.frequency_unit() * (self.points_per_axis / 2) as f64
    }

    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.points_per_axis + iy) * self.points_per_axis + iz
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let m = self.points_per_axis;
        [idx / (m * m), (idx / m) % m, idx % m]
    }

    pub fn position(&self, idx: usize) -> [f64; 3] {
        let h = self.spacing();
        self.coords(idx)
            .map(|i| -self.half_period + i as f64 * h)
    }

    fn signed(&self, i: usize) -> i64 {
        let m = self.points_per_axis;
        if i < m / 2 {
            i as i64
        } else {
            i as i64 - m as i64
        }
    }

    /// Integer lattice vector `n` with frequency `(pi/L) n`.
    pub fn mode(&self, idx: usize) -> [i64; 3] {
        self.coords(idx).map(|i| self.signed(i))
    }

    pub fn mode_norm_sq(&self, idx: usize) -> i64 {
        self.mode(idx).iter().map(|n| n * n).sum()
    }

    pub fn frequency(&self, idx: usize) -> [f64; 3] {
        let u = self.frequency_unit();
        self.mode(idx).map(|n| n as f64 * u)
    }

    pub fn frequency_norm(&self, idx: usize) -> f64 {
        (self.mode_norm_sq(idx) as f64).sqrt() * self.frequency_unit()
    }

    /// Storage index of the lattice mode `n`, if it lies on the lattice.
    pub fn index_of_mode(&self, n: [i64; 3]) -> Option<usize> {
        let m = self.points_per_axis as i64;
        let mut c = [0usize; 3];
        for a in 0..3 {
            if n[a] < -m / 2 || n[a] >= m / 2 {
                return None;
            }
            c[a] = n[a].rem_euclid(m) as usize;
        }
        Some(self.index(c[0], c[1], c[2]))
    }
}

/// Shared view over scalar and spinor fields.
pub trait Field: Clone + Send + Sync {
    fn grid(&self) -> &GridSpec;
    fn components(&self) -> &[Vec<C64>];
    fn components_mut(&mut self) -> &mut [Vec<C64>];
    fn zeros(grid: &GridSpec) -> Self;

    fn magnitude_sq(&self, idx: usize) -> f64 {
        self.components().iter().map(|c| c[idx].norm_sqr()).sum()
    }

    fn scaled(&self, s: C64) -> Self {
        let mut out = self.clone();
        out.components_mut()
            .iter_mut()
            .flat_map(|c| c.iter_mut())
            .for_each(|v| *v *= s);
        out
    }

    fn add_scaled(&mut self, other: &Self, s: C64) -> Result<()> {
        if self.grid() != other.grid() {
            return Err(Error::GridMismatch);
        }
        for (a, b) in self.components_mut().iter_mut().zip(other.components()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += s * y);
        }
        Ok(())
    }

    fn sub(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.add_scaled(other, C64::new(-1.0, 0.0))?;
        Ok(out)
    }

    fn add(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.add_scaled(other, C64::new(1.0, 0.0))?;
        Ok(out)
    }

    /// `sum_x <a(x), b(x)> h^3` with the conjugate on `self`.
    fn inner(&self, other: &Self) -> Result<C64> {
        if self.grid() != other.grid() {
            return Err(Error::GridMismatch);
        }
        let s: C64 = self
            .components()
            .iter()
            .zip(other.components())
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| x.conj() * y))
            .sum();
        Ok(s * self.grid().cell_volume())
    }

    /// L2 norm on the Fourier side, `(2L)^{-3} sum |F|^2` under the toolkit scaling.
    fn spectral_l2(&self) -> f64 {
        let s: f64 = self
            .components()
            .iter()
            .flat_map(|c| c.iter().map(|v| v.norm_sqr()))
            .sum();
        (s / self.grid().box_volume()).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: [Vec<C64>; 1],
}

impl ScalarField {
    pub fn from_values(grid: GridSpec, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self {
            grid,
            values: [values],
        })
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn([f64; 3]) -> C64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.position(i))).collect();
        Self {
            grid,
            values: [values],
        }
    }

    /// Builds a field directly on the frequency lattice from a function of the mode.
    pub fn from_modes(grid: GridSpec, f: impl Fn([i64; 3]) -> C64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.mode(i))).collect();
        Self {
            grid,
            values: [values],
        }
    }

    pub fn plane_wave(grid: GridSpec, n: [i64; 3]) -> Self {
        let k = n.map(|v| v as f64 * grid.frequency_unit());
        Self::from_fn(grid, |x| {
            C64::from_polar(1.0, k[0] * x[0] + k[1] * x[1] + k[2] * x[2])
        })
    }

    pub fn values(&self) -> &[C64] {
        &self.values[0]
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values[0]
    }

    pub fn into_values(self) -> Vec<C64> {
        let [v] = self.values;
        v
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self {
            grid: self.grid,
            values: [self.values[0].iter().map(|&v| f(v)).collect()],
        }
    }

    pub fn pointwise_mul(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            grid: self.grid,
            values: [self.values[0]
                .iter()
                .zip(&other.values[0])
                .map(|(a, b)| a * b)
                .collect()],
        })
    }

    pub fn conj(&self) -> Self {
        self.map(|v| v.conj())
    }

    /// Independent standard complex normal samples.
    pub fn random<R: rand::Rng + ?Sized>(grid: GridSpec, rng: &mut R) -> Self {
        let values = (0..grid.len())
            .map(|_| {
                let re: f64 = rng.sample(rand_distr::StandardNormal);
                let im: f64 = rng.sample(rand_distr::StandardNormal);
                C64::new(re, im)
            })
            .collect();
        Self {
            grid,
            values: [values],
        }
    }
}

impl Field for ScalarField {
    fn grid(&self) -> &GridSpec {
        &self.grid
    }
    fn components(&self) -> &[Vec<C64>] {
        &self.values
    }
    fn components_mut(&mut self) -> &mut [Vec<C64>] {
        &mut self.values
    }
    fn zeros(grid: &GridSpec) -> Self {
        Self {
            grid: *grid,
            values: [vec![C64::new(0.0, 0.0); grid.len()]],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpinorField {
    grid: GridSpec,
    comps: [Vec<C64>; 4],
}

impl SpinorField {
    pub fn from_components(grid: GridSpec, comps: [Vec<C64>; 4]) -> Result<Self> {
        if comps.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::InvalidGrid("spinor component length".into()));
        }
        Ok(Self { grid, comps })
    }

    pub fn from_scalars(parts: [&ScalarField; 4]) -> Result<Self> {
        let grid = *parts[0].grid();
        if parts.iter().any(|p| *p.grid() != grid) {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            grid,
            comps: parts.map(|p| p.values().to_vec()),
        })
    }

    /// Scalar profile times a fixed constant spinor.
    pub fn from_profile(profile: &ScalarField, spinor: [C64; 4]) -> Self {
        Self {
            grid: *profile.grid(),
            comps: spinor.map(|s| profile.values().iter().map(|v| s * v).collect()),
        }
    }

    pub fn component(&self, a: usize) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: [self.comps[a].clone()],
        }
    }

    /// Pointwise `psi^dagger psi`.
    pub fn density(&self) -> ScalarField {
        let v = (0..self.grid.len())
            .map(|i| C64::new(self.magnitude_sq(i), 0.0))
            .collect();
        ScalarField {
            grid: self.grid,
            values: [v],
        }
    }

    pub fn mul_scalar_field(&self, s: &ScalarField) -> Result<Self> {
        if self.grid != s.grid {
            return Err(Error::GridMismatch);
        }
        let mut out = self.clone();
        for c in out.comps.iter_mut() {
            c.iter_mut().zip(s.values()).for_each(|(a, b)| *a *= b);
        }
        Ok(out)
    }
}

impl Field for SpinorField {
    fn grid(&self) -> &GridSpec {
        &self.grid
    }
    fn components(&self) -> &[Vec<C64>] {
        &self.comps
    }
    fn components_mut(&mut self) -> &mut [Vec<C64>] {
        &mut self.comps
    }
    fn zeros(grid: &GridSpec) -> Self {
        Self {
            grid: *grid,
            comps: std::array::from_fn(|_| vec![C64::new(0.0, 0.0); grid.len()]),
        }
    }
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans(m: usize) -> Arc<Plans> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Plans>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("fft plan cache poisoned");
    map.entry(m)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Plans {
                forward: planner.plan_fft_forward(m),
                inverse: planner.plan_fft_inverse(m),
            })
        })
        .clone()
}

/// Unnormalized 3-D DFT over all three axes in place.
fn dft3(data: &mut [C64], m: usize, fft: &dyn Fft<f64>) {
    let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    fft.process_with_scratch(data, &mut scratch);

    let mut lines = vec![C64::new(0.0, 0.0); m * m];
    for ix in 0..m {
        let slab = &mut data[ix * m * m..(ix + 1) * m * m];
        for iy in 0..m {
            for iz in 0..m {
                lines[iz * m + iy] = slab[iy * m + iz];
            }
        }
        fft.process_with_scratch(&mut lines, &mut scratch);
        for iy in 0..m {
            for iz in 0..m {
                slab[iy * m + iz] = lines[iz * m + iy];
            }
        }
    }
    for iy in 0..m {
        for ix in 0..m {
            let base = (ix * m + iy) * m;
            for iz in 0..m {
                lines[iz * m + ix] = data[base + iz];
            }
        }
        fft.process_with_scratch(&mut lines, &mut scratch);
        for ix in 0..m {
            let base = (ix * m + iy) * m;
            for iz in 0..m {
                data[base + iz] = lines[iz * m + ix];
            }
        }
    }
}

fn parity_sign(grid: &GridSpec, idx: usize) -> f64 {
    let [a, b, c] = grid.coords(idx);
    if (a + b + c) % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `f^(xi) ~ int e^{-i x.xi} f dx` sampled on the frequency lattice.
pub fn forward_in_place(grid: &GridSpec, data: &mut [C64]) {
    let m = grid.points_per_axis();
    dft3(data, m, plans(m).forward.as_ref());
    let h3 = grid.cell_volume();
    for (i, v) in data.iter_mut().enumerate() {
        *v *= h3 * parity_sign(grid, i);
    }
}

pub fn inverse_in_place(grid: &GridSpec, data: &mut [C64]) {
    let m = grid.points_per_axis();
    let scale = 1.0 / grid.box_volume();
    for (i, v) in data.iter_mut().enumerate() {
        *v *= scale * parity_sign(grid, i);
    }
    dft3(data, m, plans(m).inverse.as_ref());
}

pub fn fft_forward<F: Field>(f: &F) -> F {
    let mut out = f.clone();
    let grid = *f.grid();
    for c in out.components_mut() {
        forward_in_place(&grid, c);
    }
    out
}

pub fn fft_inverse<F: Field>(f: &F) -> F {
    let mut out = f.clone();
    let grid = *f.grid();
    for c in out.components_mut() {
        inverse_in_place(&grid, c);
    }
    out
}

/// Applies a scalar Fourier multiplier given per storage index.
pub fn apply_symbol<F: Field>(f: &F, symbol: impl Fn(usize) -> C64) -> F {
    let mut out = fft_forward(f);
    for c in out.components_mut() {
        c.iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v *= symbol(i));
    }
    fft_inverse(&out)
}

/// Spectral `d/dx_axis`; the Nyquist plane of that axis is dropped.
pub fn derivative<F: Field>(f: &F, axis: usize) -> F {
    let grid = *f.grid();
    let half = (grid.points_per_axis() / 2) as i64;
    let u = grid.frequency_unit();
    apply_symbol(f, |i| {
        let n = grid.mode(i)[axis];
        if n == -half {
            C64::new(0.0, 0.0)
        } else {
            C64::new(0.0, n as f64 * u)
        }
    })
}

/// Largest magnitude on the outer faces of the box relative to the interior maximum.
pub fn boundary_ratio<F: Field>(f: &F) -> f64 {
    let g = f.grid();
    let last = g.points_per_axis() - 1;
    let mut edge: f64 = 0.0;
    let mut all: f64 = 0.0;
    for i in 0..g.len() {
        let v = f.magnitude_sq(i);
        all = all.max(v);
        if g.coords(i).iter().any(|&c| c == 0 || c == last) {
            edge = edge.max(v);
        }
    }
    if all == 0.0 {
        0.0
    } else {
        (edge / all).sqrt()
    }
}

/// Exponent in `[1, inf]`; `f64::INFINITY` selects the max norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exponent(f64);

impl Exponent {
    pub const INFINITY: Exponent = Exponent(f64::INFINITY);

    pub fn new(p: f64) -> Result<Self> {
        if p.is_nan() || p < 1.0 {
            return Err(Error::BadExponent(p));
        }
        Ok(Self(p))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }
}

pub fn lebesgue_norm<F: Field>(f: &F, p: f64) -> Result<f64> {
    let p = Exponent::new(p)?;
    Ok(lp(f, p))
}

pub(crate) fn lp<F: Field>(f: &F, p: Exponent) -> f64 {
    let n = f.grid().len();
    if p.is_infinite() {
        return (0..n)
            .map(|i| f.magnitude_sq(i))
            .fold(0.0, f64::max)
            .sqrt();
    }
    let p = p.value();
    let half = p / 2.0;
    let s: f64 = (0..n).map(|i| f.magnitude_sq(i).powf(half)).sum();
    (s * f.grid().cell_volume()).powf(1.0 / p)
}

#[derive(Clone, Debug)]
pub struct SpacetimeField<F: Field> {
    dt: f64,
    frames: Vec<F>,
}

impl<F: Field> SpacetimeField<F> {
    pub fn new(dt: f64, frames: Vec<F>) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(crate::error::invalid("dt", format!("must be positive, got {dt}")));
        }
        let Some(first) = frames.first() else {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        };
        let g = *first.grid();
        if frames.iter().any(|f| *f.grid() != g) {
            return Err(Error::GridMismatch);
        }
        Ok(Self { dt, frames })
    }

    /// Samples `f(t_k)` at `t_k = k dt`, `k = 0..K`.
    pub fn sample(dt: f64, count: usize, f: impl Fn(f64) -> F) -> Result<Self> {
        Self::new(dt, (0..count).map(|k| f(k as f64 * dt)).collect())
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn sample_count(&self) -> usize {
        self.frames.len()
    }

    pub fn window(&self) -> f64 {
        (self.frames.len() - 1) as f64 * self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn grid(&self) -> &GridSpec {
        self.frames[0].grid()
    }

    pub fn frames(&self) -> &[F] {
        &self.frames
    }

    pub fn frames_mut(&mut self) -> &mut [F] {
        &mut self.frames
    }

    pub fn into_frames(self) -> Vec<F> {
        self.frames
    }

    pub fn map_frames<G: Field>(&self, f: impl Fn(usize, &F) -> G) -> SpacetimeField<G> {
        SpacetimeField {
            dt: self.dt,
            frames: self.frames.iter().enumerate().map(|(k, u)| f(k, u)).collect(),
        }
    }
}

/// Trapezoid weights on `K` uniform samples, including the factor `dt`.
pub fn trapezoid_weights(count: usize, dt: f64) -> Vec<f64> {
    (0..count)
        .map(|k| {
            if count == 1 {
                0.0
            } else if k == 0 || k + 1 == count {
                0.5 * dt
            } else {
                dt
            }
        })
        .collect()
}

/// `L^q_t L^r_x` norm, trapezoid in time.
pub fn mixed_norm<F: Field>(u: &SpacetimeField<F>, q: f64, r: f64) -> Result<f64> {
    let q = Exponent::new(q)?;
    let r = Exponent::new(r)?;
    if u.sample_count() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: u.sample_count(),
        });
    }
    let norms: Vec<f64> = u.frames().iter().map(|f| lp(f, r)).collect();
    Ok(compose_time(&norms, u.dt(), q))
}

pub(crate) fn compose_time(frame_norms: &[f64], dt: f64, q: Exponent) -> f64 {
    if q.is_infinite() {
        return frame_norms.iter().copied().fold(0.0, f64::max);
    }
    let q = q.value();
    let w = trapezoid_weights(frame_norms.len(), dt);
    frame_norms
        .iter()
        .zip(&w)
        .map(|(n, w)| w * n.powf(q))
        .sum::<f64>()
        .powf(1.0 / q)
}

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"DWL1";

#[derive(Clone, Debug, PartialEq)]
pub enum Snapshot {
    Scalar(ScalarField),
    Spinor(SpinorField),
}

pub fn write_snapshot<F: Field, W: Write>(f: &F, mut w: W) -> Result<()> {
    let g = f.grid();
    let comps = f.components();
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&(g.points_per_axis() as u32).to_le_bytes())?;
    w.write_all(&g.half_period().to_le_bytes())?;
    w.write_all(&(comps.len() as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(g.len() * comps.len() * 16);
    for i in 0..g.len() {
        for c in comps {
            buf.extend_from_slice(&c[i].re.to_le_bytes());
            buf.extend_from_slice(&c[i].im.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<Snapshot> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let m = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b8)?;
    let l = f64::from_le_bytes(b8);
    r.read_exact(&mut b4)?;
    let nc = u32::from_le_bytes(b4) as usize;
    if nc != 1 && nc != 4 {
        return Err(Error::Snapshot(format!("component count {nc}")));
    }
    let grid = GridSpec::new(l, m)?;
    let mut bytes = vec![0u8; grid.len() * nc * 16];
    r.read_exact(&mut bytes)?;
    let mut comps: Vec<Vec<C64>> = vec![Vec::with_capacity(grid.len()); nc];
    for (k, chunk) in bytes.chunks_exact(16).enumerate() {
        let re = f64::from_le_bytes(chunk[..8].try_into().expect("8 bytes"));
        let im = f64::from_le_bytes(chunk[8..].try_into().expect("8 bytes"));
        comps[k % nc].push(C64::new(re, im));
    }
    if nc == 1 {
        let v = comps.pop().expect("one component");
        Ok(Snapshot::Scalar(ScalarField::from_values(grid, v)?))
    } else {
        let arr: [Vec<C64>; 4] = comps.try_into().expect("four components");
        Ok(Snapshot::Spinor(SpinorField::from_components(grid, arr)?))
    }
}
