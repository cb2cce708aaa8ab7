//! Dirac matrices in the standard representation and the energy projections
//! `Pi_theta(xi) = (I + theta (xi_j gamma^0 gamma^j + m gamma^0) / <xi>_m) / 2`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::angular::AngularAnalyzer;
use crate::error::{invalid, Error, Result};
use crate::grid::{self, lp, Exponent, Field, GridSpec, ScalarField, SpinorField, C64};
use crate::multiplier::{self, DyadicScale, Sign};

pub type Mat4 = [[C64; 4]; 4];
pub type Mat2 = [[C64; 2]; 2];

const Z: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

pub fn identity4() -> Mat4 {
    let mut m = [[Z; 4]; 4];
    for (k, row) in m.iter_mut().enumerate() {
        row[k] = ONE;
    }
    m
}

pub fn mat_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut c = [[Z; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            c[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

pub fn mat_add(a: &Mat4, b: &Mat4) -> Mat4 {
    std::array::from_fn(|i| std::array::from_fn(|j| a[i][j] + b[i][j]))
}

pub fn mat_scale(a: &Mat4, s: C64) -> Mat4 {
    std::array::from_fn(|i| std::array::from_fn(|j| a[i][j] * s))
}

pub fn adjoint(a: &Mat4) -> Mat4 {
    std::array::from_fn(|i| std::array::from_fn(|j| a[j][i].conj()))
}

/// Largest entry modulus of `a - b`.
pub fn max_diff(a: &Mat4, b: &Mat4) -> f64 {
    (0..16)
        .map(|k| (a[k / 4][k % 4] - b[k / 4][k % 4]).norm())
        .fold(0.0, f64::max)
}

pub fn trace(a: &Mat4) -> C64 {
    (0..4).map(|k| a[k][k]).sum()
}

pub fn pauli() -> [Mat2; 3] {
    [
        [[Z, ONE], [ONE, Z]],
        [[Z, -I], [I, Z]],
        [[ONE, Z], [Z, -ONE]],
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct GammaSet {
    pub gamma: [Mat4; 4],
    pub sigma: [Mat2; 3],
}

impl GammaSet {
    /// `gamma^0 = diag(I, -I)`, `gamma^j = [[0, sigma^j], [-sigma^j, 0]]`.
    pub fn standard() -> Self {
        let sigma = pauli();
        let mut g0 = [[Z; 4]; 4];
        g0[0][0] = ONE;
        g0[1][1] = ONE;
        g0[2][2] = -ONE;
        g0[3][3] = -ONE;
        let spatial = sigma.map(|s| {
            let mut g = [[Z; 4]; 4];
            for a in 0..2 {
                for b in 0..2 {
                    g[a][b + 2] = s[a][b];
                    g[a + 2][b] = -s[a][b];
                }
            }
            g
        });
        Self {
            gamma: [g0, spatial[0], spatial[1], spatial[2]],
            sigma,
        }
    }

    /// `gamma^0 gamma^j`.
    pub fn alpha(&self, j: usize) -> Mat4 {
        mat_mul(&self.gamma[0], &self.gamma[j + 1])
    }

    pub fn beta(&self) -> Mat4 {
        self.gamma[0]
    }

    /// Largest deviation from `{gamma^mu, gamma^nu} = 2 eta^{mu nu} I`, `eta = diag(1,-1,-1,-1)`.
    pub fn anticommutation_error(&self) -> f64 {
        let id = identity4();
        let mut worst: f64 = 0.0;
        for mu in 0..4 {
            for nu in 0..4 {
                let ac = mat_add(
                    &mat_mul(&self.gamma[mu], &self.gamma[nu]),
                    &mat_mul(&self.gamma[nu], &self.gamma[mu]),
                );
                let eta = if mu != nu {
                    0.0
                } else if mu == 0 {
                    2.0
                } else {
                    -2.0
                };
                worst = worst.max(max_diff(&ac, &mat_scale(&id, C64::new(eta, 0.0))));
            }
        }
        worst
    }
}

/// `Pi_theta(xi)` for one frequency.
pub fn projector_symbol(xi: [f64; 3], m: f64, theta: Sign) -> Mat4 {
    let g = GammaSet::standard();
    let jm = (m * m + xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt();
    let mut a = mat_scale(&g.beta(), C64::new(m, 0.0));
    for (j, x) in xi.iter().enumerate() {
        a = mat_add(&a, &mat_scale(&g.alpha(j), C64::new(*x, 0.0)));
    }
    let s = C64::new(0.5 * theta.value() / jm, 0.0);
    mat_add(&mat_scale(&identity4(), C64::new(0.5, 0.0)), &mat_scale(&a, s))
}

/// Tabulated `Pi_theta` over the frequency lattice of one grid.
#[derive(Clone, Debug)]
pub struct DiracProjectorField {
    grid: GridSpec,
    mass: f64,
    theta: Sign,
    table: Arc<Vec<Mat4>>,
}

type Key = (u64, usize, u64, bool);

fn cache() -> &'static Mutex<HashMap<Key, Arc<Vec<Mat4>>>> {
    static C: OnceLock<Mutex<HashMap<Key, Arc<Vec<Mat4>>>>> = OnceLock::new();
    C.get_or_init(|| Mutex::new(HashMap::new()))
}

pub fn build_projector(grid: &GridSpec, mass: f64, theta: Sign) -> Result<DiracProjectorField> {
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(invalid("mass", format!("must be positive, got {mass}")));
    }
    let key = (
        grid.half_period().to_bits(),
        grid.points_per_axis(),
        mass.to_bits(),
        theta == Sign::Plus,
    );
    let mut c = cache().lock().expect("projector cache poisoned");
    let table = c
        .entry(key)
        .or_insert_with(|| {
            let t: Vec<Mat4> = (0..grid.len())
                .map(|i| projector_symbol(grid.frequency(i), mass, theta))
                .collect();
            for p in &t {
                assert!(max_diff(p, &adjoint(p)) < 1e-12, "projector symbol is not Hermitian");
                assert!((trace(p) - C64::new(2.0, 0.0)).norm() < 1e-12, "projector trace is not 2");
            }
            Arc::new(t)
        })
        .clone();
    Ok(DiracProjectorField {
        grid: *grid,
        mass,
        theta,
        table,
    })
}

impl DiracProjectorField {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn theta(&self) -> Sign {
        self.theta
    }

    pub fn symbol(&self, idx: usize) -> &Mat4 {
        &self.table[idx]
    }

    /// Applies the symbol to spinor Fourier coefficients in place.
    pub fn apply_spectral(&self, fh: &mut SpinorField) {
        let comps = fh.components_mut();
        for (i, p) in self.table.iter().enumerate() {
            let v = [comps[0][i], comps[1][i], comps[2][i], comps[3][i]];
            for (a, row) in p.iter().enumerate() {
                comps[a][i] = row[0] * v[0] + row[1] * v[1] + row[2] * v[2] + row[3] * v[3];
            }
        }
    }
}

pub fn apply_projector(psi: &SpinorField, proj: &DiracProjectorField) -> Result<SpinorField> {
    if psi.grid() != proj.grid() {
        return Err(Error::GridMismatch);
    }
    let mut fh = grid::fft_forward(psi);
    proj.apply_spectral(&mut fh);
    Ok(grid::fft_inverse(&fh))
}

/// Per-point deviations of the tabulated projector algebra.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct ProjectorAlgebra {
    pub idempotence: f64,
    pub annihilation: f64,
    pub completeness: f64,
    pub hermiticity: f64,
    pub trace: f64,
}

impl ProjectorAlgebra {
    pub fn worst(&self) -> f64 {
        [
            self.idempotence,
            self.annihilation,
            self.completeness,
            self.hermiticity,
            self.trace,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn projector_algebra(grid: &GridSpec, mass: f64) -> Result<ProjectorAlgebra> {
    let plus = build_projector(grid, mass, Sign::Plus)?;
    let minus = build_projector(grid, mass, Sign::Minus)?;
    let id = identity4();
    let zero = [[Z; 4]; 4];
    let mut r = ProjectorAlgebra::default();
    for i in 0..grid.len() {
        for (p, q) in [(plus.symbol(i), minus.symbol(i)), (minus.symbol(i), plus.symbol(i))] {
            r.idempotence = r.idempotence.max(max_diff(&mat_mul(p, p), p));
            r.annihilation = r.annihilation.max(max_diff(&mat_mul(p, q), &zero));
            r.hermiticity = r.hermiticity.max(max_diff(p, &adjoint(p)));
            r.trace = r.trace.max((trace(p) - C64::new(2.0, 0.0)).norm());
        }
        r.completeness = r
            .completeness
            .max(max_diff(&mat_add(plus.symbol(i), minus.symbol(i)), &id));
    }
    Ok(r)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrthogonalityReport {
    pub n: f64,
    pub n_prime: f64,
    pub skipped: bool,
    pub max_ratio: f64,
    /// Same separation with the projector removed.
    pub scalar_control: f64,
    pub dropped_columns: usize,
}

/// `max ||H_N Pi_theta H_N' psi|| / ||psi||` over random spinors localized to `band`.
#[allow(clippy::too_many_arguments)]
pub fn dirac_orthogonality_check(
    analyzer: &AngularAnalyzer,
    n: DyadicScale,
    n_prime: DyadicScale,
    theta: Sign,
    mass: f64,
    band: DyadicScale,
    trials: usize,
    seed: u64,
) -> Result<OrthogonalityReport> {
    let grid = *analyzer.grid();
    let mut rep = OrthogonalityReport {
        n: n.value(),
        n_prime: n_prime.value(),
        skipped: n.octaves_to(n_prime) < 2,
        max_ratio: 0.0,
        scalar_control: 0.0,
        dropped_columns: 0,
    };
    if rep.skipped {
        return Ok(rep);
    }
    let proj = build_projector(&grid, mass, theta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l2 = |f: &SpinorField| lp(f, Exponent::new(2.0).expect("2 is a valid exponent"));
    for _ in 0..trials {
        let parts: Vec<ScalarField> = (0..4)
            .map(|_| multiplier::project_annulus(&ScalarField::random(grid, &mut rng), band))
            .collect::<Result<_>>()?;
        let psi = SpinorField::from_scalars([&parts[0], &parts[1], &parts[2], &parts[3]])?;
        let norm = l2(&psi);
        if norm == 0.0 {
            continue;
        }
        let inner = analyzer.project_hn(&psi, n_prime)?;
        let out = analyzer.project_hn(&apply_projector(&inner, &proj)?, n)?;
        rep.max_ratio = rep.max_ratio.max(l2(&out) / norm);
        let control = analyzer.project_hn(&inner, n)?;
        rep.scalar_control = rep.scalar_control.max(l2(&control) / norm);
    }
    rep.dropped_columns = analyzer.dropped_columns();
    Ok(rep)
}
