//! Null forms, inverse derivatives, the Yukawa convolution and the right-hand sides of
//! the reduced wave and Dirac systems.

use serde::{Deserialize, Serialize};

use crate::dirac::{apply_projector, DiracProjectorField};
use crate::error::{invalid, Error, Result};
use crate::grid::{self, lp, Exponent, Field, GridSpec, ScalarField, SpinorField, C64};
use crate::multiplier::{Sign, RHO_ID};
use crate::propagator::recombine;
use crate::report::{Environment, ProbeReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NullFormKind {
    /// Axes are 1-based, `1 <= i < j <= 3`.
    Qij { i: usize, j: usize },
    Q0,
}

impl NullFormKind {
    pub fn qij(i: usize, j: usize) -> Result<Self> {
        if !(1 <= i && i < j && j <= 3) {
            return Err(invalid("null form axes", format!("need 1 <= i < j <= 3, got ({i}, {j})")));
        }
        Ok(Self::Qij { i, j })
    }

    /// Symbol on `(xi, eta)` with `tau = -theta |.|` for the time derivatives.
    pub fn symbol(&self, xi: [f64; 3], eta: [f64; 3], theta: [Sign; 2]) -> f64 {
        match *self {
            NullFormKind::Qij { i, j } => -(xi[i - 1] * eta[j - 1] - xi[j - 1] * eta[i - 1]),
            NullFormKind::Q0 => {
                let n = |v: [f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                let dot = xi[0] * eta[0] + xi[1] * eta[1] + xi[2] * eta[2];
                -theta[0].value() * theta[1].value() * n(xi) * n(eta) + dot
            }
        }
    }
}

/// Squared radius beyond which the 2/3 rule removes modes, in lattice units.
fn dealias_cut(grid: &GridSpec) -> f64 {
    let m = grid.points_per_axis() as f64;
    (m / 3.0).powi(2)
}

/// Zeroes every mode with `|xi| > 2/3` of the Nyquist frequency.
pub fn dealias<F: Field>(f: &F) -> F {
    let g = *f.grid();
    let cut = dealias_cut(&g);
    grid::apply_symbol(f, |i| {
        if g.mode_norm_sq(i) as f64 > cut {
            C64::new(0.0, 0.0)
        } else {
            C64::new(1.0, 0.0)
        }
    })
}

/// Spectral energy outside the retained 2/3 ball.
pub fn energy_above_dealias_shell<F: Field>(f: &F) -> f64 {
    let g = *f.grid();
    let cut = dealias_cut(&g);
    let fh = grid::fft_forward(f);
    let mut e = 0.0;
    for c in fh.components() {
        for (i, v) in c.iter().enumerate() {
            if g.mode_norm_sq(i) as f64 > cut {
                e += v.norm_sqr();
            }
        }
    }
    e / g.box_volume()
}

fn pointwise(a: &ScalarField, b: &ScalarField) -> ScalarField {
    a.pointwise_mul(b).expect("common grid")
}

/// `Q(u, v)` with spectral derivatives; inputs are truncated and the output dealiased.
/// `Q0` reads `(d_t u, d_t v)` from `time_derivatives`.
pub fn null_form(
    u: &ScalarField,
    v: &ScalarField,
    kind: NullFormKind,
    time_derivatives: Option<(&ScalarField, &ScalarField)>,
) -> Result<ScalarField> {
    if u.grid() != v.grid() {
        return Err(Error::GridMismatch);
    }
    let u = dealias(u);
    let v = dealias(v);
    let out = match kind {
        NullFormKind::Qij { i, j } => {
            let (ui, uj) = (grid::derivative(&u, i - 1), grid::derivative(&u, j - 1));
            let (vi, vj) = (grid::derivative(&v, i - 1), grid::derivative(&v, j - 1));
            pointwise(&ui, &vj).sub(&pointwise(&uj, &vi))?
        }
        NullFormKind::Q0 => {
            let (ut, vt) = time_derivatives.ok_or(Error::MissingTimeDerivative)?;
            if ut.grid() != u.grid() || vt.grid() != u.grid() {
                return Err(Error::GridMismatch);
            }
            let mut acc = pointwise(&dealias(ut), &dealias(vt));
            for a in 0..3 {
                acc = acc.sub(&pointwise(&grid::derivative(&u, a), &grid::derivative(&v, a)))?;
            }
            acc
        }
    };
    Ok(dealias(&out))
}

#[derive(Clone, Debug)]
pub struct InverseDerivative<F> {
    pub field: F,
    pub zero_mode_removed: f64,
}

/// `|D|^{-s} f`, with the zero mode dropped and its amplitude reported.
pub fn inverse_derivative<F: Field>(f: &F, s: f64) -> Result<InverseDerivative<F>> {
    if !s.is_finite() || s < 0.0 {
        return Err(invalid("s", format!("need a finite nonnegative power, got {s}")));
    }
    let g = *f.grid();
    let mut fh = grid::fft_forward(f);
    let origin = g.index_of_mode([0, 0, 0]).expect("origin is on the lattice");
    let mut removed = 0.0;
    for c in fh.components_mut() {
        removed += c[origin].norm_sqr();
        for (i, v) in c.iter_mut().enumerate() {
            *v *= if i == origin {
                0.0
            } else {
                g.frequency_norm(i).powf(-s)
            };
        }
    }
    let removed = removed.sqrt() / g.box_volume();
    if removed > 1e-10 {
        log::debug!("inverse derivative dropped zero mode of size {removed:.3e}");
    }
    Ok(InverseDerivative {
        field: grid::fft_inverse(&fh),
        zero_mode_removed: removed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct YukawaKernel {
    b: f64,
}

impl YukawaKernel {
    pub fn new(b: f64) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(invalid("b", format!("must be positive, got {b}")));
        }
        Ok(Self { b })
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn symbol(&self, k: f64) -> f64 {
        1.0 / (self.b * self.b + k * k)
    }

    /// `e^{-b|x|} / (4 pi |x|)`.
    pub fn kernel(&self, r: f64) -> f64 {
        (-self.b * r).exp() / (4.0 * std::f64::consts::PI * r)
    }
}

pub fn yukawa_convolve<F: Field>(f: &F, kernel: &YukawaKernel) -> F {
    let g = *f.grid();
    grid::apply_symbol(f, |i| C64::new(kernel.symbol(g.frequency_norm(i)), 0.0))
}

/// Dealiased `V_b * (psi^dagger psi) psi` before projection.
pub fn hartree_term(psi: &SpinorField, kernel: &YukawaKernel) -> Result<SpinorField> {
    let psi = dealias(psi);
    let density = dealias(&psi.density());
    let potential = yukawa_convolve(&density, kernel);
    Ok(dealias(&psi.mul_scalar_field(&potential)?))
}

/// `Pi_theta [V_b * (psi^dagger psi) psi]`.
pub fn dirac_rhs(psi: &SpinorField, kernel: &YukawaKernel, proj: &DiracProjectorField) -> Result<SpinorField> {
    if psi.grid() != proj.grid() {
        return Err(Error::GridMismatch);
    }
    apply_projector(&hartree_term(psi, kernel)?, proj)
}

#[derive(Clone, Debug)]
pub struct WaveForcing {
    pub plus: ScalarField,
    pub minus: ScalarField,
    pub zero_mode_removed: f64,
}

impl WaveForcing {
    pub fn get(&self, theta: Sign) -> &ScalarField {
        match theta {
            Sign::Plus => &self.plus,
            Sign::Minus => &self.minus,
        }
    }
}

/// `theta |D|^{-2} Q(conj u, u)` for both signs, with `u = u_+ + u_-`.
pub fn wave_rhs(plus: &ScalarField, minus: &ScalarField, kind: NullFormKind) -> Result<WaveForcing> {
    let (u, ut) = recombine(plus, minus)?;
    let ub = u.conj();
    let q = match kind {
        NullFormKind::Q0 => {
            let utb = ut.conj();
            null_form(&ub, &u, kind, Some((&utb, &ut)))?
        }
        _ => null_form(&ub, &u, kind, None)?,
    };
    let inv = inverse_derivative(&q, 2.0)?;
    Ok(WaveForcing {
        minus: inv.field.scaled(C64::new(-1.0, 0.0)),
        plus: inv.field,
        zero_mode_removed: inv.zero_mode_removed,
    })
}

/// Nearest lattice mode to `v` in units of the frequency step.
fn nearest_mode(grid: &GridSpec, v: [f64; 3]) -> [i64; 3] {
    let u = grid.frequency_unit();
    [(v[0] / u).round() as i64, (v[1] / u).round() as i64, (v[2] / u).round() as i64]
}

fn mode_vector(grid: &GridSpec, n: [i64; 3]) -> [f64; 3] {
    let u = grid.frequency_unit();
    [n[0] as f64 * u, n[1] as f64 * u, n[2] as f64 * u]
}

fn angle_between(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let cross = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    let c = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    c.atan2(dot)
}

/// Plane-wave pairs at radius `radius` and the given angles in the `(x1, x2)` plane,
/// snapped to the lattice. Each trial rotates the pair about the `x3` axis.
/// Samples are `||Q_12(u, v)||_2 / (|xi| |eta| ||u||_2 ||v||_inf)` against the realized angle.
pub fn null_symbol_probe(grid: &GridSpec, angles: &[f64], radius: f64, trials: usize) -> Result<ProbeReport> {
    if !(radius > 0.0) {
        return Err(invalid("radius", "must be positive"));
    }
    let kind = NullFormKind::qij(1, 2)?;
    let two = Exponent::new(2.0)?;
    let mut rep = ProbeReport::new(
        "null_symbol",
        "angle",
        Environment {
            grid: Some(*grid),
            rho_id: RHO_ID.into(),
            seed: None,
        },
    )
    .param("radius", radius)
    .param("angles", angles)
    .param("trials", trials);
    if 2.0 * radius > grid.nyquist() * 2.0 / 3.0 {
        rep.warn("output frequency exceeds the dealiasing radius");
    }
    let mut worst: f64 = 0.0;
    for &a in angles {
        for t in 0..trials.max(1) {
            let phi = t as f64 * 0.37;
            let xi_n = nearest_mode(grid, [radius * phi.cos(), radius * phi.sin(), 0.0]);
            let eta_n = nearest_mode(grid, [radius * (phi + a).cos(), radius * (phi + a).sin(), 0.0]);
            let (xi, eta) = (mode_vector(grid, xi_n), mode_vector(grid, eta_n));
            let angle = angle_between(xi, eta);
            if angle == 0.0 {
                rep.warn(format!("angle {a} collapses on the lattice"));
                continue;
            }
            let u = ScalarField::plane_wave(*grid, xi_n);
            let v = ScalarField::plane_wave(*grid, eta_n);
            let q = null_form(&u, &v, kind, None)?;
            let nx = |w: [f64; 3]| (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
            let raw = lp(&q, two) / (nx(xi) * nx(eta) * lp(&u, two) * lp(&v, Exponent::INFINITY));
            worst = worst.max(raw / angle);
            rep.push(angle, raw);
        }
    }
    rep.diagnostic("max_normalized", worst);
    rep.fit();
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirac::build_projector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn l2<F: Field>(f: &F) -> f64 {
        lp(f, Exponent::new(2.0).unwrap())
    }

    fn random(g: GridSpec, seed: u64) -> ScalarField {
        ScalarField::random(g, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn random_spinor(g: GridSpec, seed: u64) -> SpinorField {
        let p: Vec<_> = (0..4).map(|k| random(g, seed + k)).collect();
        SpinorField::from_scalars([&p[0], &p[1], &p[2], &p[3]]).unwrap()
    }

    #[test]
    fn plane_wave_q12() {
        let g = GridSpec::new(PI, 16).unwrap();
        let (a, b) = ([2, 1, 0], [-1, 3, 1]);
        let q = null_form(
            &ScalarField::plane_wave(g, a),
            &ScalarField::plane_wave(g, b),
            NullFormKind::qij(1, 2).unwrap(),
            None,
        )
        .unwrap();
        let s = -(2.0 * 3.0 - 1.0 * -1.0);
        let want = ScalarField::plane_wave(g, [1, 4, 1]).scaled(C64::new(s, 0.0));
        assert!(l2(&q.sub(&want).unwrap()) < 1e-10 * l2(&want));
    }

    #[test]
    fn antisymmetry_and_bilinearity() {
        let g = GridSpec::new(PI, 16).unwrap();
        let (u, v, w) = (random(g, 1), random(g, 2), random(g, 3));
        for (i, j) in [(1, 2), (1, 3), (2, 3)] {
            let k = NullFormKind::qij(i, j).unwrap();
            assert!(null_form(&u, &u, k, None).unwrap().values().iter().all(|z| z.norm() == 0.0));
            let a = null_form(&u, &v, k, None).unwrap();
            let b = null_form(&v, &u, k, None).unwrap();
            assert!(a.values().iter().zip(b.values()).all(|(x, y)| *x == -*y));
            let c = C64::new(0.4, -1.2);
            let mut uw = u.scaled(c);
            uw.add_scaled(&w, C64::new(2.0, 0.0)).unwrap();
            let lhs = null_form(&uw, &v, k, None).unwrap();
            let mut rhs = a.scaled(c);
            rhs.add_scaled(&null_form(&w, &v, k, None).unwrap(), C64::new(2.0, 0.0)).unwrap();
            assert!(l2(&lhs.sub(&rhs).unwrap()) < 1e-12 * l2(&rhs));
        }
        assert!(NullFormKind::qij(2, 1).is_err() && NullFormKind::qij(0, 1).is_err());
        assert!(matches!(
            null_form(&u, &v, NullFormKind::Q0, None),
            Err(Error::MissingTimeDerivative)
        ));
    }

    #[test]
    fn q0_cancels_on_collinear_waves() {
        let g = GridSpec::new(PI, 24).unwrap();
        let (a, b) = ([1i64, 2, 0], [2i64, 4, 0]);
        for theta in Sign::both() {
            let dt = |n: [i64; 3]| {
                let f = ScalarField::plane_wave(g, n);
                let k = g.frequency_norm(g.index_of_mode(n).unwrap());
                (f.clone(), f.scaled(C64::new(0.0, -theta.value() * k)))
            };
            let ((u, ut), (v, vt)) = (dt(a), dt(b));
            let q = null_form(&u, &v, NullFormKind::Q0, Some((&ut, &vt))).unwrap();
            assert!(lp(&q, Exponent::INFINITY) < 1e-10);
        }
        let s = NullFormKind::Q0.symbol([1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [Sign::Plus; 2]);
        assert!((s + 2.0).abs() < 1e-15);
    }

    #[test]
    fn dealiasing_removes_high_shell() {
        let g = GridSpec::new(PI, 24).unwrap();
        let (u, v) = (random(g, 4), random(g, 5));
        let q = null_form(&u, &v, NullFormKind::qij(1, 3).unwrap(), None).unwrap();
        assert!(energy_above_dealias_shell(&q) <= 1e-12 * l2(&q).powi(2));
        assert!(energy_above_dealias_shell(&u) > 0.0);
    }

    #[test]
    fn inverse_derivative_rules() {
        let g = GridSpec::new(PI, 16).unwrap();
        let mode = ScalarField::plane_wave(g, [2, 0, 0]);
        let r = inverse_derivative(&mode, 2.0).unwrap();
        assert!(l2(&r.field.sub(&mode.scaled(C64::new(0.25, 0.0))).unwrap()) < 1e-12);
        let c = ScalarField::from_fn(g, |_| C64::new(3.0, 0.0));
        let r = inverse_derivative(&c, 1.0).unwrap();
        assert!(l2(&r.field) < 1e-12 && (r.zero_mode_removed - 3.0).abs() < 1e-12);
        let f = random(g, 6);
        let once = inverse_derivative(&inverse_derivative(&f, 1.0).unwrap().field, 1.0).unwrap();
        let twice = inverse_derivative(&f, 2.0).unwrap();
        assert!(l2(&once.field.sub(&twice.field).unwrap()) < 1e-12 * l2(&f));
        assert!(inverse_derivative(&f, -1.0).is_err());
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn yukawa_symbol_matches_kernel_quadrature() {
        let y = YukawaKernel::new(1.0).unwrap();
        // radial integrals of the kernel, integrand regular at 0
        let mass = simpson(|r| 4.0 * PI * r * r * if r == 0.0 { 0.0 } else { y.kernel(r) }, 0.0, 60.0, 20000);
        assert!((mass - 1.0).abs() < 1e-8);
        let k = 1.0;
        let ft = simpson(|r| (-r).exp() * (k * r).sin() / k, 0.0, 60.0, 20000);
        assert!((ft - 0.5).abs() < 1e-8 && (y.symbol(1.0) - ft).abs() < 1e-8);

        let g = GridSpec::new(PI, 16).unwrap();
        let c = ScalarField::from_fn(g, |_| C64::new(2.0, 0.0));
        let y2 = YukawaKernel::new(2.0).unwrap();
        assert!(l2(&yukawa_convolve(&c, &y2).sub(&c.scaled(C64::new(0.25, 0.0))).unwrap()) < 1e-12);
        let mode = ScalarField::plane_wave(g, [1, 0, 0]);
        assert!(l2(&yukawa_convolve(&mode, &y).sub(&mode.scaled(C64::new(0.5, 0.0))).unwrap()) < 1e-12);
        let f = random(g, 7);
        let far = yukawa_convolve(&f, &YukawaKernel::new(1e6).unwrap());
        assert!(lp(&far, Exponent::INFINITY) < 1e-10);
        assert!(YukawaKernel::new(0.0).is_err() && YukawaKernel::new(-1.0).is_err());
    }

    #[test]
    fn yukawa_keeps_positive_data_positive() {
        let g = GridSpec::new(PI, 16).unwrap();
        let rho = random(g, 8).map(|z| C64::new(z.norm_sqr(), 0.0));
        let y = YukawaKernel::new(0.5).unwrap();
        let out = yukawa_convolve(&rho, &y);
        assert!(out.values().iter().all(|z| z.re >= -1e-10 && z.im.abs() < 1e-10));
        let other = random(g, 9);
        let a = rho.inner(&yukawa_convolve(&other, &y)).unwrap();
        let b = out.inner(&other).unwrap();
        assert!((a - b).norm() < 1e-10 * a.norm());
    }

    #[test]
    fn dirac_rhs_shape() {
        let g = GridSpec::new(PI, 12).unwrap();
        let y = YukawaKernel::new(1.0).unwrap();
        let proj = build_projector(&g, 1.0, Sign::Plus).unwrap();
        let psi = random_spinor(g, 10);
        assert!(psi.density().values().iter().all(|z| z.re >= -1e-14));
        let zero = dirac_rhs(&SpinorField::zeros(&g), &y, &proj).unwrap();
        assert_eq!(l2(&zero), 0.0);
        let one = dirac_rhs(&psi, &y, &proj).unwrap();
        let two = dirac_rhs(&psi.scaled(C64::new(2.0, 0.0)), &y, &proj).unwrap();
        assert!(l2(&two.sub(&one.scaled(C64::new(8.0, 0.0))).unwrap()) < 1e-10 * l2(&two));
        let other = build_projector(&GridSpec::new(PI, 16).unwrap(), 1.0, Sign::Plus).unwrap();
        assert!(dirac_rhs(&psi, &y, &other).is_err());
    }

    #[test]
    fn wave_rhs_shape() {
        let g = GridSpec::new(PI, 16).unwrap();
        let radial = ScalarField::from_fn(g, |x| C64::new((-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp(), 0.0));
        let zero = ScalarField::zeros(&g);
        let k = NullFormKind::qij(1, 2).unwrap();
        let f = wave_rhs(&radial, &zero, k).unwrap();
        assert_eq!(l2(&f.plus), 0.0);
        // the static split of a real field: u = (f + f)/2, d_t u = 0
        let half = radial.scaled(C64::new(0.5, 0.0));
        assert_eq!(l2(&wave_rhs(&half, &half, k).unwrap().plus), 0.0);
        assert_eq!(l2(&wave_rhs(&zero, &zero, NullFormKind::Q0).unwrap().plus), 0.0);
        let (p, m) = (random(g, 11), random(g, 12));
        for kind in [k, NullFormKind::Q0] {
            let one = wave_rhs(&p, &m, kind).unwrap();
            let three = wave_rhs(&p.scaled(C64::new(3.0, 0.0)), &m.scaled(C64::new(3.0, 0.0)), kind).unwrap();
            assert!(l2(&three.plus.sub(&one.plus.scaled(C64::new(9.0, 0.0))).unwrap()) < 1e-10 * l2(&three.plus));
            assert!(l2(&one.plus.add(&one.minus).unwrap()) == 0.0);
        }
    }

    #[test]
    fn null_symbol_angle_sweep() {
        let g = GridSpec::new(2.0 * PI, 100).unwrap();
        let rep = null_symbol_probe(&g, &[0.5, 0.25, 0.125, 0.0625], 8.0, 1).unwrap();
        let fit = rep.fit.unwrap();
        assert!((fit.slope - 1.0).abs() <= 0.1, "{fit:?}");
        let right = null_symbol_probe(&g, &[PI / 2.0], 8.0, 1).unwrap();
        assert!((right.samples[0].value - 1.0).abs() < 1e-8);
    }
}
