//! Closed-form fields and the data that makes them exact solutions.

use std::sync::Arc;

use num_complex::Complex64;

use crate::assembly::{BoundaryField, Discretization, Field, LinerDensity, SourceData};
use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, Point};
use crate::params::Physics;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// A smooth complex field with its first derivatives, Laplacian and `dxx`.
pub trait ExactField: Send + Sync {
    fn value(&self, x: Point) -> Complex64;
    fn gradient(&self, x: Point) -> [Complex64; 3];
    fn laplacian(&self, x: Point) -> Complex64;
    fn dxx(&self, x: Point) -> Complex64;
}

/// `exp(i kappa x)`.
#[derive(Clone, Copy, Debug)]
pub struct PlaneWave {
    pub kappa: f64,
}

impl ExactField for PlaneWave {
    fn value(&self, x: Point) -> Complex64 {
        (I * self.kappa * x[0]).exp()
    }
    fn gradient(&self, x: Point) -> [Complex64; 3] {
        let zero = Complex64::new(0.0, 0.0);
        [I * self.kappa * self.value(x), zero, zero]
    }
    fn laplacian(&self, x: Point) -> Complex64 {
        -self.kappa * self.kappa * self.value(x)
    }
    fn dxx(&self, x: Point) -> Complex64 {
        self.laplacian(x)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Uniform(pub Complex64);

impl ExactField for Uniform {
    fn value(&self, _: Point) -> Complex64 {
        self.0
    }
    fn gradient(&self, _: Point) -> [Complex64; 3] {
        [Complex64::new(0.0, 0.0); 3]
    }
    fn laplacian(&self, _: Point) -> Complex64 {
        Complex64::new(0.0, 0.0)
    }
    fn dxx(&self, _: Point) -> Complex64 {
        Complex64::new(0.0, 0.0)
    }
}

/// `x^2 + i y z`.
#[derive(Clone, Copy, Debug)]
pub struct Polynomial;

impl ExactField for Polynomial {
    fn value(&self, x: Point) -> Complex64 {
        Complex64::new(x[0] * x[0], x[1] * x[2])
    }
    fn gradient(&self, x: Point) -> [Complex64; 3] {
        [Complex64::new(2.0 * x[0], 0.0), Complex64::new(0.0, x[2]), Complex64::new(0.0, x[1])]
    }
    fn laplacian(&self, _: Point) -> Complex64 {
        Complex64::new(2.0, 0.0)
    }
    fn dxx(&self, _: Point) -> Complex64 {
        Complex64::new(2.0, 0.0)
    }
}

/// `sum_m a_m exp(k_m . x)` with complex amplitudes and wave vectors.
#[derive(Clone, Debug)]
pub struct ExpSum {
    pub terms: Vec<(Complex64, [Complex64; 3])>,
}

impl ExpSum {
    fn each(&self, x: Point) -> impl Iterator<Item = (Complex64, &[Complex64; 3])> + '_ {
        self.terms.iter().map(move |(a, k)| (a * (k[0] * x[0] + k[1] * x[1] + k[2] * x[2]).exp(), k))
    }
}

impl ExactField for ExpSum {
    fn value(&self, x: Point) -> Complex64 {
        self.each(x).map(|(e, _)| e).sum()
    }
    fn gradient(&self, x: Point) -> [Complex64; 3] {
        let mut g = [Complex64::new(0.0, 0.0); 3];
        for (e, k) in self.each(x) {
            for c in 0..3 {
                g[c] += e * k[c];
            }
        }
        g
    }
    fn laplacian(&self, x: Point) -> Complex64 {
        self.each(x).map(|(e, k)| e * (k[0] * k[0] + k[1] * k[1] + k[2] * k[2])).sum()
    }
    fn dxx(&self, x: Point) -> Complex64 {
        self.each(x).map(|(e, k)| e * k[0] * k[0]).sum()
    }
}

/// `D(D + i M0 beta dx) p` evaluated directly and as `(D1^2 - K^2) p`.
pub fn strong_liner_operator(ph: &Physics, exact: &dyn ExactField, x: Point) -> (Complex64, Complex64) {
    let (k0, m0) = (ph.derived.k0, ph.derived.mach);
    let (alpha, c1, k2, beta) = (ph.coeffs.alpha, ph.coeffs.c1, ph.coeffs.k2, ph.coeffs.beta_v);
    let one = Complex64::new(1.0, 0.0);
    let (p, px, pxx) = (exact.value(x), exact.gradient(x)[0], exact.dxx(x));
    let direct = k0 * k0 * p - I * k0 * m0 * (2.0 * one - beta) * px - m0 * m0 * (one - beta) * pxx;
    let factored = alpha * alpha * (c1 * c1 * p - 2.0 * I * m0 * c1 * px - m0 * m0 * pxx) - k2 * p;
    (direct, factored)
}

/// Sources for which `exact` solves the discrete variational problem up to
/// quadrature and interpolation error, together with its nodal interpolant.
///
/// The lateral data are derived from the weak form itself: integrating the
/// volume terms by parts leaves `dn p` against the surface measure, while the
/// liner terms pair `D1 p` with both the trace and the tangential x-derivative
/// of the test function. The second pairing is carried by `zeta`. The measure
/// must have a constant surface density so that `dn p` can be expressed
/// against it.
pub fn manufactured_case(
    disc: &Discretization,
    ph: &Physics,
    chi: &LinerDensity,
    exact: Arc<dyn ExactField>,
) -> Result<(SourceData, Vec<Complex64>)> {
    let rho = disc.measure.surface_density().ok_or_else(|| {
        Error::InvalidMeasure("manufactured data need a measure with constant surface density".into())
    })?;
    if chi.values.len() != disc.lateral.len() {
        return Err(Error::DimensionMismatch { what: "liner density", expected: disc.lateral.len(), got: chi.values.len() });
    }
    let (k0, k, m0) = (ph.derived.k0, ph.derived.k, ph.derived.mach);
    let (alpha, c1, k2) = (ph.coeffs.alpha, ph.coeffs.c1, ph.coeffs.k2);
    let fac = ph.liner_factor();
    let mut facet_chi = vec![0.0; disc.mesh.facets.len()];
    for (&f, &v) in disc.lateral.iter().zip(&chi.values) {
        facet_chi[f] = v;
    }
    let normals: Vec<Point> = disc.mesh.facets.iter().map(|f| f.normal).collect();
    let tags: Vec<BoundaryTag> = disc.mesh.facets.iter().map(|f| f.tag).collect();

    let e = exact.clone();
    let f = Field::Analytic(Arc::new(move |x| {
        let (p, px) = (e.value(x), e.gradient(x)[0]);
        e.laplacian(x) + k0 * k0 * p - 2.0 * I * k0 * m0 * px - m0 * m0 * e.dxx(x)
    }));
    let d1 = move |e: &dyn ExactField, x: Point| alpha * (c1 * e.value(x) - I * m0 * e.gradient(x)[0]);
    let dn = |e: &dyn ExactField, n: Point, x: Point| {
        let g = e.gradient(x);
        g[0] * n[0] + g[1] * n[1] + g[2] * n[2]
    };

    let (e, fc, nn) = (exact.clone(), facet_chi.clone(), normals.clone());
    let eta = BoundaryField::Analytic(Arc::new(move |id, x| {
        let liner = fac * fc[id] * ((alpha * c1).conj() * d1(&*e, x) - k2 * e.value(x));
        dn(&*e, nn[id], x) / rho + liner
    }));
    let (e, fc) = (exact.clone(), facet_chi);
    let zeta = BoundaryField::Analytic(Arc::new(move |id, x| fac * fc[id] * alpha.conj() * I * m0 * d1(&*e, x)));
    let e = exact.clone();
    let psi = BoundaryField::Analytic(Arc::new(move |id, x| {
        debug_assert_eq!(tags[id], BoundaryTag::Out);
        let (p, px) = (e.value(x), e.gradient(x)[0]);
        let dp = k0 * p - I * m0 * px;
        (dn(&*e, normals[id], x) - I * m0 * dp) / rho + I * k * p
    }));
    let e = exact.clone();
    let g = Field::Analytic(Arc::new(move |x| e.value(x)));
    let interpolant = disc.mesh.nodes.iter().map(|&x| exact.value(x)).collect();
    Ok((SourceData { f, eta, g, psi, zeta }, interpolant))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::PhysicalParams;

    fn physics(beta: Complex64) -> Physics {
        Physics::new(&PhysicalParams {
            omega: 340.0,
            u0: 102.0,
            c0: 340.0,
            z0: 1.0,
            impedance: Complex64::new(1.0, 1.0),
            beta_v: beta,
        })
        .unwrap()
    }

    fn volume_source(ph: &Physics, e: &dyn ExactField, x: Point) -> Complex64 {
        let (k0, m0) = (ph.derived.k0, ph.derived.mach);
        e.laplacian(x) + k0 * k0 * e.value(x) - 2.0 * I * k0 * m0 * e.gradient(x)[0] - m0 * m0 * e.dxx(x)
    }

    #[test]
    fn downstream_plane_wave_is_source_free() {
        let ph = physics(Complex64::new(0.2, 0.1));
        let w = PlaneWave { kappa: ph.derived.k0 / (1.0 - ph.derived.mach) };
        for x in [[0.0, 0.0, 0.0], [0.3, 0.1, -0.2], [1.0, 0.4, 0.4]] {
            assert!(volume_source(&ph, &w, x).norm() < 1e-14);
        }
        let up = PlaneWave { kappa: -ph.derived.k0 / (1.0 + ph.derived.mach) };
        assert!(volume_source(&ph, &up, [0.5, 0.0, 0.0]).norm() < 1e-14);
    }

    #[test]
    fn constant_field_sources() {
        let ph = physics(Complex64::new(0.3, -0.4));
        let cval = Complex64::new(2.0, -1.0);
        let u = Uniform(cval);
        let x = [0.2, 0.1, 0.3];
        let k0 = ph.derived.k0;
        assert!((volume_source(&ph, &u, x) - k0 * k0 * cval).norm() < 1e-14);
        let (a, b) = strong_liner_operator(&ph, &u, x);
        assert!((a - b).norm() < 1e-13 * a.norm());
        assert!((a - k0 * k0 * cval).norm() < 1e-13 * a.norm());
    }

    #[test]
    fn operator_routes_agree_on_polynomial_and_exponentials() {
        let ph = physics(Complex64::new(-0.4, 0.6));
        let e = ExpSum {
            terms: vec![
                (Complex64::new(1.0, 0.5), [Complex64::new(0.2, 1.3), Complex64::new(0.5, 0.0), Complex64::new(0.0, -0.7)]),
                (Complex64::new(-0.3, 0.0), [Complex64::new(0.0, -2.0), Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]),
            ],
        };
        for x in [[0.1, 0.2, 0.3], [0.9, -0.4, 0.1]] {
            for f in [&Polynomial as &dyn ExactField, &e] {
                let (a, b) = strong_liner_operator(&ph, f, x);
                assert!((a - b).norm() < 1e-12 * a.norm().max(1.0));
            }
            assert!(volume_source(&ph, &Polynomial, x).norm() > 0.0);
        }
    }

    #[test]
    fn expsum_derivatives_match_differences() {
        let e = ExpSum {
            terms: vec![(Complex64::new(0.7, -0.2), [Complex64::new(0.3, 2.0), Complex64::new(-0.5, 0.4), Complex64::new(0.1, -1.0)])],
        };
        let x = [0.3, 0.2, -0.1];
        let h = 1e-5;
        let shift = |c: usize, s: f64| {
            let mut y = x;
            y[c] += s;
            y
        };
        let g = e.gradient(x);
        let mut lap = Complex64::new(0.0, 0.0);
        for c in 0..3 {
            let d = (e.value(shift(c, h)) - e.value(shift(c, -h))) / (2.0 * h);
            assert!((d - g[c]).norm() < 1e-8);
            lap += (e.value(shift(c, h)) - 2.0 * e.value(x) + e.value(shift(c, -h))) / (h * h);
        }
        assert!((lap - e.laplacian(x)).norm() < 1e-4);
    }
}
