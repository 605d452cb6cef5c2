//! Physical constants, derived quantities and the Myers operator coefficients.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub omega: f64,
    pub u0: f64,
    pub c0: f64,
    pub z0: f64,
    pub impedance: Complex64,
    pub beta_v: Complex64,
}

impl PhysicalParams {
    /// Checks every constraint on the raw constants, including `|beta_v| < 1`.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("omega", self.omega), ("u0", self.u0), ("c0", self.c0), ("Z0", self.z0)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be finite and > 0")));
            }
        }
        if self.u0 >= self.c0 {
            return Err(Error::NonSubsonic { u0: self.u0, c0: self.c0 });
        }
        if !(self.impedance.re > 0.0) || !self.impedance.im.is_finite() {
            return Err(Error::NonPassiveImpedance { re: self.impedance.re });
        }
        check_beta(self.beta_v)
    }

    pub fn derive(&self) -> Result<DerivedParams> {
        self.validate()?;
        let mach = self.u0 / self.c0;
        let k0 = self.omega / self.c0;
        let k = self.omega / self.u0;
        let admittance = self.impedance.inv();
        Ok(DerivedParams {
            mach,
            k0,
            k,
            admittance,
            ratio: admittance.im / admittance.re,
            z0: self.z0,
        })
    }
}

fn check_beta(beta_v: Complex64) -> Result<()> {
    let modulus = beta_v.norm();
    if !(modulus < 1.0) {
        return Err(Error::BetaOutsideDisc { modulus });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    /// M0 = u0 / c0.
    pub mach: f64,
    /// Acoustic wavenumber omega / c0.
    pub k0: f64,
    /// Flow wavenumber omega / u0.
    pub k: f64,
    /// Y = 1 / Z.
    pub admittance: Complex64,
    /// r = Im Y / Re Y.
    pub ratio: f64,
    pub z0: f64,
}

impl DerivedParams {
    /// Same flow and liner, different acoustic wavenumber. `k` is recomputed
    /// as `k0 / M0` so that `k0 = k M0` keeps holding.
    pub fn at_wavenumber(&self, k0: f64) -> Result<DerivedParams> {
        if !(k0.is_finite() && k0 > 0.0) {
            return Err(Error::InvalidParameter(format!("k0 = {k0} must be finite and > 0")));
        }
        if k0 == self.k0 {
            return Ok(*self);
        }
        Ok(DerivedParams { k0, k: k0 / self.mach, ..*self })
    }

    pub fn with_admittance(&self, admittance: Complex64) -> Result<DerivedParams> {
        if !(admittance.re > 0.0) {
            return Err(Error::NonPassiveImpedance { re: admittance.inv().re });
        }
        Ok(DerivedParams { admittance, ratio: admittance.im / admittance.re, ..*self })
    }
}

/// Coefficients of `D(D + i M0 beta_v dx) = D1^2 - K^2` with `D1 = alpha (c1 - i M0 dx)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MyersCoefficients {
    pub alpha: Complex64,
    pub c1: Complex64,
    pub k2: Complex64,
    pub beta_v: Complex64,
}

/// Square root of `1 - beta_v` with argument in `[0, pi)`.
pub fn alpha_branch(beta_v: Complex64) -> Complex64 {
    let a = (Complex64::new(1.0, 0.0) - beta_v).sqrt();
    if a.arg() < 0.0 {
        -a
    } else {
        a
    }
}

pub fn myers_coeffs(derived: &DerivedParams, beta_v: Complex64) -> Result<MyersCoefficients> {
    check_beta(beta_v)?;
    let one = Complex64::new(1.0, 0.0);
    let k0 = derived.k0;
    let alpha = alpha_branch(beta_v);
    let c1 = (k0 / 2.0) * (2.0 * one - beta_v) / (one - beta_v);
    let k2 = k0 * k0 * beta_v * beta_v / (4.0 * (one - beta_v));
    Ok(MyersCoefficients { alpha, c1, k2, beta_v })
}

fn close(a: Complex64, b: Complex64, rel: f64) -> bool {
    let scale = a.norm().max(b.norm());
    (a - b).norm() <= rel * scale || scale == 0.0
}

/// Expands both sides of the operator factorization as quadratics in the
/// formal symbol `dx` and compares the three coefficient pairs to 1e-12.
pub fn verify_decomposition(coeffs: &MyersCoefficients, derived: &DerivedParams) -> bool {
    let one = Complex64::new(1.0, 0.0);
    let (k0, m0, beta) = (derived.k0, derived.mach, coeffs.beta_v);
    let lhs = [
        Complex64::new(k0 * k0, 0.0),
        -I * k0 * m0 * (2.0 * one - beta),
        -(m0 * m0) * (one - beta),
    ];
    let a2 = coeffs.alpha * coeffs.alpha;
    let rhs = [
        a2 * coeffs.c1 * coeffs.c1 - coeffs.k2,
        -2.0 * I * a2 * coeffs.c1 * m0,
        -a2 * m0 * m0,
    ];
    lhs.iter().zip(rhs.iter()).all(|(&l, &r)| l.is_finite() && r.is_finite() && close(l, r, 1e-12))
}

/// Admittance as a function of the acoustic wavenumber.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ImpedanceModel {
    Constant(Complex64),
    /// Piecewise-linear impedance over `k0`, nodes sorted by `k0`, clamped outside.
    Table(Vec<(f64, Complex64)>),
}

impl ImpedanceModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            ImpedanceModel::Constant(z) => {
                if !(z.re > 0.0) {
                    return Err(Error::NonPassiveImpedance { re: z.re });
                }
            }
            ImpedanceModel::Table(rows) => {
                if rows.is_empty() {
                    return Err(Error::Config("impedance table is empty".into()));
                }
                for w in rows.windows(2) {
                    if !(w[1].0 > w[0].0) {
                        return Err(Error::Config("impedance table k0 values must increase".into()));
                    }
                }
                if let Some((_, z)) = rows.iter().find(|(_, z)| !(z.re > 0.0)) {
                    return Err(Error::NonPassiveImpedance { re: z.re });
                }
            }
        }
        Ok(())
    }

    pub fn at(&self, k0: f64) -> Complex64 {
        match self {
            ImpedanceModel::Constant(z) => *z,
            ImpedanceModel::Table(rows) => {
                let first = rows[0];
                let last = rows[rows.len() - 1];
                if k0 <= first.0 {
                    return first.1;
                }
                if k0 >= last.0 {
                    return last.1;
                }
                let j = rows.partition_point(|(k, _)| *k <= k0);
                let (ka, za) = rows[j - 1];
                let (kb, zb) = rows[j];
                let t = (k0 - ka) / (kb - ka);
                za + (zb - za) * t
            }
        }
    }
}

/// Everything the discrete form needs at one wavenumber.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Physics {
    pub derived: DerivedParams,
    pub coeffs: MyersCoefficients,
}

impl Physics {
    pub fn new(params: &PhysicalParams) -> Result<Physics> {
        let derived = params.derive()?;
        let coeffs = myers_coeffs(&derived, params.beta_v)?;
        Ok(Physics { derived, coeffs })
    }

    /// Re-evaluates the wavenumber-dependent pieces; `impedance` is consulted
    /// only when it is a table.
    pub fn at_wavenumber(&self, k0: f64, impedance: Option<&ImpedanceModel>) -> Result<Physics> {
        let mut derived = self.derived.at_wavenumber(k0)?;
        if let Some(model @ ImpedanceModel::Table(_)) = impedance {
            derived = derived.with_admittance(model.at(k0).inv())?;
        }
        if derived == self.derived {
            return Ok(*self);
        }
        let coeffs = myers_coeffs(&derived, self.coeffs.beta_v)?;
        Ok(Physics { derived, coeffs })
    }

    /// `i Y Z0 / k0`, the factor in front of the liner terms.
    pub fn liner_factor(&self) -> Complex64 {
        I * self.derived.admittance * (self.derived.z0 / self.derived.k0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const ZERO: Complex64 = Complex64::new(0.0, 0.0);

    fn params(omega: f64, u0: f64, c0: f64, z: Complex64) -> PhysicalParams {
        PhysicalParams { omega, u0, c0, z0: 1.0, impedance: z, beta_v: ZERO }
    }

    #[test]
    fn derive_basic() {
        let d = params(340.0, 68.0, 340.0, Complex64::new(1.0, 0.0)).derive().unwrap();
        assert_relative_eq!(d.mach, 0.2, epsilon = 1e-15);
        assert_relative_eq!(d.k0, 1.0, epsilon = 1e-15);
        assert_relative_eq!(d.k, 5.0, epsilon = 1e-15);
        assert_eq!(d.admittance, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn derive_rejects_sonic_flow() {
        let e = params(100.0, 100.0, 100.0, Complex64::new(1.0, 0.0)).derive().unwrap_err();
        assert!(matches!(e, Error::NonSubsonic { .. }));
    }

    #[test]
    fn derive_rejects_active_liner() {
        let e = params(1.0, 0.1, 1.0, Complex64::new(0.0, 1.0)).derive().unwrap_err();
        assert!(matches!(e, Error::NonPassiveImpedance { .. }));
    }

    #[test]
    fn admittance_of_two_minus_two_i() {
        let d = params(1.0, 0.1, 1.0, Complex64::new(2.0, -2.0)).derive().unwrap();
        // 1/(2-2i) = (2+2i)/8
        assert_relative_eq!(d.admittance.re, 0.25, epsilon = 1e-15);
        assert_relative_eq!(d.admittance.im, 0.25, epsilon = 1e-15);
        assert_relative_eq!(d.ratio, 1.0, epsilon = 1e-15);
    }

    fn derived_k0(k0: f64, mach: f64) -> DerivedParams {
        let p = params(k0 * 340.0, mach * 340.0, 340.0, Complex64::new(1.0, 0.0));
        p.derive().unwrap()
    }

    #[test]
    fn ingard_myers_reduction() {
        let c = myers_coeffs(&derived_k0(1.0, 0.3), ZERO).unwrap();
        assert_eq!(c.alpha, Complex64::new(1.0, 0.0));
        assert_relative_eq!(c.c1.re, 1.0, epsilon = 1e-15);
        assert_eq!(c.c1.im, 0.0);
        assert_eq!(c.k2, ZERO);
    }

    #[test]
    fn real_beta_half() {
        let c = myers_coeffs(&derived_k0(1.0, 0.3), Complex64::new(0.5, 0.0)).unwrap();
        assert_relative_eq!(c.k2.re, 0.125, epsilon = 1e-15);
        assert_relative_eq!(c.alpha.re, 0.5f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(c.c1.re, 1.5, epsilon = 1e-15);
    }

    #[test]
    fn k2_two_routes_complex_beta() {
        let beta = Complex64::new(0.5, 0.5);
        let c = myers_coeffs(&derived_k0(2.0, 0.3), beta).unwrap();
        let (x, y) = (beta.re, beta.im);
        let s = 4.0 / (4.0 * ((1.0 - x).powi(2) + y * y));
        let other = Complex64::new(
            s * (x * x - y * y - x * (x * x + y * y)),
            s * y * (2.0 * x - x * x - y * y),
        );
        assert!((c.k2 - other).norm() <= 1e-13 * other.norm());
    }

    #[test]
    fn rejects_beta_on_unit_circle() {
        let e = myers_coeffs(&derived_k0(1.0, 0.3), Complex64::new(0.6, 0.8)).unwrap_err();
        assert!(matches!(e, Error::BetaOutsideDisc { .. }));
    }

    #[test]
    fn decomposition_examples() {
        let d = derived_k0(1.0, 0.2);
        let c0 = myers_coeffs(&d, ZERO).unwrap();
        assert!(verify_decomposition(&c0, &d));
        let c = myers_coeffs(&d, Complex64::new(0.3, -0.4)).unwrap();
        assert!(verify_decomposition(&c, &d));
        let mut bad = c;
        bad.k2 += 1e-6;
        assert!(!verify_decomposition(&bad, &d));
    }

    #[test]
    fn wavenumber_override_is_identity_at_base() {
        let p = PhysicalParams {
            omega: 123.4,
            u0: 33.3,
            c0: 340.0,
            z0: 1.0,
            impedance: Complex64::new(1.0, -0.7),
            beta_v: Complex64::new(0.2, 0.1),
        };
        let ph = Physics::new(&p).unwrap();
        assert_eq!(ph.at_wavenumber(ph.derived.k0, None).unwrap(), ph);
        let moved = ph.at_wavenumber(2.0, None).unwrap();
        assert_relative_eq!(moved.derived.k * moved.derived.mach, 2.0, max_relative = 1e-15);
    }

    #[test]
    fn impedance_table_interpolates_and_clamps() {
        let t = ImpedanceModel::Table(vec![
            (1.0, Complex64::new(1.0, 0.0)),
            (3.0, Complex64::new(3.0, -2.0)),
        ]);
        t.validate().unwrap();
        assert_eq!(t.at(0.5), Complex64::new(1.0, 0.0));
        assert_eq!(t.at(2.0), Complex64::new(2.0, -1.0));
        assert_eq!(t.at(9.0), Complex64::new(3.0, -2.0));
    }

    fn disc_point() -> impl Strategy<Value = Complex64> {
        (0.0..0.999f64, -std::f64::consts::PI..std::f64::consts::PI)
            .prop_map(|(r, t)| Complex64::from_polar(r, t))
    }

    proptest! {
        #[test]
        fn alpha_branch_and_square(beta in disc_point()) {
            let c = myers_coeffs(&derived_k0(1.3, 0.4), beta).unwrap();
            let a = c.alpha.arg();
            prop_assert!((0.0..std::f64::consts::PI).contains(&a));
            let one = Complex64::new(1.0, 0.0);
            prop_assert!((c.alpha * c.alpha - (one - beta)).norm() <= 1e-14);
            let kk = 1.3 * beta / (2.0 * c.alpha);
            prop_assert!((kk * kk - c.k2).norm() <= 1e-13 * c.k2.norm().max(1e-300));
        }

        #[test]
        fn constant_coefficient_is_k0_squared(beta in disc_point(), k0 in 0.05..20.0f64) {
            let c = myers_coeffs(&derived_k0(k0, 0.4), beta).unwrap();
            let constant = c.alpha * c.alpha * c.c1 * c.c1 - c.k2;
            prop_assert!((constant - k0 * k0).norm() <= 1e-12 * k0 * k0);
            prop_assert!(verify_decomposition(&c, &derived_k0(k0, 0.4)));
        }

        #[test]
        fn k0_equals_k_times_mach(omega in 1e-3..1e4f64, c0 in 1.0..1e3f64, frac in 0.001..0.999f64) {
            let d = params(omega, frac * c0, c0, Complex64::new(1.0, 0.0)).derive().unwrap();
            prop_assert!((d.k0 - d.k * d.mach).abs() <= 1e-14 * d.k0);
        }
    }
}
