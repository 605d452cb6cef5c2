#![allow(dead_code)]

use std::sync::Arc;

use linersolve::assembly::{Discretization, Field, LinerDensity, SourceData};
use linersolve::energy::EnergySpec;
use linersolve::measure::build_measure;
use linersolve::mesh::{generate, MeshSpec};
use linersolve::params::PhysicalParams;
use linersolve::problem::Problem;
use linersolve::Complex64 as C;

pub fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

/// M0 = 0.3, k0 = 1, Z = 1 + i, beta_v = 0.5 - 0.5i.
pub fn params() -> PhysicalParams {
    PhysicalParams { omega: 340.0, u0: 102.0, c0: 340.0, z0: 1.0, impedance: c(1.0, 1.0), beta_v: c(0.5, -0.5) }
}

pub fn disc(length: f64, radius: f64, n_axial: usize, n_ring: usize) -> Discretization {
    let mesh = generate(&MeshSpec { length, radius, n_axial, n_ring, refinement_level: 0 }).unwrap();
    let mu = build_measure(&mesh, 1.0, None).unwrap();
    Discretization::new(mesh, mu).unwrap()
}

/// A non-symmetric incoming field on the inflow face.
pub fn inflow() -> SourceData {
    SourceData {
        g: Field::Analytic(Arc::new(|x: [f64; 3]| C::new(0.0, 0.8 * x[1] + 0.3 * x[2]).exp())),
        ..Default::default()
    }
}

pub fn energy_spec(k_min: f64, k_max: f64, n_quad: usize) -> EnergySpec {
    EnergySpec { a: 1.0, b: 0.1, d: 0.5, k_min, k_max, n_quad }
}

pub fn problem(disc: Discretization, energy: EnergySpec) -> Problem {
    Problem::new(disc, params(), None, inflow(), energy).unwrap()
}

/// Facet centroid x-coordinate of every lateral facet.
pub fn lateral_x(disc: &Discretization) -> Vec<f64> {
    disc.lateral
        .iter()
        .map(|&f| disc.mesh.facet_points(f).unwrap().iter().map(|p| p[0]).sum::<f64>() / 3.0)
        .collect()
}

pub fn density(disc: &Discretization, values: Vec<f64>) -> LinerDensity {
    LinerDensity::new(values, disc).unwrap()
}
