//! Built-in self checks: the decomposition identity, a manufactured-solution
//! convergence study and an adjoint-gradient check.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::assembly::{Discretization, Field, LinerDensity, SourceData};
use crate::energy::{energy_at, EnergySpec};
use crate::error::Result;
use crate::measure::build_measure;
use crate::mesh::{generate, MeshSpec};
use crate::optimize;
use crate::params::{myers_coeffs, verify_decomposition, PhysicalParams};
use crate::problem::Problem;
use crate::solver::{convergence_study, observed_orders, ExpSum, MmsSetup};
use crate::Complex64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    Quick,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn test_params() -> PhysicalParams {
    PhysicalParams { omega: 340.0, u0: 102.0, c0: 340.0, z0: 1.0, impedance: c(1.0, 1.0), beta_v: c(0.5, -0.5) }
}

fn timed(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    let start = Instant::now();
    let (pass, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    Check { name, pass, detail, seconds: start.elapsed().as_secs_f64() }
}

pub fn decomposition(draws: usize) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut failures = 0;
    for _ in 0..draws {
        let c0 = rng.random_range(100.0..500.0);
        let p = PhysicalParams {
            omega: rng.random_range(10.0..5000.0),
            u0: c0 * rng.random_range(0.01..0.95),
            c0,
            z0: rng.random_range(0.5..2.0),
            impedance: c(rng.random_range(0.05..5.0), rng.random_range(-5.0..5.0)),
            beta_v: Complex64::from_polar(rng.random_range(0.0..0.99), rng.random_range(-3.1..3.1)),
        };
        let d = p.derive()?;
        if !verify_decomposition(&myers_coeffs(&d, p.beta_v)?, &d) {
            failures += 1;
        }
    }
    Ok((failures == 0, format!("{draws} random parameter sets, {failures} mismatches")))
}

pub fn manufactured(level: Level) -> Result<(bool, String)> {
    let (n_axial, n_ring) = match level {
        Level::Quick => (5, 3),
        Level::Full => (9, 6),
    };
    let ladder: Vec<MeshSpec> = (0..3)
        .map(|l| MeshSpec { length: 1.0, radius: 0.5, n_axial, n_ring, refinement_level: l })
        .collect();
    let setup = MmsSetup {
        params: test_params(),
        surface_weight: 1.0,
        density: Arc::new(|p: [f64; 3]| if p[1] > 0.0 { 0.25 + 0.5 * p[0] } else { 0.9 }),
    };
    let exact = Arc::new(ExpSum {
        terms: vec![
            (c(1.0, 0.0), [c(0.0, 1.3), c(0.4, 0.0), c(0.0, -0.7)]),
            (c(0.3, -0.5), [c(-0.5, 0.0), c(0.0, 0.9), c(0.6, 0.2)]),
        ],
    });
    let rows = convergence_study(&ladder, &setup, exact)?;
    let (l2, h1, _) = *observed_orders(&rows).last().expect("three meshes give two orders");
    let nodes: Vec<usize> = rows.iter().map(|r| r.nodes).collect();
    Ok((l2 >= 1.8 && h1 >= 0.9, format!("nodes {nodes:?}: L2 order {l2:.3} (>= 1.8), H1 order {h1:.3} (>= 0.9)")))
}

pub fn gradient(level: Level) -> Result<(bool, String)> {
    let n_axial = match level {
        Level::Quick => 3,
        Level::Full => 9,
    };
    let mesh = generate(&MeshSpec { length: 1.0, radius: 0.5, n_axial, n_ring: 2, refinement_level: 0 })?;
    let measure = build_measure(&mesh, 1.0, None)?;
    let disc = Discretization::new(mesh, measure)?;
    let n = disc.lateral.len();
    let sources = SourceData {
        g: Field::Analytic(Arc::new(|x: [f64; 3]| Complex64::new(0.0, 0.8 * x[1] + 0.3 * x[2]).exp())),
        ..Default::default()
    };
    let spec = EnergySpec { a: 1.0, b: 0.1, d: 0.5, k_min: 1.0, k_max: 1.0, n_quad: 1 };
    let problem = Problem::new(disc, test_params(), None, sources, spec)?;
    let chi = LinerDensity::new((0..n).map(|i| 0.4 + 0.2 * ((i as f64) * 0.7).sin()).collect(), &problem.disc)?;
    let u = problem.solve_at(1.0, &chi)?;
    let g = optimize::gradient(&problem, 1.0, &chi, &u)?;
    let h = 1e-5;
    let mut worst = 0.0f64;
    for f in 0..n {
        let mut plus = chi.values.clone();
        let mut minus = chi.values.clone();
        plus[f] += h;
        minus[f] -= h;
        let jp = energy_at(&problem, 1.0, &LinerDensity::new(plus, &problem.disc)?)?;
        let jm = energy_at(&problem, 1.0, &LinerDensity::new(minus, &problem.disc)?)?;
        let fd = (jp - jm) / (2.0 * h);
        worst = worst.max((g[f] - fd).abs() / fd.abs().max(f64::MIN_POSITIVE));
    }
    Ok((worst < 1e-4, format!("{n} facets: worst relative deviation from central differences {worst:.2e} (< 1e-4)")))
}

pub fn run(level: Level) -> Vec<Check> {
    vec![
        timed("decomposition identity", || decomposition(1000)),
        timed("manufactured-solution convergence", || manufactured(level)),
        timed("adjoint gradient", || gradient(level)),
    ]
}
