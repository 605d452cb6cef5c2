//! Error tables against exact fields over a ladder of meshes.

use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use serde::Serialize;

use super::manufactured::{manufactured_case, ExactField};
use crate::assembly::{assemble, facet_dx, tet_gradients, Discretization, LinerDensity, TET_RULE};
use crate::error::{Error, Result};
use crate::measure::build_measure;
use crate::mesh::{generate, MeshSpec, Point};
use crate::params::{PhysicalParams, Physics};

pub type DensityFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

/// Physics, measure weight and a liner density given as a function of the facet centroid.
#[derive(Clone)]
pub struct MmsSetup {
    pub params: PhysicalParams,
    pub surface_weight: f64,
    pub density: DensityFn,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRow {
    pub refinement_level: u32,
    pub nodes: usize,
    pub h: f64,
    pub l2: f64,
    pub h1: f64,
    pub v: f64,
    pub residual: f64,
    pub seconds: f64,
}

/// Barycentric points and weights of the degree-2 rule on the eight children of
/// a regular subdivision, for integrating errors.
fn fine_rule() -> Vec<[f64; 4]> {
    let e = |i: usize| -> [f64; 4] { std::array::from_fn(|k| if k == i { 1.0 } else { 0.0 }) };
    let m = |i: usize, j: usize| -> [f64; 4] { std::array::from_fn(|k| if k == i || k == j { 0.5 } else { 0.0 }) };
    let children = [
        [e(0), m(0, 1), m(0, 2), m(0, 3)],
        [m(0, 1), e(1), m(1, 2), m(1, 3)],
        [m(0, 2), m(1, 2), e(2), m(2, 3)],
        [m(0, 3), m(1, 3), m(2, 3), e(3)],
        [m(0, 1), m(0, 2), m(0, 3), m(1, 3)],
        [m(0, 1), m(0, 2), m(1, 2), m(1, 3)],
        [m(0, 2), m(0, 3), m(1, 3), m(2, 3)],
        [m(0, 2), m(1, 2), m(1, 3), m(2, 3)],
    ];
    let mut pts = Vec::with_capacity(32);
    for ch in children {
        for l in TET_RULE {
            pts.push(std::array::from_fn(|k| (0..4).map(|c| l[c] * ch[c][k]).sum()));
        }
    }
    pts
}

/// `(||e||_L2, |e|_H1, ||e||_V)` for the FE field `u` against `exact`.
pub fn errors(
    disc: &Discretization,
    ph: &Physics,
    chi: &LinerDensity,
    u: &[Complex64],
    exact: &dyn ExactField,
) -> (f64, f64, f64) {
    let mesh = &disc.mesh;
    let rule = fine_rule();
    let (mut l2, mut h1) = (0.0, 0.0);
    for t in &mesh.tets {
        let p = t.map(|i| mesh.nodes[i]);
        let (g, vol) = tet_gradients(&p);
        let w = vol / rule.len() as f64;
        let grad_h: [Complex64; 3] = std::array::from_fn(|c| (0..4).map(|k| u[t[k]] * g[k][c]).sum());
        for l in &rule {
            let x: Point = std::array::from_fn(|c| (0..4).map(|k| l[k] * p[k][c]).sum());
            let uh: Complex64 = (0..4).map(|k| u[t[k]] * l[k]).sum();
            l2 += w * (uh - exact.value(x)).norm_sqr();
            let ge = exact.gradient(x);
            h1 += w * (0..3).map(|c| (grad_h[c] - ge[c]).norm_sqr()).sum::<f64>();
        }
    }
    let (m0, alpha, c1) = (ph.derived.mach, ph.coeffs.alpha, ph.coeffs.c1);
    let mut liner = 0.0;
    for (b, &c) in disc.blocks.iter().zip(&chi.values) {
        if c == 0.0 {
            continue;
        }
        let dx = facet_dx(&mesh.facet_points(b.facet).expect("facet exists"));
        let dxu: Complex64 = (0..3).map(|k| u[b.nodes[k]] * dx[k]).sum();
        for q in &disc.measure.facet_quadrature[b.facet] {
            let uh: Complex64 = (0..3).map(|k| u[b.nodes[k]] * q.bary[k]).sum();
            let eh = alpha * (c1 * uh - Complex64::i() * m0 * dxu);
            let ex = alpha * (c1 * exact.value(q.point) - Complex64::i() * m0 * exact.gradient(q.point)[0]);
            liner += c * q.weight * (eh - ex).norm_sqr();
        }
    }
    (l2.sqrt(), h1.sqrt(), (h1 + liner).sqrt())
}

/// Solves the manufactured problem on every mesh of the ladder, finest last.
pub fn convergence_study(
    ladder: &[MeshSpec],
    setup: &MmsSetup,
    exact: Arc<dyn ExactField>,
) -> Result<Vec<ConvergenceRow>> {
    if ladder.len() < 3 {
        return Err(Error::InvalidParameter(format!("need at least 3 meshes, got {}", ladder.len())));
    }
    let ph = Physics::new(&setup.params)?;
    let mut rows = Vec::with_capacity(ladder.len());
    for spec in ladder {
        let start = Instant::now();
        let mesh = generate(spec)?;
        let h = mesh.max_edge_length();
        let measure = build_measure(&mesh, setup.surface_weight, None)?;
        let disc = Discretization::new(mesh, measure)?;
        let values = disc
            .lateral
            .iter()
            .map(|&f| {
                let p = disc.mesh.facet_points(f).expect("lateral facet exists");
                (setup.density)(std::array::from_fn(|c| (p[0][c] + p[1][c] + p[2][c]) / 3.0))
            })
            .collect();
        let chi = LinerDensity::new(values, &disc)?;
        let (sources, _) = manufactured_case(&disc, &ph, &chi, exact.clone())?;
        let system = assemble(&disc, &ph, &chi, &sources, None)?;
        let u = super::solve(&system)?;
        drop(system);
        let (l2, h1, v) = errors(&disc, &ph, &chi, &u.values, &*exact);
        rows.push(ConvergenceRow {
            refinement_level: spec.refinement_level,
            nodes: disc.node_count(),
            h,
            l2,
            h1,
            v,
            residual: u.residual,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(rows)
}

/// Log-log slopes between consecutive rows: `(L2, H1, V)`.
pub fn observed_orders(rows: &[ConvergenceRow]) -> Vec<(f64, f64, f64)> {
    rows.windows(2)
        .map(|w| {
            let r = (w[0].h / w[1].h).ln();
            ((w[0].l2 / w[1].l2).ln() / r, (w[0].h1 / w[1].h1).ln() / r, (w[0].v / w[1].v).ln() / r)
        })
        .collect()
}
