//! The boundary measure: a surface part plus an optional pre-Cantor part on the
//! lateral wall, both carried by per-facet quadrature and normalized to mass 1 on
//! the lateral wall.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{triangle_area, BoundaryTag, CylinderMesh, Point};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CantorSpec {
    pub level: u32,
    pub mass: f64,
    /// Axial interval the construction starts from; defaults to `[0, L]`.
    pub support: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CantorComponent {
    pub level: u32,
    /// Unnormalized mass as given.
    pub mass: f64,
    pub intervals: Vec<(f64, f64)>,
}

/// Similarity dimension of the revolved middle-thirds set.
pub fn cantor_dimension() -> f64 {
    1.0 + 2f64.ln() / 3f64.ln()
}

/// The `2^level` intervals of the middle-thirds construction on `[a, b]`.
pub fn cantor_intervals(a: f64, b: f64, level: u32) -> Vec<(f64, f64)> {
    let mut v = vec![(a, b)];
    for _ in 0..level {
        v = v
            .into_iter()
            .flat_map(|(s, e)| {
                let third = (e - s) / 3.0;
                [(s, s + third), (e - third, e)]
            })
            .collect();
    }
    v
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadPoint {
    pub point: Point,
    /// Barycentric coordinates in the owning facet, ordered like its nodes.
    pub bary: [f64; 3],
    pub weight: f64,
}

#[derive(Clone, Debug)]
pub struct BoundaryMeasure {
    pub surface_weight: f64,
    pub cantor: Option<CantorComponent>,
    /// Quadrature for every boundary facet, indexed by facet id.
    pub facet_quadrature: Vec<Vec<QuadPoint>>,
    /// Lateral mass after normalization (1 up to rounding).
    pub total_lateral_mass: f64,
    /// Factor applied to the raw weights.
    pub scale: f64,
    resolution: f64,
    /// Boundary node positions, the sample pool for regularity estimates.
    boundary_nodes: Vec<Point>,
    /// All quadrature points sorted by x, for ball queries.
    sorted: Vec<(Point, f64)>,
}

const THREE_POINT: [[f64; 3]; 3] = [
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
];

fn combine(p: &[Point; 3], l: [f64; 3]) -> Point {
    std::array::from_fn(|k| l[0] * p[0][k] + l[1] * p[1][k] + l[2] * p[2][k])
}

/// Barycentric coordinates of `x` (assumed in the plane) with respect to `p`.
pub fn barycentric(p: &[Point; 3], x: Point) -> [f64; 3] {
    let e1: Point = std::array::from_fn(|k| p[1][k] - p[0][k]);
    let e2: Point = std::array::from_fn(|k| p[2][k] - p[0][k]);
    let r: Point = std::array::from_fn(|k| x[k] - p[0][k]);
    let d = |a: Point, b: Point| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let (g11, g12, g22) = (d(e1, e1), d(e1, e2), d(e2, e2));
    let (b1, b2) = (d(r, e1), d(r, e2));
    let det = g11 * g22 - g12 * g12;
    let l1 = (g22 * b1 - g12 * b2) / det;
    let l2 = (g11 * b2 - g12 * b1) / det;
    [1.0 - l1 - l2, l1, l2]
}

/// Keeps the part of a planar polygon with `sign * (x - cut) >= 0`.
fn clip(poly: &[Point], cut: f64, sign: f64) -> Vec<Point> {
    let inside = |p: &Point| sign * (p[0] - cut) >= 0.0;
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        match (inside(&a), inside(&b)) {
            (true, true) => out.push(b),
            (true, false) | (false, true) => {
                let t = (cut - a[0]) / (b[0] - a[0]);
                let mut q: Point = std::array::from_fn(|k| a[k] + t * (b[k] - a[k]));
                q[0] = cut;
                out.push(q);
                if inside(&b) {
                    out.push(b);
                }
            }
            (false, false) => {}
        }
    }
    out
}

/// Fan triangulation of a convex polygon, dropping slivers of zero area.
fn fan(poly: &[Point]) -> Vec<[Point; 3]> {
    (1..poly.len().saturating_sub(1))
        .map(|i| [poly[0], poly[i], poly[i + 1]])
        .filter(|t| triangle_area(*t) > 0.0)
        .collect()
}

fn dist2(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

pub fn build_measure(
    mesh: &CylinderMesh,
    surface_weight: f64,
    cantor: Option<CantorSpec>,
) -> Result<BoundaryMeasure> {
    if !(surface_weight.is_finite() && surface_weight >= 0.0) {
        return Err(Error::InvalidMeasure(format!("surface weight {surface_weight} must be >= 0")));
    }
    let cantor_mass = cantor.map_or(0.0, |c| c.mass);
    if !(cantor_mass.is_finite() && cantor_mass >= 0.0) {
        return Err(Error::InvalidMeasure(format!("Cantor mass {cantor_mass} must be >= 0")));
    }
    if surface_weight + cantor_mass <= 0.0 {
        return Err(Error::InvalidMeasure("the measure is identically zero".into()));
    }
    let lateral = mesh.boundary_of(BoundaryTag::Lateral);
    if lateral.is_empty() {
        return Err(Error::InvalidMeasure("mesh has no lateral facets".into()));
    }
    let mut quad: Vec<Vec<QuadPoint>> = vec![Vec::new(); mesh.facets.len()];
    let mut raw_lateral = 0.0;
    if surface_weight > 0.0 {
        for (id, q) in quad.iter_mut().enumerate() {
            let p = mesh.facet_points(id)?;
            let w = surface_weight * triangle_area(p) / 3.0;
            if mesh.facets[id].tag == BoundaryTag::Lateral {
                raw_lateral += 3.0 * w;
            }
            q.extend(THREE_POINT.iter().map(|&l| QuadPoint { point: combine(&p, l), bary: l, weight: w }));
        }
    }
    let component = match cantor.filter(|c| c.mass > 0.0) {
        None => None,
        Some(spec) => {
            let (a, b) = spec.support.unwrap_or((0.0, mesh.length));
            if !(0.0 <= a && a < b && b <= mesh.length) {
                return Err(Error::InvalidMeasure(format!(
                    "Cantor support [{a}, {b}] is not inside [0, {}]",
                    mesh.length
                )));
            }
            if spec.level > 20 {
                return Err(Error::InvalidMeasure(format!("Cantor level {} is too deep", spec.level)));
            }
            let intervals = cantor_intervals(a, b, spec.level);
            let share = spec.mass / intervals.len() as f64;
            let polys: Vec<(usize, [Point; 3])> =
                lateral.iter().map(|&f| Ok((f, mesh.facet_points(f)?))).collect::<Result<_>>()?;
            for &(s, e) in &intervals {
                let mut pieces = Vec::new();
                for (f, p) in &polys {
                    let lo = p.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min);
                    let hi = p.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max);
                    if hi <= s || lo >= e {
                        continue;
                    }
                    let poly = clip(&clip(p, s, 1.0), e, -1.0);
                    for t in fan(&poly) {
                        pieces.push((*f, t, triangle_area(t)));
                    }
                }
                let total: f64 = pieces.iter().map(|x| x.2).sum();
                if !(total > 0.0) {
                    return Err(Error::InvalidMeasure(format!("Cantor interval [{s}, {e}] hits no lateral area")));
                }
                for (f, t, area) in pieces {
                    let w = share * area / total / 3.0;
                    let parent = mesh.facet_points(f)?;
                    for l in THREE_POINT {
                        let x = combine(&t, l);
                        quad[f].push(QuadPoint { point: x, bary: barycentric(&parent, x), weight: w });
                    }
                }
            }
            raw_lateral += spec.mass;
            Some(CantorComponent { level: spec.level, mass: spec.mass, intervals })
        }
    };
    let scale = 1.0 / raw_lateral;
    for q in quad.iter_mut().flatten() {
        q.weight *= scale;
    }
    let total_lateral_mass = lateral.iter().flat_map(|&f| quad[f].iter()).map(|q| q.weight).sum();
    let resolution = if surface_weight > 0.0 { mesh.max_facet_diameter() } else { mesh.polygon_side() };
    let boundary_nodes = {
        let mut ids: Vec<usize> = mesh
            .facets
            .iter()
            .zip(&quad)
            .filter(|(_, q)| q.iter().any(|p| p.weight > 0.0))
            .flat_map(|(f, _)| f.nodes)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids.into_iter().map(|i| mesh.nodes[i]).collect()
    };
    let mut sorted: Vec<(Point, f64)> = quad.iter().flatten().map(|q| (q.point, q.weight)).collect();
    sorted.sort_by(|a, b| a.0[0].total_cmp(&b.0[0]));
    Ok(BoundaryMeasure {
        surface_weight,
        cantor: component,
        facet_quadrature: quad,
        total_lateral_mass,
        scale,
        resolution,
        boundary_nodes,
        sorted,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Regularity {
    pub a_hat: f64,
    pub worst_point: Point,
    pub worst_radius: f64,
    /// Number of dyadic radii that were above the resolution scale.
    pub radii: usize,
}

impl BoundaryMeasure {
    pub fn facet_mass(&self, id: usize) -> Result<f64> {
        let q = self.facet_quadrature.get(id).ok_or(Error::UnknownFacet(id))?;
        Ok(q.iter().map(|p| p.weight).sum())
    }

    pub fn total_mass(&self) -> f64 {
        self.sorted.iter().map(|p| p.1).sum()
    }

    /// Density with respect to surface area when the measure has no singular part.
    pub fn surface_density(&self) -> Option<f64> {
        self.cantor.is_none().then_some(self.surface_weight * self.scale)
    }

    /// Length scale below which the quadrature no longer resolves the measure.
    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    /// Mass of the open ball `B(center, radius)`.
    pub fn ball_mass(&self, center: Point, radius: f64) -> f64 {
        let r2 = radius * radius;
        let lo = self.sorted.partition_point(|p| p.0[0] <= center[0] - radius);
        self.sorted[lo..]
            .iter()
            .take_while(|p| p.0[0] < center[0] + radius)
            .filter(|p| dist2(p.0, center) < r2)
            .map(|p| p.1)
            .sum()
    }

    /// Sampled supremum of `mu(B(x, r)) / r^d` over boundary nodes `x` and dyadic
    /// radii in `(h, 1]`, `h` the resolution scale. The sample is a fixed-seed
    /// shuffle, so a larger sample contains every smaller one.
    pub fn estimate_upper_regularity(&self, d: f64, samples: usize) -> Result<Regularity> {
        self.estimate_upper_regularity_seeded(d, samples, 0x5eed)
    }

    /// As [`BoundaryMeasure::estimate_upper_regularity`], with the sample order
    /// drawn from `seed`.
    pub fn estimate_upper_regularity_seeded(&self, d: f64, samples: usize, seed: u64) -> Result<Regularity> {
        if !(d > 1.0 && d <= 2.0) {
            return Err(Error::InvalidParameter(format!("regularity exponent d = {d} must lie in (1, 2]")));
        }
        if samples < 100 {
            return Err(Error::InvalidParameter(format!("need at least 100 samples, got {samples}")));
        }
        let radii: Vec<f64> =
            (0..60).map(|j| 0.5f64.powi(j)).take_while(|&r| r > self.resolution).collect();
        let mut order: Vec<usize> = (0..self.boundary_nodes.len()).collect();
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let mut best = Regularity { a_hat: 0.0, worst_point: [0.0; 3], worst_radius: 1.0, radii: radii.len() };
        for &i in order.iter().take(samples) {
            let x = self.boundary_nodes[i];
            for &r in &radii {
                let ratio = self.ball_mass(x, r) / r.powf(d);
                if ratio > best.a_hat {
                    best = Regularity { a_hat: ratio, worst_point: x, worst_radius: r, radii: radii.len() };
                }
            }
        }
        Ok(best)
    }
}
