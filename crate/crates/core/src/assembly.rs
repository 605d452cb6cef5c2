//! P1 discretization of the sesquilinear form and load functional.
//!
//! Every term of the form is a fixed linear combination of real Gram matrices
//! that depend only on the mesh and measure, plus per-facet 3x3 blocks weighted
//! by the liner density. Those are built once in [`Discretization`] and
//! combined per wavenumber and per density in [`assemble`].

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::measure::BoundaryMeasure;
use crate::mesh::{BoundaryTag, CylinderMesh, Point};
use crate::params::Physics;
use crate::sparse::{norm2, Csr, Pattern};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Degree-2 rule on the reference tetrahedron, weights summing to 1.
const TET_A: f64 = 0.585_410_196_624_968_5;
const TET_B: f64 = 0.138_196_601_125_010_5;
pub const TET_RULE: [[f64; 4]; 4] = [
    [TET_A, TET_B, TET_B, TET_B],
    [TET_B, TET_A, TET_B, TET_B],
    [TET_B, TET_B, TET_A, TET_B],
    [TET_B, TET_B, TET_B, TET_A],
];

/// Gradients of the four barycentric functions and the volume.
pub fn tet_gradients(p: &[Point; 4]) -> ([[f64; 3]; 4], f64) {
    let e: [[f64; 3]; 3] = std::array::from_fn(|k| std::array::from_fn(|c| p[k + 1][c] - p[0][c]));
    let cof = |a: [f64; 3], b: [f64; 3]| [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    let det = e[0][0] * (e[1][1] * e[2][2] - e[1][2] * e[2][1]) - e[0][1] * (e[1][0] * e[2][2] - e[1][2] * e[2][0])
        + e[0][2] * (e[1][0] * e[2][1] - e[1][1] * e[2][0]);
    // Rows of the inverse of [e0; e1; e2]^T are the cross products over det.
    let g1 = cof(e[1], e[2]).map(|v| v / det);
    let g2 = cof(e[2], e[0]).map(|v| v / det);
    let g3 = cof(e[0], e[1]).map(|v| v / det);
    let g0 = std::array::from_fn(|c| -(g1[c] + g2[c] + g3[c]));
    ([g0, g1, g2, g3], det / 6.0)
}

/// x-derivatives of the barycentric functions along a facet.
pub fn facet_dx(p: &[Point; 3]) -> [f64; 3] {
    let e1: [f64; 3] = std::array::from_fn(|k| p[1][k] - p[0][k]);
    let e2: [f64; 3] = std::array::from_fn(|k| p[2][k] - p[0][k]);
    let d = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let (g11, g12, g22) = (d(e1, e1), d(e1, e2), d(e2, e2));
    let det = g11 * g22 - g12 * g12;
    let grad1: [f64; 3] = std::array::from_fn(|k| (g22 * e1[k] - g12 * e2[k]) / det);
    let grad2: [f64; 3] = std::array::from_fn(|k| (g11 * e2[k] - g12 * e1[k]) / det);
    [-(grad1[0] + grad2[0]), grad1[0], grad2[0]]
}

pub type PointFn = Arc<dyn Fn(Point) -> Complex64 + Send + Sync>;
pub type FacetFn = Arc<dyn Fn(usize, Point) -> Complex64 + Send + Sync>;

/// A complex field on the domain.
#[derive(Clone, Default)]
pub enum Field {
    #[default]
    Zero,
    Constant(Complex64),
    /// Node values, interpolated linearly.
    Nodal(Vec<Complex64>),
    Analytic(PointFn),
}

/// A complex field on boundary facets; the facet id is passed to analytic fields
/// because data on the liner may jump across facets.
#[derive(Clone, Default)]
pub enum BoundaryField {
    #[default]
    Zero,
    Constant(Complex64),
    /// Values at the three nodes of each facet, indexed by facet id.
    FacetNodal(Vec<[Complex64; 3]>),
    Analytic(FacetFn),
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::Zero => write!(f, "Zero"),
            Field::Constant(c) => write!(f, "Constant({c})"),
            Field::Nodal(v) => write!(f, "Nodal({} values)", v.len()),
            Field::Analytic(_) => write!(f, "Analytic"),
        }
    }
}

impl fmt::Debug for BoundaryField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryField::Zero => write!(f, "Zero"),
            BoundaryField::Constant(c) => write!(f, "Constant({c})"),
            BoundaryField::FacetNodal(v) => write!(f, "FacetNodal({} facets)", v.len()),
            BoundaryField::Analytic(_) => write!(f, "Analytic"),
        }
    }
}

impl Field {
    fn at(&self, nodes: &[usize], phi: &[f64], x: Point) -> Complex64 {
        match self {
            Field::Zero => ZERO,
            Field::Constant(c) => *c,
            Field::Nodal(v) => nodes.iter().zip(phi).map(|(&n, &w)| v[n] * w).sum(),
            Field::Analytic(f) => f(x),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Field::Zero)
    }

    pub fn scaled(&self, s: Complex64) -> Field {
        match self {
            Field::Zero => Field::Zero,
            Field::Constant(c) => Field::Constant(s * c),
            Field::Nodal(v) => Field::Nodal(v.iter().map(|z| s * z).collect()),
            Field::Analytic(f) => {
                let f = f.clone();
                Field::Analytic(Arc::new(move |x| s * f(x)))
            }
        }
    }

    pub fn conj(&self) -> Field {
        match self {
            Field::Zero => Field::Zero,
            Field::Constant(c) => Field::Constant(c.conj()),
            Field::Nodal(v) => Field::Nodal(v.iter().map(|z| z.conj()).collect()),
            Field::Analytic(f) => {
                let f = f.clone();
                Field::Analytic(Arc::new(move |x| f(x).conj()))
            }
        }
    }
}

impl BoundaryField {
    fn at(&self, facet: usize, bary: [f64; 3], x: Point) -> Complex64 {
        match self {
            BoundaryField::Zero => ZERO,
            BoundaryField::Constant(c) => *c,
            BoundaryField::FacetNodal(v) => (0..3).map(|k| v[facet][k] * bary[k]).sum(),
            BoundaryField::Analytic(f) => f(facet, x),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, BoundaryField::Zero)
    }

    pub fn scaled(&self, s: Complex64) -> BoundaryField {
        match self {
            BoundaryField::Zero => BoundaryField::Zero,
            BoundaryField::Constant(c) => BoundaryField::Constant(s * c),
            BoundaryField::FacetNodal(v) => BoundaryField::FacetNodal(v.iter().map(|a| a.map(|z| s * z)).collect()),
            BoundaryField::Analytic(f) => {
                let f = f.clone();
                BoundaryField::Analytic(Arc::new(move |i, x| s * f(i, x)))
            }
        }
    }

    pub fn conj(&self) -> BoundaryField {
        match self {
            BoundaryField::Zero => BoundaryField::Zero,
            BoundaryField::Constant(c) => BoundaryField::Constant(c.conj()),
            BoundaryField::FacetNodal(v) => BoundaryField::FacetNodal(v.iter().map(|a| a.map(|z| z.conj())).collect()),
            BoundaryField::Analytic(f) => {
                let f = f.clone();
                BoundaryField::Analytic(Arc::new(move |i, x| f(i, x).conj()))
            }
        }
    }
}

/// Data of the boundary-value problem. `f` is the volume source (entering the
/// load with a minus sign), `eta` the lateral source, `g` the inflow Dirichlet
/// value, `psi` an outflow source, and `zeta` a lateral source paired with the
/// tangential x-derivative of the test function (used by manufactured solutions).
#[derive(Clone, Debug, Default)]
pub struct SourceData {
    pub f: Field,
    pub eta: BoundaryField,
    pub g: Field,
    pub psi: BoundaryField,
    pub zeta: BoundaryField,
}

impl SourceData {
    pub fn scaled(&self, s: Complex64) -> SourceData {
        SourceData {
            f: self.f.scaled(s),
            eta: self.eta.scaled(s),
            g: self.g.scaled(s),
            psi: self.psi.scaled(s),
            zeta: self.zeta.scaled(s),
        }
    }

    pub fn conj(&self) -> SourceData {
        SourceData {
            f: self.f.conj(),
            eta: self.eta.conj(),
            g: self.g.conj(),
            psi: self.psi.conj(),
            zeta: self.zeta.conj(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.f.is_zero() && self.eta.is_zero() && self.g.is_zero() && self.psi.is_zero() && self.zeta.is_zero()
    }
}

/// Liner density, one value in `[0, 1]` per lateral facet, in the order of
/// [`Discretization::lateral`]. `gamma` is its mass.
#[derive(Clone, Debug, PartialEq)]
pub struct LinerDensity {
    pub values: Vec<f64>,
    pub gamma: f64,
}

impl LinerDensity {
    pub fn new(values: Vec<f64>, disc: &Discretization) -> Result<LinerDensity> {
        if values.len() != disc.lateral.len() {
            return Err(Error::DimensionMismatch {
                what: "liner density",
                expected: disc.lateral.len(),
                got: values.len(),
            });
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidDensity(format!("value {v} at lateral facet {i} is outside [0, 1]")));
        }
        let gamma = disc.mass_of(&values);
        Ok(LinerDensity { values, gamma })
    }

    pub fn uniform(value: f64, disc: &Discretization) -> Result<LinerDensity> {
        LinerDensity::new(vec![value; disc.lateral.len()], disc)
    }

    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for v in &self.values {
            h.update(v.to_le_bytes());
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Mesh-level data for one lateral facet.
#[derive(Clone, Debug)]
pub struct LinerBlock {
    pub facet: usize,
    pub nodes: [usize; 3],
    pub positions: [[usize; 3]; 3],
    /// `sum_q w phi_j phi_i` at `[i][j]`.
    pub t: [[f64; 3]; 3],
    /// `sum_q w phi_j dx phi_i` at `[i][j]`.
    pub e: [[f64; 3]; 3],
    /// `sum_q w dx phi_j dx phi_i` at `[i][j]`.
    pub f: [[f64; 3]; 3],
    pub mass: f64,
}

impl LinerBlock {
    /// Local matrix of `<D1 phi_j, D1 phi_i>` at `[i][j]`.
    pub fn d1_gram(&self, ph: &Physics) -> [[Complex64; 3]; 3] {
        let (m0, c1) = (ph.derived.mach, ph.coeffs.c1);
        let a2 = ph.coeffs.alpha.norm_sqr();
        std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                a2 * (c1.norm_sqr() * self.t[i][j] + I * m0 * (c1 * self.e[i][j] - c1.conj() * self.e[j][i])
                    + m0 * m0 * self.f[i][j])
            })
        })
    }

    /// Derivative of the matrix with respect to this facet's density.
    pub fn unit_block(&self, ph: &Physics) -> [[Complex64; 3]; 3] {
        let g = self.d1_gram(ph);
        let (fac, k2) = (ph.liner_factor(), ph.coeffs.k2);
        std::array::from_fn(|i| std::array::from_fn(|j| fac * (g[i][j] - k2 * self.t[i][j])))
    }

    fn gather(&self, p: &[Complex64]) -> [Complex64; 3] {
        self.nodes.map(|n| p[n])
    }
}

fn local_form(a: &[[Complex64; 3]; 3], p: &[Complex64; 3], q: &[Complex64; 3]) -> Complex64 {
    let mut s = ZERO;
    for i in 0..3 {
        for j in 0..3 {
            s += q[i].conj() * a[i][j] * p[j];
        }
    }
    s
}

/// Mesh, measure and every Gram matrix the solver and optimizer reuse.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub mesh: CylinderMesh,
    pub measure: BoundaryMeasure,
    pub pattern: Arc<Pattern>,
    /// Lateral facet ids; the liner density is indexed in this order.
    pub lateral: Vec<usize>,
    pub lateral_mass: Vec<f64>,
    /// Inflow nodes, eliminated.
    pub dirichlet: Vec<usize>,
    pub free: Vec<usize>,
    /// Position of each node among the free nodes.
    pub free_index: Vec<Option<usize>>,
    /// `(grad phi_j, grad phi_i)`.
    pub stiffness: Csr<f64>,
    /// `(phi_j, phi_i)`.
    pub mass: Csr<f64>,
    /// `(phi_j, dx phi_i)`.
    pub convection: Csr<f64>,
    /// `(dx phi_j, dx phi_i)`.
    pub dxx: Csr<f64>,
    /// `(phi_j, phi_i)` on the outflow face, with respect to the measure.
    pub out_mass: Csr<f64>,
    /// `(phi_j, phi_i)` on the lateral wall, with respect to the measure.
    pub trace_mass: Csr<f64>,
    pub blocks: Vec<LinerBlock>,
}

impl Discretization {
    pub fn new(mesh: CylinderMesh, measure: BoundaryMeasure) -> Result<Discretization> {
        if measure.facet_quadrature.len() != mesh.facets.len() {
            return Err(Error::DimensionMismatch {
                what: "measure facets",
                expected: mesh.facets.len(),
                got: measure.facet_quadrature.len(),
            });
        }
        let n = mesh.nodes.len();
        let pattern = Arc::new(Pattern::from_cells(n, &mesh.tets));
        let mut stiffness = Csr::zeros(pattern.clone());
        let mut mass = Csr::zeros(pattern.clone());
        let mut convection = Csr::zeros(pattern.clone());
        let mut dxx = Csr::zeros(pattern.clone());
        for t in &mesh.tets {
            let (g, vol) = tet_gradients(&t.map(|i| mesh.nodes[i]));
            if !(vol > 0.0) {
                return Err(Error::InvalidMesh(format!("tet {t:?} has volume {vol}")));
            }
            let pos = pattern.local_positions(t);
            for i in 0..4 {
                for j in 0..4 {
                    let k = pos[i][j];
                    stiffness.values[k] += vol * (g[i][0] * g[j][0] + g[i][1] * g[j][1] + g[i][2] * g[j][2]);
                    mass.values[k] += vol / 20.0 * if i == j { 2.0 } else { 1.0 };
                    convection.values[k] += g[i][0] * vol / 4.0;
                    dxx.values[k] += vol * g[i][0] * g[j][0];
                }
            }
        }
        let mut out_mass = Csr::zeros(pattern.clone());
        let mut trace_mass = Csr::zeros(pattern.clone());
        let mut blocks = Vec::new();
        let mut lateral = Vec::new();
        for (id, facet) in mesh.facets.iter().enumerate() {
            let pos = pattern.local_positions(&facet.nodes);
            let quad = &measure.facet_quadrature[id];
            let mut t = [[0.0; 3]; 3];
            let mut first = [0.0; 3];
            for q in quad {
                for i in 0..3 {
                    first[i] += q.weight * q.bary[i];
                    for j in 0..3 {
                        t[i][j] += q.weight * q.bary[i] * q.bary[j];
                    }
                }
            }
            match facet.tag {
                BoundaryTag::Out => {
                    for i in 0..3 {
                        for j in 0..3 {
                            out_mass.values[pos[i][j]] += t[i][j];
                        }
                    }
                }
                BoundaryTag::Lateral => {
                    let dx = facet_dx(&mesh.facet_points(id)?);
                    let w: f64 = quad.iter().map(|q| q.weight).sum();
                    for i in 0..3 {
                        for j in 0..3 {
                            trace_mass.values[pos[i][j]] += t[i][j];
                        }
                    }
                    blocks.push(LinerBlock {
                        facet: id,
                        nodes: facet.nodes,
                        positions: pos,
                        t,
                        e: std::array::from_fn(|i| std::array::from_fn(|j| dx[i] * first[j])),
                        f: std::array::from_fn(|i| std::array::from_fn(|j| w * dx[i] * dx[j])),
                        mass: w,
                    });
                    lateral.push(id);
                }
                BoundaryTag::In => {}
            }
        }
        let dirichlet = mesh.nodes_on(BoundaryTag::In);
        let mut free_index = vec![Some(0); n];
        for &d in &dirichlet {
            free_index[d] = None;
        }
        let mut free = Vec::with_capacity(n - dirichlet.len());
        for (i, slot) in free_index.iter_mut().enumerate() {
            if slot.is_some() {
                *slot = Some(free.len());
                free.push(i);
            }
        }
        let lateral_mass = blocks.iter().map(|b| b.mass).collect();
        Ok(Discretization {
            mesh,
            measure,
            pattern,
            lateral,
            lateral_mass,
            dirichlet,
            free,
            free_index,
            stiffness,
            mass,
            convection,
            dxx,
            out_mass,
            trace_mass,
            blocks,
        })
    }

    pub fn node_count(&self) -> usize {
        self.mesh.nodes.len()
    }

    /// Measure-weighted mass of per-lateral-facet values.
    pub fn mass_of(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.lateral_mass).map(|(v, w)| v * w).sum()
    }

    /// Load vector `l(phi_i)` over all nodes and the inflow lift.
    pub fn load(&self, sources: &SourceData) -> (Vec<Complex64>, Vec<Complex64>) {
        let mesh = &self.mesh;
        let mut load = vec![ZERO; mesh.nodes.len()];
        if !sources.f.is_zero() {
            for t in &mesh.tets {
                let p = t.map(|i| mesh.nodes[i]);
                let (_, vol) = tet_gradients(&p);
                for l in TET_RULE {
                    let x: Point = std::array::from_fn(|c| (0..4).map(|k| l[k] * p[k][c]).sum());
                    let fx = sources.f.at(t, &l, x) * (vol / 4.0);
                    for k in 0..4 {
                        load[t[k]] -= fx * l[k];
                    }
                }
            }
        }
        for (id, facet) in mesh.facets.iter().enumerate() {
            let field = match facet.tag {
                BoundaryTag::Lateral => &sources.eta,
                BoundaryTag::Out => &sources.psi,
                BoundaryTag::In => continue,
            };
            let zeta = (facet.tag == BoundaryTag::Lateral && !sources.zeta.is_zero()).then(|| {
                facet_dx(&facet.nodes.map(|i| mesh.nodes[i]))
            });
            if field.is_zero() && zeta.is_none() {
                continue;
            }
            for q in &self.measure.facet_quadrature[id] {
                let v = field.at(id, q.bary, q.point) * q.weight;
                for k in 0..3 {
                    load[facet.nodes[k]] += v * q.bary[k];
                }
                if let Some(dx) = zeta {
                    let z = sources.zeta.at(id, q.bary, q.point) * q.weight;
                    for k in 0..3 {
                        load[facet.nodes[k]] += z * dx[k];
                    }
                }
            }
        }
        let mut lift = vec![ZERO; mesh.nodes.len()];
        for &d in &self.dirichlet {
            lift[d] = sources.g.at(&[d], &[1.0], mesh.nodes[d]);
        }
        (load, lift)
    }

    /// Quadratic form of the energy Gram `a M + b S + d T_Gamma`.
    pub fn energy_form(&self, a: f64, b: f64, d: f64, u: &[Complex64]) -> f64 {
        let mut s = 0.0;
        if a != 0.0 {
            s += a * self.mass.form(u, u).re;
        }
        if b != 0.0 {
            s += b * self.stiffness.form(u, u).re;
        }
        if d != 0.0 {
            s += d * self.trace_mass.form(u, u).re;
        }
        s
    }

    /// `(a M + b S + d T_Gamma) u`.
    pub fn energy_gradient(&self, a: f64, b: f64, d: f64, u: &[Complex64]) -> Vec<Complex64> {
        let p = &self.pattern;
        (0..p.n)
            .map(|i| {
                p.row(i)
                    .map(|k| {
                        let g = a * self.mass.values[k] + b * self.stiffness.values[k] + d * self.trace_mass.values[k];
                        g * u[p.cols[k]]
                    })
                    .sum()
            })
            .collect()
    }
}

/// The discrete system at one wavenumber and density.
#[derive(Clone, Debug)]
pub struct AssembledSystem<'d> {
    pub disc: &'d Discretization,
    pub physics: Physics,
    pub chi: LinerDensity,
    pub theta: Csr<Complex64>,
    pub xi: Csr<Complex64>,
    pub matrix: Csr<Complex64>,
    /// `l(phi_i)` for every node.
    pub load: Vec<Complex64>,
    /// Inflow values on Dirichlet nodes, zero elsewhere.
    pub lift: Vec<Complex64>,
    /// Right-hand side on the free nodes, lift moved over.
    pub rhs: Vec<Complex64>,
}

pub fn assemble<'d>(
    disc: &'d Discretization,
    physics: &Physics,
    chi: &LinerDensity,
    sources: &SourceData,
    k0_override: Option<f64>,
) -> Result<AssembledSystem<'d>> {
    let ph = match k0_override {
        Some(k0) => physics.at_wavenumber(k0, None)?,
        None => *physics,
    };
    let chi = LinerDensity::new(chi.values.clone(), disc)?;
    let (theta, xi) = compose(disc, &ph, &chi.values);
    let mut matrix = theta.clone();
    for (m, x) in matrix.values.iter_mut().zip(&xi.values) {
        *m += x;
    }
    let (load, lift) = disc.load(sources);
    let p = &disc.pattern;
    let rhs = disc
        .free
        .iter()
        .map(|&i| {
            let coupling: Complex64 = p
                .row(i)
                .filter(|&k| disc.free_index[p.cols[k]].is_none())
                .map(|k| matrix.values[k] * lift[p.cols[k]])
                .sum();
            load[i] - coupling
        })
        .collect();
    Ok(AssembledSystem { disc, physics: ph, chi, theta, xi, matrix, load, lift, rhs })
}

/// The two parts of the matrix: the principal part and the compact remainder.
fn compose(disc: &Discretization, ph: &Physics, chi: &[f64]) -> (Csr<Complex64>, Csr<Complex64>) {
    let (k0, k, m0) = (ph.derived.k0, ph.derived.k, ph.derived.mach);
    let tr = &disc.pattern.transpose;
    let mut theta = Csr::<Complex64>::zeros(disc.pattern.clone());
    let mut xi = Csr::<Complex64>::zeros(disc.pattern.clone());
    for kk in 0..disc.pattern.nnz() {
        theta.values[kk] = Complex64::new(disc.stiffness.values[kk] - m0 * m0 * disc.dxx.values[kk], 0.0);
        let skew = disc.convection.values[kk] - disc.convection.values[tr[kk]];
        xi.values[kk] = Complex64::new(-k0 * k0 * disc.mass.values[kk], -k0 * m0 * skew)
            + I * k * disc.out_mass.values[kk];
    }
    let (fac, k2) = (ph.liner_factor(), ph.coeffs.k2);
    for (b, &c) in disc.blocks.iter().zip(chi) {
        if c == 0.0 {
            continue;
        }
        let g = b.d1_gram(ph);
        for i in 0..3 {
            for j in 0..3 {
                theta.values[b.positions[i][j]] += fac * c * g[i][j];
                xi.values[b.positions[i][j]] -= fac * k2 * c * b.t[i][j];
            }
        }
    }
    (theta, xi)
}

impl AssembledSystem<'_> {
    pub fn dimension(&self) -> usize {
        self.rhs.len()
    }

    fn check_len(&self, v: &[Complex64]) -> Result<()> {
        if v.len() != self.disc.node_count() {
            return Err(Error::DimensionMismatch { what: "nodal vector", expected: self.disc.node_count(), got: v.len() });
        }
        Ok(())
    }

    /// `A(p, q) = q^H M p` over all nodes.
    pub fn apply_form(&self, p: &[Complex64], q: &[Complex64]) -> Result<Complex64> {
        self.check_len(p)?;
        self.check_len(q)?;
        Ok(self.matrix.form(p, q))
    }

    pub fn theta_form(&self, p: &[Complex64], q: &[Complex64]) -> Result<Complex64> {
        self.check_len(p)?;
        self.check_len(q)?;
        Ok(self.theta.form(p, q))
    }

    /// `||D1 Tr p||^2` weighted by the density.
    pub fn d1_norm_sq(&self, p: &[Complex64]) -> f64 {
        self.disc
            .blocks
            .iter()
            .zip(&self.chi.values)
            .filter(|(_, &c)| c != 0.0)
            .map(|(b, &c)| {
                let lp = b.gather(p);
                c * local_form(&b.d1_gram(&self.physics), &lp, &lp).re
            })
            .sum()
    }

    /// `||Tr p||^2` weighted by the density.
    pub fn chi_trace_norm_sq(&self, p: &[Complex64]) -> f64 {
        self.disc
            .blocks
            .iter()
            .zip(&self.chi.values)
            .map(|(b, &c)| {
                let lp = b.gather(p);
                let mut s = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        s += (lp[i].conj() * b.t[i][j] * lp[j]).re;
                    }
                }
                c * s
            })
            .sum()
    }

    pub fn out_norm_sq(&self, p: &[Complex64]) -> f64 {
        self.disc.out_mass.form(p, p).re
    }

    pub fn v_norm(&self, p: &[Complex64]) -> Result<f64> {
        self.check_len(p)?;
        Ok((self.disc.stiffness.form(p, p).re + self.d1_norm_sq(p)).max(0.0).sqrt())
    }

    /// Per-facet `A_F(p, q) = i Y Z0/k0 [<D1 p, D1 q>_F - K^2 <p, q>_F]`, density 1.
    pub fn facet_form(&self, block: usize, p: &[Complex64], q: &[Complex64]) -> Complex64 {
        let b = &self.disc.blocks[block];
        local_form(&b.unit_block(&self.physics), &b.gather(p), &b.gather(q))
    }

    /// Relative residual `||(M u)_free - l_free|| / ||rhs||` for a full nodal vector.
    pub fn residual(&self, u: &[Complex64]) -> f64 {
        let p = &self.disc.pattern;
        let r: Vec<Complex64> = self
            .disc
            .free
            .iter()
            .map(|&i| p.row(i).map(|k| self.matrix.values[k] * u[p.cols[k]]).sum::<Complex64>() - self.load[i])
            .collect();
        let b = norm2(&self.rhs);
        if b == 0.0 {
            norm2(&r)
        } else {
            norm2(&r) / b
        }
    }

    /// Full nodal vector from free values plus the lift.
    pub fn expand(&self, free_values: &[Complex64]) -> Vec<Complex64> {
        let mut u = self.lift.clone();
        for (&n, &v) in self.disc.free.iter().zip(free_values) {
            u[n] = v;
        }
        u
    }

    /// Full nodal vector from free values, zero on the inflow face.
    pub fn expand_homogeneous(&self, free_values: &[Complex64]) -> Vec<Complex64> {
        let mut u = vec![ZERO; self.disc.node_count()];
        for (&n, &v) in self.disc.free.iter().zip(free_values) {
            u[n] = v;
        }
        u
    }
}
