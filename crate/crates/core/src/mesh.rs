//! Tetrahedral meshes of the cylinder `(0, L) x B(0, R)` built from stacked ring-layered disks.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type Point = [f64; 3];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub length: f64,
    pub radius: f64,
    /// Node layers along x at refinement level 0 (so `n_axial - 1` cells).
    pub n_axial: usize,
    /// Rings in the cross-section at refinement level 0.
    pub n_ring: usize,
    pub refinement_level: u32,
}

impl MeshSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.length.is_finite() && self.length > 0.0 && self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::InvalidMesh(format!(
                "L = {}, R = {} must be finite and positive",
                self.length, self.radius
            )));
        }
        if self.n_axial < 2 || self.n_ring < 1 {
            return Err(Error::InvalidMesh(format!(
                "need n_axial >= 2 and n_ring >= 1, got {} and {}",
                self.n_axial, self.n_ring
            )));
        }
        if self.refinement_level > 8 {
            return Err(Error::InvalidMesh(format!("refinement level {} is too deep", self.refinement_level)));
        }
        Ok(())
    }

    pub fn rings(&self) -> usize {
        self.n_ring << self.refinement_level
    }

    pub fn axial_cells(&self) -> usize {
        (self.n_axial - 1) << self.refinement_level
    }

    pub fn refined(&self, extra: u32) -> MeshSpec {
        MeshSpec { refinement_level: self.refinement_level + extra, ..*self }
    }

    /// Node count the generator will produce.
    pub fn node_count(&self) -> usize {
        let n = self.rings();
        (1 + 3 * n * (n + 1)) * (self.axial_cells() + 1)
    }

    fn digest(&self) -> String {
        let text = format!(
            "{:e}|{:e}|{}|{}|{}",
            self.length, self.radius, self.n_axial, self.n_ring, self.refinement_level
        );
        let hash = Sha256::digest(text.as_bytes());
        hash.iter().take(12).map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryTag {
    In,
    Out,
    Lateral,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryFacet {
    /// Counter-clockwise seen from outside.
    pub nodes: [usize; 3],
    pub tag: BoundaryTag,
    pub normal: Point,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CylinderMesh {
    pub nodes: Vec<Point>,
    pub tets: Vec<[usize; 4]>,
    pub facets: Vec<BoundaryFacet>,
    pub length: f64,
    /// Circumradius of the cross-section polygon.
    pub radius: f64,
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: Point, b: Point) -> Point {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

pub fn signed_volume(p: [Point; 4]) -> f64 {
    dot(sub(p[1], p[0]), cross(sub(p[2], p[0]), sub(p[3], p[0]))) / 6.0
}

pub fn triangle_area(p: [Point; 3]) -> f64 {
    0.5 * norm(cross(sub(p[1], p[0]), sub(p[2], p[0])))
}

/// Triangles of the ring-layered disk with `n` rings; node 0 is the centre,
/// ring `j` holds `6 j` nodes starting at `1 + 3 j (j - 1)`.
fn disk(n: usize, radius: f64) -> (Vec<[f64; 2]>, Vec<[usize; 3]>) {
    let mut pts = vec![[0.0, 0.0]];
    for j in 1..=n {
        let r = radius * j as f64 / n as f64;
        let m = 6 * j;
        for t in 0..m {
            let th = 2.0 * std::f64::consts::PI * t as f64 / m as f64;
            pts.push([r * th.cos(), r * th.sin()]);
        }
    }
    let start = |j: usize| if j == 0 { 0 } else { 1 + 3 * j * (j - 1) };
    let mut tris = Vec::with_capacity(6 * n * n);
    for j in 1..=n {
        let (inner_n, outer_n) = (6 * (j - 1), 6 * j);
        let inner = |t: usize| if j == 1 { 0 } else { start(j - 1) + t % inner_n };
        let outer = |t: usize| start(j) + t % outer_n;
        for s in 0..6 {
            for t in 0..j {
                let (o, i) = (s * j + t, s * (j - 1) + t);
                tris.push([inner(i), outer(o), outer(o + 1)]);
                if t + 1 < j {
                    tris.push([inner(i), outer(o + 1), inner(i + 1)]);
                }
            }
        }
    }
    (pts, tris)
}

pub fn generate(spec: &MeshSpec) -> Result<CylinderMesh> {
    spec.validate()?;
    let (rings, cells) = (spec.rings(), spec.axial_cells());
    let (pts2, tris) = disk(rings, spec.radius);
    let per_layer = pts2.len();
    let mut nodes = Vec::with_capacity(per_layer * (cells + 1));
    for l in 0..=cells {
        let x = if l == cells { spec.length } else { spec.length * l as f64 / cells as f64 };
        nodes.extend(pts2.iter().map(|p| [x, p[0], p[1]]));
    }
    let mut tets = Vec::with_capacity(3 * tris.len() * cells);
    for l in 0..cells {
        let (lo, hi) = (l * per_layer, (l + 1) * per_layer);
        for tri in &tris {
            let mut v = *tri;
            v.sort_unstable();
            let (a, b, c) = (v[0] + lo, v[1] + lo, v[2] + lo);
            let (a2, b2, c2) = (v[0] + hi, v[1] + hi, v[2] + hi);
            for mut t in [[a, b, c, c2], [a, b, b2, c2], [a, a2, b2, c2]] {
                if signed_volume(t.map(|i| nodes[i])) < 0.0 {
                    t.swap(2, 3);
                }
                tets.push(t);
            }
        }
    }
    let facets = extract_boundary(&nodes, &tets, spec.length)?;
    Ok(CylinderMesh { nodes, tets, facets, length: spec.length, radius: spec.radius })
}

const TET_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];

fn extract_boundary(nodes: &[Point], tets: &[[usize; 4]], length: f64) -> Result<Vec<BoundaryFacet>> {
    let mut seen: HashMap<[usize; 3], (u32, [usize; 3])> = HashMap::with_capacity(tets.len() * 2);
    for t in tets {
        for f in TET_FACES {
            let oriented = f.map(|i| t[i]);
            let mut key = oriented;
            key.sort_unstable();
            seen.entry(key).and_modify(|e| e.0 += 1).or_insert((1, oriented));
        }
    }
    let mut out: Vec<[usize; 3]> = Vec::new();
    for (count, oriented) in seen.values() {
        match count {
            1 => out.push(*oriented),
            2 => {}
            _ => return Err(Error::InvalidMesh(format!("face {oriented:?} shared by {count} tets"))),
        }
    }
    out.sort_unstable_by_key(|f| {
        let mut k = *f;
        k.sort_unstable();
        k
    });
    out.into_iter()
        .map(|f| {
            let p = f.map(|i| nodes[i]);
            let tag = if p.iter().all(|q| q[0] == 0.0) {
                BoundaryTag::In
            } else if p.iter().all(|q| q[0] == length) {
                BoundaryTag::Out
            } else {
                BoundaryTag::Lateral
            };
            let normal = match tag {
                BoundaryTag::In => [-1.0, 0.0, 0.0],
                BoundaryTag::Out => [1.0, 0.0, 0.0],
                BoundaryTag::Lateral => {
                    let n = cross(sub(p[1], p[0]), sub(p[2], p[0]));
                    let m = (n[1] * n[1] + n[2] * n[2]).sqrt();
                    if m == 0.0 {
                        return Err(Error::InvalidMesh(format!("degenerate lateral facet {f:?}")));
                    }
                    [0.0, n[1] / m, n[2] / m]
                }
            };
            Ok(BoundaryFacet { nodes: f, tag, normal })
        })
        .collect()
}

impl CylinderMesh {
    /// Builds a mesh from explicit parts, checking indices and orientation.
    pub fn from_parts(
        nodes: Vec<Point>,
        tets: Vec<[usize; 4]>,
        facets: Vec<BoundaryFacet>,
        length: f64,
        radius: f64,
    ) -> Result<CylinderMesh> {
        let n = nodes.len();
        for t in &tets {
            if t.iter().any(|&i| i >= n) {
                return Err(Error::InvalidMesh(format!("tet {t:?} references a missing node")));
            }
            if !(signed_volume(t.map(|i| nodes[i])) > 0.0) {
                return Err(Error::InvalidMesh(format!("tet {t:?} is not positively oriented")));
            }
        }
        for f in &facets {
            if f.nodes.iter().any(|&i| i >= n) {
                return Err(Error::InvalidMesh(format!("facet {:?} references a missing node", f.nodes)));
            }
            if f.tag == BoundaryTag::Lateral && f.normal[0] != 0.0 {
                return Err(Error::InvalidMesh("lateral facet normal must have n_x = 0".into()));
            }
        }
        Ok(CylinderMesh { nodes, tets, facets, length, radius })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn facet_points(&self, id: usize) -> Result<[Point; 3]> {
        let f = self.facets.get(id).ok_or(Error::UnknownFacet(id))?;
        Ok(f.nodes.map(|i| self.nodes[i]))
    }

    pub fn facet_area(&self, id: usize) -> Result<f64> {
        Ok(triangle_area(self.facet_points(id)?))
    }

    pub fn boundary_of(&self, tag: BoundaryTag) -> Vec<usize> {
        (0..self.facets.len()).filter(|&i| self.facets[i].tag == tag).collect()
    }

    pub fn tet_points(&self, t: usize) -> [Point; 4] {
        self.tets[t].map(|i| self.nodes[i])
    }

    pub fn tet_volume(&self, t: usize) -> f64 {
        signed_volume(self.tet_points(t))
    }

    pub fn volume(&self) -> f64 {
        (0..self.tets.len()).map(|t| self.tet_volume(t)).sum()
    }

    /// Sorted node ids touched by facets with the given tag.
    pub fn nodes_on(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut v: Vec<usize> =
            self.facets.iter().filter(|f| f.tag == tag).flat_map(|f| f.nodes).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn max_facet_diameter(&self) -> f64 {
        self.facets
            .iter()
            .map(|f| {
                let p = f.nodes.map(|i| self.nodes[i]);
                norm(sub(p[0], p[1])).max(norm(sub(p[1], p[2]))).max(norm(sub(p[0], p[2])))
            })
            .fold(0.0, f64::max)
    }

    pub fn max_edge_length(&self) -> f64 {
        let mut h: f64 = 0.0;
        for t in &self.tets {
            for a in 0..4 {
                for b in a + 1..4 {
                    h = h.max(norm(sub(self.nodes[t[a]], self.nodes[t[b]])));
                }
            }
        }
        h
    }

    /// Side length of the cross-section polygon.
    pub fn polygon_side(&self) -> f64 {
        self.facets
            .iter()
            .filter(|f| f.tag == BoundaryTag::Lateral)
            .flat_map(|f| {
                let p = f.nodes.map(|i| self.nodes[i]);
                [(p[0], p[1]), (p[1], p[2]), (p[2], p[0])]
            })
            .filter(|(a, b)| a[0] == b[0])
            .map(|(a, b)| norm(sub(a, b)))
            .fold(0.0, f64::max)
    }

    pub fn write_vtk(&self, mut w: impl Write, point_data: &[(&str, &[f64])]) -> std::io::Result<()> {
        writeln!(w, "# vtk DataFile Version 3.0")?;
        writeln!(w, "linersolve cylinder mesh")?;
        writeln!(w, "ASCII")?;
        writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
        writeln!(w, "POINTS {} double", self.nodes.len())?;
        for p in &self.nodes {
            writeln!(w, "{} {} {}", p[0], p[1], p[2])?;
        }
        writeln!(w, "CELLS {} {}", self.tets.len(), 5 * self.tets.len())?;
        for t in &self.tets {
            writeln!(w, "4 {} {} {} {}", t[0], t[1], t[2], t[3])?;
        }
        writeln!(w, "CELL_TYPES {}", self.tets.len())?;
        for _ in &self.tets {
            writeln!(w, "10")?;
        }
        if !point_data.is_empty() {
            writeln!(w, "POINT_DATA {}", self.nodes.len())?;
            for (name, values) in point_data {
                writeln!(w, "SCALARS {name} double 1")?;
                writeln!(w, "LOOKUP_TABLE default")?;
                for v in *values {
                    writeln!(w, "{v}")?;
                }
            }
        }
        Ok(())
    }

    pub fn save_vtk(&self, path: &Path, point_data: &[(&str, &[f64])]) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_vtk(f, point_data)?;
        Ok(())
    }

    fn encode(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(CACHE_MAGIC);
        b.extend_from_slice(&self.length.to_le_bytes());
        b.extend_from_slice(&self.radius.to_le_bytes());
        for n in [self.nodes.len(), self.tets.len(), self.facets.len()] {
            b.extend_from_slice(&(n as u64).to_le_bytes());
        }
        for p in &self.nodes {
            p.iter().for_each(|x| b.extend_from_slice(&x.to_le_bytes()));
        }
        for t in &self.tets {
            t.iter().for_each(|&i| b.extend_from_slice(&(i as u32).to_le_bytes()));
        }
        for f in &self.facets {
            f.nodes.iter().for_each(|&i| b.extend_from_slice(&(i as u32).to_le_bytes()));
            b.push(f.tag as u8);
            f.normal.iter().for_each(|x| b.extend_from_slice(&x.to_le_bytes()));
        }
        b
    }

    fn decode(bytes: &[u8]) -> Option<CylinderMesh> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(CACHE_MAGIC.len())? != CACHE_MAGIC {
            return None;
        }
        let length = r.f64()?;
        let radius = r.f64()?;
        let (nn, nt, nf) = (r.u64()? as usize, r.u64()? as usize, r.u64()? as usize);
        let mut nodes = Vec::with_capacity(nn);
        for _ in 0..nn {
            nodes.push([r.f64()?, r.f64()?, r.f64()?]);
        }
        let mut tets = Vec::with_capacity(nt);
        for _ in 0..nt {
            tets.push([r.u32()? as usize, r.u32()? as usize, r.u32()? as usize, r.u32()? as usize]);
        }
        let mut facets = Vec::with_capacity(nf);
        for _ in 0..nf {
            let nodes = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
            let tag = match r.take(1)?[0] {
                0 => BoundaryTag::In,
                1 => BoundaryTag::Out,
                2 => BoundaryTag::Lateral,
                _ => return None,
            };
            facets.push(BoundaryFacet { nodes, tag, normal: [r.f64()?, r.f64()?, r.f64()?] });
        }
        (r.pos == bytes.len()).then_some(CylinderMesh { nodes, tets, facets, length, radius })
    }
}

const CACHE_MAGIC: &[u8] = b"LSMESH01";

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }
    fn f64(&mut self) -> Option<f64> {
        Some(f64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }
}

pub fn cache_path(dir: &Path, spec: &MeshSpec) -> PathBuf {
    dir.join(format!("mesh-{}.bin", spec.digest()))
}

/// Loads the mesh for `spec` from `dir`, generating and storing it on a miss.
/// Unreadable cache files are regenerated.
pub fn load_or_generate(spec: &MeshSpec, dir: &Path) -> Result<CylinderMesh> {
    spec.validate()?;
    let path = cache_path(dir, spec);
    if let Ok(mut f) = std::fs::File::open(&path) {
        let mut bytes = Vec::new();
        if f.read_to_end(&mut bytes).is_ok() {
            if let Some(mesh) = CylinderMesh::decode(&bytes) {
                return Ok(mesh);
            }
        }
    }
    let mesh = generate(spec)?;
    std::fs::create_dir_all(dir)?;
    std::fs::write(&path, mesh.encode())?;
    Ok(mesh)
}
