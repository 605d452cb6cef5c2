//! Compressed-row storage on a fixed node-adjacency pattern.

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;

/// Symmetric sparsity pattern: node pairs that share a tetrahedron.
#[derive(Clone, Debug, PartialEq)]
pub struct Pattern {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    /// Position of entry `(j, i)` for each stored entry `(i, j)`.
    pub transpose: Vec<usize>,
}

impl Pattern {
    pub fn from_cells<const K: usize>(n: usize, cells: &[[usize; K]]) -> Pattern {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for c in cells {
            for &a in c {
                adj[a].extend_from_slice(c);
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for row in &mut adj {
            row.sort_unstable();
            row.dedup();
            cols.extend_from_slice(row);
            row_ptr.push(cols.len());
            *row = Vec::new();
        }
        let mut p = Pattern { n, row_ptr, cols, transpose: Vec::new() };
        p.transpose = (0..n)
            .flat_map(|i| (p.row_ptr[i]..p.row_ptr[i + 1]).map(move |k| (i, k)))
            .map(|(i, k)| p.find(p.cols[k], i).expect("pattern is symmetric"))
            .collect();
        p
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let r = self.row(i);
        self.cols[r.clone()].binary_search(&j).ok().map(|k| r.start + k)
    }

    /// Positions of all `(a[r], a[c])` entries of a local element.
    pub fn local_positions<const K: usize>(&self, a: &[usize; K]) -> [[usize; K]; K] {
        std::array::from_fn(|r| std::array::from_fn(|c| self.find(a[r], a[c]).expect("entry in pattern")))
    }
}

/// Values on a shared pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr<T> {
    pub pattern: Arc<Pattern>,
    pub values: Vec<T>,
}

pub trait Entry: Copy + Default + std::ops::AddAssign {
    fn to_c(self) -> Complex64;
}

impl Entry for f64 {
    fn to_c(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
}

impl Entry for Complex64 {
    fn to_c(self) -> Complex64 {
        self
    }
}

impl<T: Entry> Csr<T> {
    pub fn zeros(pattern: Arc<Pattern>) -> Self {
        let values = vec![T::default(); pattern.nnz()];
        Csr { pattern, values }
    }

    pub fn n(&self) -> usize {
        self.pattern.n
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.pattern.find(i, j).map_or(T::default(), |k| self.values[k])
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let p = &self.pattern;
        (0..p.n)
            .map(|i| p.row(i).map(|k| self.values[k].to_c() * x[p.cols[k]]).sum())
            .collect()
    }

    /// `q^H A p`.
    pub fn form(&self, p: &[Complex64], q: &[Complex64]) -> Complex64 {
        let ap = self.mul_vec(p);
        q.iter().zip(&ap).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn to_complex(&self) -> Csr<Complex64> {
        Csr { pattern: self.pattern.clone(), values: self.values.iter().map(|v| v.to_c()).collect() }
    }
}

impl Csr<Complex64> {
    /// Matrix Market coordinate complex general.
    pub fn write_matrix_market(&self, mut w: impl Write) -> std::io::Result<()> {
        let p = &self.pattern;
        writeln!(w, "%%MatrixMarket matrix coordinate complex general")?;
        writeln!(w, "{} {} {}", p.n, p.n, p.nnz())?;
        for i in 0..p.n {
            for k in p.row(i) {
                let v = self.values[k];
                writeln!(w, "{} {} {:e} {:e}", i + 1, p.cols[k] + 1, v.re, v.im)?;
            }
        }
        Ok(())
    }
}

pub fn dot_conj(q: &[Complex64], p: &[Complex64]) -> Complex64 {
    q.iter().zip(p).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
