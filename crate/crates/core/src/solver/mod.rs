//! Sparse LU solves of the assembled system, plus manufactured-solution tooling.

mod convergence;
mod manufactured;

pub use convergence::{convergence_study, observed_orders, ConvergenceRow, DensityFn, MmsSetup};
pub use manufactured::{
    manufactured_case, strong_liner_operator, ExactField, ExpSum, PlaneWave, Polynomial, Uniform,
};

use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, Mat, Par};
use num_complex::Complex64;

use crate::admissibility::is_admissible;
use crate::assembly::AssembledSystem;
use crate::error::{Error, Result};
use crate::sparse::norm2;

pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct SolutionField {
    /// Values on every node; inflow nodes carry the Dirichlet data.
    pub values: Vec<Complex64>,
    pub k0: f64,
    pub chi_hash: String,
    pub residual: f64,
}

/// LU factors of the free-node block, reusable for adjoint solves.
pub struct Factorization {
    lu: Lu<usize, Complex64>,
    n: usize,
}

fn condition_estimate(system: &AssembledSystem) -> f64 {
    let disc = system.disc;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for &i in &disc.free {
        let d = disc.pattern.find(i, i).map_or(0.0, |k| system.matrix.values[k].norm());
        lo = lo.min(d);
        hi = hi.max(d);
    }
    hi / lo
}

/// `M_FF x` on the free nodes.
pub fn apply_reduced(system: &AssembledSystem, x: &[Complex64]) -> Vec<Complex64> {
    let disc = system.disc;
    let p = &disc.pattern;
    disc.free
        .iter()
        .map(|&i| {
            p.row(i)
                .filter_map(|k| disc.free_index[p.cols[k]].map(|j| system.matrix.values[k] * x[j]))
                .sum()
        })
        .collect()
}

pub fn factorize(system: &AssembledSystem) -> Result<Factorization> {
    faer::set_global_parallelism(Par::Seq);
    let disc = system.disc;
    let p = &disc.pattern;
    let n = disc.free.len();
    let mut triplets = Vec::with_capacity(p.nnz());
    for (fi, &i) in disc.free.iter().enumerate() {
        for k in p.row(i) {
            if let Some(fj) = disc.free_index[p.cols[k]] {
                triplets.push(Triplet::new(fi, fj, system.matrix.values[k]));
            }
        }
    }
    let numerical = |message: String| Error::Factorization { message, condition_estimate: condition_estimate(system) };
    let a = SparseColMat::<usize, Complex64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| numerical(format!("{e:?}")))?;
    drop(triplets);
    let lu = a.sp_lu().map_err(|e| numerical(format!("{e:?}")))?;
    Ok(Factorization { lu, n })
}

impl Factorization {
    fn run(&self, b: &[Complex64], adjoint: bool) -> Vec<Complex64> {
        let mut rhs = Mat::<Complex64>::from_fn(self.n, 1, |i, _| b[i]);
        if adjoint {
            self.lu.solve_transpose_in_place_with_conj(Conj::Yes, rhs.as_mut());
        } else {
            self.lu.solve_in_place_with_conj(Conj::No, rhs.as_mut());
        }
        (0..self.n).map(|i| rhs[(i, 0)]).collect()
    }

    /// Solves `M_FF x = b`.
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        self.run(b, false)
    }

    /// Solves `M_FF^H x = b`.
    pub fn solve_adjoint(&self, b: &[Complex64]) -> Vec<Complex64> {
        self.run(b, true)
    }
}

/// Solves with up to three steps of iterative refinement.
pub fn solve_factored(system: &AssembledSystem, lu: &Factorization) -> Result<SolutionField> {
    let b = &system.rhs;
    let bn = norm2(b);
    let mut x = if bn == 0.0 { vec![Complex64::new(0.0, 0.0); b.len()] } else { lu.solve(b) };
    let rel = |x: &[Complex64]| {
        let r: Vec<Complex64> = apply_reduced(system, x).iter().zip(b).map(|(a, b)| b - a).collect();
        let rn = norm2(&r);
        (r, if bn == 0.0 { rn } else { rn / bn })
    };
    let (mut r, mut res) = rel(&x);
    for _ in 0..3 {
        if !(res > 1e-13) {
            break;
        }
        let dx = lu.solve(&r);
        for (xi, d) in x.iter_mut().zip(&dx) {
            *xi += d;
        }
        (r, res) = rel(&x);
    }
    if !(res <= RESIDUAL_TOLERANCE) {
        if !res.is_finite() {
            return Err(Error::Factorization {
                message: "factorization produced non-finite values (numerically singular matrix)".into(),
                condition_estimate: condition_estimate(system),
            });
        }
        return Err(Error::Residual { residual: res, tolerance: RESIDUAL_TOLERANCE });
    }
    Ok(SolutionField { values: system.expand(&x), k0: system.physics.derived.k0, chi_hash: system.chi.fingerprint(), residual: res })
}

fn warn_if_inadmissible(system: &AssembledSystem) {
    let (beta, r) = (system.physics.coeffs.beta_v, system.physics.derived.ratio);
    if !is_admissible(beta, r).unwrap_or(false) {
        log::warn!("beta_v = {beta} is outside the admissible zone for r = {r}; uniqueness is not guaranteed");
    }
}

pub fn solve(system: &AssembledSystem) -> Result<SolutionField> {
    solve_keep_factors(system).map(|(u, _)| u)
}

/// Like [`solve`] but hands back the factors for adjoint solves.
pub fn solve_keep_factors(system: &AssembledSystem) -> Result<(SolutionField, Factorization)> {
    warn_if_inadmissible(system);
    let lu = factorize(system)?;
    let u = solve_factored(system, &lu)?;
    Ok((u, lu))
}
