//! Acoustic energy at one wavenumber and integrated over a band.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{Discretization, LinerDensity};
use crate::error::{Error, Result};
use crate::problem::Problem;
use crate::solver::SolutionField;

/// `J = a ||u||^2 + b ||grad u||^2 + d ||Tr u||^2_mu`, integrated over
/// `[k_min, k_max]` with `n_quad` trapezoid nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergySpec {
    pub a: f64,
    pub b: f64,
    pub d: f64,
    pub k_min: f64,
    pub k_max: f64,
    pub n_quad: usize,
}

impl EnergySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.a >= 0.0 && self.b >= 0.0 && self.d >= 0.0) {
            return Err(Error::InvalidParameter("energy weights a, b, d must be >= 0".into()));
        }
        if !(self.a * self.a + self.b * self.b > 0.0) {
            return Err(Error::InvalidParameter("energy needs a^2 + b^2 > 0".into()));
        }
        if !(self.k_min > 0.0 && self.k_max >= self.k_min && self.k_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "band [{}, {}] must satisfy 0 < k_min <= k_max",
                self.k_min, self.k_max
            )));
        }
        if self.n_quad < 2 && self.k_max > self.k_min {
            return Err(Error::InvalidParameter("a band needs n_quad >= 2".into()));
        }
        Ok(())
    }

    pub fn is_degenerate(&self) -> bool {
        self.k_max == self.k_min
    }
}

pub fn energy(spec: &EnergySpec, disc: &Discretization, u: &SolutionField) -> f64 {
    disc.energy_form(spec.a, spec.b, spec.d, &u.values).max(0.0)
}

/// Trapezoid nodes and weights; a degenerate band gets one node of weight 0.
pub fn band_nodes(k_min: f64, k_max: f64, n: usize) -> Vec<(f64, f64)> {
    if k_max == k_min || n < 2 {
        return vec![(k_min, 0.0)];
    }
    let h = (k_max - k_min) / (n - 1) as f64;
    (0..n)
        .map(|j| {
            let k = if j == n - 1 { k_max } else { k_min + h * j as f64 };
            let w = if j == 0 || j == n - 1 { h / 2.0 } else { h };
            (k, w)
        })
        .collect()
}

pub fn trapezoid(nodes: &[(f64, f64)], values: &[f64]) -> f64 {
    nodes.iter().zip(values).map(|((_, w), v)| w * v).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BandEnergy {
    /// `(k0, J(k0))` at every node, in increasing `k0`.
    pub samples: Vec<(f64, f64)>,
    pub total: f64,
}

pub fn energy_at(problem: &Problem, k0: f64, chi: &LinerDensity) -> Result<f64> {
    let u = problem.solve_at(k0, chi)?;
    Ok(energy(&problem.energy, &problem.disc, &u))
}

/// Band-integrated energy. Nodes are solved in parallel and summed in order.
pub fn total_energy(problem: &Problem, chi: &LinerDensity) -> Result<BandEnergy> {
    let spec = &problem.energy;
    let nodes = band_nodes(spec.k_min, spec.k_max, spec.n_quad);
    let values: Vec<f64> =
        nodes.par_iter().map(|&(k, _)| energy_at(problem, k, chi)).collect::<Result<_>>()?;
    Ok(BandEnergy {
        samples: nodes.iter().map(|n| n.0).zip(values.iter().copied()).collect(),
        total: trapezoid(&nodes, &values),
    })
}
