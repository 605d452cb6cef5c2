//! Projected-gradient minimization of the acoustic energy over liner densities
//! with prescribed mass.

use std::time::Instant;

use log::{debug, info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::assembly::LinerDensity;
use crate::energy::{band_nodes, energy};
use crate::error::{Error, Result};
use crate::problem::{at, Problem};
use crate::solver::{self, SolutionField};
use crate::Complex64;

pub const MASS_TOLERANCE: f64 = 1e-12;
const BISECTION_STEPS: usize = 60;
const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 40;

/// `{0 <= chi <= 1, sum_F w_F chi_F = gamma}`, optionally with some facets frozen.
#[derive(Clone, Debug, PartialEq)]
pub struct FeasibleSet {
    pub gamma: f64,
    /// mu-mass of every lateral facet.
    pub weights: Vec<f64>,
    /// Frozen facets keep the value they are given.
    pub fixed: Option<Vec<bool>>,
}

impl FeasibleSet {
    pub fn new(gamma: f64, weights: Vec<f64>) -> Result<FeasibleSet> {
        let total: f64 = weights.iter().sum();
        if !(gamma > 0.0 && gamma < total) || weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "liner mass gamma = {gamma} must lie in (0, {total})"
            )));
        }
        Ok(FeasibleSet { gamma, weights, fixed: None })
    }

    pub fn with_fixed(mut self, fixed: Vec<bool>) -> Result<FeasibleSet> {
        if fixed.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                what: "fixed-facet mask",
                expected: self.weights.len(),
                got: fixed.len(),
            });
        }
        self.fixed = Some(fixed);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn is_fixed(&self, i: usize) -> bool {
        self.fixed.as_ref().is_some_and(|f| f[i])
    }

    pub fn mass(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// mu-weighted L2 distance.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).zip(&self.weights).map(|((x, y), w)| w * (x - y) * (x - y)).sum::<f64>().sqrt()
    }

    fn density(&self, values: Vec<f64>) -> LinerDensity {
        let gamma = self.mass(&values);
        LinerDensity { values, gamma }
    }
}

/// Nearest point of the feasible set in the mu-weighted L2 distance:
/// `clamp(raw + tau, 0, 1)` on the free facets, with `tau` fixed by the mass.
pub fn project(raw: &[f64], set: &FeasibleSet) -> Result<LinerDensity> {
    if raw.len() != set.len() {
        return Err(Error::DimensionMismatch { what: "density", expected: set.len(), got: raw.len() });
    }
    if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidDensity(format!("non-finite value at lateral facet {i}")));
    }
    let mut out: Vec<f64> = raw.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let free: Vec<usize> = (0..set.len()).filter(|&i| !set.is_fixed(i)).collect();
    let fixed_mass: f64 = (0..set.len()).filter(|&i| set.is_fixed(i)).map(|i| set.weights[i] * out[i]).sum();
    let target = set.gamma - fixed_mass;
    let capacity: f64 = free.iter().map(|&i| set.weights[i]).sum();
    if target < -MASS_TOLERANCE || target > capacity + MASS_TOLERANCE {
        return Err(Error::InvalidDensity(format!(
            "frozen facets leave mass {target} for free facets of capacity {capacity}"
        )));
    }
    let mass_at = |tau: f64| -> f64 { free.iter().map(|&i| set.weights[i] * (raw[i] + tau).clamp(0.0, 1.0)).sum() };

    let hi_raw = free.iter().map(|&i| raw[i]).fold(f64::NEG_INFINITY, f64::max);
    let lo_raw = free.iter().map(|&i| raw[i]).fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (-hi_raw, 1.0 - lo_raw);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mass_at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Mass is linear in tau between breakpoints: solve exactly on the active set.
    let mut tau = 0.5 * (lo + hi);
    let (mut inner_w, mut inner_raw, mut upper) = (0.0, 0.0, 0.0);
    for &i in &free {
        let v = raw[i] + tau;
        if v >= 1.0 {
            upper += set.weights[i];
        } else if v > 0.0 {
            inner_w += set.weights[i];
            inner_raw += set.weights[i] * raw[i];
        }
    }
    if inner_w > 0.0 {
        let exact = (target - upper - inner_raw) / inner_w;
        if (exact - tau).abs() <= (hi - lo).max(1e-12) * 4.0 {
            tau = exact;
        }
    }
    for &i in &free {
        out[i] = (raw[i] + tau).clamp(0.0, 1.0);
    }
    Ok(set.density(out))
}

/// Bang-bang rounding: facets sorted by value (ties by index) are switched on
/// until the mass is spent; the facet that crosses the budget keeps the remainder.
pub fn threshold(chi: &LinerDensity, set: &FeasibleSet) -> LinerDensity {
    let n = set.len();
    let mut out = vec![0.0; n];
    let mut budget = set.gamma;
    for i in 0..n {
        if set.is_fixed(i) {
            out[i] = chi.values[i];
            budget -= set.weights[i] * chi.values[i];
        }
    }
    let mut order: Vec<usize> = (0..n).filter(|&i| !set.is_fixed(i)).collect();
    order.sort_by(|&a, &b| chi.values[b].total_cmp(&chi.values[a]).then(a.cmp(&b)));
    for i in order {
        let w = set.weights[i];
        if budget <= MASS_TOLERANCE * set.gamma {
            break;
        }
        if w <= budget + MASS_TOLERANCE * w {
            out[i] = 1.0;
            budget -= w;
        } else {
            out[i] = budget / w;
            budget = 0.0;
        }
    }
    set.density(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Mode {
    Single { k0: f64 },
    Band,
}

/// Quadrature nodes of the objective. A degenerate band optimizes the point energy.
pub fn objective_nodes(problem: &Problem, mode: Mode) -> Vec<(f64, f64)> {
    match mode {
        Mode::Single { k0 } => vec![(k0, 1.0)],
        Mode::Band => {
            let s = &problem.energy;
            if s.is_degenerate() {
                vec![(s.k_min, 1.0)]
            } else {
                band_nodes(s.k_min, s.k_max, s.n_quad)
            }
        }
    }
}

/// Derivative of `J(k0)` with respect to every facet value, given the state `u`.
/// Factorizes the system once for the adjoint solve.
pub fn gradient(problem: &Problem, k0: f64, chi: &LinerDensity, u: &SolutionField) -> Result<Vec<f64>> {
    let sys = problem.assemble_at(k0, chi)?;
    let lu = solver::factorize(&sys).map_err(|e| at(k0, e))?;
    Ok(adjoint_gradient(problem, &sys, &lu, &u.values))
}

fn adjoint_gradient(
    problem: &Problem,
    sys: &crate::assembly::AssembledSystem,
    lu: &solver::Factorization,
    u: &[Complex64],
) -> Vec<f64> {
    let disc = &problem.disc;
    let s = &problem.energy;
    let gu = disc.energy_gradient(s.a, s.b, s.d, u);
    let rhs: Vec<Complex64> = disc.free.iter().map(|&i| gu[i]).collect();
    let lambda = sys.expand_homogeneous(&lu.solve_adjoint(&rhs));
    (0..disc.blocks.len()).map(|f| -2.0 * sys.facet_form(f, u, &lambda).re).collect()
}

/// `(J, dJ/dchi)` at one wavenumber.
pub fn value_and_gradient(problem: &Problem, k0: f64, chi: &LinerDensity) -> Result<(f64, Vec<f64>)> {
    let sys = problem.assemble_at(k0, chi)?;
    let (u, lu) = solver::solve_keep_factors(&sys).map_err(|e| at(k0, e))?;
    let j = energy(&problem.energy, &problem.disc, &u);
    Ok((j, adjoint_gradient(problem, &sys, &lu, &u.values)))
}

/// Weighted objective and gradient over the mode's nodes.
pub fn objective_with_gradient(problem: &Problem, mode: Mode, chi: &LinerDensity) -> Result<(f64, Vec<f64>)> {
    let nodes = objective_nodes(problem, mode);
    let parts: Vec<(f64, Vec<f64>)> =
        nodes.par_iter().map(|&(k, _)| value_and_gradient(problem, k, chi)).collect::<Result<_>>()?;
    let mut grad = vec![0.0; chi.values.len()];
    let mut total = 0.0;
    for ((_, w), (j, g)) in nodes.iter().zip(parts) {
        total += w * j;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += w * b;
        }
    }
    Ok((total, grad))
}

pub fn objective(problem: &Problem, mode: Mode, chi: &LinerDensity) -> Result<f64> {
    let nodes = objective_nodes(problem, mode);
    let values: Vec<f64> = nodes
        .par_iter()
        .map(|&(k, _)| {
            let u = problem.solve_at(k, chi)?;
            Ok(energy(&problem.energy, &problem.disc, &u))
        })
        .collect::<Result<_>>()?;
    Ok(nodes.iter().zip(values).map(|((_, w), v)| w * v).sum())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizeOptions {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions { max_iters: 50, tol: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Iterate {
    pub energy: f64,
    /// Step accepted to reach this iterate (0 for the start point).
    pub step: f64,
    pub projected_gradient_norm: f64,
    pub mass_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimizeReport {
    pub mode: Mode,
    pub gamma: f64,
    pub iterates: Vec<Iterate>,
    pub chi: Vec<f64>,
    pub energy: f64,
    pub thresholded_chi: Vec<f64>,
    pub thresholded_energy: f64,
    /// `thresholded_energy - energy`.
    pub gap: f64,
    pub converged: bool,
    pub line_search_exhausted: bool,
    pub wall_seconds: f64,
}

/// Gradient in the mu-weighted inner product; frozen and massless facets get 0.
fn riesz(grad: &[f64], set: &FeasibleSet) -> Vec<f64> {
    grad.iter()
        .enumerate()
        .map(|(i, g)| if set.is_fixed(i) || set.weights[i] <= 0.0 { 0.0 } else { g / set.weights[i] })
        .collect()
}

fn projected_gradient_norm(chi: &LinerDensity, dir: &[f64], set: &FeasibleSet) -> Result<f64> {
    let trial: Vec<f64> = chi.values.iter().zip(dir).map(|(c, d)| c - d).collect();
    let p = project(&trial, set)?;
    Ok(set.distance(&chi.values, &p.values))
}

/// Projected gradient descent with Armijo backtracking from `start`.
pub fn minimize(
    problem: &Problem,
    set: &FeasibleSet,
    mode: Mode,
    start: &LinerDensity,
    opts: OptimizeOptions,
) -> Result<OptimizeReport> {
    let clock = Instant::now();
    let mut chi = project(&start.values, set)?;
    let (mut j, mut grad) = objective_with_gradient(problem, mode, &chi)?;
    let mut dir = riesz(&grad, set);
    let mut pg = projected_gradient_norm(&chi, &dir, set)?;
    let mut iterates =
        vec![Iterate { energy: j, step: 0.0, projected_gradient_norm: pg, mass_error: (chi.gamma - set.gamma).abs() }];
    let (mut converged, mut exhausted) = (pg < opts.tol, false);
    let mut it = 0;
    while !converged && it < opts.max_iters {
        it += 1;
        let scale = dir.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        if scale == 0.0 {
            converged = true;
            break;
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let raw: Vec<f64> = chi.values.iter().zip(&dir).map(|(c, d)| c - step * d / scale).collect();
            let trial = project(&raw, set)?;
            let decrease: f64 = grad.iter().zip(trial.values.iter().zip(&chi.values)).map(|(g, (t, c))| g * (t - c)).sum();
            let jt = objective(problem, mode, &trial)?;
            debug!("iteration {it}: step {step:.3e} energy {jt:.6e}");
            if jt <= j + ARMIJO * decrease && jt <= j {
                accepted = Some((trial, jt));
                break;
            }
            step *= 0.5;
        }
        let Some((next, _)) = accepted else {
            warn!("line search exhausted at iteration {it}");
            exhausted = true;
            converged = true;
            break;
        };
        chi = next;
        (j, grad) = objective_with_gradient(problem, mode, &chi)?;
        dir = riesz(&grad, set);
        pg = projected_gradient_norm(&chi, &dir, set)?;
        iterates.push(Iterate { energy: j, step, projected_gradient_norm: pg, mass_error: (chi.gamma - set.gamma).abs() });
        info!("iteration {it}: energy {j:.6e}, step {step:.3e}, projected gradient {pg:.3e}");
        converged = pg < opts.tol;
    }
    let bang = threshold(&chi, set);
    let jb = objective(problem, mode, &bang)?;
    info!("relaxed energy {j:.6e}, thresholded {jb:.6e}, gap {:.3e}", jb - j);
    Ok(OptimizeReport {
        mode,
        gamma: set.gamma,
        iterates,
        chi: chi.values,
        energy: j,
        thresholded_chi: bang.values,
        thresholded_energy: jb,
        gap: jb - j,
        converged,
        line_search_exhausted: exhausted,
        wall_seconds: clock.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform(n: usize, gamma: f64) -> FeasibleSet {
        FeasibleSet::new(gamma, vec![1.0 / n as f64; n]).unwrap()
    }

    #[test]
    fn constant_shift() {
        let set = uniform(10, 0.3);
        let p = project(&[0.9; 10], &set).unwrap();
        for v in &p.values {
            assert!((v - 0.3).abs() < 1e-14);
        }
        assert!((p.gamma - 0.3).abs() < MASS_TOLERANCE);
    }

    #[test]
    fn rejects_bad_gamma() {
        assert!(FeasibleSet::new(0.0, vec![0.5, 0.5]).is_err());
        assert!(FeasibleSet::new(1.0, vec![0.5, 0.5]).is_err());
        assert!(FeasibleSet::new(0.5, vec![0.5, 0.5]).is_ok());
    }

    #[test]
    fn frozen_facets_keep_their_values() {
        let set = uniform(4, 0.5).with_fixed(vec![true, false, false, true]).unwrap();
        let p = project(&[1.0, 0.0, 0.0, 0.0], &set).unwrap();
        assert_eq!(p.values[0], 1.0);
        assert_eq!(p.values[3], 0.0);
        assert!((p.values[1] - 0.5).abs() < 1e-14 && (p.values[2] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn threshold_examples() {
        let set = uniform(4, 0.5);
        let bang = set.density(vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(threshold(&bang, &set).values, bang.values);
        let flat = set.density(vec![0.5; 4]);
        assert_eq!(threshold(&flat, &set).values, vec![1.0, 1.0, 0.0, 0.0]);
        let set = uniform(4, 0.3);
        let t = threshold(&set.density(vec![0.1, 0.4, 0.3, 0.4]), &set);
        assert_eq!(t.values[1], 1.0);
        assert!((t.values[3] - 0.2).abs() < 1e-12);
        assert!((t.gamma - 0.3).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn projection_is_feasible_idempotent_and_nonexpansive(
            w in prop::collection::vec(0.05f64..1.0, 3..20),
            a in prop::collection::vec(-2.0f64..3.0, 20),
            b in prop::collection::vec(-2.0f64..3.0, 20),
            frac in 0.05f64..0.95,
        ) {
            let n = w.len();
            let total: f64 = w.iter().sum();
            let set = FeasibleSet::new(frac * total, w).unwrap();
            let pa = project(&a[..n], &set).unwrap();
            let pb = project(&b[..n], &set).unwrap();
            prop_assert!((pa.gamma - set.gamma).abs() <= MASS_TOLERANCE);
            prop_assert!(pa.values.iter().all(|v| (0.0..=1.0).contains(v)));
            let again = project(&pa.values, &set).unwrap();
            prop_assert!(set.distance(&again.values, &pa.values) < 1e-12);
            prop_assert!(set.distance(&pa.values, &pb.values) <= set.distance(&a[..n], &b[..n]) + 1e-12);
        }
    }
}
