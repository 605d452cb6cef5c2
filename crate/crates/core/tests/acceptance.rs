//! One line per acceptance criterion; the test fails if any criterion fails.
//! Run with `cargo test -p linersolve-core --test acceptance -- --nocapture`.

mod common;

use std::sync::Arc;
use std::time::Instant;

use linersolve::admissibility::{cell_center, is_admissible, rasterize_zone, Infinity, Ratio};
use linersolve::assembly::{assemble, BoundaryField, Field, LinerDensity, SourceData};
use linersolve::energy::energy_at;
use linersolve::measure::{build_measure, cantor_dimension, CantorSpec};
use linersolve::mesh::{generate, MeshSpec};
use linersolve::optimize::{self, FeasibleSet, Mode, OptimizeOptions};
use linersolve::params::{myers_coeffs, verify_decomposition, PhysicalParams};
use linersolve::solver::{self, convergence_study, observed_orders, ExpSum, MmsSetup};
use linersolve::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn run(id: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    println!(
        "[{}] {id}. {name}: {} ({:.2} s)",
        if out.pass { "PASS" } else { "FAIL" },
        out.detail,
        start.elapsed().as_secs_f64()
    );
    out.pass
}

fn rel(a: C, b: C) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(f64::MIN_POSITIVE)
}

fn decomposition() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst, mut all) = (0.0f64, true);
    let mut draws = 0;
    while draws < 1000 {
        let c0 = rng.random_range(100.0..500.0);
        let params = PhysicalParams {
            omega: rng.random_range(10.0..5000.0),
            u0: c0 * rng.random_range(0.01..0.95),
            c0,
            z0: rng.random_range(0.5..2.0),
            impedance: C::new(rng.random_range(0.05..5.0), rng.random_range(-5.0..5.0)),
            beta_v: C::from_polar(rng.random_range(0.0..0.99), rng.random_range(-3.14..3.14)),
        };
        let d = params.derive().unwrap();
        if !is_admissible(params.beta_v, d.ratio).unwrap() {
            continue;
        }
        draws += 1;
        let co = myers_coeffs(&d, params.beta_v).unwrap();
        all &= verify_decomposition(&co, &d);
        // Independent expansion in the symbol s of dx.
        let (k0, m0, b) = (d.k0, d.mach, params.beta_v);
        let a2 = co.alpha * co.alpha;
        let lhs = [C::from(k0 * k0), C::new(0.0, -k0 * m0) * (2.0 - b), -(1.0 - b) * m0 * m0];
        let rhs = [a2 * co.c1 * co.c1 - co.k2, a2 * co.c1 * C::new(0.0, -2.0 * m0), -a2 * m0 * m0];
        for (l, r) in lhs.iter().zip(&rhs) {
            worst = worst.max(rel(*l, *r));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        pass: all && worst < 1e-12 && secs < 1.0,
        detail: format!("1000 admissible draws, worst relative mismatch {worst:.2e}, {secs:.3} s (< 1 s)"),
    }
}

fn zones() -> Outcome {
    let start = Instant::now();
    let n = 512;
    let mut symmetric = true;
    for r in [1.0, 50.0] {
        let plus = rasterize_zone(Ratio::Finite(r), n).unwrap();
        let minus = rasterize_zone(Ratio::Finite(-r), n).unwrap();
        for j in 0..n {
            for i in 0..n {
                symmetric &= plus.get(i, j) == minus.get(i, n - 1 - j);
            }
        }
    }
    let mut real_slice_empty = true;
    for r in [1.0, -1.0, 50.0, -50.0] {
        for k in 1..2000 {
            let x = -1.0 + k as f64 / 1000.0;
            if x != 0.0 {
                real_slice_empty &= !is_admissible(C::new(x, 0.0), r).unwrap();
            }
        }
    }
    let mut worst_agreement: f64 = 1.0;
    for (r, sign) in [(1e6, Infinity::Plus), (-1e6, Infinity::Minus)] {
        let big = rasterize_zone(Ratio::Finite(r), n).unwrap();
        let limit = rasterize_zone(Ratio::Limit(sign), n).unwrap();
        let (mut inside, mut agree) = (0usize, 0usize);
        for j in 0..n {
            for i in 0..n {
                let (x, y) = (cell_center(i, n), cell_center(j, n));
                if x * x + y * y < 1.0 {
                    inside += 1;
                    agree += (big.get(i, j) == limit.get(i, j)) as usize;
                }
            }
        }
        worst_agreement = worst_agreement.min(agree as f64 / inside as f64);
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        pass: symmetric && real_slice_empty && worst_agreement >= 0.98 && secs < 10.0,
        detail: format!(
            "n = 512: conjugate symmetry {symmetric}, real slice empty {real_slice_empty}, \
             limit agreement {:.3}% (>= 98%), {secs:.2} s (< 10 s)",
            100.0 * worst_agreement
        ),
    }
}

fn manufactured() -> Outcome {
    let start = Instant::now();
    let ladder: Vec<MeshSpec> = (0..3)
        .map(|l| MeshSpec { length: 1.0, radius: 0.5, n_axial: 9, n_ring: 6, refinement_level: l })
        .collect();
    let setup = MmsSetup {
        params: params(),
        surface_weight: 1.0,
        density: Arc::new(|p: [f64; 3]| if p[1] > 0.0 { 0.25 + 0.5 * p[0] } else { 0.9 }),
    };
    let exact = Arc::new(ExpSum {
        terms: vec![
            (c(1.0, 0.0), [c(0.0, 1.3), c(0.4, 0.0), c(0.0, -0.7)]),
            (c(0.3, -0.5), [c(-0.5, 0.0), c(0.0, 0.9), c(0.6, 0.2)]),
        ],
    });
    let rows = convergence_study(&ladder, &setup, exact).unwrap();
    let orders = observed_orders(&rows);
    let (l2, h1) = orders.last().map(|o| (o.0, o.1)).unwrap();
    let nodes: Vec<usize> = rows.iter().map(|r| r.nodes).collect();
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        pass: l2 >= 1.8 && h1 >= 0.9 && secs < 300.0,
        detail: format!(
            "nodes {nodes:?}, L2 orders {:.3}/{:.3} (>= 1.8), H1 orders {:.3}/{:.3} (>= 0.9), {secs:.1} s (< 300 s)",
            orders[0].0, orders[1].0, orders[0].1, orders[1].1
        ),
    }
}

fn uniqueness() -> Outcome {
    let ph = linersolve::params::Physics::new(&params()).unwrap();
    let chi_of = |d: &linersolve::assembly::Discretization| {
        LinerDensity::new(lateral_x(d).iter().map(|x| 0.3 + 0.5 * x).collect(), d).unwrap()
    };
    let f = Field::Analytic(Arc::new(|x: [f64; 3]| c(x[0] * x[1], 1.0 - x[2])));
    let eta = BoundaryField::Analytic(Arc::new(|_, x: [f64; 3]| c(x[0].cos(), x[1])));
    let volume_and_liner = SourceData { f: f.clone(), eta: eta.clone(), ..Default::default() };

    let d1 = disc(1.0, 0.5, 5, 2);
    let chi = chi_of(&d1);
    let zero = solver::solve(&assemble(&d1, &ph, &chi, &SourceData::default(), None).unwrap()).unwrap();
    let zero_norm = zero.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();

    let s2 = inflow();
    let psi = BoundaryField::Analytic(Arc::new(|_, x: [f64; 3]| c(x[1], x[2])));
    let s2 = SourceData { psi, ..s2 };
    let w = c(0.0, 2.0);
    let combined = SourceData { g: s2.g.scaled(w), psi: s2.psi.scaled(w), ..volume_and_liner.clone() };
    let u1 = solver::solve(&assemble(&d1, &ph, &chi, &volume_and_liner, None).unwrap()).unwrap();
    let u2 = solver::solve(&assemble(&d1, &ph, &chi, &s2, None).unwrap()).unwrap();
    let u12 = solver::solve(&assemble(&d1, &ph, &chi, &combined, None).unwrap()).unwrap();
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..u12.values.len() {
        num += (u12.values[k] - u1.values[k] - w * u2.values[k]).norm_sqr();
        den += u12.values[k].norm_sqr();
    }
    let superposition = (num / den).sqrt();

    let mut ratios = Vec::new();
    for level in 0..3 {
        let mesh =
            generate(&MeshSpec { length: 1.0, radius: 0.5, n_axial: 5, n_ring: 2, refinement_level: level }).unwrap();
        let mu = build_measure(&mesh, 1.0, None).unwrap();
        let d = linersolve::assembly::Discretization::new(mesh, mu).unwrap();
        let chi = chi_of(&d);
        let sys = assemble(&d, &ph, &chi, &volume_and_liner, None).unwrap();
        let u = solver::solve(&sys).unwrap();
        // Norms of the data through their nodal interpolants.
        let fv: Vec<C> = d.mesh.nodes.iter().map(|&x| c(x[0] * x[1], 1.0 - x[2])).collect();
        let ev: Vec<C> = d.mesh.nodes.iter().map(|&x| c(x[0].cos(), x[1])).collect();
        let f_norm = d.mass.form(&fv, &fv).re.sqrt();
        let eta_norm = d.trace_mass.form(&ev, &ev).re.sqrt();
        ratios.push(sys.v_norm(&u.values).unwrap() / (f_norm + eta_norm));
    }
    let spread = ratios.iter().cloned().fold(0.0, f64::max) / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    Outcome {
        pass: zero_norm < 1e-9 && superposition < 1e-10 && spread < 2.0,
        detail: format!(
            "zero-source norm {zero_norm:.1e} (< 1e-9), superposition {superposition:.1e} (< 1e-10), \
             stability ratios {:?} spread x{spread:.3} (< 2)",
            ratios.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>()
        ),
    }
}

fn gradient() -> Outcome {
    let start = Instant::now();
    let d = disc(1.0, 0.5, 9, 2);
    let facets = d.lateral.len();
    let xs = lateral_x(&d);
    let p = problem(d, energy_spec(1.0, 1.0, 1));
    let chi = LinerDensity::new(
        xs.iter().enumerate().map(|(i, x)| 0.3 + 0.4 * x + 0.1 * ((i as f64) * 0.7).sin()).collect(),
        &p.disc,
    )
    .unwrap();
    let k0 = 1.0;
    let u = p.solve_at(k0, &chi).unwrap();
    let g = optimize::gradient(&p, k0, &chi, &u).unwrap();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for f in 0..facets {
        let mut plus = chi.values.clone();
        let mut minus = chi.values.clone();
        plus[f] += h;
        minus[f] -= h;
        let jp = energy_at(&p, k0, &LinerDensity::new(plus, &p.disc).unwrap()).unwrap();
        let jm = energy_at(&p, k0, &LinerDensity::new(minus, &p.disc).unwrap()).unwrap();
        let fd = (jp - jm) / (2.0 * h);
        worst = worst.max((g[f] - fd).abs() / fd.abs().max(f64::MIN_POSITIVE));
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        pass: facets <= 200 && worst < 1e-4 && secs < 120.0,
        detail: format!(
            "{facets} lateral facets, worst per-component relative error {worst:.2e} (< 1e-4), {secs:.1} s (< 120 s)"
        ),
    }
}

/// Minimizer of `sum w (x - raw)^2` over the feasible set by enumerating which
/// facets sit at 0, at 1, or strictly inside.
fn brute_force_projection(raw: &[f64], w: &[f64], gamma: f64) -> Vec<f64> {
    let n = raw.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut code = vec![0u8; n];
    loop {
        let upper: f64 = (0..n).filter(|&i| code[i] == 1).map(|i| w[i]).sum();
        let inner: Vec<usize> = (0..n).filter(|&i| code[i] == 2).collect();
        let wi: f64 = inner.iter().map(|&i| w[i]).sum();
        if wi > 0.0 {
            let tau = (gamma - upper - inner.iter().map(|&i| w[i] * raw[i]).sum::<f64>()) / wi;
            let x: Vec<f64> = (0..n)
                .map(|i| match code[i] {
                    0 => 0.0,
                    1 => 1.0,
                    _ => raw[i] + tau,
                })
                .collect();
            if x.iter().all(|v| (-1e-13..=1.0 + 1e-13).contains(v)) {
                let obj: f64 = (0..n).map(|i| w[i] * (x[i] - raw[i]).powi(2)).sum();
                if best.as_ref().is_none_or(|b| obj < b.0) {
                    best = Some((obj, x));
                }
            }
        }
        let mut k = 0;
        while k < n && code[k] == 2 {
            code[k] = 0;
            k += 1;
        }
        if k == n {
            break;
        }
        code[k] += 1;
    }
    best.expect("some active set is feasible").1
}

fn projection() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let mut w: Vec<f64> = (0..12).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        let raw: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..2.0)).collect();
        let set = FeasibleSet::new(rng.random_range(0.05..0.95), w.clone()).unwrap();
        let ours = optimize::project(&raw, &set).unwrap();
        let oracle = brute_force_projection(&raw, &w, set.gamma);
        let dist = (set.distance(&ours.values, &raw) - set.distance(&oracle, &raw)).abs();
        let diff = ours.values.iter().zip(&oracle).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        worst = worst.max(dist).max(diff);
    }
    let (mut idempotent, mut nonexpansive) = (true, true);
    for _ in 0..1000 {
        let n = rng.random_range(3..40);
        let mut w: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        let set = FeasibleSet::new(rng.random_range(0.05..0.95), w).unwrap();
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..3.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..3.0)).collect();
        let pa = optimize::project(&a, &set).unwrap();
        let pb = optimize::project(&b, &set).unwrap();
        let again = optimize::project(&pa.values, &set).unwrap();
        idempotent &= set.distance(&again.values, &pa.values) <= 1e-12;
        nonexpansive &= set.distance(&pa.values, &pb.values) <= set.distance(&a, &b) + 1e-12;
    }
    Outcome {
        pass: worst <= 1e-9 && idempotent && nonexpansive,
        detail: format!(
            "100 12-facet instances, worst deviation from brute force {worst:.1e} (<= 1e-9); \
             1000 pairs: idempotent {idempotent}, non-expansive {nonexpansive}"
        ),
    }
}

fn optimizer() -> Outcome {
    // Descent and feasibility from the constant start.
    let d = disc(1.0, 0.5, 5, 2);
    let weights = d.lateral_mass.clone();
    let p = problem(d, energy_spec(0.8, 1.2, 3));
    let gamma = 0.4;
    let set = FeasibleSet::new(gamma, weights.clone()).unwrap();
    let start = p.uniform_density(gamma).unwrap();
    let opts = OptimizeOptions { max_iters: 15, tol: 1e-10 };
    let mut monotone = true;
    let mut worst_mass = 0.0f64;
    let mut descent = 0.0;
    for mode in [Mode::Single { k0: 1.0 }, Mode::Band] {
        let rep = optimize::minimize(&p, &set, mode, &start, opts).unwrap();
        monotone &= rep.iterates.windows(2).all(|w| w[1].energy <= w[0].energy);
        worst_mass = rep.iterates.iter().fold(worst_mass, |m, it| m.max(it.mass_error));
        descent = rep.iterates[0].energy / rep.energy;
    }

    // Two free facets, everything else frozen; at k0 = 5 the optimum of this
    // pair is interior.
    let d = disc(1.0, 0.5, 3, 1);
    let weights = d.lateral_mass.clone();
    let p = problem(d, energy_spec(1.0, 1.0, 1));
    let start = p.uniform_density(gamma).unwrap();
    let (a, b) = (0, 3);
    let fixed: Vec<bool> = (0..weights.len()).map(|i| i != a && i != b).collect();
    let toy = FeasibleSet::new(gamma, weights.clone()).unwrap().with_fixed(fixed).unwrap();
    let k0 = 5.0;
    let rep =
        optimize::minimize(&p, &toy, Mode::Single { k0 }, &start, OptimizeOptions { max_iters: 200, tol: 1e-12 }).unwrap();
    let (wa, wb) = (weights[a], weights[b]);
    let free_mass = gamma * (wa + wb);
    let lo = ((free_mass - wb) / wa).max(0.0);
    let hi = (free_mass / wa).min(1.0);
    let j_of = |xa: f64| {
        let mut v = start.values.clone();
        v[a] = xa;
        v[b] = ((free_mass - wa * xa) / wb).clamp(0.0, 1.0);
        energy_at(&p, k0, &LinerDensity::new(v, &p.disc).unwrap()).unwrap()
    };
    let (mut best, mut span) = (lo, hi - lo);
    let mut lo_grid = lo;
    for _ in 0..3 {
        let step = span / 200.0;
        best = (0..=200)
            .map(|k| (lo_grid + k as f64 * step).clamp(lo, hi))
            .min_by(|x, y| j_of(*x).total_cmp(&j_of(*y)))
            .unwrap();
        lo_grid = best - step;
        span = 2.0 * step;
    }
    let best_b = (free_mass - wa * best) / wb;
    let toy_err = (rep.chi[a] - best).abs().max((rep.chi[b] - best_b).abs());
    Outcome {
        pass: monotone && worst_mass <= 1e-12 && toy_err <= 1e-3,
        detail: format!(
            "monotone descent {monotone} (J0/J = {descent:.3}), worst mass error {worst_mass:.1e} (<= 1e-12), \
             two-facet toy optimum ({:.4}, {:.4}) vs grid search ({best:.4}, {best_b:.4}), error {toy_err:.1e} (<= 1e-3)",
            rep.chi[a], rep.chi[b]
        ),
    }
}

fn weak_star() -> Outcome {
    let d = disc(1.0, 0.5, 65, 3);
    let xs = lateral_x(&d);
    let p = problem(d, energy_spec(1.0, 1.0, 1));
    let gamma = 0.5;
    let k0 = 1.0;
    let flat = energy_at(&p, k0, &p.uniform_density(gamma).unwrap()).unwrap();
    let gaps: Vec<f64> = [2usize, 4, 8, 16]
        .iter()
        .map(|&m| {
            let v = xs.iter().map(|x| if (x * m as f64).fract() < 0.5 { 1.0 } else { 0.0 }).collect();
            let chi = LinerDensity::new(v, &p.disc).unwrap();
            assert!((chi.gamma - gamma).abs() < 1e-12);
            (energy_at(&p, k0, &chi).unwrap() - flat).abs()
        })
        .collect();
    let monotone = gaps.windows(2).all(|w| w[1] <= 1.1 * w[0]);
    Outcome {
        pass: monotone && gaps[3] < gaps[0],
        detail: format!(
            "|J(chi_m) - J(gamma)| for m = 2, 4, 8, 16: {:?}, non-increasing within 10%: {monotone}",
            gaps.iter().map(|g| format!("{g:.3e}")).collect::<Vec<_>>()
        ),
    }
}

fn regularity() -> Outcome {
    let dc = cantor_dimension();
    let mesh = generate(&MeshSpec { length: 1.0, radius: 0.025, n_axial: 2, n_ring: 96, refinement_level: 0 }).unwrap();
    let mut rising = Vec::new();
    let mut stable = (0.0, 0.0);
    let mut ordered = true;
    let exponents = [1.2, 1.5, dc, 1.9, 2.0];
    let mut check_order = |mu: &linersolve::measure::BoundaryMeasure| {
        let a: Vec<f64> = exponents.iter().map(|&d| mu.estimate_upper_regularity(d, 100).unwrap().a_hat).collect();
        ordered &= a.windows(2).all(|w| w[0] <= w[1]);
        a
    };
    for level in 3..=6 {
        let mu = build_measure(&mesh, 0.0, Some(CantorSpec { level, mass: 1.0, support: None })).unwrap();
        let a = check_order(&mu);
        rising.push(a[3]);
        if level == 6 {
            stable = (a[2], mu.estimate_upper_regularity(dc, 200).unwrap().a_hat);
        }
    }
    let surface = disc(1.0, 0.5, 9, 4);
    check_order(&surface.measure);
    let mixed = build_measure(&surface.mesh, 0.5, Some(CantorSpec { level: 3, mass: 0.5, support: None })).unwrap();
    check_order(&mixed);
    let stable_ok = (stable.1 / stable.0 - 1.0).abs() <= 0.25;
    let diverging = rising.windows(2).all(|w| w[1] > w[0]);
    Outcome {
        pass: stable_ok && diverging && ordered,
        detail: format!(
            "level 6 at d = {dc:.4}: A_hat {:.3} (100 samples) vs {:.3} (200 samples); d = 1.9 over levels 3..6: {:?}; \
             A_hat non-decreasing in d on all measures: {ordered}",
            stable.0,
            stable.1,
            rising.iter().map(|a| format!("{a:.2}")).collect::<Vec<_>>()
        ),
    }
}

#[test]
fn acceptance() {
    let results = [
        run(1, "operator decomposition", decomposition),
        run(2, "admissible zones", zones),
        run(3, "manufactured-solution convergence", manufactured),
        run(4, "uniqueness and linearity", uniqueness),
        run(5, "adjoint gradient vs finite differences", gradient),
        run(6, "projection oracle", projection),
        run(7, "optimizer behaviour", optimizer),
        run(8, "weak-star continuity proxy", weak_star),
        run(9, "upper regularity of the Cantor measure", regularity),
    ];
    let passed = results.iter().filter(|r| **r).count();
    println!("{passed}/{} criteria passed", results.len());
    assert_eq!(passed, results.len());
}
