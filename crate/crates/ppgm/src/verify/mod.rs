//! Acceptance suite: eleven verification criteria with pinned tolerances,
//! runnable through `bench verify` and the `acceptance` integration test.
//! Each criterion checks one contract of the solver stack against an
//! independent oracle or invariant.

pub mod oracles;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::baselines::soft_threshold;
use crate::bench::{
    self, report, AlgoId, Budgets, ExperimentManifest, Family, FamilyExtra, RunStatus,
};
use crate::dualprox::{prox_direction, solve_dual};
use crate::error::Result;
use crate::oned::{min_quad_plus_l1, PiecewiseQuadratic1D};
use crate::precond::{build_preconditioner, DiagScale, Preconditioner};
use crate::problem::{CompositeProblem, LinearMap, NonsmoothTerm, SmoothOracle};
use crate::solver::{self, HessianProbe, SolverConfig, Variant};
use crate::subspace::hvp_fd;

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone)]
pub struct CriterionReport {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        format!(
            "criterion {:2} {:28} {} ({:.2}s) {}",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.seconds,
            self.detail,
        )
    }
}

struct Check {
    passed: bool,
    detail: String,
}

impl Check {
    fn pass(detail: String) -> Self {
        Check { passed: true, detail }
    }

    fn fail(detail: String) -> Self {
        Check { passed: false, detail }
    }
}

fn run_criterion(
    id: usize,
    name: &'static str,
    budget_seconds: Option<f64>,
    body: impl FnOnce() -> Result<Check>,
) -> CriterionReport {
    let start = Instant::now();
    let outcome = body();
    let seconds = start.elapsed().as_secs_f64();
    let (mut passed, mut detail) = match outcome {
        Ok(c) => (c.passed, c.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    if let Some(budget) = budget_seconds {
        if seconds > budget {
            passed = false;
            detail = format!("{detail}; exceeded {budget:.0}s runtime budget");
        }
    }
    CriterionReport { id, name, passed, detail, seconds }
}

/// Runs all acceptance criteria in order.
pub fn run_all() -> Vec<CriterionReport> {
    vec![
        run_criterion(1, "preconditioner identity", Some(2.0), criterion_preconditioner),
        run_criterion(2, "dual closed forms", Some(30.0), criterion_dual_forms),
        run_criterion(3, "prox-direction oracle", None, criterion_prox_direction),
        run_criterion(4, "1-d partitioning oracle", Some(10.0), criterion_partitioning),
        run_criterion(5, "descent invariants", None, criterion_descent),
        run_criterion(6, "conjugacy", None, criterion_conjugacy),
        run_criterion(7, "finite-difference hvp", None, criterion_hvp),
        run_criterion(8, "q-linear rate", Some(5.0), criterion_qlinear),
        run_criterion(9, "benchmark trend", Some(120.0), criterion_trend),
        run_criterion(10, "stepsize floor", None, criterion_stepsize_floor),
        run_criterion(11, "determinism", None, criterion_determinism),
    ]
}

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| -> f64 { StandardNormal.sample(rng) })
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| -> f64 { StandardNormal.sample(rng) })
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> DMatrix<f64> {
    let g = gaussian(rng, n, n);
    &g * g.transpose() / n as f64 + DMatrix::identity(n, n) * shift
}

/// 1: `‖A P⁻¹ Aᵀ − I‖∞ ≤ 1e-8` over 200 random full-row-rank operators.
fn criterion_preconditioner() -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(1..=50);
        let m = rng.random_range(1..=n);
        let a = LinearMap::new(gaussian(&mut rng, m, n))?;
        let p = build_preconditioner(&a, None)?;
        let err = (p.dual_quadratic_dense(&a) - DMatrix::identity(m, m)).amax();
        worst = worst.max(err);
    }
    if worst <= 1e-8 {
        Ok(Check::pass(format!("max ‖AP⁻¹Aᵀ − I‖∞ = {worst:.2e}")))
    } else {
        Ok(Check::fail(format!("identity violated: {worst:.2e}")))
    }
}

/// 2: closed-form duals satisfy the optimality inclusion to 1e-8 and match
/// a forward-backward brute force to 1e-6, 500 instances per variant.
fn criterion_dual_forms() -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst_incl: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    for variant in 0..4 {
        for _ in 0..500 {
            let m = rng.random_range(1..=10);
            let a = gaussian_vec(&mut rng, m) * rng.random_range(0.5..3.0);
            let scalar = variant == 1 || rng.random_bool(0.5);
            let d = if scalar {
                DiagScale::Scalar(rng.random_range(0.2..5.0))
            } else {
                DiagScale::diagonal(DVector::from_fn(m, |_, _| rng.random_range(0.2..5.0)))?
            };
            let (term, idx) = match variant {
                0 => (NonsmoothTerm::l1(rng.random_range(0.2..3.0)), None),
                1 => (NonsmoothTerm::ellipsoid(rng.random_range(0.5..5.0)), None),
                2 => (NonsmoothTerm::simplex(), Some(rng.random_range(0..m))),
                _ => (
                    NonsmoothTerm::capped_simplex(rng.random_range(0.5..(m as f64))),
                    Some(rng.random_range(0..m)),
                ),
            };
            let y = solve_dual(&term, &a, &d, idx)?;
            worst_incl =
                worst_incl.max(oracles::dual_optimality_violation(&term, &y, &a, &d, idx));
            let y_bf = oracles::brute_force_dual(&term, &a, &d, idx, 100_000);
            worst_gap = worst_gap.max((y - y_bf).amax());
        }
    }
    if worst_incl <= 1e-8 && worst_gap <= 1e-6 {
        Ok(Check::pass(format!(
            "max inclusion violation {worst_incl:.2e}, max brute-force gap {worst_gap:.2e}"
        )))
    } else {
        Ok(Check::fail(format!(
            "inclusion {worst_incl:.2e} (≤1e-8), brute-force gap {worst_gap:.2e} (≤1e-6)"
        )))
    }
}

/// 3: the prox direction equals the soft-threshold step on ℓ₁ instances
/// (1e-10) and matches a brute-force metric-model minimizer on simplex
/// instances (1e-6), with the primal-dual feasibility invariant.
fn criterion_prox_direction() -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst_soft: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..=30);
        let lambda = rng.random_range(0.1..2.0);
        let alpha = rng.random_range(0.3..30.0);
        let f = SmoothOracle::quadratic(DMatrix::identity(n, n), DVector::zeros(n));
        let problem = CompositeProblem::new(f, LinearMap::identity(n), NonsmoothTerm::l1(lambda))?;
        let x = gaussian_vec(&mut rng, n);
        let grad = gaussian_vec(&mut rng, n) * rng.random_range(0.5..4.0);
        let p = build_preconditioner(problem.op(), None)?.with_scale(alpha);
        let sol = prox_direction(&problem, &x, &grad, &p)?;
        let expected = soft_threshold(&(&x - &grad / alpha), lambda / alpha) - &x;
        worst_soft = worst_soft.max((sol.v - expected).amax());
    }

    let mut worst_model: f64 = 0.0;
    let mut infeasible = 0usize;
    for _ in 0..200 {
        let n = rng.random_range(2..=5);
        let q = random_spd(&mut rng, n, 0.5);
        let c = gaussian_vec(&mut rng, n);
        let f = SmoothOracle::quadratic(q, c);
        let problem =
            CompositeProblem::new(f, LinearMap::identity(n), NonsmoothTerm::simplex())?;
        let mut x = DVector::from_fn(n, |_, _| rng.random_range(0.05..1.0));
        x /= x.sum();
        let p = Preconditioner::for_problem(&problem, &x)?
            .with_scale(rng.random_range(0.8..4.0));
        let grad = problem.eval_gradient(&x)?;
        let sol = prox_direction(&problem, &x, &grad, &p)?;
        let z = &x + &sol.v;
        if !problem.domain_contains(&z, 1e-8) {
            infeasible += 1;
            continue;
        }
        let bounded: Vec<usize> = (0..n).collect();
        let z_oracle = oracles::metric_model_minimizer(&grad, &p.dense(), &x, &bounded, 20_000);
        worst_model = worst_model.max((z - z_oracle).amax());
    }

    if worst_soft <= 1e-10 && worst_model <= 1e-6 && infeasible == 0 {
        Ok(Check::pass(format!(
            "soft-threshold gap {worst_soft:.2e}, simplex model gap {worst_model:.2e}"
        )))
    } else {
        Ok(Check::fail(format!(
            "soft-threshold {worst_soft:.2e} (≤1e-10), model {worst_model:.2e} (≤1e-6), {infeasible} infeasible prox steps"
        )))
    }
}

/// 4: the breakpoint partitioning method matches a golden-section oracle
/// in objective value to 1e-10 relative over 1000 random instances.
fn criterion_partitioning() -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let m = rng.random_range(1..=20);
        let a = 10f64.powf(rng.random_range(-3.0..3.0));
        let b = rng.random_range(-10.0..10.0);
        let v = DVector::from_fn(m, |_, _| rng.random_range(-5.0..5.0));
        let mut d = DVector::from_fn(m, |_, _| rng.random_range(-5.0..5.0));
        if rng.random_bool(0.25) {
            d[rng.random_range(0..m)] = 0.0;
        }
        let p = PiecewiseQuadratic1D::new(a, b, v, d);
        let t_alg = min_quad_plus_l1(&p);
        let big_d: f64 = p.slope.iter().map(|x| x.abs()).sum();
        let (lo, hi) = ((-big_d - b) / (2.0 * a), (big_d - b) / (2.0 * a));
        let t_gold = oracles::golden_section(|t| p.value(t), lo - 1e-9, hi + 1e-9);
        let gap = (p.value(t_alg) - p.value(t_gold)).abs();
        worst = worst.max(gap / (1.0 + p.value(t_gold).abs()));
    }
    if worst <= 1e-10 {
        Ok(Check::pass(format!("max relative objective gap {worst:.2e}")))
    } else {
        Ok(Check::fail(format!("objective gap {worst:.2e} exceeds 1e-10")))
    }
}

/// Mid-scale manifests reused by the descent and conjugacy criteria.
fn midscale_problems() -> Result<Vec<(&'static str, CompositeProblem, DVector<f64>)>> {
    let (lasso, _) = bench::gen_lasso(21, 600, 100, (1e-2, 1.0), 0.02, 1e-3, 1e-4)?;
    let qp = bench::gen_simplex_qp(22, 60, 1e4)?;
    let st = bench::gen_structured_l1(23, 60, 30, 1e3, 500f64.sqrt(), 1.0 / 16.0)?;
    let x_lasso = DVector::zeros(100);
    let x_qp = DVector::repeat(60, 1.0 / 60.0);
    let x_st = DVector::zeros(60);
    Ok(vec![
        ("lasso", lasso, x_lasso),
        ("simplex-qp", qp, x_qp),
        ("structured-l1", st, x_st),
    ])
}

/// 5: the two descent conditions hold with 1e-8 slack at every iteration of
/// every benchmark run, the objective trace is nonincreasing, and iterates
/// stay feasible.
fn criterion_descent() -> Result<Check> {
    let mut checked = 0usize;
    for (name, problem, x0) in midscale_problems()? {
        for variant in [Variant::ConjugateMomentum, Variant::PlainMomentum] {
            let cfg = SolverConfig {
                variant,
                max_iter: 800,
                tol: 1e-12,
                collect_diagnostics: true,
                ..Default::default()
            };
            let res = solver::run(&problem, x0.clone(), &cfg)?;
            for w in res.trace.windows(2) {
                if w[1].objective > w[0].objective + 1e-12 * (1.0 + w[0].objective.abs()) {
                    return Ok(Check::fail(format!(
                        "{name}/{variant:?}: objective increased at iter {}",
                        w[1].iter
                    )));
                }
            }
            for diag in &res.diagnostics {
                checked += 1;
                if !diag.feasible {
                    return Ok(Check::fail(format!(
                        "{name}/{variant:?}: infeasible iterate at iter {}",
                        diag.iter
                    )));
                }
                let con1 = -(cfg.c1 / 2.0) * diag.d_norm_sq + 1e-8;
                if diag.model_decrement > con1 {
                    return Ok(Check::fail(format!(
                        "{name}/{variant:?}: first descent condition violated at iter {} ({} > {})",
                        diag.iter, diag.model_decrement, con1
                    )));
                }
                let c3 = diag.c3;
                let con2 = -(c3 * (c3 / cfg.c2).min(1.0) / 4.0) * diag.v_norm_sq + 1e-8;
                if diag.model_decrement > con2 {
                    return Ok(Check::fail(format!(
                        "{name}/{variant:?}: second descent condition violated at iter {} ({} > {})",
                        diag.iter, diag.model_decrement, con2
                    )));
                }
                // the subspace chain bound q_d α₃² ≥ (c1/2)‖d‖²
                if let Some(qda) = diag.q_d_alpha3_sq {
                    if qda < (cfg.c1 / 2.0) * diag.d_norm_sq - 1e-10 {
                        return Ok(Check::fail(format!(
                            "{name}/{variant:?}: subspace chain bound violated at iter {}",
                            diag.iter
                        )));
                    }
                }
            }
        }
    }
    Ok(Check::pass(format!("{checked} iterations checked across 6 runs")))
}

/// 6: with exact Hessians on quadratics, `|⟨v, H s̃⟩| ≤ 1e-8 ‖v‖_H ‖s̃‖_H`
/// at every iteration.
fn criterion_conjugacy() -> Result<Check> {
    let qp = bench::gen_simplex_qp(31, 40, 1e3)?;
    let st = bench::gen_structured_l1(32, 40, 20, 1e3, 100f64.sqrt(), 1.0 / 16.0)?;
    let (lasso, _) = bench::gen_lasso(33, 300, 60, (1e-1, 1.0), 0.05, 1e-3, 1e-3)?;
    let problems: Vec<(&str, CompositeProblem, DVector<f64>)> = vec![
        ("simplex-qp", qp, DVector::repeat(40, 1.0 / 40.0)),
        ("structured-l1", st, DVector::zeros(40)),
        ("lasso", lasso, DVector::zeros(60)),
    ];
    let mut checked = 0usize;
    let mut worst: f64 = 0.0;
    for (name, problem, x0) in problems {
        let cfg = SolverConfig {
            max_iter: 500,
            tol: 1e-12,
            probe: HessianProbe::Exact,
            collect_diagnostics: true,
            ..Default::default()
        };
        let res = solver::run(&problem, x0, &cfg)?;
        for diag in &res.diagnostics {
            if let Some(c) = &diag.conjugacy {
                if c.v_h_norm == 0.0 || c.s_h_norm == 0.0 {
                    continue;
                }
                checked += 1;
                let rel = c.v_h_s.abs() / (c.v_h_norm * c.s_h_norm);
                if rel > 1e-8 {
                    return Ok(Check::fail(format!(
                        "{name}: conjugacy {rel:.2e} at iter {}",
                        diag.iter
                    )));
                }
                worst = worst.max(rel);
            }
        }
    }
    Ok(Check::pass(format!(
        "{checked} orthogonalizations, worst normalized inner product {worst:.2e}"
    )))
}

/// 7: gradient-difference Hessian products reproduce exact products to
/// 1e-6 relative on quadratics.
fn criterion_hvp() -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(2..=30);
        let q = random_spd(&mut rng, n, 0.3) * rng.random_range(0.5..20.0);
        let f = SmoothOracle::quadratic(q.clone(), gaussian_vec(&mut rng, n));
        let x = gaussian_vec(&mut rng, n);
        let v = gaussian_vec(&mut rng, n);
        let exact = &q * &v;
        for eps in [1e-6, crate::subspace::fd_epsilon(f64::EPSILON.sqrt(), &x, &v)] {
            let fd = hvp_fd(&f, &x, &v, eps);
            worst = worst.max((&fd - &exact).norm() / (1.0 + exact.norm()));
        }
    }
    if worst <= 1e-6 {
        Ok(Check::pass(format!("max relative error {worst:.2e}")))
    } else {
        Ok(Check::fail(format!("relative error {worst:.2e} exceeds 1e-6")))
    }
}

/// 8: on a simplex QP (n = 50, κ = 1e3) the gap contracts Q-linearly: the
/// fitted factor over the last 50 usable iterations is < 1 with R² ≥ 0.98.
fn criterion_qlinear() -> Result<Check> {
    let problem = bench::gen_simplex_qp(8, 50, 1e3)?;
    let x0 = DVector::repeat(50, 1.0 / 50.0);
    let ref_cfg = SolverConfig { max_iter: 20_000, tol: 1e-13, ..Default::default() };
    let reference = solver::run(&problem, x0.clone(), &ref_cfg)?.objective;

    let cfg = SolverConfig { max_iter: 2000, tol: 0.0, ..Default::default() };
    let res = solver::run(&problem, x0, &cfg)?;
    let floor = 1e-12 * (1.0 + reference.abs());
    let usable: Vec<(f64, f64)> = res
        .trace
        .iter()
        .filter_map(|r| {
            let gap = r.objective - reference;
            (gap > floor).then(|| (r.iter as f64, gap.ln()))
        })
        .collect();
    if usable.len() < 20 {
        return Ok(Check::fail(format!("only {} usable gap samples", usable.len())));
    }
    let window: Vec<(f64, f64)> = usable.iter().rev().take(50).rev().copied().collect();
    let (slope, _, r2) = oracles::linear_fit(&window);
    let rho = slope.exp();
    if rho < 1.0 && r2 >= 0.98 {
        Ok(Check::pass(format!(
            "contraction {rho:.4} per iteration, fit R² = {r2:.4} over {} samples",
            window.len()
        )))
    } else {
        Ok(Check::fail(format!("contraction {rho:.4}, R² = {r2:.4}")))
    }
}

/// 9: at paper scale, the conjugate-momentum solver reaches gap 1e-6 in
/// strictly fewer iterations than every other method that runs.
fn criterion_trend() -> Result<Check> {
    let mut lines = Vec::new();
    for family in [Family::Lasso, Family::SimplexQp, Family::StructuredL1] {
        let manifest = ExperimentManifest::defaults(family, 0);
        let bundle = bench::run_experiment(&manifest)?;
        let target = 1e-6;
        let cm = bundle.run(AlgoId::P2gmCm).expect("cm always runs");
        let cm_iters = match bundle.iterations_to_gap(cm, target) {
            Some(k) => k,
            None => {
                return Ok(Check::fail(format!(
                    "{family}: conjugate momentum never reached gap 1e-6"
                )))
            }
        };
        let mut summary = format!("{family}: cm {cm_iters}");
        for run in &bundle.runs {
            if run.algo == AlgoId::P2gmCm || !matches!(run.status, RunStatus::Completed) {
                continue;
            }
            let other = bundle.iterations_to_gap(run, target);
            summary.push_str(&format!(
                " {} {}",
                run.algo,
                other.map_or("-".to_string(), |k| k.to_string())
            ));
            if let Some(k) = other {
                if cm_iters >= k {
                    return Ok(Check::fail(format!(
                        "{family}: {} reached 1e-6 at iter {k}, conjugate momentum at {cm_iters}",
                        run.algo
                    )));
                }
            }
        }
        lines.push(summary);
    }
    Ok(Check::pass(format!("iterations to gap ≤ 1e-6: {}", lines.join("; "))))
}

/// 10: on quadratic tests with known L, every accepted stepsize is at least
/// `γ(1−σ)c₁/L`.
fn criterion_stepsize_floor() -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let n = 10;
    // spectrum inside (0, 8]: L = 8 known exactly
    let eigs = DVector::from_fn(n, |i, _| 0.5 + 7.5 * i as f64 / (n - 1) as f64);
    let u = gaussian(&mut rng, n, n).qr().q();
    let q = &u * DMatrix::from_diagonal(&eigs) * u.transpose();
    let q = (&q + q.transpose()) * 0.5;
    let big_l = 8.0;
    let f = SmoothOracle::quadratic(q, gaussian_vec(&mut rng, n));
    let problem = CompositeProblem::unconstrained(f);

    let mut worst_margin = f64::INFINITY;
    for (c1, label) in [(1.0, "c1 = 1"), (1e-8, "c1 = 1e-8")] {
        let cfg = SolverConfig { c1, max_iter: 400, tol: 1e-11, ..Default::default() };
        let res = solver::run(&problem, gaussian_vec(&mut rng, n) * 3.0, &cfg)?;
        let floor = (cfg.gamma * (1.0 - cfg.sigma) * c1 / big_l).min(1.0);
        for rec in &res.trace {
            if rec.stepsize == 0.0 {
                continue; // terminal row
            }
            worst_margin = worst_margin.min(rec.stepsize - floor);
            if rec.stepsize < floor - 1e-12 {
                return Ok(Check::fail(format!(
                    "{label}: accepted stepsize {} below floor {floor} at iter {}",
                    rec.stepsize, rec.iter
                )));
            }
        }
    }
    Ok(Check::pass(format!("worst margin above the floor {worst_margin:.3e}")))
}

/// 11: two runs of the same manifest emit identical trace CSVs (wall-clock
/// column excluded).
fn criterion_determinism() -> Result<Check> {
    let manifest = ExperimentManifest {
        family: Family::SimplexQp,
        seed: 11,
        dims: (30, 30),
        kappa: 1e3,
        extra: FamilyExtra::SimplexQp,
        algos: AlgoId::ALL.to_vec(),
        budgets: Budgets { max_iter: 200, reference_multiplier: 5 },
    };
    let dir1 = std::env::temp_dir().join(format!("ppgm-verify-{}-a", std::process::id()));
    let dir2 = std::env::temp_dir().join(format!("ppgm-verify-{}-b", std::process::id()));
    let result = (|| -> Result<Check> {
        let b1 = bench::run_experiment(&manifest)?;
        let b2 = bench::run_experiment(&manifest)?;
        report::emit_report(&b1, &dir1)?;
        report::emit_report(&b2, &dir2)?;
        let mut compared = 0usize;
        for run in &b1.runs {
            if !matches!(run.status, RunStatus::Completed) {
                continue;
            }
            let name = format!("{}.csv", run.algo);
            let a = report::normalized_csv(&dir1.join(&name))?;
            let b = report::normalized_csv(&dir2.join(&name))?;
            if a != b {
                return Ok(Check::fail(format!("{name} differs between reruns")));
            }
            compared += 1;
        }
        Ok(Check::pass(format!("{compared} trace files byte-identical modulo time")))
    })();
    let _ = std::fs::remove_dir_all(&dir1);
    let _ = std::fs::remove_dir_all(&dir2);
    result
}
