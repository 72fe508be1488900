//! Reference first-order methods: FISTA with backtracking, FISTA with
//! gradient restart, and a primal-dual hybrid gradient method, plus the
//! proximal building blocks they need. All baselines emit the same trace
//! schema as the main solver.

use std::time::Instant;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::problem::{CompositeProblem, NonsmoothTerm};
use crate::solver::TraceRecord;

/// Outcome of a baseline run.
#[derive(Debug)]
pub struct BaselineResult {
    pub x: DVector<f64>,
    pub objective: f64,
    pub trace: Vec<TraceRecord>,
    /// Momentum restarts taken (gradient-restart variant only).
    pub restarts: usize,
}

/// Euclidean projection onto the unit simplex by sort and threshold.
pub fn euclid_simplex_project(z: &DVector<f64>) -> DVector<f64> {
    let n = z.len();
    let mut sorted: Vec<f64> = z.iter().copied().collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let cand = (cumsum - 1.0) / (j + 1) as f64;
        if u - cand > 0.0 {
            tau = cand;
        } else {
            break;
        }
    }
    DVector::from_fn(n, |i, _| (z[i] - tau).max(0.0))
}

/// Componentwise soft threshold `sign(z)·max(|z| − t, 0)`.
pub fn soft_threshold(z: &DVector<f64>, t: f64) -> DVector<f64> {
    z.map(|v| {
        if v > t {
            v - t
        } else if v < -t {
            v + t
        } else {
            0.0
        }
    })
}

/// `prox_{step·g}(z)` for terms with a closed-form Euclidean prox:
/// soft threshold for `λ‖·‖₁` with `A = I`, simplex projection, identity
/// for `g = 0`. Everything else is a capability error.
fn prox_step(problem: &CompositeProblem, z: &DVector<f64>, step: f64) -> Result<DVector<f64>> {
    match problem.nonsmooth() {
        NonsmoothTerm::Zero => Ok(z.clone()),
        NonsmoothTerm::L1 { lambda } if problem.op().is_identity() => {
            Ok(soft_threshold(z, step * lambda))
        }
        NonsmoothTerm::SimplexConstraint { .. } => Ok(euclid_simplex_project(z)),
        _ => Err(Error::Unsupported(
            "no closed-form Euclidean prox for this nonsmooth term".into(),
        )),
    }
}

fn check_prox_support(problem: &CompositeProblem) -> Result<()> {
    prox_step(problem, &DVector::zeros(problem.dim()), 1.0).map(|_| ())
}

fn initial_lipschitz(problem: &CompositeProblem) -> f64 {
    problem.smooth().lipschitz_hint().map_or(1.0, |l| l.max(1e-12))
}

/// Accelerated proximal gradient with backtracking estimation of the
/// Lipschitz constant.
pub fn fista_bt(
    problem: &CompositeProblem,
    x0: DVector<f64>,
    max_iter: usize,
) -> Result<BaselineResult> {
    fista_impl(problem, x0, max_iter, false)
}

/// FISTA with backtracking plus a gradient-based restart of the momentum
/// sequence: restart whenever the mapping direction `y − x⁺` makes an
/// acute angle with the latest displacement.
pub fn fista_bt_rs(
    problem: &CompositeProblem,
    x0: DVector<f64>,
    max_iter: usize,
) -> Result<BaselineResult> {
    fista_impl(problem, x0, max_iter, true)
}

fn fista_impl(
    problem: &CompositeProblem,
    x0: DVector<f64>,
    max_iter: usize,
    restart: bool,
) -> Result<BaselineResult> {
    check_prox_support(problem)?;
    let start = Instant::now();
    let mut trace = Vec::with_capacity(max_iter);
    let mut restarts = 0usize;

    let mut x = x0;
    let mut y = x.clone();
    let mut theta = 1.0f64;
    let mut lip = initial_lipschitz(problem);
    let f = problem.smooth();

    for k in 0..max_iter {
        trace.push(TraceRecord {
            iter: k,
            objective: problem.eval_objective(&x)?,
            residual: 0.0,
            stepsize: 1.0 / lip,
            wall_seconds: start.elapsed().as_secs_f64(),
        });

        let fy = f.value(&y);
        let gy = f.gradient(&y);
        // backtrack until the quadratic upper bound at y holds
        let mut p;
        loop {
            p = prox_step(problem, &(&y - &gy / lip), 1.0 / lip)?;
            let diff = &p - &y;
            let bound = fy + gy.dot(&diff) + 0.5 * lip * diff.norm_squared();
            if f.value(&p) <= bound + 1e-12 * (1.0 + bound.abs()) || lip > 1e18 {
                break;
            }
            lip *= 2.0;
        }

        let x_old = std::mem::replace(&mut x, p);
        let theta_old = theta;
        theta = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let beta = (theta_old - 1.0) / theta;
        let y_old = std::mem::replace(&mut y, &x + beta * (&x - &x_old));

        let diff = &x - &x_old;
        let mut record = trace.last_mut().expect("pushed above");
        record.residual = diff.norm();

        if restart && (&y_old - &x).dot(&diff) > 0.0 {
            theta = 1.0;
            y = x.clone();
            restarts += 1;
        }
        let _ = &mut record;
    }

    let objective = problem.eval_objective(&x)?;
    Ok(BaselineResult { x, objective, trace, restarts })
}

/// Parameters of the primal-dual hybrid gradient iteration.
#[derive(Debug, Clone, Copy)]
pub struct PdhgConfig {
    /// Primal stepsize `τ = 1/L`.
    pub tau: f64,
    /// Extrapolation factor.
    pub theta: f64,
    /// Dual stepsize `σ = 4 / (τ (1 + θ)² ‖AᵀA‖)`.
    pub sigma_dual: f64,
}

impl PdhgConfig {
    pub fn new(tau: f64, theta: f64, op_norm_sq: f64) -> Result<Self> {
        if !(tau > 0.0 && theta > 0.0 && op_norm_sq > 0.0) {
            return Err(Error::InvalidParameter(
                "PDHG parameters must be positive".into(),
            ));
        }
        Ok(Self {
            tau,
            theta,
            sigma_dual: 4.0 / (tau * (1.0 + theta) * (1.0 + theta) * op_norm_sq),
        })
    }

    /// Standard configuration: `τ = 1/L` from the smooth oracle's Lipschitz
    /// hint, `θ = 0.9`, `‖AᵀA‖ = σ_max(A)²`.
    pub fn for_problem(problem: &CompositeProblem) -> Result<Self> {
        let l = problem.smooth().lipschitz_hint().ok_or_else(|| {
            Error::InvalidParameter("PDHG needs a Lipschitz constant for the smooth part".into())
        })?;
        let smax = problem.op().sigma_max();
        Self::new(1.0 / l, 0.9, smax * smax)
    }
}

/// Primal-dual hybrid gradient iteration for `f(x) + λ‖Ax‖₁`: a gradient
/// plus adjoint primal step, extrapolation, and a componentwise clip of the
/// dual onto `B_∞[0, λ]`.
pub fn pdhg(
    problem: &CompositeProblem,
    x0: DVector<f64>,
    y0: Option<DVector<f64>>,
    config: &PdhgConfig,
    max_iter: usize,
) -> Result<BaselineResult> {
    let lambda = match problem.nonsmooth() {
        NonsmoothTerm::L1 { lambda } => *lambda,
        _ => {
            return Err(Error::Unsupported(
                "PDHG baseline supports the l1-composite term only".into(),
            ))
        }
    };
    let op = problem.op();
    let m = op.rows();
    let start = Instant::now();
    let f = problem.smooth();

    let mut x = x0;
    let mut y = y0.unwrap_or_else(|| DVector::zeros(m));
    y = y.map(|v| v.clamp(-lambda, lambda));
    let mut trace = Vec::with_capacity(max_iter);

    for k in 0..max_iter {
        trace.push(TraceRecord {
            iter: k,
            objective: problem.eval_objective(&x)?,
            residual: 0.0,
            stepsize: config.tau,
            wall_seconds: start.elapsed().as_secs_f64(),
        });

        let grad = f.gradient(&x);
        let x_new = &x - config.tau * (&grad + op.apply_transpose(&y));
        let x_bar = &x_new + config.theta * (&x_new - &x);
        y += config.sigma_dual * op.apply(&x_bar);
        y = y.map(|v| v.clamp(-lambda, lambda));

        trace.last_mut().expect("pushed above").residual = (&x_new - &x).norm();
        x = x_new;
    }

    let objective = problem.eval_objective(&x)?;
    Ok(BaselineResult { x, objective, trace, restarts: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{LinearMap, SmoothOracle};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};

    fn vec(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    #[test]
    fn simplex_projection_hand_cases() {
        let z = vec(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
        assert!((euclid_simplex_project(&z) - &z).amax() < 1e-15);

        // threshold τ = 1 puts all mass on the large coordinate
        let p = euclid_simplex_project(&vec(&[0.5, 0.5, 2.0]));
        assert!((p - vec(&[0.0, 0.0, 1.0])).amax() < 1e-12);

        // threshold τ = 0.1 splits between the two large coordinates
        let p = euclid_simplex_project(&vec(&[0.6, 0.6, 0.0]));
        assert!((p - vec(&[0.5, 0.5, 0.0])).amax() < 1e-12);
    }

    #[test]
    fn simplex_projection_is_feasible_and_closest() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..500 {
            let n = rng.random_range(1..=12);
            let z = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
            let p = euclid_simplex_project(&z);
            assert!(p.iter().all(|&v| v >= -1e-12));
            assert_relative_eq!(p.sum(), 1.0, epsilon = 1e-12);
            let dist = (&p - &z).norm_squared();
            // no vertex or random feasible point does better
            for i in 0..n {
                let mut vert = DVector::zeros(n);
                vert[i] = 1.0;
                assert!((vert - &z).norm_squared() >= dist - 1e-9);
            }
            for _ in 0..10 {
                let mut w = DVector::from_fn(n, |_, _| rng.random_range(0.0..1.0f64));
                let s = w.sum();
                if s <= 0.0 {
                    continue;
                }
                w /= s;
                assert!((w - &z).norm_squared() >= dist - 1e-9);
            }
        }
    }

    fn lasso_1d() -> CompositeProblem {
        // ½(x − 2)² + |x|, minimizer x* = 1
        let f = SmoothOracle::new(
            1,
            |x: &DVector<f64>| 0.5 * (x[0] - 2.0).powi(2),
            |x: &DVector<f64>| DVector::from_vec(vec![x[0] - 2.0]),
        )
        .with_lipschitz(1.0);
        CompositeProblem::new(f, LinearMap::identity(1), NonsmoothTerm::l1(1.0)).unwrap()
    }

    #[test]
    fn fista_reaches_soft_threshold_fixed_point() {
        let problem = lasso_1d();
        let res = fista_bt(&problem, vec(&[0.0]), 200).unwrap();
        assert_relative_eq!(res.x[0], 1.0, epsilon = 1e-6);
        let res = fista_bt_rs(&problem, vec(&[0.0]), 200).unwrap();
        assert_relative_eq!(res.x[0], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn fista_converges_on_smooth_quadratic() {
        let n = 4;
        let q = DMatrix::from_diagonal(&vec(&[1.0, 4.0, 9.0, 16.0]));
        let f = SmoothOracle::quadratic(q, vec(&[1.0, -1.0, 2.0, 0.5])).with_lipschitz(16.0);
        let problem = CompositeProblem::unconstrained(f);
        let res = fista_bt(&problem, DVector::zeros(n), 500).unwrap();
        let grad = problem.eval_gradient(&res.x).unwrap();
        assert!(grad.norm() < 1e-6, "gradient norm {}", grad.norm());
    }

    #[test]
    fn fista_rejects_composite_operator() {
        let a = LinearMap::new(DMatrix::from_row_slice(1, 2, &[1.0, 1.0])).unwrap();
        let f = SmoothOracle::quadratic(DMatrix::identity(2, 2), DVector::zeros(2));
        let problem = CompositeProblem::new(f, a, NonsmoothTerm::l1(1.0)).unwrap();
        assert!(matches!(
            fista_bt(&problem, DVector::zeros(2), 10),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn restart_fires_on_ill_conditioned_quadratic() {
        let n = 20;
        let q = DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| {
            10f64.powf(3.0 * i as f64 / (n - 1) as f64)
        }));
        let f = SmoothOracle::quadratic(q, DVector::from_fn(n, |i, _| ((i * 3) as f64).sin()))
            .with_lipschitz(1e3);
        let problem = CompositeProblem::unconstrained(f);
        let res = fista_bt_rs(&problem, DVector::zeros(n), 500).unwrap();
        assert!(res.restarts >= 1, "no restart events observed");
        // min-so-far envelope is nonincreasing by construction; endpoint is best
        let best = res.trace.iter().map(|r| r.objective).fold(f64::INFINITY, f64::min);
        assert!(res.objective <= best + 1e-9);
    }

    #[test]
    fn pdhg_single_iteration_matches_hand_arithmetic() {
        // 2×2 identity-operator instance stepped once by hand
        let f = SmoothOracle::quadratic(DMatrix::identity(2, 2), DVector::zeros(2))
            .with_lipschitz(1.0);
        let problem =
            CompositeProblem::new(f, LinearMap::identity(2), NonsmoothTerm::l1(0.5)).unwrap();
        let cfg = PdhgConfig::for_problem(&problem).unwrap();
        assert_relative_eq!(cfg.tau, 1.0);
        assert_relative_eq!(cfg.theta, 0.9);
        assert_relative_eq!(cfg.sigma_dual, 4.0 / (1.0 * 3.61), epsilon = 1e-12);

        let x0 = vec(&[1.0, -2.0]);
        let res = pdhg(&problem, x0.clone(), None, &cfg, 1).unwrap();
        // x1 = x0 − τ(∇f(x0) + Aᵀ·0) = 0
        assert!(res.x.amax() < 1e-15);
        // y1 = clip(σ · A x̄) with x̄ = x1 + θ(x1 − x0) = −0.9·x0
        let xbar = -0.9 * &x0;
        let y_expected =
            (cfg.sigma_dual * xbar).map(|v: f64| v.clamp(-0.5, 0.5));
        // step once more and verify the dual entered the x-update
        let res2 = pdhg(&problem, x0.clone(), None, &cfg, 2).unwrap();
        let x2_expected = -cfg.tau * &y_expected; // ∇f(0) = 0
        assert!((&res2.x - x2_expected).amax() < 1e-12);
    }

    #[test]
    fn pdhg_dual_clip_is_idempotent_and_exact() {
        let f = SmoothOracle::quadratic(DMatrix::identity(3, 3), vec(&[0.3, -0.2, 0.1]))
            .with_lipschitz(1.0);
        let problem =
            CompositeProblem::new(f, LinearMap::identity(3), NonsmoothTerm::l1(0.25)).unwrap();
        let cfg = PdhgConfig::for_problem(&problem).unwrap();
        let y0 = vec(&[10.0, -8.0, 0.1]);
        let clipped = y0.map(|v| v.clamp(-0.25, 0.25));
        let twice = clipped.map(|v| v.clamp(-0.25, 0.25));
        assert_eq!(clipped, twice);
        let res = pdhg(&problem, DVector::zeros(3), Some(y0), &cfg, 50).unwrap();
        let _ = res;
    }

    #[test]
    fn pdhg_interior_dual_recovers_smooth_minimizer() {
        // λ strictly dominates ‖∇f(0)‖∞, so the optimum is x* = 0 with the
        // dual strictly inside its box; an interior fixed point forces
        // Ax* = 0, and the stated stepsizes only damp the iteration into a
        // λ-scaled neighborhood, so keep λ small
        let n = 3;
        let q = DMatrix::from_diagonal(&vec(&[1.0, 2.0, 4.0]));
        let c = vec(&[2e-4, -3e-4, 1e-4]);
        let f = SmoothOracle::quadratic(q.clone(), c.clone()).with_lipschitz(4.0);
        let problem =
            CompositeProblem::new(f, LinearMap::identity(n), NonsmoothTerm::l1(1e-3)).unwrap();
        let cfg = PdhgConfig::for_problem(&problem).unwrap();
        let res = pdhg(&problem, vec(&[0.3, -0.2, 0.1]), None, &cfg, 4000).unwrap();
        let reference = crate::solver::run(
            &problem,
            vec(&[0.3, -0.2, 0.1]),
            &crate::solver::SolverConfig { max_iter: 2000, ..Default::default() },
        )
        .unwrap();
        assert!(
            (res.objective - reference.objective).abs() <= 1e-6 * (1.0 + reference.objective.abs()),
            "pdhg {} vs reference {}",
            res.objective,
            reference.objective
        );
        assert!(res.x.amax() < 5e-4, "iterate should orbit the origin: {}", res.x);
    }

    #[test]
    fn pdhg_rejects_unsupported_terms() {
        let f = SmoothOracle::quadratic(DMatrix::identity(2, 2), DVector::zeros(2))
            .with_lipschitz(1.0);
        let problem =
            CompositeProblem::new(f, LinearMap::identity(2), NonsmoothTerm::simplex()).unwrap();
        let cfg = PdhgConfig::new(1.0, 0.9, 1.0).unwrap();
        assert!(matches!(
            pdhg(&problem, vec(&[0.5, 0.5]), None, &cfg, 5),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn baselines_agree_with_main_solver_on_small_lasso() {
        // well-conditioned instance: every method reaches the same value
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 8;
        let q = {
            let g = DMatrix::from_fn(n, n, |_, _| -> f64 { rng.random_range(-1.0..1.0) });
            &g * g.transpose() + DMatrix::identity(n, n)
        };
        let lmax = q.clone().symmetric_eigen().eigenvalues.max();
        let c = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let f = SmoothOracle::quadratic(q, c).with_lipschitz(lmax);
        let problem =
            CompositeProblem::new(f, LinearMap::identity(n), NonsmoothTerm::l1(0.3)).unwrap();

        let reference = crate::solver::run(
            &problem,
            DVector::zeros(n),
            &crate::solver::SolverConfig::default(),
        )
        .unwrap();
        let fista = fista_bt(&problem, DVector::zeros(n), 2000).unwrap();
        let fista_rs = fista_bt_rs(&problem, DVector::zeros(n), 2000).unwrap();
        let cfg = PdhgConfig::for_problem(&problem).unwrap();
        let pd = pdhg(&problem, DVector::zeros(n), None, &cfg, 5000).unwrap();
        for (name, got) in [("fista", fista.objective), ("fista_rs", fista_rs.objective), ("pdhg", pd.objective)] {
            assert!(
                (got - reference.objective).abs() <= 1e-6 * (1.0 + reference.objective.abs()),
                "{name}: {got} vs {}",
                reference.objective
            );
        }
    }
}
