//! Two-dimensional subspace model around the prox direction: a momentum
//! direction recycled from the previous step, finite-difference curvature
//! probes with safeguarded Rayleigh quotients, Gram–Schmidt
//! orthogonalization in the approximate Hessian inner product, and the
//! three one-dimensional subproblems that assemble the search direction.

use nalgebra::DVector;

use crate::dualprox::precond_project;
use crate::error::Result;
use crate::oned::minimize_along_ray;
use crate::precond::Preconditioner;
use crate::problem::{CompositeProblem, SmoothOracle, DEFAULT_FEAS_TOL};

/// Hessian–vector product along a probe direction with its safeguarded
/// curvature estimate.
#[derive(Debug, Clone)]
pub struct CurvatureProbe {
    /// `H_k(v)`, from gradient differences or the exact Hessian.
    pub hv: DVector<f64>,
    /// Safeguarded curvature `q ∈ [c1, c2]`.
    pub q: f64,
    /// Finite-difference step used (0 for an exact product).
    pub eps_used: f64,
}

/// Knobs for [`build_direction`].
#[derive(Debug, Clone, Copy)]
pub struct SubspaceOptions {
    pub c1: f64,
    pub c2: f64,
    /// `ε = fd_eps_scale · (1 + ‖x‖) / ‖v‖`.
    pub fd_eps_scale: f64,
    /// Orthogonalize the momentum direction against `v` (the conjugate
    /// variant); when false the momentum direction is used as is.
    pub orthogonalize: bool,
    /// Probe curvature with the exact Hessian when the oracle has one.
    pub exact_hessian: bool,
}

/// Result of one subspace pass: the scaled direction `d = α₃(α₁ v + α₂ s̃)`
/// together with every intermediate quantity.
#[derive(Debug, Clone)]
pub struct SubspaceStep {
    pub v: DVector<f64>,
    pub s: DVector<f64>,
    pub s_tilde: DVector<f64>,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub q_v: f64,
    pub q_s: f64,
    /// `q_d = q_v ‖α₁ v‖² + q_s ‖α₂ s̃‖²`.
    pub q_d: f64,
    pub d: DVector<f64>,
}

/// Momentum direction: the previous direction when it keeps the iterate
/// feasible, otherwise the metric projection of `x + d_prev` pulled back to
/// a direction at `x`.
pub fn momentum_direction(
    problem: &CompositeProblem,
    p: &Preconditioner,
    x: &DVector<f64>,
    d_prev: &DVector<f64>,
) -> Result<DVector<f64>> {
    let trial = x + d_prev;
    if problem.domain_contains(&trial, DEFAULT_FEAS_TOL) {
        Ok(d_prev.clone())
    } else {
        Ok(precond_project(problem, p, &trial)? - x)
    }
}

/// Forward-difference Hessian–vector product
/// `(∇f(x + ε v) − ∇f(x)) / ε`.
pub fn hvp_fd(oracle: &SmoothOracle, x: &DVector<f64>, v: &DVector<f64>, eps: f64) -> DVector<f64> {
    debug_assert!(eps > 0.0);
    let shifted = x + eps * v;
    (oracle.gradient(&shifted) - oracle.gradient(x)) / eps
}

/// Step size for the gradient difference.
pub fn fd_epsilon(scale: f64, x: &DVector<f64>, v: &DVector<f64>) -> f64 {
    scale * (1.0 + x.norm()) / v.norm()
}

/// Safeguarded curvature along `v`: the Rayleigh quotient clamped to
/// `[c1, c2]` under positive curvature, the growth ratio `‖hv‖/‖v‖` under
/// negative curvature, and `c1` when the quotient vanishes.
pub fn curvature(v: &DVector<f64>, hv: &DVector<f64>, c1: f64, c2: f64) -> f64 {
    debug_assert!(0.0 < c1 && c1 <= c2);
    let vhv = v.dot(hv);
    let vv = v.norm_squared();
    debug_assert!(vv > 0.0);
    if vhv > 0.0 {
        (vhv / vv).clamp(c1, c2)
    } else if vhv < 0.0 {
        (hv.norm() / vv.sqrt()).clamp(c1, c2)
    } else {
        c1
    }
}

/// Curvature probe along `v`, exact when requested and available.
pub fn curvature_probe(
    oracle: &SmoothOracle,
    x: &DVector<f64>,
    v: &DVector<f64>,
    opts: &SubspaceOptions,
) -> CurvatureProbe {
    if opts.exact_hessian {
        if let Some(h) = oracle.hessian_exact(x) {
            let hv = &h * v;
            let q = curvature(v, &hv, opts.c1, opts.c2);
            return CurvatureProbe { hv, q, eps_used: 0.0 };
        }
    }
    let eps = fd_epsilon(opts.fd_eps_scale, x, v);
    let hv = hvp_fd(oracle, x, v, eps);
    let q = curvature(v, &hv, opts.c1, opts.c2);
    CurvatureProbe { hv, q, eps_used: eps }
}

/// Gram–Schmidt step in the approximate `H`-inner product:
/// `s̃ = s − (sᵀ H v / (q_v ‖v‖²)) v`, with the safeguarded `q_v ‖v‖²`
/// standing in for `vᵀ H v`. With an exact Hessian and an unclamped
/// quotient this makes `vᵀ H s̃ = 0`.
pub fn conjugate_orthogonalize(
    v: &DVector<f64>,
    s: &DVector<f64>,
    hv: &DVector<f64>,
    q_v: f64,
) -> DVector<f64> {
    let denom = q_v * v.norm_squared();
    debug_assert!(denom > 0.0);
    s - (s.dot(hv) / denom) * v
}

/// Builds the search direction from the prox direction `v` and momentum
/// direction `s`: probe curvature along `v`, orthogonalize `s`, minimize
/// the two decoupled one-dimensional models, then rescale along the
/// combined direction. Degenerate momentum (`‖s̃‖ ≈ 0`) drops the second
/// direction; a vanishing combined direction falls back to the `v`-only
/// step.
pub fn build_direction(
    problem: &CompositeProblem,
    x: &DVector<f64>,
    grad: &DVector<f64>,
    v: &DVector<f64>,
    s: &DVector<f64>,
    opts: &SubspaceOptions,
) -> Result<SubspaceStep> {
    let oracle = problem.smooth();
    let probe_v = curvature_probe(oracle, x, v, opts);
    let q_v = probe_v.q;

    let mut s_tilde = if opts.orthogonalize {
        conjugate_orthogonalize(v, s, &probe_v.hv, q_v)
    } else {
        s.clone()
    };
    // pin the momentum leg to the affine hull of a sum-constrained domain:
    // the one-dimensional solve along s̃ can take large multiples, which
    // would amplify rounding drift in the equality row
    if matches!(problem.nonsmooth(), crate::problem::NonsmoothTerm::SimplexConstraint { .. }) {
        let mean = s_tilde.sum() / s_tilde.len() as f64;
        s_tilde.add_scalar_mut(-mean);
    }
    let degenerate = s_tilde.norm() <= 1e-12 * (1.0 + s.norm());

    let alpha1 = minimize_along_ray(problem, x, v, grad.dot(v), 0.5 * q_v * v.norm_squared())?;

    let (q_s, mut alpha2) = if degenerate {
        (opts.c1, 0.0)
    } else {
        let probe_s = curvature_probe(oracle, x, &s_tilde, opts);
        let a2 = minimize_along_ray(
            problem,
            x,
            &s_tilde,
            grad.dot(&s_tilde),
            0.5 * probe_s.q * s_tilde.norm_squared(),
        )?;
        (probe_s.q, a2)
    };

    let mut d_tilde = alpha1 * v + alpha2 * &s_tilde;
    let mut q_d = q_v * (alpha1 * v).norm_squared() + q_s * (alpha2 * &s_tilde).norm_squared();
    if d_tilde.norm() <= 1e-15 * (alpha1.abs() * v.norm() + alpha2.abs() * s_tilde.norm())
        || q_d <= 0.0
    {
        // cancellation between the two legs: keep the v-leg only
        alpha2 = 0.0;
        d_tilde = alpha1 * v;
        q_d = q_v * d_tilde.norm_squared();
    }

    let alpha3 = if q_d > 0.0 {
        minimize_along_ray(problem, x, &d_tilde, grad.dot(&d_tilde), 0.5 * q_d)?
    } else {
        0.0
    };
    let d = alpha3 * &d_tilde;

    Ok(SubspaceStep {
        v: v.clone(),
        s: s.clone(),
        s_tilde,
        alpha1,
        alpha2,
        alpha3,
        q_v,
        q_s,
        q_d,
        d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{LinearMap, NonsmoothTerm};
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn vec(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    fn opts() -> SubspaceOptions {
        SubspaceOptions {
            c1: 1e-8,
            c2: 1e8,
            fd_eps_scale: f64::EPSILON.sqrt(),
            orthogonalize: true,
            exact_hessian: false,
        }
    }

    #[test]
    fn momentum_keeps_feasible_direction() {
        let f = SmoothOracle::quadratic(DMatrix::identity(2, 2), DVector::zeros(2));
        let problem =
            CompositeProblem::new(f.clone(), LinearMap::identity(2), NonsmoothTerm::l1(1.0))
                .unwrap();
        let p = crate::precond::build_preconditioner(problem.op(), None).unwrap();
        let d_prev = vec(&[1.0, 2.0]);
        let s = momentum_direction(&problem, &p, &DVector::zeros(2), &d_prev).unwrap();
        assert_eq!(s, d_prev);

        let problem =
            CompositeProblem::new(f, LinearMap::identity(2), NonsmoothTerm::simplex()).unwrap();
        let x = vec(&[0.5, 0.5]);
        let p = Preconditioner::for_problem(&problem, &x).unwrap();
        let inside = vec(&[0.1, -0.1]);
        assert_eq!(momentum_direction(&problem, &p, &x, &inside).unwrap(), inside);
    }

    #[test]
    fn momentum_projects_infeasible_trial() {
        let f = SmoothOracle::quadratic(DMatrix::identity(2, 2), DVector::zeros(2));
        let problem =
            CompositeProblem::new(f, LinearMap::identity(2), NonsmoothTerm::simplex()).unwrap();
        let x = vec(&[0.5, 0.5]);
        let p = Preconditioner::for_problem(&problem, &x).unwrap();
        let d_prev = vec(&[1.0, -1.0]);
        let s = momentum_direction(&problem, &p, &x, &d_prev).unwrap();
        let z = &x + &s;
        assert!(problem.domain_contains(&z, 1e-9), "projected point infeasible: {z}");
        // the projection target (1.5, -0.5) clips to the vertex (1, 0)
        assert_relative_eq!(z[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(z[1], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn hvp_exact_on_quadratics() {
        let q = DMatrix::from_diagonal(&vec(&[1.0, 2.0]));
        let f = SmoothOracle::quadratic(q, DVector::zeros(2));
        let x = vec(&[0.3, -0.7]);
        let hv = hvp_fd(&f, &x, &vec(&[1.0, 1.0]), 1e-7);
        assert_relative_eq!(hv[0], 1.0, epsilon = 1e-6);
        assert_relative_eq!(hv[1], 2.0, epsilon = 1e-6);
        let hv = hvp_fd(&f, &x, &vec(&[1.0, 0.0]), 0.05);
        assert_relative_eq!(hv[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(hv[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn hvp_tracks_exact_hessian_of_cubic() {
        let n = 5;
        let q = DMatrix::from_fn(n, n, |i, j| if i == j { 1.5 + i as f64 } else { 0.2 });
        let q = (&q + q.transpose()) * 0.5;
        let f = SmoothOracle::cubic_regularized(q, DVector::zeros(n), 0.7);
        let x = DVector::from_fn(n, |i, _| 0.3 * ((i + 1) as f64).sin());
        let v = DVector::from_fn(n, |i, _| ((i * 2 + 1) as f64).cos());
        let exact = f.hessian_exact(&x).unwrap() * &v;
        let fd = hvp_fd(&f, &x, &v, 1e-6);
        assert!((&fd - &exact).norm() <= 1e-4 * (1.0 + exact.norm()));
    }

    #[test]
    fn curvature_branches() {
        let (c1, c2) = (1e-8, 1e8);
        // positive quotient
        let v = vec(&[1.0, 1.0]);
        let hv = vec(&[2.0, 2.0]);
        assert_relative_eq!(curvature(&v, &hv, c1, c2), 2.0);
        // negative quotient uses the growth ratio
        let v = vec(&[1.0, 0.0]);
        let hv = vec(&[-1.0, 2.0_f64.sqrt() * 2.0]);
        assert_relative_eq!(curvature(&v, &hv, c1, c2), 3.0);
        // exactly orthogonal product falls to c1
        let hv = vec(&[0.0, 5.0]);
        assert_relative_eq!(curvature(&v, &hv, c1, 1e8), c1);
        // clamping
        assert_relative_eq!(curvature(&vec(&[1.0]), &vec(&[1e12]), c1, c2), c2);
    }

    #[test]
    fn orthogonalize_against_exact_hessian() {
        let h = DMatrix::from_diagonal(&vec(&[1.0, 2.0]));
        let v = vec(&[1.0, 0.0]);
        let s = vec(&[1.0, 1.0]);
        let hv = &h * &v;
        let q_v = v.dot(&hv) / v.norm_squared();
        let st = conjugate_orthogonalize(&v, &s, &hv, q_v);
        assert_relative_eq!(st[0], 0.0, epsilon = 1e-14);
        assert_relative_eq!(st[1], 1.0, epsilon = 1e-14);
        assert_relative_eq!(v.dot(&(&h * &st)), 0.0, epsilon = 1e-14);

        // already H-orthogonal momentum is unchanged
        let s_orth = vec(&[0.0, 0.4]);
        let st = conjugate_orthogonalize(&v, &s_orth, &hv, q_v);
        assert!((st - s_orth).amax() < 1e-14);

        // s = v collapses to zero
        let st = conjugate_orthogonalize(&v, &v, &hv, q_v);
        assert!(st.amax() < 1e-14);
    }

    #[test]
    fn direction_solves_unconstrained_newton_model() {
        // g ≡ 0, ∇fᵀv = −2, q_v‖v‖² = 2 → α₁ = 1
        let q = DMatrix::from_diagonal(&vec(&[2.0]));
        let f = SmoothOracle::quadratic(q, DVector::zeros(1));
        let problem = CompositeProblem::unconstrained(f);
        let x = vec(&[1.0]); // grad = 2x = 2
        let grad = problem.eval_gradient(&x).unwrap();
        let v = vec(&[-1.0]);
        let st = build_direction(&problem, &x, &grad, &v, &vec(&[0.0]), &opts()).unwrap();
        assert_relative_eq!(st.alpha1, 1.0, epsilon = 1e-6);
        // x + d reaches the minimizer at 0
        assert_relative_eq!(x[0] + st.d[0], 0.0, epsilon = 1e-6);
    }

    #[test]
    fn direction_matches_dense_two_dimensional_model_on_quadratic() {
        // with exact probes and g ≡ 0 the alternating solves decouple and
        // reproduce the exact minimizer of the restricted model
        let n = 6;
        let q = DMatrix::from_fn(n, n, |i, j| if i == j { (i + 1) as f64 } else { 0.1 });
        let q = (&q + q.transpose()) * 0.5;
        let c = DVector::from_fn(n, |i, _| (i as f64 * 1.3).sin());
        let f = SmoothOracle::quadratic(q.clone(), c);
        let problem = CompositeProblem::unconstrained(f);
        let x = DVector::from_fn(n, |i, _| 0.2 * (i as f64 + 1.0));
        let grad = problem.eval_gradient(&x).unwrap();
        let v = -&grad;
        let s = DVector::from_fn(n, |i, _| ((i * 3 + 1) as f64).cos());

        let mut o = opts();
        o.exact_hessian = true;
        let st = build_direction(&problem, &x, &grad, &v, &s, &o).unwrap();

        // dense 2-D solve oracle: minimize gᵀ(G α) + ½ αᵀ (Gᵀ Q G) α
        let quad = |a: &DVector<f64>, b: &DVector<f64>| a.dot(&(&q * b));
        let (q11, q12, q22) = (quad(&v, &v), quad(&v, &s), quad(&s, &s));
        let det = q11 * q22 - q12 * q12;
        let (b1, b2) = (grad.dot(&v), grad.dot(&s));
        let a1 = (-b1 * q22 + b2 * q12) / det;
        let a2 = (-b2 * q11 + b1 * q12) / det;
        let d_exact = a1 * &v + a2 * &s;
        assert!(
            (&st.d - &d_exact).norm() <= 1e-8 * (1.0 + d_exact.norm()),
            "subspace direction off by {}",
            (&st.d - &d_exact).norm()
        );
        // conjugacy of the orthogonalized basis
        assert!(
            quad(&st.v, &st.s_tilde).abs()
                <= 1e-8 * quad(&v, &v).sqrt() * quad(&st.s_tilde, &st.s_tilde).sqrt()
        );
    }

    #[test]
    fn direction_composition_invariants() {
        let n = 4;
        let q = DMatrix::from_diagonal(&vec(&[4.0, 1.0, 2.0, 0.5]));
        let f = SmoothOracle::quadratic(q, vec(&[0.5, -1.0, 0.2, 0.1]));
        let problem =
            CompositeProblem::new(f, LinearMap::identity(n), NonsmoothTerm::simplex()).unwrap();
        let x = vec(&[0.1, 0.4, 0.3, 0.2]);
        let p = Preconditioner::for_problem(&problem, &x).unwrap();
        let grad = problem.eval_gradient(&x).unwrap();
        let sol = crate::dualprox::prox_direction(&problem, &x, &grad, &p).unwrap();
        let s = vec(&[0.05, -0.05, 0.03, -0.03]);
        let st = build_direction(&problem, &x, &grad, &sol.v, &s, &opts()).unwrap();

        // d = α₃(α₁ v + α₂ s̃) exactly as composed
        let recomposed = st.alpha3 * (st.alpha1 * &st.v + st.alpha2 * &st.s_tilde);
        assert!((&st.d - recomposed).amax() < 1e-14);
        // q_d assembles from the two legs
        let expected_qd = st.q_v * (st.alpha1 * &st.v).norm_squared()
            + st.q_s * (st.alpha2 * &st.s_tilde).norm_squared();
        assert_relative_eq!(st.q_d, expected_qd, epsilon = 1e-14);
        // the step stays feasible
        assert!(problem.domain_contains(&(&x + &st.d), 1e-8));
    }

    #[test]
    fn degenerate_momentum_drops_second_leg() {
        let n = 3;
        let f = SmoothOracle::quadratic(DMatrix::identity(n, n), vec(&[1.0, 0.0, -1.0]));
        let problem = CompositeProblem::unconstrained(f);
        let x = vec(&[0.3, 0.3, 0.3]);
        let grad = problem.eval_gradient(&x).unwrap();
        let v = -&grad;
        // s parallel to v collapses after orthogonalization
        let s = 2.0 * &v;
        let st = build_direction(&problem, &x, &grad, &v, &s, &opts()).unwrap();
        assert_eq!(st.alpha2, 0.0);
        assert!(st.d.norm() > 0.0);
    }
}
