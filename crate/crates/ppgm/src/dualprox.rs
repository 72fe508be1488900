//! The preconditioned proximal subproblem solved through its dual.
//!
//! With the metric chosen so that `A P⁻¹ Aᵀ = D⁻¹`, the dual of
//!
//! ```text
//!   min_v  ∇f(x)ᵀv + g(Ax + Av) + ½‖v‖²_P
//! ```
//!
//! is `min_y ½‖y‖²_{D⁻¹} + g*(y) − aᵀy` with `a = Ax − A P⁻¹ ∇f(x)`, and
//! every supported nonsmooth term has a componentwise closed-form dual
//! minimizer. The primal direction is recovered as
//! `v = −P⁻¹(∇f(x) + Aᵀ y)`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::precond::{DiagScale, Preconditioner, WorkingMatrix, WorkingSetKind};
use crate::problem::{CompositeProblem, LinearMap, NonsmoothTerm};

/// Dual solution together with the recovered primal direction.
#[derive(Debug, Clone)]
pub struct DualSolution {
    /// Dual optimum `y`.
    pub y: DVector<f64>,
    /// Dual linear coefficient `a = Ax − A P⁻¹ ∇f(x)`.
    pub a: DVector<f64>,
    /// Primal direction `v = −P⁻¹(∇f(x) + Aᵀ y)`.
    pub v: DVector<f64>,
}

/// Linear coefficient of the dual problem, `A x − A P⁻¹ grad`.
pub fn dual_coefficient(
    x: &DVector<f64>,
    grad: &DVector<f64>,
    p: &Preconditioner,
    a: &LinearMap,
) -> DVector<f64> {
    a.apply(x) - a.apply(&p.apply_inverse(grad))
}

/// Closed-form minimizer of `½‖y‖²_{D⁻¹} + g*(y) − aᵀy` for each term.
///
/// Simplex-style terms need the working row index fixed by the caller's
/// policy; the ellipsoid term requires a scalar scale (its dual has no
/// componentwise closed form under a general diagonal).
pub fn solve_dual(
    term: &NonsmoothTerm,
    a: &DVector<f64>,
    d: &DiagScale,
    working_index: Option<usize>,
) -> Result<DVector<f64>> {
    if let DiagScale::Diagonal { d: diag, .. } = d {
        if diag.len() < a.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                got: diag.len(),
            });
        }
        if diag.min() <= 0.0 {
            return Err(Error::InvalidParameter(
                "dual scale must have positive entries".into(),
            ));
        }
    }
    let m = a.len();
    match term {
        NonsmoothTerm::Zero => Ok(DVector::zeros(m)),
        NonsmoothTerm::L1 { lambda } => Ok(DVector::from_fn(m, |i, _| {
            (d.entry(i) * a[i]).clamp(-lambda, *lambda)
        })),
        NonsmoothTerm::EllipsoidIndicator { bound } => {
            let alpha = match d {
                DiagScale::Scalar(alpha) => *alpha,
                DiagScale::Diagonal { .. } => {
                    return Err(Error::Unsupported(
                        "ellipsoid dual requires a scalar scale".into(),
                    ))
                }
            };
            let radius = 1.0 / bound.sqrt();
            let p = a * alpha;
            let norm = p.norm();
            if norm <= radius {
                Ok(p)
            } else {
                Ok(p * (radius / norm))
            }
        }
        NonsmoothTerm::SimplexConstraint { .. } => {
            let i = required_index(working_index, m)?;
            Ok(DVector::from_fn(m, |j, _| {
                if j == i {
                    d.entry(j) * (a[j] - 1.0)
                } else {
                    d.entry(j) * a[j].max(0.0)
                }
            }))
        }
        NonsmoothTerm::CappedSimplex { cap, .. } => {
            let i = required_index(working_index, m)?;
            Ok(DVector::from_fn(m, |j, _| {
                if j == i {
                    d.entry(j) * (a[j] - cap).max(0.0)
                } else {
                    // residual of clipping a_j to [0, 1]
                    d.entry(j) * (a[j] - a[j].clamp(0.0, 1.0))
                }
            }))
        }
        NonsmoothTerm::GenericWorkingSet { upper, equality } => {
            if upper.len() + equality.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: upper.len() + equality.len(),
                });
            }
            let p = upper.len();
            Ok(DVector::from_fn(m, |j, _| {
                if j < p {
                    d.entry(j) * (a[j] - upper[j]).max(0.0)
                } else {
                    d.entry(j) * (a[j] - equality[j - p])
                }
            }))
        }
    }
}

fn required_index(working_index: Option<usize>, m: usize) -> Result<usize> {
    match working_index {
        Some(i) if i < m => Ok(i),
        Some(i) => Err(Error::InvalidParameter(format!(
            "working index {i} out of range for dimension {m}"
        ))),
        None => Err(Error::InvalidParameter(
            "simplex-style dual solve needs a working index".into(),
        )),
    }
}

/// Solves the preconditioned proximal subproblem at `x`, returning the dual
/// optimum and the direction `v`.
///
/// For simplex-style terms the preconditioner must carry the matching
/// working metric (see [`Preconditioner::for_problem`]); the rank-one
/// inverse forms are used throughout, never a dense solve.
pub fn prox_direction(
    problem: &CompositeProblem,
    x: &DVector<f64>,
    grad: &DVector<f64>,
    p: &Preconditioner,
) -> Result<DualSolution> {
    match problem.nonsmooth() {
        NonsmoothTerm::SimplexConstraint { .. } | NonsmoothTerm::CappedSimplex { .. } => {
            let wm = matching_working_matrix(problem, p)?;
            let d = p.dual_scale();
            // a = A_k x − D⁻¹ A_k⁻ᵀ grad
            let ig = wm.apply_inverse_transpose(grad);
            let mut a = wm.apply(x);
            for j in 0..a.len() {
                a[j] -= ig[j] / d.entry(j);
            }
            let y = solve_dual(problem.nonsmooth(), &a, &d, Some(wm.index))?;
            // recover the direction through the dual image z = A_k x̃:
            // componentwise a_j − [a_j]₊ etc. is exact in floating point, so
            // coordinates landing on their bounds come out exactly on them
            // (the equivalent form −A_k⁻¹ D⁻¹(A_k⁻ᵀ grad + y) leaves
            // rounding residue that poisons later ratio tests)
            let mut z = a.clone();
            for j in 0..z.len() {
                z[j] -= y[j] / d.entry(j);
            }
            let v = wm.apply_inverse(&z) - x;
            Ok(DualSolution { y, a, v })
        }
        term => {
            let op = problem.op();
            let a = dual_coefficient(x, grad, p, op);
            let y = solve_dual(term, &a, &p.dual_scale(), None)?;
            let v = -p.apply_inverse(&(grad + op.apply_transpose(&y)));
            Ok(DualSolution { y, a, v })
        }
    }
}

fn matching_working_matrix(
    problem: &CompositeProblem,
    p: &Preconditioner,
) -> Result<WorkingMatrix> {
    let wm = p.working_matrix().ok_or_else(|| {
        Error::InvalidParameter(
            "simplex-style terms require a working-set preconditioner".into(),
        )
    })?;
    let expected = match problem.nonsmooth() {
        NonsmoothTerm::SimplexConstraint { .. } => WorkingSetKind::Simplex,
        NonsmoothTerm::CappedSimplex { .. } => WorkingSetKind::CappedSimplex,
        _ => unreachable!(),
    };
    if wm.kind != expected || wm.dim != problem.dim() {
        return Err(Error::InvalidParameter(
            "preconditioner working metric does not match the nonsmooth term".into(),
        ));
    }
    Ok(wm)
}

/// Metric projection `argmin_{w ∈ dom(g∘A)} ‖w − z‖_P`, realized as the
/// prox direction with a zero gradient based at `z`. Full-domain terms map
/// `z` to itself.
pub fn precond_project(
    problem: &CompositeProblem,
    p: &Preconditioner,
    z: &DVector<f64>,
) -> Result<DVector<f64>> {
    if problem.nonsmooth().has_full_domain() {
        return Ok(z.clone());
    }
    let zero = DVector::zeros(z.len());
    let sol = prox_direction(problem, z, &zero, p)?;
    Ok(z + sol.v)
}
