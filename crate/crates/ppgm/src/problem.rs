//! Composite problem data: `F(x) = f(x) + g(Ax)` with a smooth oracle `f`,
//! a dense linear operator `A`, and a structured nonsmooth term `g`.
//!
//! All problem data is immutable after construction, so a problem can be
//! shared by concurrent solver runs.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default absolute tolerance for testing membership in `dom(g ∘ A)`.
///
/// Sits below the perturbation scale of the line search and above the
/// rounding drift accumulated by iterate updates.
pub const DEFAULT_FEAS_TOL: f64 = 1e-10;

/// Relative threshold on singular values used to classify the rank of an
/// operator. A singular value counts as nonzero when it exceeds
/// `RANK_TOL * sigma_max`.
pub const RANK_TOL: f64 = 1e-12;

/// Rank classification of a dense operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RankClass {
    /// rank(A) = n (columns independent, m >= n).
    FullColumn,
    /// rank(A) = m < n (rows independent, wide).
    FullRow,
}

/// Dense linear operator with cached SVD factors `A = U Λ Vᵀ`.
///
/// `U` is m×m orthogonal, `V` is n×n orthogonal and `sigma` holds the
/// min(m, n) singular values in nonincreasing order. The factors are
/// computed once at construction; the identity operator takes a trivial
/// fast path so that problems with `A = I` reuse the same machinery.
#[derive(Debug, Clone)]
pub struct LinearMap {
    rows: usize,
    cols: usize,
    entries: DMatrix<f64>,
    svd_u: DMatrix<f64>,
    svd_sigma: DVector<f64>,
    svd_v: DMatrix<f64>,
    rank_class: RankClass,
    identity: bool,
}

impl LinearMap {
    /// Builds the operator and its SVD factors.
    ///
    /// Fails with [`Error::RankDeficient`] when the matrix is neither full
    /// column rank nor full row rank, and with [`Error::SvdFailure`] when
    /// the decomposition does not converge.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = entries.shape();
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter("operator must be nonempty".into()));
        }
        if Self::is_identity_matrix(&entries) {
            return Ok(Self::identity_with_entries(rows, entries));
        }

        let svd = entries
            .clone()
            .try_svd(true, true, f64::EPSILON, 0)
            .ok_or(Error::SvdFailure)?;
        let sigma = svd.singular_values.clone();
        let u_thin = svd.u.ok_or(Error::SvdFailure)?;
        let v_thin = svd.v_t.ok_or(Error::SvdFailure)?.transpose();

        let sigma_max = sigma.max();
        let thresh = RANK_TOL * sigma_max;
        let rank = sigma.iter().filter(|s| **s > thresh).count();
        let rank_class = if rank == cols {
            RankClass::FullColumn
        } else if rank == rows && rows < cols {
            RankClass::FullRow
        } else {
            return Err(Error::RankDeficient);
        };

        let svd_u = complete_orthogonal(u_thin);
        let svd_v = complete_orthogonal(v_thin);

        let map = Self {
            rows,
            cols,
            entries,
            svd_u,
            svd_sigma: sigma,
            svd_v,
            rank_class,
            identity: false,
        };
        map.check_reconstruction()?;
        Ok(map)
    }

    /// Identity operator with trivial SVD factors.
    pub fn identity(n: usize) -> Self {
        Self::identity_with_entries(n, DMatrix::identity(n, n))
    }

    fn identity_with_entries(n: usize, entries: DMatrix<f64>) -> Self {
        Self {
            rows: n,
            cols: n,
            entries,
            svd_u: DMatrix::identity(n, n),
            svd_sigma: DVector::repeat(n, 1.0),
            svd_v: DMatrix::identity(n, n),
            rank_class: RankClass::FullColumn,
            identity: true,
        }
    }

    fn is_identity_matrix(m: &DMatrix<f64>) -> bool {
        if !m.is_square() {
            return false;
        }
        m.row_iter().enumerate().all(|(i, row)| {
            row.iter()
                .enumerate()
                .all(|(j, &v)| v == if i == j { 1.0 } else { 0.0 })
        })
    }

    fn check_reconstruction(&self) -> Result<()> {
        let k = self.svd_sigma.len();
        let mut rec = DMatrix::zeros(self.rows, self.cols);
        for i in 0..k {
            let ui = self.svd_u.column(i);
            let vi = self.svd_v.column(i);
            rec += self.svd_sigma[i] * ui * vi.transpose();
        }
        let scale = 1.0 + self.entries.amax();
        if (&rec - &self.entries).amax() <= 1e-10 * scale {
            Ok(())
        } else {
            Err(Error::SvdFailure)
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn svd_u(&self) -> &DMatrix<f64> {
        &self.svd_u
    }

    pub fn svd_sigma(&self) -> &DVector<f64> {
        &self.svd_sigma
    }

    pub fn svd_v(&self) -> &DMatrix<f64> {
        &self.svd_v
    }

    pub fn rank_class(&self) -> RankClass {
        self.rank_class
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    /// Largest singular value.
    pub fn sigma_max(&self) -> f64 {
        self.svd_sigma[0]
    }

    /// `A x`
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        if self.identity {
            x.clone()
        } else {
            &self.entries * x
        }
    }

    /// `Aᵀ y`
    pub fn apply_transpose(&self, y: &DVector<f64>) -> DVector<f64> {
        if self.identity {
            y.clone()
        } else {
            self.entries.tr_mul(y)
        }
    }
}

/// Extends a matrix with `k` orthonormal columns to a square orthogonal
/// matrix whose leading columns are unchanged.
fn complete_orthogonal(thin: DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = thin.shape();
    if rows == cols {
        return thin;
    }
    let qr = thin.clone().qr();
    let mut full = DMatrix::identity(rows, rows);
    qr.q_tr_mul(&mut full);
    let mut full = full.transpose();
    // Householder Q may flip signs of the leading columns; restore the
    // originals (the trailing complement stays orthogonal either way).
    full.view_mut((0, 0), (rows, cols)).copy_from(&thin);
    full
}

type ValueFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;
type GradFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type HessFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// Evaluable smooth part `f` with gradient and optional exact Hessian.
///
/// The Hessian is used by exact-probe test modes and diagnostics only; the
/// solver path relies on gradient differences.
pub struct SmoothOracle {
    dim: usize,
    value_fn: Arc<ValueFn>,
    grad_fn: Arc<GradFn>,
    hess_fn: Option<Arc<HessFn>>,
    lipschitz_hint: Option<f64>,
}

impl std::fmt::Debug for SmoothOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SmoothOracle")
            .field("dim", &self.dim)
            .field("has_hessian", &self.hess_fn.is_some())
            .field("lipschitz_hint", &self.lipschitz_hint)
            .finish()
    }
}

impl Clone for SmoothOracle {
    fn clone(&self) -> Self {
        Self {
            dim: self.dim,
            value_fn: Arc::clone(&self.value_fn),
            grad_fn: Arc::clone(&self.grad_fn),
            hess_fn: self.hess_fn.as_ref().map(Arc::clone),
            lipschitz_hint: self.lipschitz_hint,
        }
    }
}

impl SmoothOracle {
    pub fn new<V, G>(dim: usize, value: V, gradient: G) -> Self
    where
        V: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            dim,
            value_fn: Arc::new(value),
            grad_fn: Arc::new(gradient),
            hess_fn: None,
            lipschitz_hint: None,
        }
    }

    pub fn with_hessian<H>(mut self, hessian: H) -> Self
    where
        H: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.hess_fn = Some(Arc::new(hessian));
        self
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz_hint = Some(l);
        self
    }

    /// Quadratic `f(x) = ½ xᵀ Q x + cᵀ x` with exact Hessian `Q`.
    pub fn quadratic(q: DMatrix<f64>, c: DVector<f64>) -> Self {
        assert_eq!(q.nrows(), q.ncols());
        assert_eq!(q.nrows(), c.len());
        let dim = c.len();
        let q = Arc::new(q);
        let c = Arc::new(c);
        let (qv, qg, qh) = (Arc::clone(&q), Arc::clone(&q), Arc::clone(&q));
        let (cv, cg) = (Arc::clone(&c), Arc::clone(&c));
        Self::new(
            dim,
            move |x: &DVector<f64>| 0.5 * x.dot(&(&*qv * x)) + cv.dot(x),
            move |x: &DVector<f64>| &*qg * x + &*cg,
        )
        .with_hessian(move |_| (*qh).clone())
    }

    /// Least squares `f(x) = ½ ‖A x − b‖²`, evaluated through the normal
    /// matrix `AᵀA` so that repeated evaluations cost O(n²) regardless of
    /// the number of rows.
    pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Self {
        assert_eq!(a.nrows(), b.len());
        let dim = a.ncols();
        let gram = Arc::new(a.tr_mul(a));
        let atb = Arc::new(a.tr_mul(b));
        let btb = b.dot(b);
        let (gv, gg, gh) = (Arc::clone(&gram), Arc::clone(&gram), Arc::clone(&gram));
        let (av, ag) = (Arc::clone(&atb), Arc::clone(&atb));
        Self::new(
            dim,
            move |x: &DVector<f64>| 0.5 * x.dot(&(&*gv * x)) - av.dot(x) + 0.5 * btb,
            move |x: &DVector<f64>| &*gg * x - &*ag,
        )
        .with_hessian(move |_| (*gh).clone())
    }

    /// `f(x) = ½ xᵀ Q x + cᵀ x + (ρ/3) ‖x‖³`; a smooth nonquadratic test
    /// objective with a closed-form Hessian.
    pub fn cubic_regularized(q: DMatrix<f64>, c: DVector<f64>, rho: f64) -> Self {
        assert_eq!(q.nrows(), q.ncols());
        assert_eq!(q.nrows(), c.len());
        let dim = c.len();
        let q = Arc::new(q);
        let c = Arc::new(c);
        let (qv, qg, qh) = (Arc::clone(&q), Arc::clone(&q), Arc::clone(&q));
        let (cv, cg) = (Arc::clone(&c), Arc::clone(&c));
        Self::new(
            dim,
            move |x: &DVector<f64>| {
                0.5 * x.dot(&(&*qv * x)) + cv.dot(x) + rho / 3.0 * x.norm().powi(3)
            },
            move |x: &DVector<f64>| &*qg * x + &*cg + rho * x.norm() * x,
        )
        .with_hessian(move |x| {
            let n = x.norm();
            let mut h = (*qh).clone();
            if n > 0.0 {
                h += rho * (n * DMatrix::identity(x.len(), x.len()) + x * x.transpose() / n);
            }
            h
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        (self.value_fn)(x)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.grad_fn)(x)
    }

    pub fn hessian_exact(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.hess_fn.as_ref().map(|h| h(x))
    }

    pub fn has_hessian(&self) -> bool {
        self.hess_fn.is_some()
    }

    pub fn lipschitz_hint(&self) -> Option<f64> {
        self.lipschitz_hint
    }
}

/// Rule for picking the working row index of simplex-style constraint
/// encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WorkingIndexPolicy {
    /// Pick `argmax_i x_i`, the coordinate least likely to sit at its lower
    /// bound. Ties resolve to the smallest index.
    LargestCoordinate,
    /// Always use the given index (mostly for tests).
    Fixed(usize),
}

impl WorkingIndexPolicy {
    pub fn select(&self, x: &DVector<f64>) -> usize {
        match self {
            WorkingIndexPolicy::LargestCoordinate => {
                let mut best = 0;
                for i in 1..x.len() {
                    if x[i] > x[best] {
                        best = i;
                    }
                }
                best
            }
            WorkingIndexPolicy::Fixed(i) => *i,
        }
    }
}

/// Structured nonsmooth term `g`.
///
/// The variants cover the closed-form dual updates implemented in
/// [`crate::dualprox`]: an ℓ₁ norm, two ball/box indicators encoded through
/// working matrices, a Euclidean-ball indicator, a caller-supplied working
/// set, and the zero function for purely smooth problems.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum NonsmoothTerm {
    /// `g = 0` (smooth problem).
    Zero,
    /// `g(z) = λ ‖z‖₁` with `λ > 0`; full domain.
    L1 { lambda: f64 },
    /// Indicator of the Euclidean ball `‖z‖₂² ≤ bound`.
    EllipsoidIndicator { bound: f64 },
    /// Indicator of the unit simplex `Δ_n`, handled through a rank-one
    /// working matrix; requires `A = I`.
    SimplexConstraint { policy: WorkingIndexPolicy },
    /// Indicator of `{0 ⪯ x ⪯ 1, 1ᵀx ≤ cap}`; requires `A = I`.
    CappedSimplex { cap: f64, policy: WorkingIndexPolicy },
    /// Caller-supplied working set: the operator rows split into `upper.len()`
    /// inequality rows `(Ax)_i ≤ upper_i` followed by `equality.len()` rows
    /// `(Ax)_j = equality_j`.
    GenericWorkingSet {
        upper: DVector<f64>,
        equality: DVector<f64>,
    },
}

impl NonsmoothTerm {
    pub fn l1(lambda: f64) -> Self {
        NonsmoothTerm::L1 { lambda }
    }

    pub fn ellipsoid(bound: f64) -> Self {
        NonsmoothTerm::EllipsoidIndicator { bound }
    }

    pub fn simplex() -> Self {
        NonsmoothTerm::SimplexConstraint {
            policy: WorkingIndexPolicy::LargestCoordinate,
        }
    }

    pub fn capped_simplex(cap: f64) -> Self {
        NonsmoothTerm::CappedSimplex {
            cap,
            policy: WorkingIndexPolicy::LargestCoordinate,
        }
    }

    /// Whether `g` is an indicator function (finite values are exactly 0).
    pub fn is_indicator(&self) -> bool {
        matches!(
            self,
            NonsmoothTerm::EllipsoidIndicator { .. }
                | NonsmoothTerm::SimplexConstraint { .. }
                | NonsmoothTerm::CappedSimplex { .. }
                | NonsmoothTerm::GenericWorkingSet { .. }
        )
    }

    /// Whether `dom g` is the whole space.
    pub fn has_full_domain(&self) -> bool {
        matches!(self, NonsmoothTerm::Zero | NonsmoothTerm::L1 { .. })
    }

    fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        match self {
            NonsmoothTerm::Zero => Ok(()),
            NonsmoothTerm::L1 { lambda } => positive(*lambda, "lambda"),
            NonsmoothTerm::EllipsoidIndicator { bound } => positive(*bound, "bound"),
            NonsmoothTerm::SimplexConstraint { .. } => Ok(()),
            NonsmoothTerm::CappedSimplex { cap, .. } => positive(*cap, "cap"),
            NonsmoothTerm::GenericWorkingSet { upper, equality } => {
                if upper.len() + equality.len() == 0 {
                    Err(Error::InvalidParameter("working set has no rows".into()))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// The composite problem `F(x) = f(x) + g(Ax)`.
#[derive(Debug, Clone)]
pub struct CompositeProblem {
    smooth: SmoothOracle,
    op: LinearMap,
    nonsmooth: NonsmoothTerm,
}

impl CompositeProblem {
    pub fn new(smooth: SmoothOracle, op: LinearMap, nonsmooth: NonsmoothTerm) -> Result<Self> {
        if op.cols() != smooth.dim() {
            return Err(Error::DimensionMismatch {
                expected: smooth.dim(),
                got: op.cols(),
            });
        }
        nonsmooth.validate()?;
        match &nonsmooth {
            NonsmoothTerm::SimplexConstraint { .. } | NonsmoothTerm::CappedSimplex { .. } => {
                if !op.is_identity() {
                    return Err(Error::Unsupported(
                        "simplex-style constraints require the identity operator".into(),
                    ));
                }
            }
            NonsmoothTerm::GenericWorkingSet { upper, equality } => {
                if upper.len() + equality.len() != op.rows() {
                    return Err(Error::DimensionMismatch {
                        expected: op.rows(),
                        got: upper.len() + equality.len(),
                    });
                }
            }
            _ => {}
        }
        Ok(Self { smooth, op, nonsmooth })
    }

    /// Smooth problem `min f(x)` over the whole space.
    pub fn unconstrained(smooth: SmoothOracle) -> Self {
        let n = smooth.dim();
        Self {
            smooth,
            op: LinearMap::identity(n),
            nonsmooth: NonsmoothTerm::Zero,
        }
    }

    pub fn smooth(&self) -> &SmoothOracle {
        &self.smooth
    }

    pub fn op(&self) -> &LinearMap {
        &self.op
    }

    pub fn nonsmooth(&self) -> &NonsmoothTerm {
        &self.nonsmooth
    }

    pub fn dim(&self) -> usize {
        self.smooth.dim()
    }

    /// `F(x) = f(x) + g(Ax)`; `+∞` when `Ax` is outside `dom g`.
    pub fn eval_objective(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.smooth.value(x) + self.nonsmooth_value(x))
    }

    /// `∇f(x)`.
    pub fn eval_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        Ok(self.smooth.gradient(x))
    }

    /// `g(Ax)` with the default feasibility tolerance; `+∞` outside the
    /// domain of an indicator variant.
    pub fn nonsmooth_value(&self, x: &DVector<f64>) -> f64 {
        match &self.nonsmooth {
            NonsmoothTerm::Zero => 0.0,
            NonsmoothTerm::L1 { lambda } => lambda * self.op.apply(x).abs().sum(),
            _ => {
                if self.domain_contains(x, DEFAULT_FEAS_TOL) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Indicator value of the working encoding for simplex-style terms:
    /// like [`Self::nonsmooth_value`] but with the constraint row replaced
    /// by the working index `i` relaxed, matching the domain of the dual
    /// subproblem at that index. Other terms fall back to the plain value.
    pub fn nonsmooth_value_working(&self, x: &DVector<f64>, working_index: usize) -> f64 {
        let tol = DEFAULT_FEAS_TOL;
        match &self.nonsmooth {
            NonsmoothTerm::SimplexConstraint { .. } => {
                let ok = x
                    .iter()
                    .enumerate()
                    .all(|(j, &v)| j == working_index || v >= -tol)
                    && (x.sum() - 1.0).abs() <= tol;
                if ok {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            NonsmoothTerm::CappedSimplex { cap, .. } => {
                let ok = x
                    .iter()
                    .enumerate()
                    .all(|(j, &v)| j == working_index || (v >= -tol && v <= 1.0 + tol))
                    && x.sum() <= cap + tol;
                if ok {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            _ => self.nonsmooth_value(x),
        }
    }

    /// Tests `Ax ∈ dom g` within `tol`: componentwise for box constraints,
    /// absolute for equalities, ℓ₂ slack for balls. Always true for the
    /// full-domain variants.
    pub fn domain_contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        debug_assert!(tol >= 0.0);
        match &self.nonsmooth {
            NonsmoothTerm::Zero | NonsmoothTerm::L1 { .. } => true,
            NonsmoothTerm::EllipsoidIndicator { bound } => {
                self.op.apply(x).norm() <= bound.sqrt() + tol
            }
            NonsmoothTerm::SimplexConstraint { .. } => {
                x.iter().all(|&v| v >= -tol) && (x.sum() - 1.0).abs() <= tol
            }
            NonsmoothTerm::CappedSimplex { cap, .. } => {
                x.iter().all(|&v| v >= -tol && v <= 1.0 + tol) && x.sum() <= cap + tol
            }
            NonsmoothTerm::GenericWorkingSet { upper, equality } => {
                let z = self.op.apply(x);
                let p = upper.len();
                (0..p).all(|i| z[i] <= upper[i] + tol)
                    && (0..equality.len()).all(|j| (z[p + j] - equality[j]).abs() <= tol)
            }
        }
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            })
        } else {
            Ok(())
        }
    }
}

/// Serializable description of a problem instance: dimensions, nonsmooth
/// variant with its parameters, and the RNG seed that generated the data.
/// Together with the generator family this reproduces the instance exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemDescriptor {
    pub rows: usize,
    pub cols: usize,
    pub term: NonsmoothTerm,
    pub seed: Option<u64>,
}

impl CompositeProblem {
    pub fn descriptor(&self, seed: Option<u64>) -> ProblemDescriptor {
        ProblemDescriptor {
            rows: self.op.rows(),
            cols: self.op.cols(),
            term: self.nonsmooth.clone(),
            seed,
        }
    }
}
