//! Structure-exploiting preconditioner `P = Mᵀ D M` built from the SVD of
//! the operator so that `A P⁻¹ Aᵀ` is the (inverse of the) diagonal scale.
//!
//! Three metric structures are supported:
//! * the identity (for problems with `A = I`),
//! * a spectral factorization `P₁ = V_eff diag(s) V_effᵀ` assembled from the
//!   operator's singular vectors and an SPD completion block on the null
//!   space of a wide operator,
//! * rank-one working matrices for simplex-style constraint encodings,
//!   applied through their closed-form inverses.
//!
//! Preconditioners are immutable; rescaling returns a new value sharing the
//! factored metric.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::{CompositeProblem, LinearMap, NonsmoothTerm, RankClass};

/// Default clipping range for the Barzilai–Borwein scale.
pub const DEFAULT_BB_CLIP: (f64, f64) = (1e-8, 1e8);

/// Simplex-style working matrix family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkingSetKind {
    /// `A_k = -I + e_i (1 + e_i)ᵀ`; encodes `x_j ≥ 0 (j ≠ i)`, `1ᵀx = 1`.
    Simplex,
    /// `A_k = I + e_i (1 - e_i)ᵀ`; encodes `0 ≤ x_j ≤ 1 (j ≠ i)`, `1ᵀx ≤ s`.
    CappedSimplex,
}

/// Rank-one working matrix with closed-form inverse; all applications are
/// O(n).
#[derive(Debug, Clone, Copy)]
pub struct WorkingMatrix {
    pub kind: WorkingSetKind,
    pub index: usize,
    pub dim: usize,
}

impl WorkingMatrix {
    pub fn new(kind: WorkingSetKind, index: usize, dim: usize) -> Self {
        assert!(index < dim);
        Self { kind, index, dim }
    }

    /// `A_k x`
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let sum = x.sum();
        let mut out = match self.kind {
            WorkingSetKind::Simplex => -x,
            WorkingSetKind::CappedSimplex => x.clone(),
        };
        out[self.index] = sum;
        out
    }

    /// `A_kᵀ y`
    pub fn apply_transpose(&self, y: &DVector<f64>) -> DVector<f64> {
        let yi = y[self.index];
        let mut out = match self.kind {
            WorkingSetKind::Simplex => {
                let mut o = -y;
                o.add_scalar_mut(yi);
                o
            }
            WorkingSetKind::CappedSimplex => {
                let mut o = y.clone();
                o.add_scalar_mut(yi);
                o
            }
        };
        out[self.index] = yi;
        out
    }

    /// `A_k⁻¹ x` via the Sherman–Morrison form (the simplex matrix is an
    /// involution; the capped one flips the sign of its rank-one part).
    pub fn apply_inverse(&self, x: &DVector<f64>) -> DVector<f64> {
        match self.kind {
            WorkingSetKind::Simplex => self.apply(x),
            WorkingSetKind::CappedSimplex => {
                let mut out = x.clone();
                out[self.index] = 2.0 * x[self.index] - x.sum();
                out
            }
        }
    }

    /// `A_k⁻ᵀ y`
    pub fn apply_inverse_transpose(&self, y: &DVector<f64>) -> DVector<f64> {
        match self.kind {
            WorkingSetKind::Simplex => self.apply_transpose(y),
            WorkingSetKind::CappedSimplex => {
                let yi = y[self.index];
                let mut out = y.clone();
                out.add_scalar_mut(-yi);
                out[self.index] = yi;
                out
            }
        }
    }

    /// Extreme eigenvalues of `A_kᵀ A_k`. Independent of the working index
    /// (index choices are permutation-similar): the spectrum is `1` with
    /// multiplicity n−2 plus the two roots of `λ² − (n+1)λ + 1`.
    pub fn gram_spectrum_bounds(&self) -> (f64, f64) {
        let n = self.dim as f64;
        if self.dim == 1 {
            return (1.0, 1.0);
        }
        let tr = n + 1.0;
        let disc = (tr * tr - 4.0).sqrt();
        (0.5 * (tr - disc), 0.5 * (tr + disc))
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let mut m = match self.kind {
            WorkingSetKind::Simplex => -DMatrix::identity(self.dim, self.dim),
            WorkingSetKind::CappedSimplex => DMatrix::identity(self.dim, self.dim),
        };
        for j in 0..self.dim {
            m[(self.index, j)] = 1.0;
        }
        m
    }
}

/// Diagonal scale `D` of the metric `P = Mᵀ D M`; the scalar form is the
/// Barzilai–Borwein rescaled configuration used by the solver.
#[derive(Debug, Clone)]
pub enum DiagScale {
    Scalar(f64),
    /// Entries with the bounds `[lo, hi]` they are known to satisfy.
    Diagonal { d: DVector<f64>, lo: f64, hi: f64 },
}

impl DiagScale {
    pub fn diagonal(d: DVector<f64>) -> Result<Self> {
        let lo = d.min();
        let hi = d.max();
        if lo <= 0.0 || !hi.is_finite() {
            return Err(Error::InvalidParameter(
                "diagonal scale requires positive finite entries".into(),
            ));
        }
        Ok(DiagScale::Diagonal { d, lo, hi })
    }

    pub fn bounds(&self) -> (f64, f64) {
        match self {
            DiagScale::Scalar(a) => (*a, *a),
            DiagScale::Diagonal { lo, hi, .. } => (*lo, *hi),
        }
    }

    pub fn entry(&self, i: usize) -> f64 {
        match self {
            DiagScale::Scalar(a) => *a,
            DiagScale::Diagonal { d, .. } => d[i],
        }
    }

    fn mul_in_place(&self, v: &mut DVector<f64>) {
        match self {
            DiagScale::Scalar(a) => *v *= *a,
            DiagScale::Diagonal { d, .. } => v.component_mul_assign(d),
        }
    }

    fn div_in_place(&self, v: &mut DVector<f64>) {
        match self {
            DiagScale::Scalar(a) => *v /= *a,
            DiagScale::Diagonal { d, .. } => v.component_div_assign(d),
        }
    }
}

/// Factored unit-scale metric `P₁ = Mᵀ M`.
#[derive(Debug)]
enum Metric {
    Identity {
        dim: usize,
    },
    /// `P₁ = basis · diag(spectrum) · basisᵀ` with orthogonal `basis`;
    /// `left` is the square orthogonal left factor of `M` when one exists
    /// (needed only for non-scalar diagonal scales).
    Spectral {
        basis: DMatrix<f64>,
        spectrum: DVector<f64>,
        left: Option<DMatrix<f64>>,
    },
    WorkingSet(WorkingMatrix),
}

impl Metric {
    fn dim(&self) -> usize {
        match self {
            Metric::Identity { dim } => *dim,
            Metric::Spectral { basis, .. } => basis.nrows(),
            Metric::WorkingSet(w) => w.dim,
        }
    }

    /// Extreme eigenvalues of `P₁`.
    fn spectrum_bounds(&self) -> (f64, f64) {
        match self {
            Metric::Identity { .. } => (1.0, 1.0),
            Metric::Spectral { spectrum, .. } => (spectrum.min(), spectrum.max()),
            Metric::WorkingSet(w) => w.gram_spectrum_bounds(),
        }
    }
}

/// The preconditioner `P = Mᵀ D M`, symmetric positive definite with
/// `c₃ I ⪯ P ⪯ c₄ I` for the bounds reported by [`Preconditioner::bounds`].
#[derive(Debug, Clone)]
pub struct Preconditioner {
    metric: Arc<Metric>,
    scale: DiagScale,
}

/// Builds the unit-scale preconditioner for an operator: `P = AᵀA` for a
/// full-column-rank operator, and `P = AᵀA + V blkdiag(0, P̃) Vᵀ` with an
/// SPD completion block `P̃` (identity by default) for a full-row-rank one.
/// Either way `A P⁻¹ Aᵀ = I` holds at unit scale.
pub fn build_preconditioner(a: &LinearMap, tilde_p: Option<&DMatrix<f64>>) -> Result<Preconditioner> {
    Preconditioner::from_operator(a, tilde_p)
}

impl Preconditioner {
    pub fn from_operator(a: &LinearMap, tilde_p: Option<&DMatrix<f64>>) -> Result<Self> {
        if a.is_identity() && tilde_p.is_none() {
            return Ok(Self {
                metric: Arc::new(Metric::Identity { dim: a.cols() }),
                scale: DiagScale::Scalar(1.0),
            });
        }
        let (m, n) = (a.rows(), a.cols());
        let k = a.svd_sigma().len();
        let metric = match a.rank_class() {
            RankClass::FullColumn => {
                if tilde_p.is_some() {
                    return Err(Error::InvalidParameter(
                        "completion block only applies to full-row-rank operators".into(),
                    ));
                }
                let spectrum = DVector::from_fn(n, |i, _| {
                    let s = a.svd_sigma()[i];
                    s * s
                });
                let left = if m == n { Some(a.svd_u().clone()) } else { None };
                Metric::Spectral {
                    basis: a.svd_v().clone(),
                    spectrum,
                    left,
                }
            }
            RankClass::FullRow => {
                debug_assert_eq!(k, m);
                let mut spectrum = DVector::zeros(n);
                for i in 0..m {
                    spectrum[i] = a.svd_sigma()[i] * a.svd_sigma()[i];
                }
                let mut basis = a.svd_v().clone();
                let mut left_blocks = (a.svd_u().clone(), DMatrix::identity(n - m, n - m));
                match tilde_p {
                    None => {
                        for i in m..n {
                            spectrum[i] = 1.0;
                        }
                    }
                    Some(p) => {
                        if p.nrows() != n - m || p.ncols() != n - m {
                            return Err(Error::DimensionMismatch {
                                expected: n - m,
                                got: p.nrows(),
                            });
                        }
                        // eigendecompose the completion block so the whole
                        // metric stays in diagonal form
                        let eig = p.clone().symmetric_eigen();
                        if eig.eigenvalues.min() <= 0.0 {
                            return Err(Error::InvalidParameter(
                                "completion block must be positive definite".into(),
                            ));
                        }
                        for i in m..n {
                            spectrum[i] = eig.eigenvalues[i - m];
                        }
                        let null_cols = basis.columns(m, n - m) * &eig.eigenvectors;
                        basis.columns_mut(m, n - m).copy_from(&null_cols);
                        left_blocks.1 = eig.eigenvectors;
                    }
                }
                let mut left = DMatrix::zeros(n, n);
                left.view_mut((0, 0), (m, m)).copy_from(&left_blocks.0);
                left.view_mut((m, m), (n - m, n - m)).copy_from(&left_blocks.1);
                Metric::Spectral {
                    basis,
                    spectrum,
                    left: Some(left),
                }
            }
        };
        Ok(Self {
            metric: Arc::new(metric),
            scale: DiagScale::Scalar(1.0),
        })
    }

    /// Unit-scale rank-one working metric `P = A_kᵀ A_k`.
    pub fn working_set(kind: WorkingSetKind, index: usize, dim: usize) -> Self {
        Self {
            metric: Arc::new(Metric::WorkingSet(WorkingMatrix::new(kind, index, dim))),
            scale: DiagScale::Scalar(1.0),
        }
    }

    /// Builds the metric appropriate for a problem at the current iterate:
    /// the working-matrix form for simplex-style terms (index chosen by the
    /// term's policy) and the operator-based form otherwise.
    pub fn for_problem(problem: &CompositeProblem, x: &DVector<f64>) -> Result<Self> {
        let n = problem.dim();
        match problem.nonsmooth() {
            NonsmoothTerm::SimplexConstraint { policy } => {
                Ok(Self::working_set(WorkingSetKind::Simplex, policy.select(x), n))
            }
            NonsmoothTerm::CappedSimplex { policy, .. } => Ok(Self::working_set(
                WorkingSetKind::CappedSimplex,
                policy.select(x),
                n,
            )),
            _ => Self::from_operator(problem.op(), None),
        }
    }

    pub fn dim(&self) -> usize {
        self.metric.dim()
    }

    pub fn with_scale(mut self, alpha: f64) -> Self {
        assert!(alpha > 0.0);
        self.scale = DiagScale::Scalar(alpha);
        self
    }

    pub fn with_diag_scale(mut self, scale: DiagScale) -> Result<Self> {
        if matches!(scale, DiagScale::Diagonal { .. }) {
            match &*self.metric {
                Metric::Spectral { left: None, .. } => {
                    return Err(Error::Unsupported(
                        "diagonal scale needs a square factor of M".into(),
                    ))
                }
                Metric::Spectral { .. } | Metric::Identity { .. } | Metric::WorkingSet(_) => {}
            }
        }
        self.scale = scale;
        Ok(self)
    }

    /// Scalar scale `α`, if the scale is scalar.
    pub fn scalar_scale(&self) -> Option<f64> {
        match self.scale {
            DiagScale::Scalar(a) => Some(a),
            DiagScale::Diagonal { .. } => None,
        }
    }

    pub fn working_matrix(&self) -> Option<WorkingMatrix> {
        match &*self.metric {
            Metric::WorkingSet(w) => Some(*w),
            _ => None,
        }
    }

    /// The diagonal scale of the dual quadratic: `A P⁻¹ Aᵀ` equals the
    /// inverse of this scale (its leading m×m block for wide operators).
    pub fn dual_scale(&self) -> DiagScale {
        self.scale.clone()
    }

    /// Spectral bounds `(c₃, c₄)` with `c₃ I ⪯ P ⪯ c₄ I`.
    pub fn bounds(&self) -> (f64, f64) {
        let (unit_lo, unit_hi) = self.metric.spectrum_bounds();
        let (sc_lo, sc_hi) = self.scale.bounds();
        (sc_lo * unit_lo, sc_hi * unit_hi)
    }

    /// `P v`
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match &*self.metric {
            Metric::Identity { .. } => {
                let mut out = v.clone();
                self.scale.mul_in_place(&mut out);
                out
            }
            Metric::Spectral { basis, spectrum, left, .. } => match &self.scale {
                DiagScale::Scalar(a) => {
                    let mut w = basis.tr_mul(v);
                    w.component_mul_assign(spectrum);
                    basis * w * *a
                }
                DiagScale::Diagonal { .. } => {
                    let omega = left.as_ref().expect("validated at construction");
                    // M v, then D, then Mᵀ
                    let mut w = basis.tr_mul(v);
                    w.component_mul_assign(&spectrum.map(f64::sqrt));
                    let mut w = omega * w;
                    self.scale.mul_in_place(&mut w);
                    let mut w = omega.tr_mul(&w);
                    w.component_mul_assign(&spectrum.map(f64::sqrt));
                    basis * w
                }
            },
            Metric::WorkingSet(wm) => {
                let mut w = wm.apply(v);
                self.scale.mul_in_place(&mut w);
                wm.apply_transpose(&w)
            }
        }
    }

    /// `P⁻¹ v` through the factored form; never a dense inverse.
    pub fn apply_inverse(&self, v: &DVector<f64>) -> DVector<f64> {
        match &*self.metric {
            Metric::Identity { .. } => {
                let mut out = v.clone();
                self.scale.div_in_place(&mut out);
                out
            }
            Metric::Spectral { basis, spectrum, left, .. } => match &self.scale {
                DiagScale::Scalar(a) => {
                    let mut w = basis.tr_mul(v);
                    w.component_div_assign(spectrum);
                    basis * w / *a
                }
                DiagScale::Diagonal { .. } => {
                    let omega = left.as_ref().expect("validated at construction");
                    let mut w = basis.tr_mul(v);
                    w.component_div_assign(&spectrum.map(f64::sqrt));
                    let mut w = omega * w;
                    self.scale.div_in_place(&mut w);
                    let mut w = omega.tr_mul(&w);
                    w.component_div_assign(&spectrum.map(f64::sqrt));
                    basis * w
                }
            },
            Metric::WorkingSet(wm) => {
                let mut w = wm.apply_inverse_transpose(v);
                self.scale.div_in_place(&mut w);
                wm.apply_inverse(&w)
            }
        }
    }

    /// `uᵀ P v`
    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        u.dot(&self.apply(v))
    }

    /// `‖v‖²_P`
    pub fn norm_sq(&self, v: &DVector<f64>) -> f64 {
        self.inner(v, v)
    }

    /// Barzilai–Borwein rescaling in the P-geometry: the new scalar scale is
    /// `clamp(⟨s, y⟩ / ⟨s, P₁ s⟩, lo, hi)` so that `α P₁ s ≈ y` in the
    /// secant sense; nonpositive curvature keeps the previous scale.
    pub fn bb_rescale(
        &self,
        step: &DVector<f64>,
        grad_diff: &DVector<f64>,
        clip: (f64, f64),
    ) -> Result<Self> {
        let alpha_prev = self.scalar_scale().ok_or_else(|| {
            Error::Unsupported("BB rescaling applies to scalar-scaled preconditioners".into())
        })?;
        debug_assert!(step.norm() > 0.0);
        let sy = step.dot(grad_diff);
        let alpha = if sy <= 0.0 {
            alpha_prev
        } else {
            let unit = Self {
                metric: Arc::clone(&self.metric),
                scale: DiagScale::Scalar(1.0),
            };
            let sps = unit.norm_sq(step);
            (sy / sps).clamp(clip.0, clip.1)
        };
        Ok(Self {
            metric: Arc::clone(&self.metric),
            scale: DiagScale::Scalar(alpha),
        })
    }

    /// Dense `P` for small verification problems.
    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        for j in 0..n {
            let e = DVector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 });
            out.set_column(j, &self.apply(&e));
        }
        out
    }

    /// `A P⁻¹ Aᵀ` for verification.
    pub fn dual_quadratic_dense(&self, a: &LinearMap) -> DMatrix<f64> {
        let m = a.rows();
        let n = a.cols();
        let mut out = DMatrix::zeros(m, m);
        for j in 0..m {
            let e = DVector::from_fn(m, |i, _| if i == j { 1.0 } else { 0.0 });
            let col = a.apply(&self.apply_inverse(&a.apply_transpose(&e)));
            debug_assert_eq!(col.len(), m);
            out.set_column(j, &col);
            let _ = n;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| -> f64 { StandardNormal.sample(rng) })
    }

    #[test]
    fn diagonal_operator_gives_diagonal_metric() {
        let a = LinearMap::new(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]))).unwrap();
        let p = build_preconditioner(&a, None).unwrap();
        let dense = p.dense();
        assert_relative_eq!(dense[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(dense[(1, 1)], 4.0, epsilon = 1e-12);
        assert_relative_eq!(dense[(0, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn orthonormal_row_gives_identity_metric() {
        let a = LinearMap::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.0])).unwrap();
        let p = build_preconditioner(&a, Some(&DMatrix::identity(1, 1))).unwrap();
        let dense = p.dense();
        assert!((dense - DMatrix::identity(2, 2)).amax() < 1e-12);
        let apat = p.dual_quadratic_dense(&a);
        assert_relative_eq!(apat[(0, 0)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn wide_diagonal_with_identity_completion() {
        // direct multiplication oracle for the 2×3 case
        let a = LinearMap::new(DMatrix::from_row_slice(2, 3, &[3.0, 0.0, 0.0, 0.0, 2.0, 0.0]))
            .unwrap();
        let p = build_preconditioner(&a, None).unwrap();
        let dense = p.dense();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![9.0, 4.0, 1.0]));
        assert!((dense - expected).amax() < 1e-10);
        let apat = p.dual_quadratic_dense(&a);
        assert!((apat - DMatrix::identity(2, 2)).amax() < 1e-10);
    }

    #[test]
    fn apply_inverse_solves_factored_system() {
        let p = build_preconditioner(
            &LinearMap::new(DMatrix::from_row_slice(2, 3, &[3.0, 0.0, 0.0, 0.0, 2.0, 0.0]))
                .unwrap(),
            None,
        )
        .unwrap()
        .with_scale(2.0);
        let v = DVector::from_vec(vec![18.0, 8.0, 2.0]);
        let w = p.apply_inverse(&v);
        assert!((w - DVector::from_vec(vec![1.0, 1.0, 1.0])).amax() < 1e-10);

        // identity metric
        let pi = build_preconditioner(&LinearMap::identity(3), None).unwrap();
        let v = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        assert_eq!(pi.apply_inverse(&v), v);
    }

    #[test]
    fn inverse_residual_small_on_random_operators() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..40 {
            let n = rng.random_range(2..=20);
            let m = rng.random_range(1..=n);
            let a = LinearMap::new(gaussian(&mut rng, m, n)).unwrap();
            let p = build_preconditioner(&a, None)
                .unwrap()
                .with_scale(10f64.powf(rng.random_range(-2.0..2.0)));
            let v = DVector::from_fn(n, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
            let w = p.apply_inverse(&v);
            let res = (p.apply(&w) - &v).norm();
            assert!(res <= 1e-8 * (1.0 + v.norm()), "residual {res}");
            let back = p.apply_inverse(&p.apply(&v));
            assert!((back - &v).norm() <= 1e-8 * (1.0 + v.norm()));
        }
    }

    #[test]
    fn nontrivial_completion_block_keeps_dual_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (m, n) = (3, 7);
        let a = LinearMap::new(gaussian(&mut rng, m, n)).unwrap();
        let g = gaussian(&mut rng, n - m, n - m);
        let tilde = &g * g.transpose() + DMatrix::identity(n - m, n - m) * 0.5;
        let p = build_preconditioner(&a, Some(&tilde)).unwrap();
        let apat = p.dual_quadratic_dense(&a);
        assert!((apat - DMatrix::identity(m, m)).amax() < 1e-8);
    }

    #[test]
    fn working_set_matrices_invert_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for kind in [WorkingSetKind::Simplex, WorkingSetKind::CappedSimplex] {
            for _ in 0..20 {
                let n = rng.random_range(1..=12);
                let i = rng.random_range(0..n);
                let w = WorkingMatrix::new(kind, i, n);
                let x = DVector::from_fn(n, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
                let dense = w.dense();
                assert!((w.apply(&x) - &dense * &x).amax() < 1e-12);
                assert!((w.apply_transpose(&x) - dense.tr_mul(&x)).amax() < 1e-12);
                assert!((w.apply_inverse(&w.apply(&x)) - &x).amax() < 1e-12);
                assert!((w.apply_inverse_transpose(&w.apply_transpose(&x)) - &x).amax() < 1e-12);

                // spectrum bounds enclose the numerically computed eigenvalues
                let gram = dense.tr_mul(&dense);
                let eig = gram.symmetric_eigen().eigenvalues;
                let (lo, hi) = w.gram_spectrum_bounds();
                assert!(eig.min() >= lo - 1e-9 && eig.max() <= hi + 1e-9);
                assert_relative_eq!(eig.min(), lo, max_relative = 1e-8);
                assert_relative_eq!(eig.max(), hi, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn working_set_dual_quadratic_is_scaled_identity() {
        let w = Preconditioner::working_set(WorkingSetKind::Simplex, 2, 5).with_scale(3.0);
        let wm = w.working_matrix().unwrap();
        let mut apat = DMatrix::zeros(5, 5);
        for j in 0..5 {
            let e = DVector::from_fn(5, |i, _| if i == j { 1.0 } else { 0.0 });
            apat.set_column(j, &wm.apply(&w.apply_inverse(&wm.apply_transpose(&e))));
        }
        assert!((apat - DMatrix::identity(5, 5) / 3.0).amax() < 1e-12);
    }

    #[test]
    fn bb_rescale_matches_secant_cases() {
        let a = LinearMap::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap();
        let p = build_preconditioner(&a, None).unwrap();
        let s = DVector::from_vec(vec![0.4, -1.2]);

        // y = P₁ s  →  α = 1
        let y = p.apply(&s);
        let p1 = p.bb_rescale(&s, &y, DEFAULT_BB_CLIP).unwrap();
        assert_relative_eq!(p1.scalar_scale().unwrap(), 1.0, epsilon = 1e-12);

        // y = 2 P₁ s  →  α = 2
        let p2 = p.bb_rescale(&s, &(2.0 * &y), DEFAULT_BB_CLIP).unwrap();
        assert_relative_eq!(p2.scalar_scale().unwrap(), 2.0, epsilon = 1e-12);

        // nonpositive curvature keeps the previous scale
        let p3 = p.with_scale(0.7);
        let y_neg = -&y;
        let p4 = p3.bb_rescale(&s, &y_neg, DEFAULT_BB_CLIP).unwrap();
        assert_relative_eq!(p4.scalar_scale().unwrap(), 0.7, epsilon = 1e-12);
    }

    #[test]
    fn bb_rescale_respects_clip() {
        let p = build_preconditioner(&LinearMap::identity(2), None).unwrap();
        let s = DVector::from_vec(vec![1.0, 0.0]);
        let y = DVector::from_vec(vec![1e12, 0.0]);
        let up = p.bb_rescale(&s, &y, DEFAULT_BB_CLIP).unwrap();
        assert_relative_eq!(up.scalar_scale().unwrap(), DEFAULT_BB_CLIP.1);
        let y = DVector::from_vec(vec![1e-12, 0.0]);
        let dn = p.bb_rescale(&s, &y, DEFAULT_BB_CLIP).unwrap();
        assert_relative_eq!(dn.scalar_scale().unwrap(), DEFAULT_BB_CLIP.0);
    }

    #[test]
    fn bb_alpha_constant_on_matching_quadratic() {
        // f = ½ xᵀ P₁ x  → y = P₁ s at every pair of iterates
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = LinearMap::new(gaussian(&mut rng, 4, 4)).unwrap();
        let mut p = build_preconditioner(&a, None).unwrap();
        for _ in 0..10 {
            let s = DVector::from_fn(4, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
            let y = p.apply(&s) / p.scalar_scale().unwrap();
            p = p.bb_rescale(&s, &y, DEFAULT_BB_CLIP).unwrap();
            assert_relative_eq!(p.scalar_scale().unwrap(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn diagonal_scale_dual_quadratic_matches_leading_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (m, n) = (3, 6);
        let a = LinearMap::new(gaussian(&mut rng, m, n)).unwrap();
        let d = DVector::from_fn(n, |_, _| rng.random_range(0.5..4.0));
        let p = build_preconditioner(&a, None)
            .unwrap()
            .with_diag_scale(DiagScale::diagonal(d.clone()).unwrap())
            .unwrap();
        let apat = p.dual_quadratic_dense(&a);
        let expected = DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 / d[i] } else { 0.0 });
        assert!((apat - expected).amax() < 1e-8);
    }

    #[test]
    fn bounds_bracket_dense_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let a = LinearMap::new(gaussian(&mut rng, 3, 5)).unwrap();
        let p = build_preconditioner(&a, None).unwrap().with_scale(2.5);
        let (c3, c4) = p.bounds();
        let eig = p.dense().symmetric_eigen().eigenvalues;
        assert!(eig.min() >= c3 - 1e-9);
        assert!(eig.max() <= c4 + 1e-9);
    }
}
