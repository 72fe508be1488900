//! Exact one-dimensional minimizers used by the subspace steps: a quadratic
//! over a feasible segment, and a strongly convex quadratic plus a piecewise
//! linear ℓ₁ term solved by median partitioning of its breakpoints.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::problem::{CompositeProblem, LinearMap, NonsmoothTerm};

/// Closed interval, possibly unbounded on either side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const FULL_LINE: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.lo && t <= self.hi
    }
}

/// Maximal interval `[t_l, t_u]` with `x + t d` inside the tolerance-relaxed
/// `dom(g ∘ A)` (the same `DEFAULT_FEAS_TOL` slack as domain membership).
/// Computed by componentwise ratio tests for box and simplex constraints and
/// by a quadratic root solve for the ellipsoid; the whole line for
/// full-domain terms or a zero direction.
///
/// The tolerance slack matters at active constraints: an iterate coordinate
/// sitting exactly on its bound with a rounding-level direction residue
/// would otherwise pin the exact ratio to zero and collapse the segment.
pub fn feasible_range(
    term: &NonsmoothTerm,
    a: &LinearMap,
    x: &DVector<f64>,
    d: &DVector<f64>,
) -> Interval {
    if d.iter().all(|&v| v == 0.0) {
        return Interval::FULL_LINE;
    }
    // strictly inside the indicator tolerance, so a segment endpoint can
    // never flip a feasibility check by rounding
    let tol = 0.1 * crate::problem::DEFAULT_FEAS_TOL;
    let raw = match term {
        NonsmoothTerm::Zero | NonsmoothTerm::L1 { .. } => Interval::FULL_LINE,
        NonsmoothTerm::EllipsoidIndicator { bound } => {
            let ax = a.apply(x);
            let ad = a.apply(d);
            let radius = bound.sqrt() + tol;
            ellipsoid_range(&ax, &ad, radius * radius)
        }
        NonsmoothTerm::SimplexConstraint { .. } => {
            let sum_d = d.sum();
            if sum_d.abs() > 1e-8 * (1.0 + d.amax()) {
                // the direction leaves the affine hull; only t = 0 stays feasible
                Interval::new(0.0, 0.0)
            } else {
                lower_bound_ratios(x, d, 0.0, tol)
            }
        }
        NonsmoothTerm::CappedSimplex { cap, .. } => {
            let mut r = lower_bound_ratios(x, d, 0.0, tol);
            let upper = upper_bound_ratios(x, d, 1.0, tol);
            r = intersect(r, upper);
            let (sx, sd) = (x.sum(), d.sum());
            if sd.abs() > 1e-14 * (1.0 + d.amax()) {
                let t = (cap + tol - sx) / sd;
                let sum_range = if sd > 0.0 {
                    Interval::new(f64::NEG_INFINITY, t)
                } else {
                    Interval::new(t, f64::INFINITY)
                };
                r = intersect(r, sum_range);
            }
            r
        }
        NonsmoothTerm::GenericWorkingSet { upper, equality } => {
            let z = a.apply(x);
            let w = a.apply(d);
            let p = upper.len();
            let mut r = Interval::FULL_LINE;
            for i in 0..p {
                // z_i + t w_i <= upper_i + tol
                if w[i].abs() > 0.0 {
                    let t = (upper[i] + tol - z[i]) / w[i];
                    let half = if w[i] > 0.0 {
                        Interval::new(f64::NEG_INFINITY, t)
                    } else {
                        Interval::new(t, f64::INFINITY)
                    };
                    r = intersect(r, half);
                }
            }
            for j in 0..equality.len() {
                if w[p + j].abs() > 1e-8 * (1.0 + w.amax()) {
                    r = Interval::new(0.0, 0.0);
                    break;
                }
            }
            r
        }
    };
    // x is feasible by contract, so 0 must stay admissible
    Interval::new(raw.lo.min(0.0), raw.hi.max(0.0))
}

/// Ratios enforcing `x_i + t d_i >= lo - slack` for all i.
fn lower_bound_ratios(x: &DVector<f64>, d: &DVector<f64>, lo: f64, slack: f64) -> Interval {
    let mut r = Interval::FULL_LINE;
    for i in 0..x.len() {
        if d[i] > 0.0 {
            r.lo = r.lo.max((lo - slack - x[i]) / d[i]);
        } else if d[i] < 0.0 {
            r.hi = r.hi.min((lo - slack - x[i]) / d[i]);
        }
    }
    r
}

/// Ratios enforcing `x_i + t d_i <= hi + slack` for all i.
fn upper_bound_ratios(x: &DVector<f64>, d: &DVector<f64>, hi: f64, slack: f64) -> Interval {
    let mut r = Interval::FULL_LINE;
    for i in 0..x.len() {
        if d[i] > 0.0 {
            r.hi = r.hi.min((hi + slack - x[i]) / d[i]);
        } else if d[i] < 0.0 {
            r.lo = r.lo.max((hi + slack - x[i]) / d[i]);
        }
    }
    r
}

fn intersect(a: Interval, b: Interval) -> Interval {
    Interval::new(a.lo.max(b.lo), a.hi.min(b.hi))
}

/// Roots of `‖ax + t ad‖² ≤ bound`.
fn ellipsoid_range(ax: &DVector<f64>, ad: &DVector<f64>, bound: f64) -> Interval {
    let qa = ad.dot(ad);
    if qa == 0.0 {
        return Interval::FULL_LINE;
    }
    let qb = ax.dot(ad);
    let qc = ax.dot(ax) - bound;
    // t ∈ [(-qb ± sqrt(qb² - qa·qc)) / qa]
    let disc = (qb * qb - qa * qc).max(0.0);
    let root = disc.sqrt();
    Interval::new((-qb - root) / qa, (-qb + root) / qa)
}

/// Exact minimizer of `a t² + b t` over `[t_l, t_u]`: the unconstrained
/// stationary point clamped to the segment.
pub fn min_quad_on_segment(a: f64, b: f64, range: Interval) -> Result<f64> {
    debug_assert!(a > 0.0);
    if range.lo > range.hi {
        return Err(Error::EmptySegment(range.lo, range.hi));
    }
    Ok((-b / (2.0 * a)).clamp(range.lo, range.hi))
}

/// One-dimensional strongly convex objective
/// `h(t) = a t² + b t + ‖v + t d‖₁` with `a > 0`.
#[derive(Debug, Clone)]
pub struct PiecewiseQuadratic1D {
    pub quad: f64,
    pub lin: f64,
    pub offset: DVector<f64>,
    pub slope: DVector<f64>,
}

impl PiecewiseQuadratic1D {
    pub fn new(quad: f64, lin: f64, offset: DVector<f64>, slope: DVector<f64>) -> Self {
        assert!(quad > 0.0, "quadratic coefficient must be positive");
        assert_eq!(offset.len(), slope.len());
        Self { quad, lin, offset, slope }
    }

    pub fn value(&self, t: f64) -> f64 {
        let mut l1 = 0.0;
        for i in 0..self.offset.len() {
            l1 += (self.offset[i] + t * self.slope[i]).abs();
        }
        self.quad * t * t + self.lin * t + l1
    }

    /// One-sided derivatives `(∂⁻h(t), ∂⁺h(t))`.
    ///
    /// A component counts as sitting on its kink when `v_i + t d_i`
    /// vanishes relative to the magnitudes entering the difference;
    /// `-v_i/d_i` rounds, so an exact-zero test would miss breakpoints.
    pub fn one_sided(&self, t: f64) -> (f64, f64) {
        let base = 2.0 * self.quad * t + self.lin;
        let mut lo = base;
        let mut hi = base;
        for i in 0..self.offset.len() {
            let w = self.offset[i] + t * self.slope[i];
            let kink_tol = 1e-12 * (self.offset[i].abs() + (t * self.slope[i]).abs());
            if w > kink_tol {
                lo += self.slope[i];
                hi += self.slope[i];
            } else if w < -kink_tol {
                lo -= self.slope[i];
                hi -= self.slope[i];
            } else {
                lo -= self.slope[i].abs();
                hi += self.slope[i].abs();
            }
        }
        (lo, hi)
    }

    fn slope_abs_sum(&self) -> f64 {
        self.slope.iter().map(|s| s.abs()).sum()
    }
}

/// Exact minimizer of a [`PiecewiseQuadratic1D`].
///
/// The minimizer satisfies `0 ∈ ∂h(t*)` and is bracketed by
/// `[(-D - b)/2a, (D - b)/2a]` with `D = Σ|d_i|`. Candidate breakpoints
/// `-v_i/d_i` inside the bracket are bisected by their median; once at most
/// two candidates remain the piece is a plain quadratic and the stationary
/// point is taken in closed form. Median ties break toward the lower
/// element and near-duplicate breakpoints are merged, so every pass
/// strictly shrinks the candidate set.
pub fn min_quad_plus_l1(p: &PiecewiseQuadratic1D) -> f64 {
    let a = p.quad;
    let b = p.lin;
    let big_d = p.slope_abs_sum();
    let mut lo = (-big_d - b) / (2.0 * a);
    let mut hi = (big_d - b) / (2.0 * a);

    let mut cands: Vec<f64> = Vec::with_capacity(p.slope.len() + 2);
    for i in 0..p.slope.len() {
        if p.slope[i] != 0.0 {
            let t = -p.offset[i] / p.slope[i];
            if t >= lo && t <= hi {
                cands.push(t);
            }
        }
    }
    cands.push(lo);
    cands.push(hi);
    cands.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cands.dedup_by(|x, y| (*x - *y).abs() <= 1e-14);

    loop {
        if cands.len() <= 2 {
            // no interior kink left: fixed signs on (lo, hi)
            let mid = 0.5 * (lo + hi);
            let mut s = b;
            for i in 0..p.slope.len() {
                let w = p.offset[i] + mid * p.slope[i];
                // sign(0) contributes nothing
                if w > 0.0 {
                    s += p.slope[i];
                } else if w < 0.0 {
                    s -= p.slope[i];
                }
            }
            return (-s / (2.0 * a)).clamp(lo, hi);
        }

        // median with ties toward the lower element keeps traces deterministic
        let m = (cands.len() - 1) / 2;
        let t = cands[m];
        let (dl, dh) = p.one_sided(t);
        if dl <= 0.0 && dh >= 0.0 {
            return t;
        }
        if dh < 0.0 {
            // minimizer lies to the right
            lo = t;
            cands.drain(..m);
        } else {
            hi = t;
            cands.truncate(m + 1);
        }
    }
}

/// Minimizes `b·t + g(A(x + t w)) + a·t²` along the ray `x + t w`,
/// dispatching on the structure of `g`: closed form for `g = 0`, segment
/// clamping for indicators, breakpoint partitioning for the ℓ₁ term.
pub fn minimize_along_ray(
    problem: &CompositeProblem,
    x: &DVector<f64>,
    w: &DVector<f64>,
    lin: f64,
    quad: f64,
) -> Result<f64> {
    if quad <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "ray subproblem needs positive curvature, got {quad}"
        )));
    }
    match problem.nonsmooth() {
        NonsmoothTerm::Zero => Ok(-lin / (2.0 * quad)),
        NonsmoothTerm::L1 { lambda } => {
            let ax = problem.op().apply(x) * *lambda;
            let aw = problem.op().apply(w) * *lambda;
            Ok(min_quad_plus_l1(&PiecewiseQuadratic1D::new(quad, lin, ax, aw)))
        }
        term => {
            let range = feasible_range(term, problem.op(), x, w);
            min_quad_on_segment(quad, lin, range)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::LinearMap;
    use approx::assert_relative_eq;

    #[test]
    fn range_simplex_ratio_test() {
        let term = NonsmoothTerm::simplex();
        let a = LinearMap::identity(2);
        let x = DVector::from_vec(vec![0.5, 0.5]);
        let d = DVector::from_vec(vec![1.0, -1.0]);
        let r = feasible_range(&term, &a, &x, &d);
        assert_relative_eq!(r.lo, -0.5, epsilon = 1e-9);
        assert_relative_eq!(r.hi, 0.5, epsilon = 1e-9);
    }

    #[test]
    fn range_ellipsoid_axis() {
        let term = NonsmoothTerm::ellipsoid(1.0);
        let a = LinearMap::identity(2);
        let x = DVector::zeros(2);
        let d = DVector::from_vec(vec![1.0, 0.0]);
        let r = feasible_range(&term, &a, &x, &d);
        assert_relative_eq!(r.lo, -1.0, epsilon = 1e-9);
        assert_relative_eq!(r.hi, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn range_capped_simplex_sum_binds_first() {
        let term = NonsmoothTerm::capped_simplex(1.0);
        let a = LinearMap::identity(2);
        let x = DVector::from_vec(vec![0.2, 0.2]);
        let d = DVector::from_vec(vec![1.0, 1.0]);
        let r = feasible_range(&term, &a, &x, &d);
        assert_relative_eq!(r.hi, 0.3, epsilon = 1e-9);
        assert_relative_eq!(r.lo, -0.2, epsilon = 1e-9);
    }

    #[test]
    fn range_zero_direction_is_full_line() {
        let term = NonsmoothTerm::simplex();
        let a = LinearMap::identity(2);
        let x = DVector::from_vec(vec![0.5, 0.5]);
        let r = feasible_range(&term, &a, &x, &DVector::zeros(2));
        assert_eq!(r, Interval::FULL_LINE);
    }

    #[test]
    fn quad_on_segment_cases() {
        assert_relative_eq!(min_quad_on_segment(1.0, -4.0, Interval::new(0.0, 3.0)).unwrap(), 2.0);
        assert_relative_eq!(min_quad_on_segment(1.0, -4.0, Interval::new(0.0, 1.0)).unwrap(), 1.0);
        assert_relative_eq!(min_quad_on_segment(2.0, 4.0, Interval::new(0.0, 1.0)).unwrap(), 0.0);
        assert!(min_quad_on_segment(1.0, 0.0, Interval::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn quad_plus_l1_hand_cases() {
        // symmetric: t² + |t| minimized at 0
        let p = PiecewiseQuadratic1D::new(
            1.0,
            0.0,
            DVector::from_vec(vec![0.0]),
            DVector::from_vec(vec![1.0]),
        );
        assert_relative_eq!(min_quad_plus_l1(&p), 0.0, epsilon = 1e-14);

        // kink optimum: 0 ∈ ∂h(1) = [0, 2]
        let p = PiecewiseQuadratic1D::new(
            0.5,
            0.0,
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![-1.0]),
        );
        assert_relative_eq!(min_quad_plus_l1(&p), 1.0, epsilon = 1e-14);

        // smooth-piece optimum with h(1) = -1
        let p = PiecewiseQuadratic1D::new(
            1.0,
            -3.0,
            DVector::from_vec(vec![0.0]),
            DVector::from_vec(vec![1.0]),
        );
        let t = min_quad_plus_l1(&p);
        assert_relative_eq!(t, 1.0, epsilon = 1e-14);
        assert_relative_eq!(p.value(t), -1.0, epsilon = 1e-14);
    }

    #[test]
    fn quad_plus_l1_zero_slopes() {
        // degenerate d = 0 reduces to the plain quadratic
        let p = PiecewiseQuadratic1D::new(
            2.0,
            -8.0,
            DVector::from_vec(vec![1.0, -1.0]),
            DVector::zeros(2),
        );
        assert_relative_eq!(min_quad_plus_l1(&p), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn quad_plus_l1_duplicate_breakpoints_terminate() {
        let n = 12;
        let p = PiecewiseQuadratic1D::new(
            0.7,
            0.3,
            DVector::repeat(n, 1.0),
            DVector::repeat(n, -2.0),
        );
        let t = min_quad_plus_l1(&p);
        let (dl, dh) = p.one_sided(t);
        assert!(dl <= 1e-10 && dh >= -1e-10, "({dl}, {dh}) at t = {t}");
    }

    #[test]
    fn quad_plus_l1_subgradient_certificate_random() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let m = rng.random_range(1..=20);
            let a = 10f64.powf(rng.random_range(-3.0..3.0));
            let b = rng.random_range(-10.0..10.0);
            let v = DVector::from_fn(m, |_, _| rng.random_range(-5.0..5.0));
            let mut d = DVector::from_fn(m, |_, _| rng.random_range(-5.0..5.0));
            if rng.random_bool(0.3) {
                d[rng.random_range(0..m)] = 0.0;
            }
            let p = PiecewiseQuadratic1D::new(a, b, v, d);
            let t = min_quad_plus_l1(&p);
            let (dl, dh) = p.one_sided(t);
            let tol = 1e-12 * (b.abs() + 2.0 * a * t.abs() + p.slope_abs_sum()) + 1e-12;
            assert!(
                dl <= tol && dh >= -tol,
                "certificate failed: a={a} b={b} t={t} bounds=({dl},{dh})"
            );
        }
    }
}
