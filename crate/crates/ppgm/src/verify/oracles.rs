//! Independent oracles used by the acceptance suite. Everything here is
//! built from first principles (definitions, exhaustive enumeration, or
//! long first-order iterations) and never calls the closed-form code paths
//! it is used to check.

use nalgebra::{DMatrix, DVector};

use crate::precond::DiagScale;
use crate::problem::NonsmoothTerm;

/// Dual objective `½‖y‖²_{D⁻¹} + g*(y) − aᵀy` (without the indicator parts
/// of `g*`, which the iterations below maintain feasible).
pub fn dual_smooth_objective(
    term: &NonsmoothTerm,
    y: &DVector<f64>,
    a: &DVector<f64>,
    d: &DiagScale,
    working_index: Option<usize>,
) -> f64 {
    let mut val = 0.0;
    for j in 0..y.len() {
        val += 0.5 * y[j] * y[j] / d.entry(j) - a[j] * y[j];
    }
    match term {
        NonsmoothTerm::SimplexConstraint { .. } => val + y[working_index.unwrap()],
        NonsmoothTerm::CappedSimplex { cap, .. } => {
            let i = working_index.unwrap();
            let mut extra = cap * y[i];
            for j in 0..y.len() {
                if j != i {
                    extra += y[j].max(0.0);
                }
            }
            val + extra
        }
        NonsmoothTerm::GenericWorkingSet { upper, equality } => {
            let p = upper.len();
            let mut extra = 0.0;
            for j in 0..p {
                extra += upper[j] * y[j];
            }
            for j in 0..equality.len() {
                extra += equality[j] * y[p + j];
            }
            val + extra
        }
        _ => val,
    }
}

/// Minimizes the dual problem by forward-backward iterations: gradient
/// steps on the smooth quadratic part, closed projections/shrinkages for
/// the indicator and positive-part terms. Strong convexity gives linear
/// convergence, so the step budget is far more than enough.
pub fn brute_force_dual(
    term: &NonsmoothTerm,
    a: &DVector<f64>,
    d: &DiagScale,
    working_index: Option<usize>,
    steps: usize,
) -> DVector<f64> {
    let m = a.len();
    let mut y = DVector::zeros(m);
    let d_min = (0..m).map(|j| d.entry(j)).fold(f64::INFINITY, f64::min);
    let eta = 0.9 * d_min; // 1/L of the smooth part

    for _ in 0..steps {
        // gradient of ½‖y‖²_{D⁻¹} − aᵀy plus the linear pieces of g*
        let mut g = DVector::from_fn(m, |j, _| y[j] / d.entry(j) - a[j]);
        match term {
            NonsmoothTerm::SimplexConstraint { .. } => {
                g[working_index.unwrap()] += 1.0;
            }
            NonsmoothTerm::CappedSimplex { cap, .. } => {
                g[working_index.unwrap()] += cap;
            }
            NonsmoothTerm::GenericWorkingSet { upper, equality } => {
                let p = upper.len();
                for j in 0..p {
                    g[j] += upper[j];
                }
                for j in 0..equality.len() {
                    g[p + j] += equality[j];
                }
            }
            _ => {}
        }
        let mut z = &y - eta * g;
        // backward step: the nonsmooth remainder of g*
        match term {
            NonsmoothTerm::Zero => z.fill(0.0),
            NonsmoothTerm::L1 { lambda } => {
                z = z.map(|v| v.clamp(-lambda, *lambda));
            }
            NonsmoothTerm::EllipsoidIndicator { bound } => {
                let r = 1.0 / bound.sqrt();
                let norm = z.norm();
                if norm > r {
                    z *= r / norm;
                }
            }
            NonsmoothTerm::SimplexConstraint { .. } => {
                let i = working_index.unwrap();
                for j in 0..m {
                    if j != i {
                        z[j] = z[j].max(0.0);
                    }
                }
            }
            NonsmoothTerm::CappedSimplex { .. } => {
                let i = working_index.unwrap();
                for j in 0..m {
                    if j != i {
                        // prox of η·[z]₊
                        z[j] = if z[j] > eta {
                            z[j] - eta
                        } else if z[j] < 0.0 {
                            z[j]
                        } else {
                            0.0
                        };
                    }
                }
                z[i] = z[i].max(0.0);
            }
            NonsmoothTerm::GenericWorkingSet { upper, .. } => {
                for j in 0..upper.len() {
                    z[j] = z[j].max(0.0);
                }
            }
        }
        y = z;
    }
    y
}

/// Componentwise violation of the optimality inclusion
/// `0 ∈ D⁻¹y + ∂g*(y) − a`, checked by interval membership on the known
/// subdifferential structure of each `g*`. Returns the largest violation.
pub fn dual_optimality_violation(
    term: &NonsmoothTerm,
    y: &DVector<f64>,
    a: &DVector<f64>,
    d: &DiagScale,
    working_index: Option<usize>,
) -> f64 {
    let m = y.len();
    let boundary_tol = 1e-9;
    // r_j must lie in ∂g*(y)_j
    let r = DVector::from_fn(m, |j, _| a[j] - y[j] / d.entry(j));
    let mut worst: f64 = 0.0;
    match term {
        NonsmoothTerm::Zero => {
            for j in 0..m {
                worst = worst.max(y[j].abs());
            }
        }
        NonsmoothTerm::L1 { lambda } => {
            for j in 0..m {
                worst = worst.max(y[j].abs() - lambda); // feasibility
                if y[j] > lambda - boundary_tol {
                    worst = worst.max(-r[j]); // normal cone points up
                } else if y[j] < -lambda + boundary_tol {
                    worst = worst.max(r[j]);
                } else {
                    worst = worst.max(r[j].abs());
                }
            }
        }
        NonsmoothTerm::EllipsoidIndicator { bound } => {
            let radius = 1.0 / bound.sqrt();
            let norm = y.norm();
            worst = worst.max(norm - radius);
            if norm < radius - boundary_tol {
                worst = worst.max(r.amax());
            } else if norm > 0.0 {
                // r must be a nonnegative multiple of y
                let scale = r.dot(y) / (norm * norm);
                worst = worst.max(-scale * norm);
                worst = worst.max((r - scale * y).norm());
            }
        }
        NonsmoothTerm::SimplexConstraint { .. } => {
            let i = working_index.unwrap();
            for j in 0..m {
                if j == i {
                    worst = worst.max((r[j] - 1.0).abs());
                } else if y[j] > boundary_tol {
                    worst = worst.max(r[j].abs());
                } else if y[j] >= -boundary_tol {
                    worst = worst.max(r[j]); // must be ≤ 0
                } else {
                    worst = worst.max(-y[j]); // infeasible dual sign
                }
            }
        }
        NonsmoothTerm::CappedSimplex { cap, .. } => {
            let i = working_index.unwrap();
            for j in 0..m {
                if j == i {
                    if y[j] > boundary_tol {
                        worst = worst.max((r[j] - cap).abs());
                    } else if y[j] >= -boundary_tol {
                        worst = worst.max(r[j] - cap);
                    } else {
                        worst = worst.max(-y[j]);
                    }
                } else if y[j] > boundary_tol {
                    worst = worst.max((r[j] - 1.0).abs());
                } else if y[j] >= -boundary_tol {
                    // ∂[·]₊(0) = [0, 1]
                    worst = worst.max(r[j] - 1.0);
                    worst = worst.max(-r[j]);
                } else {
                    worst = worst.max(r[j].abs());
                }
            }
        }
        NonsmoothTerm::GenericWorkingSet { upper, equality } => {
            let p = upper.len();
            for j in 0..p {
                if y[j] > boundary_tol {
                    worst = worst.max((r[j] - upper[j]).abs());
                } else if y[j] >= -boundary_tol {
                    worst = worst.max(r[j] - upper[j]);
                } else {
                    worst = worst.max(-y[j]);
                }
            }
            for j in 0..equality.len() {
                worst = worst.max((r[p + j] - equality[j]).abs());
            }
        }
    }
    worst
}

/// Exhaustive Euclidean projection onto the simplex-like set
/// `{z : z_j >= 0 for j in bounded, Σz = 1}` by enumerating active sets;
/// definitionally correct for small dimensions.
pub fn exhaustive_affine_projection(z: &DVector<f64>, bounded: &[usize]) -> DVector<f64> {
    let n = z.len();
    assert!(n <= 16, "exhaustive projection is exponential in n");
    let mut best: Option<(f64, DVector<f64>)> = None;
    let k = bounded.len();
    for mask in 0u32..(1 << k) {
        // coordinates forced to zero
        let mut fixed = vec![false; n];
        for (bit, &j) in bounded.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                fixed[j] = true;
            }
        }
        let free: Vec<usize> = (0..n).filter(|j| !fixed[*j]).collect();
        if free.is_empty() {
            continue;
        }
        // equality-constrained projection on the free block
        let shift = (1.0 - free.iter().map(|&j| z[j]).sum::<f64>()) / free.len() as f64;
        let mut cand = DVector::zeros(n);
        for &j in &free {
            cand[j] = z[j] + shift;
        }
        // feasibility of the candidate
        if bounded.iter().any(|&j| cand[j] < -1e-12) {
            continue;
        }
        let dist = (&cand - z).norm_squared();
        if best.as_ref().is_none_or(|(b, _)| dist < *b) {
            best = Some((dist, cand));
        }
    }
    best.expect("some active set is feasible").1
}

/// Minimizes `gradᵀ(z − x) + ½‖z − x‖²_P` over
/// `{z : z_j >= 0 for j in bounded, Σz = 1}` by projected gradient with the
/// exhaustive projection; `p_dense` is the dense metric.
pub fn metric_model_minimizer(
    grad: &DVector<f64>,
    p_dense: &DMatrix<f64>,
    x: &DVector<f64>,
    bounded: &[usize],
    steps: usize,
) -> DVector<f64> {
    let lmax = p_dense.clone().symmetric_eigen().eigenvalues.max();
    let eta = 1.0 / lmax;
    let mut z = x.clone();
    for _ in 0..steps {
        let g = grad + p_dense * (&z - x);
        z = exhaustive_affine_projection(&(&z - eta * g), bounded);
    }
    z
}

/// Golden-section minimizer of a strictly unimodal function on `[lo, hi]`.
pub fn golden_section(h: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let (mut hc, mut hd) = (h(c), h(d));
    for _ in 0..220 {
        if hi - lo <= 1e-14 * (1.0 + lo.abs() + hi.abs()) {
            break;
        }
        if hc <= hd {
            hi = d;
            d = c;
            hd = hc;
            c = hi - INV_PHI * (hi - lo);
            hc = h(c);
        } else {
            lo = c;
            c = d;
            hc = hd;
            d = lo + INV_PHI * (hi - lo);
            hd = h(d);
        }
    }
    0.5 * (lo + hi)
}

/// Least-squares line fit of `(x, y)` returning `(slope, intercept, r²)`.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mean_x = points.iter().map(|(x, _)| x).sum::<f64>() / n;
    let mean_y = points.iter().map(|(_, y)| y).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in points {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    (slope, intercept, r2)
}
