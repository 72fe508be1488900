//! Synthetic problem generators for the three benchmark families. Every
//! generator draws from a seeded ChaCha stream, with one substream per
//! matrix so that instances are reproducible from the manifest alone:
//!
//! * stream 0 — left orthogonal factor (or the quadratic's eigenbasis)
//! * stream 1 — right orthogonal factor (or the linear term)
//! * stream 2 — ground-truth support and values (lasso), operator left
//!   factor (structured l1)
//! * stream 3 — observation noise (lasso), operator right factor
//!   (structured l1)
//! * stream 4 — linear term (structured l1)

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::problem::{CompositeProblem, LinearMap, NonsmoothTerm, SmoothOracle};

fn stream(seed: u64, idx: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(idx);
    rng
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| -> f64 { StandardNormal.sample(rng) })
}

/// Orthonormal columns from the thin QR of a Gaussian matrix.
fn random_orthogonal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let g = gaussian_matrix(rng, rows, cols);
    let qr = g.qr();
    qr.q()
}

/// `count` values logarithmically spaced over `[lo, hi]`, descending.
pub fn logspace_desc(lo: f64, hi: f64, count: usize) -> DVector<f64> {
    assert!(lo > 0.0 && hi >= lo && count > 0);
    if count == 1 {
        return DVector::from_element(1, hi);
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    DVector::from_fn(count, |i, _| {
        (lhi + (llo - lhi) * i as f64 / (count - 1) as f64).exp()
    })
}

/// Sparse regression instance: an ill-conditioned design matrix with
/// log-spaced singular values scaled by √m, a sparse positive ground truth,
/// and noisy observations.
#[derive(Debug, Clone)]
pub struct LassoInstance {
    pub design: DMatrix<f64>,
    pub observations: DVector<f64>,
    pub ground_truth: DVector<f64>,
}

pub fn gen_lasso(
    seed: u64,
    m: usize,
    n: usize,
    sv_range: (f64, f64),
    sparsity: f64,
    noise: f64,
    lambda: f64,
) -> Result<(CompositeProblem, LassoInstance)> {
    assert!(m >= n && n >= 1);
    let u = random_orthogonal(&mut stream(seed, 0), m, n);
    let v = random_orthogonal(&mut stream(seed, 1), n, n);
    let sv = logspace_desc(sv_range.0, sv_range.1, n) * (m as f64).sqrt();
    let design = &u * DMatrix::from_diagonal(&sv) * v.transpose();

    let mut rng = stream(seed, 2);
    let nnz = ((sparsity * n as f64).ceil() as usize).clamp(1, n);
    let mut ground_truth = DVector::zeros(n);
    let mut placed = 0;
    while placed < nnz {
        let i = rng.random_range(0..n);
        if ground_truth[i] == 0.0 {
            ground_truth[i] = rng.random_range(1.0..2.0);
            placed += 1;
        }
    }

    let mut noise_rng = stream(seed, 3);
    let eps = DVector::from_fn(m, |_, _| -> f64 {
        let g: f64 = StandardNormal.sample(&mut noise_rng);
        noise * g
    });
    let observations = &design * &ground_truth + eps;

    let lipschitz = sv[0] * sv[0];
    let smooth = SmoothOracle::least_squares(&design, &observations).with_lipschitz(lipschitz);
    let problem = CompositeProblem::new(
        smooth,
        LinearMap::identity(n),
        NonsmoothTerm::l1(lambda),
    )?;
    Ok((problem, LassoInstance { design, observations, ground_truth }))
}

/// Quadratic with log-spaced eigenvalues in `[1, κ]` over the unit simplex.
pub fn gen_simplex_qp(seed: u64, n: usize, kappa: f64) -> Result<CompositeProblem> {
    assert!(n >= 2);
    let u = random_orthogonal(&mut stream(seed, 0), n, n);
    let eigs = logspace_desc(1.0, kappa, n);
    let q = &u * DMatrix::from_diagonal(&eigs) * u.transpose();
    let q = (&q + q.transpose()) * 0.5;
    let mut rng = stream(seed, 1);
    let c = DVector::from_fn(n, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
    let smooth = SmoothOracle::quadratic(q, c).with_lipschitz(kappa);
    CompositeProblem::new(smooth, LinearMap::identity(n), NonsmoothTerm::simplex())
}

/// Ill-conditioned quadratic composed with a wide operator under an ℓ₁
/// term: `½xᵀQx + cᵀx + λ‖Ax‖₁` with log-spaced spectra for both `Q` and
/// `A`.
pub fn gen_structured_l1(
    seed: u64,
    n: usize,
    m: usize,
    kappa: f64,
    sigma_a: f64,
    lambda: f64,
) -> Result<CompositeProblem> {
    assert!(m < n);
    let u_q = random_orthogonal(&mut stream(seed, 0), n, n);
    let eigs = logspace_desc(1.0, kappa, n);
    let q = &u_q * DMatrix::from_diagonal(&eigs) * u_q.transpose();
    let q = (&q + q.transpose()) * 0.5;
    let mut rng = stream(seed, 4);
    let c = DVector::from_fn(n, |_, _| -> f64 { StandardNormal.sample(&mut rng) });

    let u_a = random_orthogonal(&mut stream(seed, 2), m, m);
    let v_a = random_orthogonal(&mut stream(seed, 3), n, m);
    let sv = logspace_desc(1.0, sigma_a, m);
    let a = &u_a * DMatrix::from_diagonal(&sv) * v_a.transpose();

    let smooth = SmoothOracle::quadratic(q, c).with_lipschitz(kappa);
    CompositeProblem::new(smooth, LinearMap::new(a)?, NonsmoothTerm::l1(lambda))
}
