//! Benchmark harness: manifest-driven experiment families, reference-value
//! computation, per-algorithm runs, and CSV/SVG reporting. A manifest fully
//! determines the problem data (seeded generators), the starting point, and
//! the budgets, so reruns reproduce traces exactly.

pub mod generators;
pub mod plot;
pub mod report;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, PdhgConfig};
use crate::error::{Error, Result};
use crate::problem::CompositeProblem;
use crate::solver::{self, SolverConfig, TraceRecord, Variant};

pub use generators::{gen_lasso, gen_simplex_qp, gen_structured_l1, LassoInstance};
pub use report::emit_report;

/// Gaps are clipped below at this floor for log plots.
pub const GAP_FLOOR: f64 = 1e-16;

/// Stationarity tolerance used for solver runs inside the harness; tight
/// enough that gap curves reach the double-precision floor before stopping.
const HARNESS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Lasso,
    SimplexQp,
    StructuredL1,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Family::Lasso => "lasso",
            Family::SimplexQp => "simplex-qp",
            Family::StructuredL1 => "structured-l1",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lasso" => Ok(Family::Lasso),
            "simplex-qp" => Ok(Family::SimplexQp),
            "structured-l1" => Ok(Family::StructuredL1),
            other => Err(Error::InvalidParameter(format!("unknown family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgoId {
    P2gmCm,
    P2gmM,
    FistaBt,
    FistaBtRs,
    Pdhg,
}

impl AlgoId {
    pub const ALL: [AlgoId; 5] = [
        AlgoId::P2gmCm,
        AlgoId::P2gmM,
        AlgoId::FistaBt,
        AlgoId::FistaBtRs,
        AlgoId::Pdhg,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AlgoId::P2gmCm => "p2gm_cm",
            AlgoId::P2gmM => "p2gm_m",
            AlgoId::FistaBt => "fista_bt",
            AlgoId::FistaBtRs => "fista_bt_rs",
            AlgoId::Pdhg => "pdhg",
        }
    }
}

impl std::fmt::Display for AlgoId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AlgoId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p2gm_cm" | "p2gm-cm" => Ok(AlgoId::P2gmCm),
            "p2gm_m" | "p2gm-m" => Ok(AlgoId::P2gmM),
            "fista_bt" | "fista-bt" => Ok(AlgoId::FistaBt),
            "fista_bt_rs" | "fista-bt-rs" => Ok(AlgoId::FistaBtRs),
            "pdhg" => Ok(AlgoId::Pdhg),
            other => Err(Error::InvalidParameter(format!("unknown algorithm '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Budgets {
    pub max_iter: usize,
    /// The reference value comes from a conjugate-momentum run with
    /// `reference_multiplier × max_iter` iterations.
    pub reference_multiplier: usize,
}

/// Family-specific generator parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyExtra {
    Lasso {
        lambda: f64,
        noise: f64,
        sparsity: f64,
        /// Singular values of the design matrix are log-spaced over
        /// `[sv_lo, sv_hi]` before the √m scaling.
        sv_lo: f64,
        sv_hi: f64,
    },
    SimplexQp,
    StructuredL1 { sigma_a: f64, lambda: f64 },
}

/// Everything needed to reproduce one experiment bit for bit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub family: Family,
    pub seed: u64,
    /// `(m, n)`; the simplex family uses `n` only.
    pub dims: (usize, usize),
    pub kappa: f64,
    pub extra: FamilyExtra,
    pub algos: Vec<AlgoId>,
    pub budgets: Budgets,
}

impl ExperimentManifest {
    /// Paper-scale defaults for a family.
    pub fn defaults(family: Family, seed: u64) -> Self {
        match family {
            Family::Lasso => Self {
                family,
                seed,
                dims: (5000, 500),
                kappa: 1e6,
                extra: FamilyExtra::Lasso {
                    lambda: 1e-4,
                    noise: 1e-3,
                    sparsity: 0.005,
                    sv_lo: 1e-3,
                    sv_hi: 1.0,
                },
                algos: AlgoId::ALL.to_vec(),
                budgets: Budgets { max_iter: 3500, reference_multiplier: 10 },
            },
            Family::SimplexQp => Self {
                family,
                seed,
                dims: (100, 100),
                kappa: 5e5,
                extra: FamilyExtra::SimplexQp,
                algos: AlgoId::ALL.to_vec(),
                budgets: Budgets { max_iter: 4000, reference_multiplier: 10 },
            },
            Family::StructuredL1 => Self {
                family,
                seed,
                dims: (50, 100),
                kappa: 5e4,
                extra: FamilyExtra::StructuredL1 {
                    sigma_a: 5000f64.sqrt(),
                    lambda: 1.0 / 16.0,
                },
                algos: AlgoId::ALL.to_vec(),
                budgets: Budgets { max_iter: 7000, reference_multiplier: 10 },
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let consistent = matches!(
            (&self.family, &self.extra),
            (Family::Lasso, FamilyExtra::Lasso { .. })
                | (Family::SimplexQp, FamilyExtra::SimplexQp)
                | (Family::StructuredL1, FamilyExtra::StructuredL1 { .. })
        );
        if !consistent {
            return Err(Error::InvalidParameter(
                "manifest extra parameters do not match the family".into(),
            ));
        }
        if self.algos.is_empty() {
            return Err(Error::InvalidParameter("manifest lists no algorithms".into()));
        }
        if self.budgets.max_iter == 0 || self.budgets.reference_multiplier == 0 {
            return Err(Error::InvalidParameter("budgets must be positive".into()));
        }
        Ok(())
    }

    /// Builds the problem instance; deterministic in the seed.
    pub fn build_problem(&self) -> Result<(CompositeProblem, Option<LassoInstance>)> {
        self.validate()?;
        let (m, n) = self.dims;
        match &self.extra {
            FamilyExtra::Lasso { lambda, noise, sparsity, sv_lo, sv_hi } => {
                let (p, inst) =
                    gen_lasso(self.seed, m, n, (*sv_lo, *sv_hi), *sparsity, *noise, *lambda)?;
                Ok((p, Some(inst)))
            }
            FamilyExtra::SimplexQp => Ok((gen_simplex_qp(self.seed, n, self.kappa)?, None)),
            FamilyExtra::StructuredL1 { sigma_a, lambda } => Ok((
                gen_structured_l1(self.seed, n, m, self.kappa, *sigma_a, *lambda)?,
                None,
            )),
        }
    }

    /// Family starting point: zero for the regression families, the
    /// simplex centroid otherwise.
    pub fn initial_point(&self) -> DVector<f64> {
        let n = self.dims.1;
        match self.family {
            Family::Lasso | Family::StructuredL1 => DVector::zeros(n),
            Family::SimplexQp => DVector::repeat(n, 1.0 / n as f64),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Skipped { reason: String },
}

/// Trace of one algorithm on one instance.
#[derive(Debug, Clone)]
pub struct AlgoRun {
    pub algo: AlgoId,
    pub status: RunStatus,
    pub trace: Vec<TraceRecord>,
    pub final_objective: f64,
    pub wall_seconds: f64,
}

impl AlgoRun {
    fn skipped(algo: AlgoId, reason: String) -> Self {
        Self {
            algo,
            status: RunStatus::Skipped { reason },
            trace: Vec::new(),
            final_objective: f64::NAN,
            wall_seconds: 0.0,
        }
    }
}

/// Result bundle of one experiment: the reference value and one run per
/// requested algorithm.
#[derive(Debug)]
pub struct ExperimentBundle {
    pub manifest: ExperimentManifest,
    /// Long-run conjugate-momentum approximation of the optimal value.
    pub reference_value: f64,
    pub runs: Vec<AlgoRun>,
}

impl ExperimentBundle {
    /// `(iter, gap, seconds)` series of a run, clipped at [`GAP_FLOOR`].
    pub fn gap_series(&self, run: &AlgoRun) -> Vec<(usize, f64, f64)> {
        run.trace
            .iter()
            .map(|r| {
                (
                    r.iter,
                    (r.objective - self.reference_value).max(GAP_FLOOR),
                    r.wall_seconds,
                )
            })
            .collect()
    }

    /// First iteration whose gap is at or below `target`, if any.
    pub fn iterations_to_gap(&self, run: &AlgoRun, target: f64) -> Option<usize> {
        self.gap_series(run)
            .iter()
            .find(|(_, gap, _)| *gap <= target)
            .map(|(it, _, _)| *it)
    }

    pub fn run(&self, algo: AlgoId) -> Option<&AlgoRun> {
        self.runs.iter().find(|r| r.algo == algo)
    }
}

fn solver_config(variant: Variant, max_iter: usize, diagnostics: bool) -> SolverConfig {
    SolverConfig {
        variant,
        max_iter,
        tol: HARNESS_TOL,
        collect_diagnostics: diagnostics,
        ..Default::default()
    }
}

/// Runs one algorithm on the problem, mapping capability errors to a
/// skipped status.
pub fn run_algo(
    algo: AlgoId,
    problem: &CompositeProblem,
    x0: &DVector<f64>,
    max_iter: usize,
    diagnostics: bool,
) -> Result<AlgoRun> {
    let outcome = match algo {
        AlgoId::P2gmCm | AlgoId::P2gmM => {
            let variant = if algo == AlgoId::P2gmCm {
                Variant::ConjugateMomentum
            } else {
                Variant::PlainMomentum
            };
            let cfg = solver_config(variant, max_iter, diagnostics);
            solver::run(problem, x0.clone(), &cfg).map(|res| AlgoRun {
                algo,
                status: RunStatus::Completed,
                wall_seconds: res.trace.last().map_or(0.0, |r| r.wall_seconds),
                final_objective: res.objective,
                trace: res.trace,
            })
        }
        AlgoId::FistaBt | AlgoId::FistaBtRs => {
            let run = if algo == AlgoId::FistaBt {
                baselines::fista_bt(problem, x0.clone(), max_iter)
            } else {
                baselines::fista_bt_rs(problem, x0.clone(), max_iter)
            };
            run.map(|res| AlgoRun {
                algo,
                status: RunStatus::Completed,
                wall_seconds: res.trace.last().map_or(0.0, |r| r.wall_seconds),
                final_objective: res.objective,
                trace: res.trace,
            })
        }
        AlgoId::Pdhg => PdhgConfig::for_problem(problem)
            .and_then(|cfg| baselines::pdhg(problem, x0.clone(), None, &cfg, max_iter))
            .map(|res| AlgoRun {
                algo,
                status: RunStatus::Completed,
                wall_seconds: res.trace.last().map_or(0.0, |r| r.wall_seconds),
                final_objective: res.objective,
                trace: res.trace,
            }),
    };
    match outcome {
        Ok(run) => Ok(run),
        // capability gaps are recorded, not fatal
        Err(Error::Unsupported(reason)) => Ok(AlgoRun::skipped(algo, reason)),
        Err(Error::InvalidParameter(reason)) => Ok(AlgoRun::skipped(algo, reason)),
        Err(e) => Err(e),
    }
}

/// Number of parallel runs allowed, from `BENCH_THREADS` (default 1,
/// keeping CPU-time curves clean).
pub fn bench_threads() -> usize {
    std::env::var("BENCH_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

/// Runs the whole experiment: build the instance, compute the reference
/// value with a long conjugate-momentum run, then run every requested
/// algorithm from the same starting point.
pub fn run_experiment(manifest: &ExperimentManifest) -> Result<ExperimentBundle> {
    manifest.validate()?;
    let (problem, _) = manifest.build_problem()?;
    let x0 = manifest.initial_point();

    let ref_cfg = solver_config(
        Variant::ConjugateMomentum,
        manifest.budgets.max_iter * manifest.budgets.reference_multiplier,
        false,
    );
    let reference = solver::run(&problem, x0.clone(), &ref_cfg)?;
    let reference_value = reference.objective;

    let threads = bench_threads();
    let max_iter = manifest.budgets.max_iter;
    let mut runs: Vec<Option<AlgoRun>> = manifest.algos.iter().map(|_| None).collect();
    if threads <= 1 {
        for (slot, algo) in runs.iter_mut().zip(&manifest.algos) {
            *slot = Some(run_algo(*algo, &problem, &x0, max_iter, false)?);
        }
    } else {
        for chunk in manifest.algos.chunks(threads) {
            let offset = manifest
                .algos
                .iter()
                .position(|a| a == &chunk[0])
                .expect("chunk from the same vec");
            let results: Vec<Result<AlgoRun>> = std::thread::scope(|scope| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|algo| {
                        let problem = &problem;
                        let x0 = &x0;
                        scope.spawn(move || run_algo(*algo, problem, x0, max_iter, false))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("no panics")).collect()
            });
            for (i, r) in results.into_iter().enumerate() {
                runs[offset + i] = Some(r?);
            }
        }
    }

    Ok(ExperimentBundle {
        manifest: manifest.clone(),
        reference_value,
        runs: runs.into_iter().map(|r| r.expect("filled above")).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_simplex_manifest() -> ExperimentManifest {
        ExperimentManifest {
            family: Family::SimplexQp,
            seed: 4,
            dims: (20, 20),
            kappa: 1e3,
            extra: FamilyExtra::SimplexQp,
            algos: AlgoId::ALL.to_vec(),
            budgets: Budgets { max_iter: 400, reference_multiplier: 10 },
        }
    }

    #[test]
    fn experiment_reference_and_gap_bookkeeping() {
        let manifest = small_simplex_manifest();
        let bundle = run_experiment(&manifest).unwrap();

        let cm = bundle.run(AlgoId::P2gmCm).unwrap();
        assert!(matches!(cm.status, RunStatus::Completed));
        let gaps = bundle.gap_series(cm);
        assert!(gaps[0].1 > 0.0, "initial gap must be positive");
        let final_gap = gaps.last().unwrap().1;
        assert!(
            final_gap <= 1e-10 * (1.0 + bundle.reference_value.abs()) + GAP_FLOOR,
            "final gap {final_gap}"
        );

        // min-so-far gap is nonincreasing for every completed run
        for run in &bundle.runs {
            if !matches!(run.status, RunStatus::Completed) {
                continue;
            }
            let mut best = f64::INFINITY;
            for (_, gap, _) in bundle.gap_series(run) {
                let new_best = best.min(gap);
                assert!(new_best <= best);
                best = new_best;
            }
        }

        // PDHG cannot run on the simplex family and is recorded as skipped
        let pd = bundle.run(AlgoId::Pdhg).unwrap();
        assert!(matches!(pd.status, RunStatus::Skipped { .. }));
    }

    #[test]
    fn fista_skipped_on_structured_l1() {
        let mut manifest = ExperimentManifest::defaults(Family::StructuredL1, 1);
        manifest.dims = (10, 20);
        manifest.budgets = Budgets { max_iter: 50, reference_multiplier: 2 };
        let bundle = run_experiment(&manifest).unwrap();
        let fista = bundle.run(AlgoId::FistaBt).unwrap();
        match &fista.status {
            RunStatus::Skipped { reason } => {
                assert!(reason.contains("prox"), "unexpected reason: {reason}")
            }
            RunStatus::Completed => panic!("fista must be skipped on the composite family"),
        }
        for algo in [AlgoId::P2gmCm, AlgoId::P2gmM, AlgoId::Pdhg] {
            assert!(matches!(bundle.run(algo).unwrap().status, RunStatus::Completed));
        }
    }

    #[test]
    fn manifest_round_trips_and_validates() {
        let manifest = ExperimentManifest::defaults(Family::Lasso, 9);
        let s = serde_json::to_string_pretty(&manifest).unwrap();
        let back: ExperimentManifest = serde_json::from_str(&s).unwrap();
        assert!(back.validate().is_ok());
        assert_eq!(back.seed, 9);
        assert_eq!(back.dims, (5000, 500));

        let broken = ExperimentManifest {
            extra: FamilyExtra::SimplexQp,
            ..ExperimentManifest::defaults(Family::Lasso, 1)
        };
        assert!(broken.validate().is_err());
    }
}
