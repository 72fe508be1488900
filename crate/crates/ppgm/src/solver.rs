//! Main solver loop: preconditioned prox directions, the two-dimensional
//! conjugate-momentum refinement, Armijo backtracking, and per-iteration
//! tracing. The plain-momentum variant skips the orthogonalization step and
//! is otherwise identical.

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dualprox::prox_direction;
use crate::error::{Error, Result};
use crate::precond::{Preconditioner, DEFAULT_BB_CLIP};
use crate::problem::{CompositeProblem, DEFAULT_FEAS_TOL};
use crate::subspace::{build_direction, momentum_direction, SubspaceOptions};

/// Maximum number of Armijo backtracks before declaring the direction
/// broken.
pub const MAX_BACKTRACKS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Momentum orthogonalized against the prox direction in the local
    /// Hessian inner product.
    ConjugateMomentum,
    /// Raw momentum direction (no orthogonalization).
    PlainMomentum,
}

/// How Hessian–vector products are probed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianProbe {
    FiniteDifference,
    /// Use the oracle's exact Hessian when present (test mode).
    Exact,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Curvature safeguard bounds, `0 < c1 <= c2`.
    pub c1: f64,
    pub c2: f64,
    /// Armijo parameter in (0, 1).
    pub sigma: f64,
    /// Backtracking ratio in (0, 1).
    pub gamma: f64,
    /// Scale of the finite-difference step.
    pub fd_eps_scale: f64,
    /// Relative stationarity tolerance: stop when `‖v‖ <= tol (1 + ‖x‖)`.
    pub tol: f64,
    pub max_iter: usize,
    pub variant: Variant,
    /// Clipping range for the Barzilai–Borwein scale.
    pub bb_clip: (f64, f64),
    pub probe: HessianProbe,
    /// Record per-iteration descent diagnostics (used by the verification
    /// suite).
    pub collect_diagnostics: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            c1: 1e-8,
            c2: 1e8,
            sigma: 1e-4,
            gamma: 0.5,
            fd_eps_scale: f64::EPSILON.sqrt(),
            tol: 1e-10,
            max_iter: 5000,
            variant: Variant::ConjugateMomentum,
            bb_clip: DEFAULT_BB_CLIP,
            probe: HessianProbe::FiniteDifference,
            collect_diagnostics: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.into()));
        if !(self.c1 > 0.0 && self.c1 <= self.c2) {
            return bad("need 0 < c1 <= c2");
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return bad("sigma must lie in (0, 1)");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.fd_eps_scale > 0.0) {
            return bad("fd_eps_scale must be positive");
        }
        if !(self.tol >= 0.0) {
            return bad("tol must be nonnegative");
        }
        if !(self.bb_clip.0 > 0.0 && self.bb_clip.0 <= self.bb_clip.1) {
            return bad("need 0 < bb_clip.0 <= bb_clip.1");
        }
        Ok(())
    }

    fn subspace_options(&self) -> SubspaceOptions {
        SubspaceOptions {
            c1: self.c1,
            c2: self.c2,
            fd_eps_scale: self.fd_eps_scale,
            orthogonalize: matches!(self.variant, Variant::ConjugateMomentum),
            exact_hessian: matches!(self.probe, HessianProbe::Exact),
        }
    }
}

/// One trace row per loop entry: objective and residual at the incoming
/// iterate, the stepsize taken from it (0 on the terminal row), and wall
/// time since the run started.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub objective: f64,
    pub residual: f64,
    pub stepsize: f64,
    pub wall_seconds: f64,
}

/// Exact-Hessian inner products of the two subspace legs.
#[derive(Debug, Clone, Copy)]
pub struct ConjugacyCheck {
    /// `vᵀ H s̃`
    pub v_h_s: f64,
    /// `‖v‖_H`
    pub v_h_norm: f64,
    /// `‖s̃‖_H`
    pub s_h_norm: f64,
}

/// Per-iteration quantities consumed by the verification suite.
#[derive(Debug, Clone)]
pub struct IterationDiagnostics {
    pub iter: usize,
    /// `∇f(x)ᵀd + g(Ax + Ad) − g(Ax)`
    pub model_decrement: f64,
    pub d_norm_sq: f64,
    pub v_norm_sq: f64,
    /// Spectral lower bound of the current preconditioner.
    pub c3: f64,
    /// `q_{k,d} (α₃)²` (only when the subspace step ran).
    pub q_d_alpha3_sq: Option<f64>,
    pub conjugacy: Option<ConjugacyCheck>,
    pub stepsize: f64,
    /// `domain_contains(x_{k+1}, 1e-8)`
    pub feasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// `‖v‖ <= tol (1 + ‖x‖)` fired.
    Stationary,
    /// Iteration budget exhausted.
    MaxIter,
    /// The line search could not certify further decrease: the iterate
    /// has reached the precision floor of the objective evaluation.
    Stalled,
}

#[derive(Debug)]
pub struct RunResult {
    pub x: DVector<f64>,
    pub objective: f64,
    pub termination: Termination,
    pub trace: Vec<TraceRecord>,
    pub diagnostics: Vec<IterationDiagnostics>,
}

/// Mutable state of one run. A run owns its state; the problem is shared
/// immutably.
pub struct SolverState {
    pub x: DVector<f64>,
    pub k: usize,
    d_prev: Option<DVector<f64>>,
    prev: Option<(DVector<f64>, DVector<f64>)>,
    precond: Preconditioner,
    start: Instant,
    pub trace: Vec<TraceRecord>,
    pub diagnostics: Vec<IterationDiagnostics>,
}

impl SolverState {
    pub fn new(problem: &CompositeProblem, x0: DVector<f64>) -> Result<Self> {
        if !problem.domain_contains(&x0, DEFAULT_FEAS_TOL) {
            return Err(Error::Infeasible);
        }
        let precond = Preconditioner::for_problem(problem, &x0)?;
        Ok(Self {
            x: x0,
            k: 0,
            d_prev: None,
            prev: None,
            precond,
            start: Instant::now(),
            trace: Vec::new(),
            diagnostics: Vec::new(),
        })
    }

    pub fn preconditioner(&self) -> &Preconditioner {
        &self.precond
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Continue,
    Terminated(Termination),
}

/// Armijo backtracking: the largest `t = γʲ` with
/// `F(x + t d) − F(x) <= σ t Δ`, where `Δ` is the model decrement of `d`.
/// Infeasible trial points evaluate to `+∞` and are rejected.
pub fn armijo_search(
    problem: &CompositeProblem,
    x: &DVector<f64>,
    d: &DVector<f64>,
    model_decrement: f64,
    sigma: f64,
    gamma: f64,
) -> Result<f64> {
    if !(model_decrement < 0.0) {
        return Err(Error::NotDescent(model_decrement));
    }
    let fx = problem.eval_objective(x)?;
    let mut t = 1.0;
    for _ in 0..=MAX_BACKTRACKS {
        let trial = x + t * d;
        let ft = problem.eval_objective(&trial)?;
        if ft - fx <= sigma * t * model_decrement {
            return Ok(t);
        }
        t *= gamma;
    }
    Err(Error::LineSearchFailure(MAX_BACKTRACKS))
}

/// Executes one iteration: rescale the preconditioner, compute the prox
/// direction, test stationarity, build the (subspace) search direction,
/// line-search, and advance the iterate. Appends one trace record.
pub fn step(
    problem: &CompositeProblem,
    state: &mut SolverState,
    config: &SolverConfig,
) -> Result<StepStatus> {
    let x = state.x.clone();
    let grad = problem.eval_gradient(&x)?;

    // working metrics depend on the iterate; rebuild at the carried scale,
    // then apply the BB secant update
    let alpha = state.precond.scalar_scale().unwrap_or(1.0);
    let mut p = if state.precond.working_matrix().is_some() {
        Preconditioner::for_problem(problem, &x)?.with_scale(alpha)
    } else {
        state.precond.clone()
    };
    if let Some((px, pg)) = &state.prev {
        let s = &x - px;
        let y = &grad - pg;
        if s.norm() > 0.0 {
            p = p.bb_rescale(&s, &y, config.bb_clip)?;
        }
    }
    state.precond = p;

    let fx = problem.eval_objective(&x)?;
    let sol = prox_direction(problem, &x, &grad, &state.precond)?;
    let v_norm = sol.v.norm();
    let wall = state.start.elapsed().as_secs_f64();

    if v_norm <= config.tol * (1.0 + x.norm()) {
        state.trace.push(TraceRecord {
            iter: state.k,
            objective: fx,
            residual: v_norm,
            stepsize: 0.0,
            wall_seconds: wall,
        });
        return Ok(StepStatus::Terminated(Termination::Stationary));
    }

    let opts = config.subspace_options();
    let (d, substep) = match &state.d_prev {
        None => (sol.v.clone(), None),
        Some(d_prev) => {
            let s = momentum_direction(problem, &state.precond, &x, d_prev)?;
            let st = build_direction(problem, &x, &grad, &sol.v, &s, &opts)?;
            (st.d.clone(), Some(st))
        }
    };

    // the model decrement is evaluated on the working encoding (the domain
    // the dual subproblem enforced); the line search below still rejects
    // trial points that leave the true domain
    let (g_at_x, g_at_xd) = match state.precond.working_matrix() {
        Some(wm) => (
            problem.nonsmooth_value_working(&x, wm.index),
            problem.nonsmooth_value_working(&(&x + &d), wm.index),
        ),
        None => (
            problem.nonsmooth_value(&x),
            problem.nonsmooth_value(&(&x + &d)),
        ),
    };
    let model_decrement = grad.dot(&d) + g_at_xd - g_at_x;
    let t = armijo_search(problem, &x, &d, model_decrement, config.sigma, config.gamma)?;

    let x_next = &x + t * &d;

    if config.collect_diagnostics {
        let conjugacy = substep.as_ref().and_then(|st| {
            problem.smooth().hessian_exact(&x).map(|h| {
                let hv = &h * &st.v;
                let hs = &h * &st.s_tilde;
                ConjugacyCheck {
                    v_h_s: st.v.dot(&hs),
                    v_h_norm: st.v.dot(&hv).max(0.0).sqrt(),
                    s_h_norm: st.s_tilde.dot(&hs).max(0.0).sqrt(),
                }
            })
        });
        state.diagnostics.push(IterationDiagnostics {
            iter: state.k,
            model_decrement,
            d_norm_sq: d.norm_squared(),
            v_norm_sq: v_norm * v_norm,
            c3: state.precond.bounds().0,
            q_d_alpha3_sq: substep.as_ref().map(|st| st.q_d * st.alpha3 * st.alpha3),
            conjugacy,
            stepsize: t,
            feasible: problem.domain_contains(&x_next, 1e-8),
        });
    }

    state.trace.push(TraceRecord {
        iter: state.k,
        objective: fx,
        residual: v_norm,
        stepsize: t,
        wall_seconds: wall,
    });
    state.prev = Some((x, grad));
    state.d_prev = Some(d);
    state.x = x_next;
    state.k += 1;
    Ok(StepStatus::Continue)
}

/// Runs the solver from `x0` until stationarity or the iteration budget.
/// The returned objective sequence along the trace is nonincreasing.
pub fn run(
    problem: &CompositeProblem,
    x0: DVector<f64>,
    config: &SolverConfig,
) -> Result<RunResult> {
    config.validate()?;
    let mut state = SolverState::new(problem, x0)?;
    let mut termination = Termination::MaxIter;
    while state.k < config.max_iter {
        match step(problem, &mut state, config) {
            Ok(StepStatus::Continue) => {}
            Ok(StepStatus::Terminated(reason)) => {
                termination = reason;
                break;
            }
            // no certifiable decrease is left at this precision; return the
            // current iterate instead of surfacing the line-search error
            Err(Error::LineSearchFailure(_)) | Err(Error::NotDescent(_)) if state.k > 0 => {
                termination = Termination::Stalled;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let objective = problem.eval_objective(&state.x)?;
    Ok(RunResult {
        x: state.x,
        objective,
        termination,
        trace: state.trace,
        diagnostics: state.diagnostics,
    })
}
