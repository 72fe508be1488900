//! Composite optimization solver built around a structure-exploiting
//! preconditioner with closed-form dual proximal updates and a
//! two-dimensional conjugate-momentum subspace acceleration, together with
//! first-order baselines and a reproducible benchmark harness.

pub mod baselines;
pub mod bench;
pub mod dualprox;
pub mod error;
pub mod oned;
pub mod precond;
pub mod problem;
pub mod solver;
pub mod subspace;
pub mod verify;

pub use error::{Error, Result};
pub use problem::{
    CompositeProblem, LinearMap, NonsmoothTerm, RankClass, SmoothOracle, WorkingIndexPolicy,
};
pub use solver::{run, SolverConfig, TraceRecord, Variant};
