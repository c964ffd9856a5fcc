//! Group-sparse recovery with the l0(l2) penalty.
//!
//! Minimizes `1/2 ||Psi x - y||^2 + lambda * #{i : x_{G_i} != 0}` over
//! group-sparse `x` with a primal-dual active set method and continuation in
//! `lambda`, together with blockwise coherence analysis, a group OMP
//! baseline, a synthetic problem generator and a benchmark runner.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod coherence;
pub mod error;
pub mod group;
pub mod harness;
pub mod io;
pub mod solver;

pub use error::{Error, Result};
pub use group::{
    group_norm, objective, ActiveSet, GroupPartition, GroupSignal, GroupedDesign, OuterExponent,
};
pub use solver::{gpdasc_path, PrimalDualState, SolutionPath, SolverConfig, TerminationReason};
