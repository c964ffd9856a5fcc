//! The l0(l2)-penalized least-squares solver.
//!
//! The inner loop is a primal-dual active set iteration for a fixed
//! regularization parameter; the outer loop walks a geometric path of
//! parameters downward from `lambda0 = ||y||^2 / 2`, warm-starting each
//! problem from the previous solution, and stops by the discrepancy
//! principle when a noise level is supplied.

mod brute;
mod gpdas;
mod lsq;
mod threshold;

pub use brute::{brute_force_global_min, BRUTE_FORCE_SUBSET_LIMIT};
pub use gpdas::{gpdas_fixed_lambda, gpdasc_path, solve_at_lambda, InnerResult};
pub use lsq::{ls_on_active, oracle_solution};
pub use threshold::{
    active_from_state, hard_threshold_group, optimality_residual, OptimalityReport,
};

use std::time::Duration;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::group::{ActiveSet, GroupSignal, GroupedDesign};

/// Iterate of the primal-dual active set method.
///
/// `active` is the group set the primal variable was fitted on: `x` vanishes
/// off it and `d = Psi^t (y - Psi x)` vanishes on it.
#[derive(Debug, Clone)]
pub struct PrimalDualState {
    pub x: GroupSignal,
    pub d: GroupSignal,
    pub active: ActiveSet,
    /// `||Psi x - y||`.
    pub residual_norm: f64,
}

impl PrimalDualState {
    /// `x = 0`, `d = Psi^t y`, empty active set.
    pub fn initial(design: &GroupedDesign, y: &DVector<f64>) -> Result<Self> {
        let d = design.adjoint(y)?;
        Ok(Self {
            x: design.zero_signal(),
            d,
            active: ActiveSet::empty(),
            residual_norm: y.norm(),
        })
    }

    /// Completes a primal variable supported on `active` with its dual
    /// variable. The dual is set to exactly zero on the active groups.
    pub fn from_primal(
        design: &GroupedDesign,
        y: &DVector<f64>,
        x: GroupSignal,
        active: ActiveSet,
    ) -> Result<Self> {
        let residual = y - design.apply(&x)?;
        let mut d = design.adjoint(&residual)?;
        let part = design.partition();
        for i in active.iter() {
            d.values.rows_mut(part.offset(i), part.size(i)).fill(0.0);
        }
        Ok(Self {
            x,
            d,
            active,
            residual_norm: residual.norm(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Initial parameter; `None` means `||y||^2 / 2`.
    pub lambda0: Option<f64>,
    /// Decrease factor of the parameter path, in `(0, 1)`.
    pub rho: f64,
    /// Maximum inner iterations per parameter.
    pub k_max: usize,
    /// Noise level for the discrepancy stop.
    pub eps: Option<f64>,
    /// Path floor; `None` means `1e-15 * lambda0`.
    pub lambda_min: Option<f64>,
    pub max_outer: usize,
    /// Maximum number of active groups before the path is cut.
    pub t_cap: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda0: None,
            rho: 0.7,
            k_max: 5,
            eps: None,
            lambda_min: None,
            max_outer: 1000,
            t_cap: None,
        }
    }
}

impl SolverConfig {
    pub fn with_eps(eps: f64) -> Self {
        Self {
            eps: Some(eps),
            ..Self::default()
        }
    }

    /// Resolves `(lambda0, lambda_min)` for data `y` and checks invariants.
    pub fn resolve(&self, y: &DVector<f64>) -> Result<(f64, f64)> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidParams(format!(
                "rho={} not in (0,1)",
                self.rho
            )));
        }
        if self.k_max < 1 {
            return Err(Error::InvalidParams("k_max must be at least 1".into()));
        }
        if let Some(eps) = self.eps {
            if !(eps >= 0.0) {
                return Err(Error::InvalidParams(format!(
                    "eps={eps} must be non-negative"
                )));
            }
        }
        let lambda0 = self.lambda0.unwrap_or_else(|| 0.5 * y.norm_squared());
        if !(lambda0 >= 0.0) || !lambda0.is_finite() {
            return Err(Error::InvalidParams(format!(
                "lambda0={lambda0} must be non-negative"
            )));
        }
        let lambda_min = self.lambda_min.unwrap_or(1e-15 * lambda0);
        if lambda0 > 0.0 && !(lambda_min < lambda0) {
            return Err(Error::InvalidParams(format!(
                "lambda_min={lambda_min} must be below lambda0={lambda0}"
            )));
        }
        Ok((lambda0, lambda_min))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationReason {
    DiscrepancyMet,
    LambdaMinReached,
    MaxOuter,
    /// The active columns outnumber the rows, the active least squares
    /// problem is singular, or the active-group cap was exceeded.
    ActiveSetOverflow,
}

impl TerminationReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::DiscrepancyMet => "discrepancy-met",
            Self::LambdaMinReached => "lambda-min-reached",
            Self::MaxOuter => "max-outer",
            Self::ActiveSetOverflow => "active-set-overflow",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PathStep {
    pub lambda: f64,
    pub x: GroupSignal,
    pub active: ActiveSet,
    pub residual_norm: f64,
    /// Active-set evaluations performed for this parameter (0 for the
    /// starting point).
    pub inner_iterations: usize,
    pub converged: bool,
    pub elapsed: Duration,
}

/// Solutions along the continuation path. `steps[0]` is the zero solution at
/// `lambda0`; parameters strictly decrease by the factor `rho`.
#[derive(Debug, Clone)]
pub struct SolutionPath {
    pub steps: Vec<PathStep>,
    pub termination: TerminationReason,
    /// Primal-dual state at the last recorded step.
    pub final_state: PrimalDualState,
}

impl SolutionPath {
    pub fn last(&self) -> &PathStep {
        self.steps
            .last()
            .expect("a path always holds its starting point")
    }

    pub fn solution(&self) -> &GroupSignal {
        &self.last().x
    }

    pub fn active(&self) -> &ActiveSet {
        &self.last().active
    }

    /// Inner iteration counts of the continuation steps (the starting point
    /// excluded).
    pub fn inner_iterations(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps.iter().skip(1).map(|s| s.inner_iterations)
    }

    pub fn outer_steps(&self) -> usize {
        self.steps.len() - 1
    }
}
