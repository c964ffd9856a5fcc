use std::time::Instant;

use nalgebra::DVector;

use super::lsq::{fit_active_cached, GramCache};
use super::threshold::active_from_state;
use super::{PathStep, PrimalDualState, SolutionPath, SolverConfig, TerminationReason};
use crate::error::{Error, Result};
use crate::group::{ActiveSet, GroupedDesign};

#[derive(Debug, Clone)]
pub struct InnerResult {
    pub state: PrimalDualState,
    /// Number of active-set evaluations, between 1 and `k_max`.
    pub iterations: usize,
    /// Whether the active set repeated before `k_max` ran out.
    pub converged: bool,
}

/// Least-squares refit on `active` followed by the dual update, with the
/// dual zeroed on the active groups.
fn primal_dual_update(
    design: &GroupedDesign,
    y: &DVector<f64>,
    active: ActiveSet,
    cache: &mut GramCache,
) -> Result<PrimalDualState> {
    let fit = fit_active_cached(design, y, &active, cache)?;
    let residual = y - &fit.fitted;
    let mut d = design.matrix().tr_mul(&residual);
    let part = design.partition();
    for i in active.iter() {
        d.rows_mut(part.offset(i), part.size(i)).fill(0.0);
    }
    Ok(PrimalDualState {
        x: design.signal(fit.x)?,
        d: design.signal(d)?,
        active,
        residual_norm: residual.norm(),
    })
}

/// Primal-dual active set iteration at a fixed `lambda`.
///
/// Each iteration computes the active set from the current pair, stops if it
/// equals the previous one (the warm start's set for the first iteration),
/// and otherwise refits the primal variable on it and updates the dual.
pub fn gpdas_fixed_lambda(
    design: &GroupedDesign,
    y: &DVector<f64>,
    lambda: f64,
    warm_start: &PrimalDualState,
    k_max: usize,
) -> Result<InnerResult> {
    gpdas_cached(design, y, lambda, warm_start, k_max, &mut GramCache::new())
}

fn gpdas_cached(
    design: &GroupedDesign,
    y: &DVector<f64>,
    lambda: f64,
    warm_start: &PrimalDualState,
    k_max: usize,
    cache: &mut GramCache,
) -> Result<InnerResult> {
    if k_max < 1 {
        return Err(Error::InvalidParams("k_max must be at least 1".into()));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidParams(format!(
            "lambda={lambda} must be positive"
        )));
    }
    let mut state = warm_start.clone();
    for k in 0..k_max {
        let active = active_from_state(design, &state.x.values, &state.d.values, lambda)?;
        if active == state.active {
            return Ok(InnerResult {
                state,
                iterations: k + 1,
                converged: true,
            });
        }
        state = primal_dual_update(design, y, active, cache)?;
    }
    Ok(InnerResult {
        state,
        iterations: k_max,
        converged: false,
    })
}

fn record(lambda: f64, inner: &InnerResult, started: Instant) -> PathStep {
    PathStep {
        lambda,
        x: inner.state.x.clone(),
        active: inner.state.active.clone(),
        residual_norm: inner.state.residual_norm,
        inner_iterations: inner.iterations,
        converged: inner.converged,
        elapsed: started.elapsed(),
    }
}

/// Primal-dual active set with continuation.
///
/// Starts from the zero solution at `lambda0` and decreases the parameter by
/// `rho` per outer step, warm-starting each inner solve from the previous
/// one. Stops at the first step whose residual is at most `eps` (when
/// given), below `lambda_min`, after `max_outer` steps, or when the active
/// set can no longer be fitted (more columns than rows, numerically
/// singular, or above `t_cap` groups). Steps that overflow are not recorded.
pub fn gpdasc_path(
    design: &GroupedDesign,
    y: &DVector<f64>,
    config: &SolverConfig,
) -> Result<SolutionPath> {
    let (lambda0, lambda_min) = config.resolve(y)?;
    let started = Instant::now();
    let initial = PrimalDualState::initial(design, y)?;
    let mut steps = vec![PathStep {
        lambda: lambda0,
        x: initial.x.clone(),
        active: ActiveSet::empty(),
        residual_norm: initial.residual_norm,
        inner_iterations: 0,
        converged: true,
        elapsed: started.elapsed(),
    }];
    let discrepancy = |r: f64| config.eps.is_some_and(|eps| r <= eps);
    if discrepancy(initial.residual_norm) {
        return Ok(SolutionPath {
            steps,
            termination: TerminationReason::DiscrepancyMet,
            final_state: initial,
        });
    }
    if lambda0 == 0.0 {
        return Ok(SolutionPath {
            steps,
            termination: TerminationReason::LambdaMinReached,
            final_state: initial,
        });
    }

    let mut cache = GramCache::new();
    let mut state = initial;
    let mut lambda = lambda0;
    for _ in 0..config.max_outer {
        lambda *= config.rho;
        if lambda < lambda_min {
            return Ok(SolutionPath {
                steps,
                termination: TerminationReason::LambdaMinReached,
                final_state: state,
            });
        }
        let t0 = Instant::now();
        let inner = match gpdas_cached(design, y, lambda, &state, config.k_max, &mut cache) {
            Ok(inner) => inner,
            Err(Error::IllPosedActiveSet(msg)) => {
                log::debug!("path cut at lambda={lambda:e}: {msg}");
                return Ok(SolutionPath {
                    steps,
                    termination: TerminationReason::ActiveSetOverflow,
                    final_state: state,
                });
            }
            Err(e) => return Err(e),
        };
        if config
            .t_cap
            .is_some_and(|cap| inner.state.active.len() > cap)
        {
            return Ok(SolutionPath {
                steps,
                termination: TerminationReason::ActiveSetOverflow,
                final_state: state,
            });
        }
        steps.push(record(lambda, &inner, t0));
        state = inner.state;
        if discrepancy(state.residual_norm) {
            return Ok(SolutionPath {
                steps,
                termination: TerminationReason::DiscrepancyMet,
                final_state: state,
            });
        }
    }
    Ok(SolutionPath {
        steps,
        termination: TerminationReason::MaxOuter,
        final_state: state,
    })
}

/// Solution of the fixed-`lambda` problem reached by continuation: the path
/// is followed while `rho^s lambda0 > lambda`, then a final inner solve runs
/// at exactly `lambda` from the last path state. Discrepancy and `t_cap`
/// settings are ignored.
pub fn solve_at_lambda(
    design: &GroupedDesign,
    y: &DVector<f64>,
    lambda: f64,
    config: &SolverConfig,
) -> Result<InnerResult> {
    let (lambda0, _) = config.resolve(y)?;
    let mut state = PrimalDualState::initial(design, y)?;
    let mut current = lambda0;
    let mut outer = 0;
    let mut cache = GramCache::new();
    while current * config.rho > lambda && outer < config.max_outer {
        current *= config.rho;
        state = gpdas_cached(design, y, current, &state, config.k_max, &mut cache)?.state;
        outer += 1;
    }
    gpdas_cached(design, y, lambda, &state, config.k_max, &mut cache)
}
