//! Group orthogonal matching pursuit.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::group::{ActiveSet, GroupSignal, GroupedDesign};
use crate::solver::ls_on_active;

/// Statistic used to pick the next group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Selection {
    /// `||Psi_i^t r||`.
    #[default]
    Raw,
    /// `||Psi_bar_i^{-1} Psi_i^t r||`, the correlation with the whitened
    /// block.
    Transformed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GompConfig {
    pub max_groups: usize,
    /// Stop as soon as `||y - Psi x|| <= residual_tol`.
    pub residual_tol: f64,
    pub selection: Selection,
}

#[derive(Debug, Clone)]
pub struct GompResult {
    pub x: GroupSignal,
    pub active: ActiveSet,
    /// Groups in the order they were selected.
    pub order: Vec<usize>,
    /// Residual norm after each refit, starting with `||y||`.
    pub residual_history: Vec<f64>,
    /// Set when a refit was ill-posed; the result is the last good iterate.
    pub ill_posed: bool,
}

pub fn gomp(design: &GroupedDesign, y: &DVector<f64>, config: &GompConfig) -> Result<GompResult> {
    if config.max_groups < 1 {
        return Err(Error::InvalidParams("max_groups must be at least 1".into()));
    }
    if y.len() != design.n_rows() {
        return Err(Error::DimensionMismatch(
            "data length does not match design".into(),
        ));
    }
    let part = design.partition();
    let mut active = ActiveSet::empty();
    let mut order = Vec::new();
    let mut x = design.zero_signal();
    let mut residual = y.clone();
    let mut history = vec![residual.norm()];
    let mut ill_posed = false;
    let budget = config.max_groups.min(design.n_groups());

    while active.len() < budget && residual.norm() > config.residual_tol {
        let corr = design.matrix().tr_mul(&residual);
        let mut best: Option<(usize, f64)> = None;
        for i in (0..design.n_groups()).filter(|&i| !active.contains(i)) {
            let block = corr.rows(part.offset(i), part.size(i));
            let score = match config.selection {
                Selection::Raw => block.norm(),
                Selection::Transformed => (design.group_factor_inv(i) * block).norm(),
            };
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((i, score));
            }
        }
        let Some((pick, _)) = best else { break };
        let mut trial = active.clone();
        trial.insert(pick);
        match ls_on_active(design, y, &trial) {
            Ok(fit) => {
                residual = y - design.apply(&fit)?;
                x = fit;
                active = trial;
                order.push(pick);
                history.push(residual.norm());
            }
            Err(Error::IllPosedActiveSet(msg)) => {
                log::debug!("gomp stopped: {msg}");
                ill_posed = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(GompResult {
        x,
        active,
        order,
        residual_history: history,
        ill_posed,
    })
}
