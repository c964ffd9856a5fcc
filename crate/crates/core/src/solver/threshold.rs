use nalgebra::{DVector, DVectorView};

use super::PrimalDualState;
use crate::error::{Error, Result};
use crate::group::{ActiveSet, GroupedDesign};

/// Group hard thresholding: keeps `g` when `||g|| > sqrt(2 lambda)`, zero
/// otherwise. The tie `||g|| == sqrt(2 lambda)` maps to zero.
pub fn hard_threshold_group(g: DVectorView<'_, f64>, lambda: f64) -> DVector<f64> {
    if g.norm() > (2.0 * lambda).sqrt() {
        g.into_owned()
    } else {
        DVector::zeros(g.len())
    }
}

/// `{i : ||Psi_bar_i x_i + Psi_bar_i^{-1} d_i|| > sqrt(2 lambda)}`.
pub fn active_from_state(
    design: &GroupedDesign,
    x: &DVector<f64>,
    d: &DVector<f64>,
    lambda: f64,
) -> Result<ActiveSet> {
    let p = design.n_cols();
    if x.len() != p || d.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "primal/dual lengths ({}, {}) do not match p={p}",
            x.len(),
            d.len()
        )));
    }
    let threshold = (2.0 * lambda).sqrt();
    Ok(ActiveSet::from_sorted(
        (0..design.n_groups())
            .filter(|&i| design.transformed_sum(i, x, d).norm() > threshold)
            .collect(),
    ))
}

/// Stationarity diagnostics of a primal-dual pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalityReport {
    /// `max_i ||xbar_i - H(xbar_i + dbar_i)||`; zero exactly at block
    /// coordinatewise minimizers.
    pub residual: f64,
    /// `sqrt(2 lambda)`.
    pub threshold: f64,
    /// Smallest `||xbar_i||` over the active groups (`inf` if none).
    pub min_active_primal: f64,
    /// Largest `||dbar_i||` over the inactive groups (0 if none).
    pub max_inactive_dual: f64,
}

impl OptimalityReport {
    /// Active primal blocks at or above the threshold and inactive dual
    /// blocks at or below it, up to `tol`.
    pub fn separated(&self, tol: f64) -> bool {
        self.min_active_primal >= self.threshold - tol
            && self.max_inactive_dual <= self.threshold + tol
    }
}

pub fn optimality_residual(
    design: &GroupedDesign,
    y: &DVector<f64>,
    state: &PrimalDualState,
    lambda: f64,
) -> Result<OptimalityReport> {
    if y.len() != design.n_rows() {
        return Err(Error::DimensionMismatch(
            "data length does not match design".into(),
        ));
    }
    let xbar = design.transform_primal(&state.x)?;
    let dbar = design.transform_dual(&state.d)?;
    let threshold = (2.0 * lambda).sqrt();
    let mut residual = 0.0f64;
    let mut min_active = f64::INFINITY;
    let mut max_inactive = 0.0f64;
    for i in 0..design.n_groups() {
        let xb = xbar.group(i);
        let sum = xb + dbar.group(i);
        let target = hard_threshold_group(sum.as_view(), lambda);
        residual = residual.max((xb - target).norm());
        if state.active.contains(i) {
            min_active = min_active.min(xb.norm());
        } else {
            max_inactive = max_inactive.max(dbar.group(i).norm());
        }
    }
    Ok(OptimalityReport {
        residual,
        threshold,
        min_active_primal: min_active,
        max_inactive_dual: max_inactive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{GroupPartition, GroupedDesign};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn threshold_closed_forms() {
        let g = DVector::from_vec(vec![3.0, 0.0]);
        assert_eq!(hard_threshold_group(g.as_view(), 2.0), g);
        let g = DVector::from_vec(vec![1.0, 1.0]);
        assert_eq!(hard_threshold_group(g.as_view(), 2.0), DVector::zeros(2));
        // ||g|| = 1 = sqrt(2 * 0.5): tie goes to zero
        let g = DVector::from_vec(vec![0.6, 0.8]);
        assert_eq!(g.norm(), 1.0);
        assert_eq!(hard_threshold_group(g.as_view(), 0.5), DVector::zeros(2));
    }

    fn random_design(seed: u64) -> (GroupedDesign, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = DMatrix::from_fn(12, 9, |_, _| rng.sample::<f64, _>(StandardNormal));
        for mut c in m.column_iter_mut() {
            let v = c.norm();
            c /= v;
        }
        let y = DVector::from_fn(12, |_, _| rng.sample(StandardNormal));
        (
            GroupedDesign::prepare(m, GroupPartition::new(&[3, 3, 3]).unwrap()).unwrap(),
            y,
        )
    }

    #[test]
    fn zero_is_stationary_above_lambda0() {
        let (design, y) = random_design(1);
        let state = PrimalDualState::initial(&design, &y).unwrap();
        let lambda0 = 0.5 * y.norm_squared();
        // every transformed dual block is bounded by ||y||
        let dbar = design.transform_dual(&state.d).unwrap();
        for i in 0..3 {
            assert!(dbar.group(i).norm() <= y.norm() + 1e-12);
        }
        for lam in [lambda0 * 1.0001, lambda0 * 2.0] {
            let rep = optimality_residual(&design, &y, &state, lam).unwrap();
            assert_eq!(rep.residual, 0.0);
            assert!(rep.separated(0.0));
        }
        let a = active_from_state(&design, &state.x.values, &state.d.values, lambda0).unwrap();
        assert!(a.is_empty());
    }

    #[test]
    fn non_stationary_point_has_positive_residual() {
        let (design, y) = random_design(2);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let x = design
            .signal(DVector::from_fn(9, |_, _| rng.sample(StandardNormal)))
            .unwrap();
        let all = ActiveSet::all(3);
        let residual = &y - design.apply(&x).unwrap();
        let d = design.adjoint(&residual).unwrap();
        let state = PrimalDualState {
            x: x.clone(),
            d: d.clone(),
            active: all,
            residual_norm: residual.norm(),
        };
        let lam = 0.05;
        let rep = optimality_residual(&design, &y, &state, lam).unwrap();
        // direct evaluation
        let xbar = design.transform_primal(&x).unwrap();
        let dbar = design.transform_dual(&d).unwrap();
        let mut expected = 0.0f64;
        for i in 0..3 {
            let s = xbar.group(i) + dbar.group(i);
            let h = if s.norm() > (2.0 * lam).sqrt() {
                s
            } else {
                DVector::zeros(3)
            };
            expected = expected.max((xbar.group(i) - h).norm());
        }
        assert!(rep.residual > 0.0);
        assert!((rep.residual - expected).abs() < 1e-14);
    }

    #[test]
    fn active_set_excludes_ties() {
        let design = GroupedDesign::prepare(
            DMatrix::identity(4, 4),
            GroupPartition::new(&[2, 2]).unwrap(),
        )
        .unwrap();
        let x = DVector::zeros(4);
        let d = DVector::from_vec(vec![0.6, 0.8, 3.0, 0.0]);
        let a = active_from_state(&design, &x, &d, 0.5).unwrap();
        assert_eq!(a.as_slice(), &[1]);
        assert!(active_from_state(&design, &DVector::zeros(3), &d, 0.5).is_err());
    }
}
