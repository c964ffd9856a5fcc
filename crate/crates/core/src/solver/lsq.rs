use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::group::{ActiveSet, GroupSignal, GroupedDesign};

/// Relative floor on `|R_kk|` in the QR fallback.
const QR_RANK_TOL: f64 = 1e-12;

/// Relative floor on the Cholesky pivots before falling back to QR.
const CHOLESKY_PIVOT_TOL: f64 = 1e-7;

/// Least-squares fit on the union of the active groups.
pub(crate) struct ActiveFit {
    pub x: DVector<f64>,
    /// `Psi x`.
    pub fitted: DVector<f64>,
}

/// Gram blocks `Psi_i^t Psi_j` (`i <= j`) and `Psi_i^t y` computed on demand
/// and kept for the lifetime of one data vector, so that refits along a
/// path only pay for the group pairs they have not seen yet.
pub(crate) struct GramCache {
    blocks: HashMap<(usize, usize), DMatrix<f64>>,
    rhs: HashMap<usize, DVector<f64>>,
}

impl GramCache {
    pub fn new() -> Self {
        GramCache {
            blocks: HashMap::new(),
            rhs: HashMap::new(),
        }
    }

    fn block(&mut self, design: &GroupedDesign, i: usize, j: usize) -> &DMatrix<f64> {
        self.blocks
            .entry((i, j))
            .or_insert_with(|| design.group_block(i).tr_mul(&design.group_block(j)))
    }

    fn rhs(&mut self, design: &GroupedDesign, y: &DVector<f64>, i: usize) -> &DVector<f64> {
        self.rhs
            .entry(i)
            .or_insert_with(|| design.group_block(i).tr_mul(y))
    }

    fn normal_equations(
        &mut self,
        design: &GroupedDesign,
        y: &DVector<f64>,
        active: &ActiveSet,
        width: usize,
    ) -> (DMatrix<f64>, DVector<f64>) {
        let part = design.partition();
        let mut gram = DMatrix::zeros(width, width);
        let mut rhs = DVector::zeros(width);
        let members = active.as_slice();
        let starts: Vec<usize> = members
            .iter()
            .scan(0, |at, &i| {
                let here = *at;
                *at += part.size(i);
                Some(here)
            })
            .collect();
        for (a, &i) in members.iter().enumerate() {
            let (si, oi) = (part.size(i), starts[a]);
            rhs.rows_mut(oi, si).copy_from(self.rhs(design, y, i));
            for (b, &j) in members.iter().enumerate().skip(a) {
                let (sj, oj) = (part.size(j), starts[b]);
                let blk = self.block(design, i, j);
                gram.view_mut((oi, oj), (si, sj)).copy_from(blk);
                if a != b {
                    gram.view_mut((oj, oi), (sj, si))
                        .copy_from(&blk.transpose());
                }
            }
        }
        (gram, rhs)
    }
}

pub(crate) fn fit_active(
    design: &GroupedDesign,
    y: &DVector<f64>,
    active: &ActiveSet,
) -> Result<ActiveFit> {
    fit_active_cached(design, y, active, &mut GramCache::new())
}

pub(crate) fn fit_active_cached(
    design: &GroupedDesign,
    y: &DVector<f64>,
    active: &ActiveSet,
    cache: &mut GramCache,
) -> Result<ActiveFit> {
    let n = design.n_rows();
    let p = design.n_cols();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "data has length {} but design has {n} rows",
            y.len()
        )));
    }
    if let Some(&bad) = active.as_slice().last() {
        if bad >= design.n_groups() {
            return Err(Error::InvalidArgument(format!(
                "group index {bad} out of range"
            )));
        }
    }
    let part = design.partition();
    let width = part.width(active);
    if width == 0 {
        return Ok(ActiveFit {
            x: DVector::zeros(p),
            fitted: DVector::zeros(n),
        });
    }
    if width > n {
        return Err(Error::IllPosedActiveSet(format!(
            "{width} active columns exceed {n} rows"
        )));
    }
    let (gram, rhs) = cache.normal_equations(design, y, active, width);
    let coef = match solve_normal(gram, &rhs) {
        Some(c) => c,
        None => {
            let mut sub = DMatrix::zeros(n, width);
            let mut at = 0;
            for i in active.iter() {
                let s = part.size(i);
                sub.columns_mut(at, s).copy_from(&design.group_block(i));
                at += s;
            }
            solve_qr(sub, y)?
        }
    };
    let mut x = DVector::zeros(p);
    let mut fitted = DVector::zeros(n);
    let mut at = 0;
    for i in active.iter() {
        let s = part.size(i);
        let c = coef.rows(at, s);
        x.rows_mut(part.offset(i), s).copy_from(&c);
        fitted.gemv(1.0, &design.group_block(i), &c, 1.0);
        at += s;
    }
    Ok(ActiveFit { x, fitted })
}

/// Cholesky on the normal equations; `None` when the normal matrix is not
/// numerically positive definite.
fn solve_normal(gram: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let diag_max = gram.diagonal().max();
    let chol = gram.cholesky()?;
    // pivots this small mean cond(Psi_B) beyond ~1e7: let QR decide
    let pivot_min = chol.l_dirty().diagonal().min();
    (pivot_min > CHOLESKY_PIVOT_TOL * diag_max.sqrt()).then(|| chol.solve(rhs))
}

fn solve_qr(a: DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let qr = a.qr();
    let r = qr.r();
    let diag_max = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diag_min = r
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(diag_min > QR_RANK_TOL * diag_max) {
        return Err(Error::IllPosedActiveSet(format!(
            "active columns are numerically rank deficient (|R| range {diag_min:e}..{diag_max:e})"
        )));
    }
    let qty = qr.q().tr_mul(y);
    r.solve_upper_triangular(&qty)
        .ok_or_else(|| Error::IllPosedActiveSet("triangular solve failed".into()))
}

/// `argmin ||Psi x - y||` over `x` supported on the active groups.
pub fn ls_on_active(
    design: &GroupedDesign,
    y: &DVector<f64>,
    active: &ActiveSet,
) -> Result<GroupSignal> {
    let fit = fit_active(design, y, active)?;
    design.signal(fit.x)
}

/// Least-squares fit on the true support.
pub fn oracle_solution(
    design: &GroupedDesign,
    y: &DVector<f64>,
    true_active: &ActiveSet,
) -> Result<GroupSignal> {
    ls_on_active(design, y, true_active)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::GroupPartition;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn empty_active_set_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = GroupedDesign::prepare(
            gaussian(&mut rng, 6, 4),
            GroupPartition::new(&[2, 2]).unwrap(),
        )
        .unwrap();
        let y = DVector::from_element(6, 1.0);
        let x = ls_on_active(&d, &y, &ActiveSet::empty()).unwrap();
        assert_eq!(x.values, DVector::zeros(4));
    }

    #[test]
    fn orthogonal_square_design_inverts_by_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = gaussian(&mut rng, 6, 6).qr().q();
        let d =
            GroupedDesign::prepare(q.clone(), GroupPartition::new(&[2, 3, 1]).unwrap()).unwrap();
        let y: DVector<f64> = DVector::from_fn(6, |_, _| rng.sample(StandardNormal));
        let x = ls_on_active(&d, &y, &ActiveSet::all(3)).unwrap();
        assert!((x.values - q.tr_mul(&y)).norm() < 1e-12);
        // square invertible matrix with full support: x = Psi^{-1} y
        let m = gaussian(&mut rng, 6, 6);
        let d = GroupedDesign::prepare(m.clone(), GroupPartition::new(&[3, 3]).unwrap()).unwrap();
        let x = oracle_solution(&d, &y, &ActiveSet::all(2)).unwrap();
        let direct = m.lu().solve(&y).unwrap();
        assert!((x.values - &direct).norm() < 1e-9 * direct.norm());
    }

    #[test]
    fn noiseless_support_is_interpolated() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = gaussian(&mut rng, 15, 12);
        let d = GroupedDesign::prepare(m.clone(), GroupPartition::uniform(4, 3).unwrap()).unwrap();
        let mut truth = DVector::zeros(12);
        truth.rows_mut(3, 3).copy_from_slice(&[1.0, -2.0, 0.5]);
        truth.rows_mut(9, 3).copy_from_slice(&[3.0, 1.0, -1.0]);
        let y = &m * &truth;
        let active = ActiveSet::new([1, 3], 4).unwrap();
        let x = oracle_solution(&d, &y, &active).unwrap();
        assert!((x.values - truth).norm() < 1e-10);
    }

    #[test]
    fn noisy_fit_matches_direct_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = gaussian(&mut rng, 20, 12);
        let d = GroupedDesign::prepare(m.clone(), GroupPartition::uniform(4, 3).unwrap()).unwrap();
        let y: DVector<f64> = DVector::from_fn(20, |_, _| rng.sample(StandardNormal));
        let active = ActiveSet::new([0, 2], 4).unwrap();
        let x = oracle_solution(&d, &y, &active).unwrap();
        // independent: explicit column list, LU on the normal equations
        let cols = [0usize, 1, 2, 6, 7, 8];
        let sub = DMatrix::from_fn(20, 6, |r, c| m[(r, cols[c])]);
        let coef = (sub.transpose() * &sub)
            .lu()
            .solve(&(sub.transpose() * &y))
            .unwrap();
        for (k, &c) in cols.iter().enumerate() {
            assert!((x.values[c] - coef[k]).abs() < 1e-12);
        }
        for c in [3, 4, 5, 9, 10, 11] {
            assert_eq!(x.values[c], 0.0);
        }
    }

    #[test]
    fn too_many_columns_is_ill_posed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = GroupedDesign::prepare(
            gaussian(&mut rng, 5, 8),
            GroupPartition::uniform(4, 2).unwrap(),
        )
        .unwrap();
        let y = DVector::from_element(5, 1.0);
        let err = ls_on_active(&d, &y, &ActiveSet::new([0, 1, 2], 4).unwrap()).unwrap_err();
        assert!(matches!(err, Error::IllPosedActiveSet(_)));
    }

    #[test]
    fn collinear_groups_are_ill_posed() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = gaussian(&mut rng, 8, 2);
        let mut m = DMatrix::zeros(8, 4);
        m.columns_mut(0, 2).copy_from(&a);
        m.columns_mut(2, 2).copy_from(&a);
        let d = GroupedDesign::prepare(m, GroupPartition::new(&[2, 2]).unwrap()).unwrap();
        let y = DVector::from_element(8, 1.0);
        let err = ls_on_active(&d, &y, &ActiveSet::all(2)).unwrap_err();
        assert!(matches!(err, Error::IllPosedActiveSet(_)));
    }
}
