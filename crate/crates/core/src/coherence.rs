//! Mutual coherence of a design and its blockwise counterpart.
//!
//! The blockwise coherence between groups `i` and `j` is the cosine of the
//! smallest principal angle between the column spans of the two blocks. It
//! is computed as the largest singular value of `U_i^t U_j`, where `U_i` is
//! the thin-QR orthonormal basis of block `i`.
//!
//! The full pairwise table costs `O(N^2 s^2 n)`; there is no pruning.

use nalgebra::{DMatrix, SVD};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::GroupedDesign;

/// Rows of the Gram matrix computed per chunk in [`mutual_coherence`].
const GRAM_CHUNK: usize = 512;

#[derive(Debug, Clone)]
pub struct CoherenceReport {
    /// Mutual coherence of the columns.
    pub mc: f64,
    /// Blockwise mutual coherence.
    pub bmc: f64,
    /// Symmetric `N x N` table of pairwise block coherences, unit diagonal.
    pub pairwise: DMatrix<f64>,
    /// Largest `T` with `bmc < 1/(3T)`; `None` when `bmc == 0` (any `T`).
    pub assumption_t_max: Option<usize>,
}

/// JSON shape written by the `bmc` subcommand.
#[derive(Debug, Serialize)]
pub struct CoherenceSummary {
    pub mc: f64,
    pub bmc: f64,
    pub assumption_t_max: Option<usize>,
    pub degenerate_zero_bmc: bool,
}

impl CoherenceReport {
    pub fn summary(&self) -> CoherenceSummary {
        CoherenceSummary {
            mc: self.mc,
            bmc: self.bmc,
            assumption_t_max: self.assumption_t_max,
            degenerate_zero_bmc: self.is_degenerate(),
        }
    }

    /// `bmc == 0`: the groups span mutually orthogonal subspaces. The
    /// recovery condition is then favourable for every `T` but the strict
    /// check in [`check_assumption`] still reports `false`.
    pub fn is_degenerate(&self) -> bool {
        self.bmc == 0.0
    }
}

/// Largest `T >= 0` with `3 T mu < 1`.
pub fn assumption_t_max(mu: f64) -> Option<usize> {
    if mu <= 0.0 {
        return None;
    }
    let mut t = (1.0 / (3.0 * mu)).floor() as usize;
    while t > 0 && 3.0 * (t as f64) * mu >= 1.0 {
        t -= 1;
    }
    while 3.0 * ((t + 1) as f64) * mu < 1.0 {
        t += 1;
    }
    Some(t)
}

/// `true` iff `0 < mu < 1/(3T)`.
pub fn check_assumption(report: &CoherenceReport, t: usize) -> bool {
    mu_satisfies(report.bmc, t)
}

pub fn mu_satisfies(mu: f64, t: usize) -> bool {
    t >= 1 && mu > 0.0 && 3.0 * (t as f64) * mu < 1.0
}

/// `max_{i != j} |<psi_i, psi_j>|` over normalized columns. Columns that are
/// not unit length are normalized first (with a warning).
pub fn mutual_coherence(matrix: &DMatrix<f64>) -> Result<f64> {
    let p = matrix.ncols();
    if p < 2 {
        return Err(Error::InvalidArgument(format!(
            "mutual coherence needs at least two columns, got {p}"
        )));
    }
    let norms: Vec<f64> = matrix.column_iter().map(|c| c.norm()).collect();
    if norms.contains(&0.0) {
        return Err(Error::InvalidArgument("design has a zero column".into()));
    }
    let owned;
    let m = if norms.iter().any(|v| (v - 1.0).abs() > 1e-8) {
        log::warn!("mutual_coherence: normalizing columns to unit length");
        let mut c = matrix.clone();
        for (mut col, n) in c.column_iter_mut().zip(&norms) {
            col /= *n;
        }
        owned = c;
        &owned
    } else {
        matrix
    };
    let starts: Vec<usize> = (0..p).step_by(GRAM_CHUNK).collect();
    let nu = starts
        .par_iter()
        .map(|&start| {
            let len = GRAM_CHUNK.min(p - start);
            let block = m.columns(start, len).tr_mul(m);
            let mut best = 0.0f64;
            for r in 0..len {
                let row = start + r;
                for c in 0..p {
                    if c != row {
                        best = best.max(block[(r, c)].abs());
                    }
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    Ok(nu.min(1.0))
}

/// Thin-QR orthonormal basis of each group block.
pub fn orthonormal_bases(design: &GroupedDesign) -> Vec<DMatrix<f64>> {
    (0..design.n_groups())
        .into_par_iter()
        .map(|i| design.group_block(i).into_owned().qr().q())
        .collect()
}

/// Cosines below this are reported as exactly 0: Householder QR leaves
/// roundoff in rows outside a block's support, so exactly orthogonal
/// subspaces would otherwise come out around 1e-16.
pub const ORTHOGONAL_SNAP: f64 = 1e-13;

fn largest_singular_value(m: DMatrix<f64>) -> f64 {
    let sv = SVD::new(m, false, false).singular_values.max();
    if sv < ORTHOGONAL_SNAP {
        0.0
    } else {
        sv.min(1.0)
    }
}

/// Cosine of the first principal angle between the spans of groups `i` and
/// `j`. Defined as 1 on the diagonal.
pub fn pair_coherence(design: &GroupedDesign, i: usize, j: usize) -> Result<f64> {
    let n = design.n_groups();
    if i >= n || j >= n {
        return Err(Error::InvalidArgument(format!(
            "group index out of range ({i}, {j}) for {n} groups"
        )));
    }
    if i == j {
        return Ok(1.0);
    }
    let u = design.group_block(i).into_owned().qr().q();
    let v = design.group_block(j).into_owned().qr().q();
    Ok(largest_singular_value(u.tr_mul(&v)))
}

/// Blockwise mutual coherence with the full pairwise table.
pub fn bmc(design: &GroupedDesign) -> Result<CoherenceReport> {
    let n_groups = design.n_groups();
    if n_groups < 2 {
        return Err(Error::InvalidArgument(format!(
            "blockwise coherence needs at least two groups, got {n_groups}"
        )));
    }
    let bases = orthonormal_bases(design);
    let stacked = {
        let n = design.n_rows();
        let mut s = DMatrix::zeros(n, design.n_cols());
        let part = design.partition();
        for (i, q) in bases.iter().enumerate() {
            s.columns_mut(part.offset(i), part.size(i)).copy_from(q);
        }
        s
    };
    let part = design.partition();
    let rows: Vec<Vec<f64>> = (0..n_groups)
        .into_par_iter()
        .map(|i| {
            // one gemm per block row, then SVDs of the small blocks j > i
            let cross = bases[i].tr_mul(&stacked);
            (i + 1..n_groups)
                .map(|j| {
                    let blk = cross.columns(part.offset(j), part.size(j)).into_owned();
                    largest_singular_value(blk)
                })
                .collect()
        })
        .collect();
    let mut pairwise = DMatrix::identity(n_groups, n_groups);
    let mut mu = 0.0f64;
    for (i, row) in rows.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            let j = i + 1 + k;
            pairwise[(i, j)] = v;
            pairwise[(j, i)] = v;
            mu = mu.max(v);
        }
    }
    let mc = mutual_coherence(design.matrix())?;
    Ok(CoherenceReport {
        mc,
        bmc: mu,
        pairwise,
        assumption_t_max: assumption_t_max(mu),
    })
}

/// `D_{ij} = Psi_bar_i^{-1} Psi_i^t Psi_j Psi_bar_j^{-1}`.
pub fn cross_gram(design: &GroupedDesign, i: usize, j: usize) -> Result<DMatrix<f64>> {
    let n = design.n_groups();
    if i >= n || j >= n {
        return Err(Error::InvalidArgument(format!(
            "group index out of range ({i}, {j}) for {n} groups"
        )));
    }
    let inner = design.group_block(i).tr_mul(&design.group_block(j));
    Ok(design.group_factor_inv(i) * inner * design.group_factor_inv(j))
}
