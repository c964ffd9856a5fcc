//! Group structure: partitions of the column index set, grouped designs with
//! their per-group square-root factors, group-blocked signals and penalties.
//!
//! Groups are stored contiguously. A design whose groups are scattered over
//! the columns is permuted into contiguous order once, at construction, and
//! the permutation is kept so results can be mapped back.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, DVectorView, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative eigenvalue floor used by [`GroupedDesign::prepare`].
pub const DEFAULT_RELATIVE_RANK_TOL: f64 = 1e-8;

/// Tolerance used when checking that design columns have unit length.
pub const DEFAULT_COLUMN_NORM_TOL: f64 = 1e-8;

/// Threshold used by [`GroupSignal::thresholded_support`] for signals that
/// did not come out of the solver.
pub const SPARSITY_REPORT_THRESHOLD: f64 = 1e-12;

/// Disjoint contiguous groups covering `0..p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPartition {
    p: usize,
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl GroupPartition {
    pub fn new(sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidPartition("no groups given".into()));
        }
        if let Some(i) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidPartition(format!("group {i} has size zero")));
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut p = 0;
        for &s in sizes {
            offsets.push(p);
            p += s;
        }
        Ok(Self {
            p,
            sizes: sizes.to_vec(),
            offsets,
        })
    }

    /// `n_groups` groups of equal size.
    pub fn uniform(n_groups: usize, size: usize) -> Result<Self> {
        Self::new(&vec![size; n_groups])
    }

    /// Builds a partition from a per-column group label (labels must cover
    /// `0..N` without gaps). Returns the partition together with the column
    /// order that makes the groups contiguous: internal column `k` is
    /// original column `order[k]`.
    pub fn from_labels(labels: &[usize]) -> Result<(Self, Vec<usize>)> {
        if labels.is_empty() {
            return Err(Error::InvalidPartition("no columns given".into()));
        }
        let n_groups = labels.iter().max().map_or(0, |m| m + 1);
        let mut sizes = vec![0usize; n_groups];
        for &l in labels {
            sizes[l] += 1;
        }
        let mut order: Vec<usize> = (0..labels.len()).collect();
        // stable: columns keep their relative order inside a group
        order.sort_by_key(|&c| labels[c]);
        Ok((Self::new(&sizes)?, order))
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_groups(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn size(&self, i: usize) -> usize {
        self.sizes[i]
    }

    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    pub fn max_size(&self) -> usize {
        self.sizes.iter().copied().max().unwrap_or(0)
    }

    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i] + self.sizes[i]
    }

    /// Column indices of the union of the given groups, in increasing order.
    pub fn columns(&self, active: &ActiveSet) -> Vec<usize> {
        active.iter().flat_map(|i| self.range(i)).collect()
    }

    /// Total number of columns in the union of the given groups.
    pub fn width(&self, active: &ActiveSet) -> usize {
        active.iter().map(|i| self.sizes[i]).sum()
    }
}

/// Sorted, duplicate-free set of group indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct ActiveSet {
    members: Vec<usize>,
}

impl ActiveSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Validates range and deduplicates.
    pub fn new(members: impl IntoIterator<Item = usize>, n_groups: usize) -> Result<Self> {
        let mut members: Vec<usize> = members.into_iter().collect();
        if let Some(&bad) = members.iter().find(|&&m| m >= n_groups) {
            return Err(Error::InvalidArgument(format!(
                "group index {bad} out of range for {n_groups} groups"
            )));
        }
        members.sort_unstable();
        members.dedup();
        Ok(Self { members })
    }

    /// Caller guarantees `members` is strictly increasing.
    pub(crate) fn from_sorted(members: Vec<usize>) -> Self {
        debug_assert!(members.windows(2).all(|w| w[0] < w[1]));
        Self { members }
    }

    pub fn all(n_groups: usize) -> Self {
        Self {
            members: (0..n_groups).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members.binary_search(&i).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.members
    }

    pub fn is_subset(&self, other: &ActiveSet) -> bool {
        self.members.iter().all(|&m| other.contains(m))
    }

    pub fn insert(&mut self, i: usize) -> bool {
        match self.members.binary_search(&i) {
            Ok(_) => false,
            Err(pos) => {
                self.members.insert(pos, i);
                true
            }
        }
    }

    /// Complement with respect to `0..n_groups`.
    pub fn complement(&self, n_groups: usize) -> ActiveSet {
        Self {
            members: (0..n_groups).filter(|&i| !self.contains(i)).collect(),
        }
    }
}

/// A p-vector together with the partition it is blocked by.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSignal {
    pub values: DVector<f64>,
    pub partition: Arc<GroupPartition>,
}

impl GroupSignal {
    pub fn new(values: DVector<f64>, partition: Arc<GroupPartition>) -> Result<Self> {
        if values.len() != partition.p() {
            return Err(Error::DimensionMismatch(format!(
                "signal has length {} but partition covers {} columns",
                values.len(),
                partition.p()
            )));
        }
        Ok(Self { values, partition })
    }

    pub fn zeros(partition: Arc<GroupPartition>) -> Self {
        Self {
            values: DVector::zeros(partition.p()),
            partition,
        }
    }

    pub fn group(&self, i: usize) -> DVectorView<'_, f64> {
        self.values
            .rows(self.partition.offset(i), self.partition.size(i))
    }

    pub fn group_norm2(&self, i: usize) -> f64 {
        self.group(i).norm()
    }

    /// Groups containing at least one entry that is exactly nonzero.
    pub fn support(&self) -> ActiveSet {
        self.thresholded_support(0.0)
    }

    /// Groups whose l2 norm exceeds `threshold`.
    pub fn thresholded_support(&self, threshold: f64) -> ActiveSet {
        ActiveSet::from_sorted(
            (0..self.partition.n_groups())
                .filter(|&i| self.group(i).norm() > threshold)
                .collect(),
        )
    }
}

/// Exponent `r` of the outer norm in the l^r(l^q) penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OuterExponent {
    /// Number of groups with nonzero inner norm.
    Zero,
    Finite(f64),
    Infinity,
}

fn lq_norm(v: DVectorView<'_, f64>, q: f64) -> f64 {
    if q == 2.0 {
        v.norm()
    } else if q == 1.0 {
        v.iter().map(|a| a.abs()).sum()
    } else {
        v.iter().map(|a| a.abs().powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

/// The l^r(l^q) group penalty.
pub fn group_norm(x: &GroupSignal, r: OuterExponent, q: f64) -> Result<f64> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "inner exponent q={q} must be positive"
        )));
    }
    let norms = (0..x.partition.n_groups()).map(|i| lq_norm(x.group(i), q));
    Ok(match r {
        OuterExponent::Zero => norms.filter(|&v| v != 0.0).count() as f64,
        OuterExponent::Infinity => norms.fold(0.0, f64::max),
        OuterExponent::Finite(r) => {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "outer exponent r={r} must be positive"
                )));
            }
            norms.map(|v| v.powf(r)).sum::<f64>().powf(1.0 / r)
        }
    })
}

/// Design matrix prepared for group computations: per-group factors
/// `(A_i^t A_i)^{1/2}` and their inverses, where `A_i` is the column block of
/// group `i`.
#[derive(Debug, Clone)]
pub struct GroupedDesign {
    matrix: DMatrix<f64>,
    partition: Arc<GroupPartition>,
    group_factor: Vec<DMatrix<f64>>,
    group_factor_inv: Vec<DMatrix<f64>>,
    column_order: Option<Vec<usize>>,
    pub column_norm_tol: f64,
}

impl GroupedDesign {
    /// Prepares a design using the default relative rank tolerance: a group
    /// is rejected when its smallest gram eigenvalue is at most
    /// `1e-8` times its largest.
    pub fn prepare(matrix: DMatrix<f64>, partition: GroupPartition) -> Result<Self> {
        Self::prepare_with_tol(matrix, partition, None)
    }

    /// `rank_tol` is an absolute singular-value tolerance: a group whose
    /// smallest gram eigenvalue is `<= rank_tol^2` is rejected.
    pub fn prepare_with_tol(
        matrix: DMatrix<f64>,
        partition: GroupPartition,
        rank_tol: Option<f64>,
    ) -> Result<Self> {
        if matrix.ncols() != partition.p() {
            return Err(Error::DimensionMismatch(format!(
                "design has {} columns but partition covers {}",
                matrix.ncols(),
                partition.p()
            )));
        }
        if matrix.nrows() < partition.max_size() {
            return Err(Error::DimensionMismatch(format!(
                "design has {} rows, fewer than the largest group size {}",
                matrix.nrows(),
                partition.max_size()
            )));
        }
        let mut group_factor = Vec::with_capacity(partition.n_groups());
        let mut group_factor_inv = Vec::with_capacity(partition.n_groups());
        for i in 0..partition.n_groups() {
            let block = matrix.columns(partition.offset(i), partition.size(i));
            let gram = block.tr_mul(&block);
            let eig = SymmetricEigen::new(gram);
            let max_ev = eig.eigenvalues.max();
            let min_ev = eig.eigenvalues.min();
            let threshold = match rank_tol {
                Some(tol) => tol * tol,
                None => DEFAULT_RELATIVE_RANK_TOL * max_ev,
            };
            if !(min_ev > threshold) {
                return Err(Error::RankDeficientGroup {
                    group: i,
                    min_eigenvalue: min_ev,
                    threshold,
                });
            }
            let q = &eig.eigenvectors;
            let sqrt = DVector::from_iterator(
                eig.eigenvalues.len(),
                eig.eigenvalues.iter().map(|v| v.sqrt()),
            );
            let inv_sqrt = sqrt.map(|v| 1.0 / v);
            group_factor.push(q * DMatrix::from_diagonal(&sqrt) * q.transpose());
            group_factor_inv.push(q * DMatrix::from_diagonal(&inv_sqrt) * q.transpose());
        }
        Ok(Self {
            matrix,
            partition: Arc::new(partition),
            group_factor,
            group_factor_inv,
            column_order: None,
            column_norm_tol: DEFAULT_COLUMN_NORM_TOL,
        })
    }

    /// Prepares a design whose groups are given by a per-column label. The
    /// columns are permuted into contiguous group order; use
    /// [`Self::to_original`] / [`Self::from_original`] to move signals
    /// between the two orderings.
    pub fn prepare_labeled(
        matrix: DMatrix<f64>,
        labels: &[usize],
        rank_tol: Option<f64>,
    ) -> Result<Self> {
        if labels.len() != matrix.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} columns",
                labels.len(),
                matrix.ncols()
            )));
        }
        let (partition, order) = GroupPartition::from_labels(labels)?;
        let permuted =
            DMatrix::from_fn(matrix.nrows(), matrix.ncols(), |r, c| matrix[(r, order[c])]);
        let mut design = Self::prepare_with_tol(permuted, partition, rank_tol)?;
        design.column_order = Some(order);
        Ok(design)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn partition(&self) -> &GroupPartition {
        &self.partition
    }

    pub fn partition_arc(&self) -> Arc<GroupPartition> {
        Arc::clone(&self.partition)
    }

    pub fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn n_groups(&self) -> usize {
        self.partition.n_groups()
    }

    pub fn group_block(&self, i: usize) -> nalgebra::DMatrixView<'_, f64> {
        self.matrix
            .columns(self.partition.offset(i), self.partition.size(i))
    }

    pub fn group_factor(&self, i: usize) -> &DMatrix<f64> {
        &self.group_factor[i]
    }

    pub fn group_factor_inv(&self, i: usize) -> &DMatrix<f64> {
        &self.group_factor_inv[i]
    }

    pub fn column_order(&self) -> Option<&[usize]> {
        self.column_order.as_deref()
    }

    /// Whether every column has unit l2 norm to within `column_norm_tol`.
    pub fn has_unit_columns(&self) -> bool {
        self.matrix
            .column_iter()
            .all(|c| (c.norm() - 1.0).abs() <= self.column_norm_tol)
    }

    pub fn zero_signal(&self) -> GroupSignal {
        GroupSignal::zeros(self.partition_arc())
    }

    pub fn signal(&self, values: DVector<f64>) -> Result<GroupSignal> {
        GroupSignal::new(values, self.partition_arc())
    }

    /// Maps a signal in internal (contiguous) order back to the caller's
    /// original column order.
    pub fn to_original(&self, x: &GroupSignal) -> DVector<f64> {
        match &self.column_order {
            None => x.values.clone(),
            Some(order) => {
                let mut out = DVector::zeros(order.len());
                for (k, &c) in order.iter().enumerate() {
                    out[c] = x.values[k];
                }
                out
            }
        }
    }

    pub fn from_original(&self, values: &DVector<f64>) -> Result<GroupSignal> {
        let v = match &self.column_order {
            None => values.clone(),
            Some(order) => {
                if values.len() != order.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "signal has length {} but design has {} columns",
                        values.len(),
                        order.len()
                    )));
                }
                DVector::from_iterator(order.len(), order.iter().map(|&c| values[c]))
            }
        };
        self.signal(v)
    }

    fn check_signal(&self, x: &GroupSignal) -> Result<()> {
        if x.values.len() != self.n_cols() || *x.partition != *self.partition {
            return Err(Error::DimensionMismatch(
                "signal does not match the design partition".into(),
            ));
        }
        Ok(())
    }

    fn check_data(&self, y: &DVector<f64>) -> Result<()> {
        if y.len() != self.n_rows() {
            return Err(Error::DimensionMismatch(format!(
                "data has length {} but design has {} rows",
                y.len(),
                self.n_rows()
            )));
        }
        Ok(())
    }

    /// `Psi x`.
    pub fn apply(&self, x: &GroupSignal) -> Result<DVector<f64>> {
        self.check_signal(x)?;
        Ok(&self.matrix * &x.values)
    }

    /// `Psi^t r`.
    pub fn adjoint(&self, r: &DVector<f64>) -> Result<GroupSignal> {
        self.check_data(r)?;
        self.signal(self.matrix.tr_mul(r))
    }

    /// Per-group `Psi_bar_i x_i`.
    pub fn transform_primal(&self, x: &GroupSignal) -> Result<GroupSignal> {
        self.check_signal(x)?;
        Ok(self.blockwise(x, &self.group_factor))
    }

    /// Per-group `Psi_bar_i^{-1} d_i`.
    pub fn transform_dual(&self, d: &GroupSignal) -> Result<GroupSignal> {
        self.check_signal(d)?;
        Ok(self.blockwise(d, &self.group_factor_inv))
    }

    fn blockwise(&self, v: &GroupSignal, factors: &[DMatrix<f64>]) -> GroupSignal {
        let mut out = DVector::zeros(v.values.len());
        for (i, f) in factors.iter().enumerate() {
            let r = self.partition.range(i);
            out.rows_mut(r.start, r.len()).copy_from(&(f * v.group(i)));
        }
        GroupSignal {
            values: out,
            partition: self.partition_arc(),
        }
    }

    /// `Psi_bar_i x_i + Psi_bar_i^{-1} d_i` for one group, taken from raw
    /// p-vectors.
    pub(crate) fn transformed_sum(
        &self,
        i: usize,
        x: &DVector<f64>,
        d: &DVector<f64>,
    ) -> DVector<f64> {
        let r = self.partition.range(i);
        let xs = x.rows(r.start, r.len());
        let ds = d.rows(r.start, r.len());
        let mut out = &self.group_factor_inv[i] * ds;
        if xs.iter().any(|&v| v != 0.0) {
            out += &self.group_factor[i] * xs;
        }
        out
    }
}

/// `1/2 ||Psi x - y||^2 + lambda * #{groups with x_i != 0}`.
pub fn objective(
    design: &GroupedDesign,
    y: &DVector<f64>,
    x: &GroupSignal,
    lambda: f64,
) -> Result<f64> {
    design.check_data(y)?;
    let residual = design.apply(x)? - y;
    let count = group_norm(x, OuterExponent::Zero, 2.0)?;
    Ok(0.5 * residual.norm_squared() + lambda * count)
}
