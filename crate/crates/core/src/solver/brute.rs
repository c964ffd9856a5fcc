use nalgebra::DVector;

use super::lsq::fit_active;
use crate::error::{Error, Result};
use crate::group::{ActiveSet, GroupSignal, GroupedDesign};

pub const BRUTE_FORCE_SUBSET_LIMIT: u128 = 1_000_000;

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Advances `c` to the next k-combination of `0..n` in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Global minimizer of `1/2 ||Psi x - y||^2 + lambda * #groups(x)` over
/// supports of at most `max_groups` groups, by exhaustive enumeration.
///
/// Subsets are visited by size, then lexicographically, and a candidate
/// replaces the incumbent only on strict improvement, so ties go to the
/// smaller support and then the lexicographically first one. Subsets whose
/// least-squares problem is ill-posed are skipped.
pub fn brute_force_global_min(
    design: &GroupedDesign,
    y: &DVector<f64>,
    lambda: f64,
    max_groups: usize,
) -> Result<(GroupSignal, f64)> {
    let n_groups = design.n_groups();
    let max_groups = max_groups.min(n_groups);
    let total: u128 = (0..=max_groups).map(|k| binomial(n_groups, k)).sum();
    if total > BRUTE_FORCE_SUBSET_LIMIT {
        return Err(Error::CombinatorialBlowup {
            subsets: total,
            limit: BRUTE_FORCE_SUBSET_LIMIT,
        });
    }
    if y.len() != design.n_rows() {
        return Err(Error::DimensionMismatch(
            "data length does not match design".into(),
        ));
    }
    let mut best_x = DVector::zeros(design.n_cols());
    let mut best = 0.5 * y.norm_squared();
    for k in 1..=max_groups {
        let mut comb: Vec<usize> = (0..k).collect();
        loop {
            let active = ActiveSet::from_sorted(comb.clone());
            match fit_active(design, y, &active) {
                Ok(fit) => {
                    let x = design.signal(fit.x)?;
                    let nonzero = (0..n_groups)
                        .filter(|&i| x.group(i).iter().any(|&v| v != 0.0))
                        .count();
                    let value = 0.5 * (y - &fit.fitted).norm_squared() + lambda * nonzero as f64;
                    if value < best {
                        best = value;
                        best_x = x.values;
                    }
                }
                Err(Error::IllPosedActiveSet(_)) => {}
                Err(e) => return Err(e),
            }
            if !next_combination(&mut comb, n_groups) {
                break;
            }
        }
    }
    Ok((design.signal(best_x)?, best))
}
