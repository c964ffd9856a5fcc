use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{ActiveSet, GroupPartition, GroupSignal, GroupedDesign};

/// Synthetic problem parameters `(n, p, N, T, s, DR, theta, sigma)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub n: usize,
    pub p: usize,
    pub n_groups: usize,
    pub t: usize,
    pub s: usize,
    /// Dynamic range `max |x_i| / min |x_i|` over the nonzero entries.
    pub dr: f64,
    /// Inner-group correlation strength.
    pub theta: f64,
    /// Noise standard deviation.
    pub sigma: f64,
    pub seed: u64,
    /// ChaCha stream id; lets parallel trials share one seed.
    #[serde(default)]
    pub stream: u64,
}

impl GenParams {
    /// `(n, N, T, s, DR, theta, sigma)` with `p = N s`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        n_groups: usize,
        t: usize,
        s: usize,
        dr: f64,
        theta: f64,
        sigma: f64,
        seed: u64,
    ) -> Self {
        Self {
            n,
            p: n_groups * s,
            n_groups,
            t,
            s,
            dr,
            theta,
            sigma,
            seed,
            stream: 0,
        }
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.s == 0 || self.n_groups == 0 {
            return bad("group size and group count must be positive".into());
        }
        if self.p != self.n_groups * self.s {
            return bad(format!("p={} but N*s={}", self.p, self.n_groups * self.s));
        }
        if self.t > self.n_groups {
            return bad(format!("T={} exceeds N={}", self.t, self.n_groups));
        }
        if self.n > self.p {
            return bad(format!("n={} exceeds p={}", self.n, self.p));
        }
        if self.n < self.s {
            return bad(format!("n={} is below the group size {}", self.n, self.s));
        }
        if !(self.dr >= 1.0) || !self.dr.is_finite() {
            return bad(format!("dynamic range {} must be >= 1", self.dr));
        }
        if !(self.theta >= 0.0) || !self.theta.is_finite() {
            return bad(format!("theta={} must be >= 0", self.theta));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return bad(format!("sigma={} must be >= 0", self.sigma));
        }
        Ok(())
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub design: GroupedDesign,
    pub x_true: GroupSignal,
    pub y: DVector<f64>,
    pub y_clean: DVector<f64>,
    pub true_active: ActiveSet,
    pub params: GenParams,
    /// `||y - y_clean||`.
    pub noise_norm: f64,
}

/// Gaussian design with correlated groups, unit columns, a random
/// `T`-group-sparse signal and additive Gaussian noise.
///
/// Within each group the interior columns are replaced by
/// `psi_j + theta (psi_{j-1} + psi_{j+1})` (first and last column kept),
/// before normalization. Nonzero entries have magnitudes uniform in
/// `[1, DR]` with one of them pinned to exactly 1, and independent random
/// signs. Everything is drawn from one ChaCha8 stream, in this order:
/// design (column-major), active groups, magnitudes and signs, pinned
/// entry, noise.
pub fn generate_instance(params: &GenParams) -> Result<ProblemInstance> {
    params.validate()?;
    let mut rng = params.rng();
    let (n, p, s) = (params.n, params.p, params.s);

    let raw = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut psi = raw.clone();
    if params.theta != 0.0 {
        for g in 0..params.n_groups {
            let off = g * s;
            for j in 1..s.saturating_sub(1) {
                let col = raw.column(off + j)
                    + params.theta * (raw.column(off + j - 1) + raw.column(off + j + 1));
                psi.set_column(off + j, &col);
            }
        }
    }
    for mut c in psi.column_iter_mut() {
        let v = c.norm();
        c /= v;
    }

    let mut groups: Vec<usize> = sample(&mut rng, params.n_groups, params.t).into_vec();
    groups.sort_unstable();
    let true_active = ActiveSet::new(groups, params.n_groups)?;

    let mut x = DVector::zeros(p);
    for g in true_active.iter() {
        for k in 0..s {
            let mag = if params.dr > 1.0 {
                rng.random_range(1.0..=params.dr)
            } else {
                1.0
            };
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            x[g * s + k] = sign * mag;
        }
    }
    if params.t > 0 {
        let pin = rng.random_range(0..params.t * s);
        let g = true_active.as_slice()[pin / s];
        let idx = g * s + pin % s;
        x[idx] = x[idx].signum();
    }

    let y_clean = &psi * &x;
    let noise = DVector::from_fn(n, |_, _| {
        params.sigma * rng.sample::<f64, _>(StandardNormal)
    });
    let y = &y_clean + &noise;
    let partition = GroupPartition::uniform(params.n_groups, s)?;
    let design = GroupedDesign::prepare(psi, partition)?;
    let x_true = design.signal(x)?;
    Ok(ProblemInstance {
        design,
        x_true,
        y,
        y_clean,
        true_active,
        params: params.clone(),
        noise_norm: noise.norm(),
    })
}
