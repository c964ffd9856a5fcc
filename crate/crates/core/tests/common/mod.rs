//! Randomized property checks shared by `properties.rs` and `acceptance.rs`.
//!
//! Every check returns `Ok(summary)` or `Err(description of the first
//! violation)`.

#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use groupsparse::coherence::{bmc, cross_gram, mu_satisfies, mutual_coherence};
use groupsparse::harness::{generate_instance, GenParams};
use groupsparse::solver::{
    brute_force_global_min, gpdas_fixed_lambda, gpdasc_path, optimality_residual, PrimalDualState,
    SolverConfig,
};
use groupsparse::{
    group_norm, ActiveSet, GroupPartition, GroupSignal, GroupedDesign, OuterExponent,
};

pub type Check = Result<String, String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Gaussian design with unit columns and `n_groups` groups of size `s`.
pub fn unit_design(rng: &mut ChaCha8Rng, n: usize, n_groups: usize, s: usize) -> GroupedDesign {
    let mut m = gaussian(rng, n, n_groups * s);
    for mut c in m.column_iter_mut() {
        let v = c.norm();
        c /= v;
    }
    GroupedDesign::prepare(m, GroupPartition::uniform(n_groups, s).unwrap()).unwrap()
}

/// Random `s x s` matrix with singular values log-uniform in
/// `[1, cond_max]` (so condition number at most `cond_max`).
pub fn random_nonsingular(rng: &mut ChaCha8Rng, s: usize, cond_max: f64) -> DMatrix<f64> {
    let u = gaussian(rng, s, s).qr().q();
    let v = gaussian(rng, s, s).qr().q();
    let sv = DVector::from_fn(s, |_, _| cond_max.powf(rng.random::<f64>()));
    u * DMatrix::from_diagonal(&sv) * v.transpose()
}

/// Design with every block replaced by `Psi_i M_i`, and the matrices used.
pub fn transformed_design(
    rng: &mut ChaCha8Rng,
    design: &GroupedDesign,
    cond_max: f64,
) -> (GroupedDesign, Vec<DMatrix<f64>>) {
    let part = design.partition().clone();
    let mut m = design.matrix().clone();
    let mut ms = Vec::new();
    for i in 0..part.n_groups() {
        let mi = random_nonsingular(rng, part.size(i), cond_max);
        let block = design.group_block(i) * &mi;
        m.columns_mut(part.offset(i), part.size(i))
            .copy_from(&block);
        ms.push(mi);
    }
    (GroupedDesign::prepare(m, part).unwrap(), ms)
}

fn max_group_norm(v: &DVector<f64>, part: &GroupPartition) -> f64 {
    (0..part.n_groups())
        .map(|i| v.rows(part.offset(i), part.size(i)).norm())
        .fold(0.0, f64::max)
}

/// Fixed-point residual at most 1e-10 and active/inactive separation at the
/// stationary point `(x, active)` for `lambda`.
pub fn check_stationary(
    design: &GroupedDesign,
    y: &DVector<f64>,
    x: &GroupSignal,
    active: &ActiveSet,
    lambda: f64,
) -> Result<(), String> {
    let st = PrimalDualState::from_primal(design, y, x.clone(), active.clone())
        .map_err(|e| e.to_string())?;
    let rep = optimality_residual(design, y, &st, lambda).map_err(|e| e.to_string())?;
    if rep.residual > 1e-10 {
        return Err(format!(
            "fixed-point residual {:e} at lambda={lambda:e}",
            rep.residual
        ));
    }
    if !rep.separated(1e-10) {
        return Err(format!("separation violated at lambda={lambda:e}: {rep:?}"));
    }
    Ok(())
}

/// Checks every converged step of a path; returns how many were checked.
pub fn check_path_steps(
    design: &GroupedDesign,
    y: &DVector<f64>,
    path: &groupsparse::SolutionPath,
) -> Result<usize, String> {
    let mut n = 0;
    for st in path.steps.iter().skip(1).filter(|s| s.converged) {
        check_stationary(design, y, &st.x, &st.active, st.lambda)?;
        n += 1;
    }
    Ok(n)
}

pub fn block_sandwich(triples: usize) -> Check {
    let mut r = rng(301);
    for k in 0..triples {
        let n_groups = r.random_range(3..=8);
        let s = r.random_range(1..=3);
        let n = r.random_range(n_groups * s / 2 + s..=n_groups * s + 10);
        let d = unit_design(&mut r, n, n_groups, s);
        let mu = bmc(&d).map_err(|e| e.to_string())?.bmc;
        let m = r.random_range(1..=n_groups);
        let mut groups: Vec<usize> = (0..n_groups).collect();
        for i in 0..m {
            let j = r.random_range(i..n_groups);
            groups.swap(i, j);
        }
        groups.truncate(m);
        let sub = GroupPartition::uniform(m, s).unwrap();
        let x = DVector::from_fn(m * s, |_, _| r.sample::<f64, _>(StandardNormal));
        let mut dx = DVector::zeros(m * s);
        for (a, &gi) in groups.iter().enumerate() {
            for (b, &gj) in groups.iter().enumerate() {
                let dij = if gi == gj {
                    DMatrix::identity(s, s)
                } else {
                    cross_gram(&d, gi, gj).map_err(|e| e.to_string())?
                };
                let contrib = dij * x.rows(b * s, s);
                let mut out = dx.rows_mut(a * s, s);
                out += contrib;
            }
        }
        let xn = max_group_norm(&x, &sub);
        let dn = max_group_norm(&dx, &sub);
        let spread = (m as f64 - 1.0) * mu;
        if dn < (1.0 - spread) * xn - 1e-10 || dn > (1.0 + spread) * xn + 1e-10 {
            return Err(format!(
                "triple {k}: ||Dx||={dn}, ||x||={xn}, M={m}, mu={mu}"
            ));
        }
    }
    Ok(format!("{triples} triples"))
}

pub fn coherence_bound(designs: usize) -> Check {
    let mut r = rng(302);
    let mut tested = 0;
    let mut attempts = 0;
    while tested < designs {
        attempts += 1;
        if attempts > 20 * designs {
            return Err(format!("only {tested} designs met (s-1) nu < 1"));
        }
        let s = r.random_range(2..=4);
        let n_groups = r.random_range(3..=10);
        let n = r.random_range(60..=300);
        let d = unit_design(&mut r, n, n_groups, s);
        let nu = mutual_coherence(d.matrix()).map_err(|e| e.to_string())?;
        if (s as f64 - 1.0) * nu >= 1.0 {
            continue;
        }
        let mu = bmc(&d).map_err(|e| e.to_string())?.bmc;
        let bound = nu * s as f64 / (1.0 - nu * (s as f64 - 1.0));
        if mu > bound + 1e-12 {
            return Err(format!("mu={mu} exceeds bound {bound} (nu={nu}, s={s})"));
        }
        tested += 1;
    }
    Ok(format!("{tested} designs"))
}

pub fn bmc_transform_invariance(designs: usize) -> Check {
    let mut r = rng(303);
    let mut worst = 0.0f64;
    for k in 0..designs {
        let s = r.random_range(1..=4);
        let n_groups = r.random_range(2..=8);
        let n = r.random_range(n_groups * s / 2 + s..=n_groups * s + 20);
        let d = unit_design(&mut r, n, n_groups, s);
        let (dt, _) = transformed_design(&mut r, &d, 1e3);
        let a = bmc(&d).map_err(|e| e.to_string())?.pairwise;
        let b = bmc(&dt).map_err(|e| e.to_string())?.pairwise;
        let diff = (a - b).amax();
        worst = worst.max(diff);
        if diff > 1e-10 {
            return Err(format!("design {k}: pairwise BMC moved by {diff:e}"));
        }
    }
    Ok(format!("{designs} designs, max change {worst:.1e}"))
}

pub fn solver_transform_invariance(instances: usize) -> Check {
    let mut r = rng(304);
    let mut steps = 0;
    let mut worst = 0.0f64;
    for k in 0..instances {
        let theta = if k % 2 == 0 { 0.0 } else { 3.0 };
        let p = GenParams::new(100, 50, 5, 4, 10.0, theta, 1e-3, 3040 + k as u64);
        let inst = generate_instance(&p).map_err(|e| e.to_string())?;
        let (dt, _) = transformed_design(&mut r, &inst.design, 1e3);
        let cfg = SolverConfig::with_eps(inst.noise_norm);
        let a = gpdasc_path(&inst.design, &inst.y, &cfg).map_err(|e| e.to_string())?;
        let b = gpdasc_path(&dt, &inst.y, &cfg).map_err(|e| e.to_string())?;
        if a.steps.len() != b.steps.len() {
            return Err(format!(
                "instance {k}: {} vs {} path steps",
                a.steps.len(),
                b.steps.len()
            ));
        }
        for (sa, sb) in a.steps.iter().zip(&b.steps) {
            if sa.active != sb.active {
                return Err(format!(
                    "instance {k}: active sets differ at lambda={:e}",
                    sa.lambda
                ));
            }
            let fa = inst.design.apply(&sa.x).unwrap();
            let fb = dt.apply(&sb.x).unwrap();
            let diff = (fa - fb).amax();
            worst = worst.max(diff);
            if diff > 1e-8 {
                return Err(format!("instance {k}: fitted values differ by {diff:e}"));
            }
            steps += 1;
        }
        check_path_steps(&inst.design, &inst.y, &a)?;
        check_path_steps(&dt, &inst.y, &b)?;
    }
    Ok(format!(
        "{instances} instances, {steps} path steps, max fitted change {worst:.1e}"
    ))
}

pub fn lambda0_rule(trials: usize) -> Check {
    let mut r = rng(305);
    for k in 0..trials {
        let n_groups = r.random_range(2..=6);
        let s = r.random_range(1..=3);
        let n = r.random_range(s + 1..=12);
        let d = unit_design(&mut r, n, n_groups, s);
        let y = DVector::from_fn(n, |_, _| r.sample::<f64, _>(StandardNormal));
        let lambda0 = 0.5 * y.norm_squared();
        let lambda = lambda0 * (1.0 + 2.0 * r.random::<f64>()) + 1e-12;
        let warm = PrimalDualState::initial(&d, &y).unwrap();
        let inner = gpdas_fixed_lambda(&d, &y, lambda, &warm, 5).map_err(|e| e.to_string())?;
        if !inner.state.active.is_empty() || inner.state.x.values.amax() != 0.0 {
            return Err(format!("trial {k}: nonzero solution above lambda0"));
        }
        let (xb, _) =
            brute_force_global_min(&d, &y, lambda, n_groups).map_err(|e| e.to_string())?;
        if xb.values.amax() != 0.0 {
            return Err(format!(
                "trial {k}: brute force found a nonzero minimizer above lambda0"
            ));
        }
        check_stationary(&d, &y, &inner.state.x, &inner.state.active, lambda)?;
    }
    Ok(format!("{trials} trials"))
}

/// Converged iterates with at most `T` active groups lie inside the true
/// support, on designs satisfying the coherence assumption and the small
/// noise condition.
pub fn support_inclusion(trials: usize) -> Check {
    let mut r = rng(306);
    let (n, n_groups, s, t) = (600, 6, 2, 2);
    let mut tested = 0;
    let mut iterates = 0;
    let mut attempts = 0;
    while tested < trials {
        attempts += 1;
        if attempts > 5 * trials {
            return Err(format!("only {tested} instances met the assumptions"));
        }
        let d = unit_design(&mut r, n, n_groups, s);
        let mu = bmc(&d).map_err(|e| e.to_string())?.bmc;
        if !mu_satisfies(mu, t) {
            continue;
        }
        let mut groups: Vec<usize> = (0..n_groups).collect();
        for i in 0..t {
            let j = r.random_range(i..n_groups);
            groups.swap(i, j);
        }
        let truth = ActiveSet::new(groups[..t].iter().copied(), n_groups).unwrap();
        let mut x = DVector::zeros(n_groups * s);
        for i in truth.iter() {
            for c in 0..s {
                let mag: f64 = r.random_range(1.0..10.0);
                x[i * s + c] = if r.random::<bool>() { mag } else { -mag };
            }
        }
        let xs = d.signal(x).unwrap();
        let noise = DVector::from_fn(n, |_, _| 1e-3 * r.sample::<f64, _>(StandardNormal));
        let y = d.apply(&xs).unwrap() + &noise;
        let eps = noise.norm();
        let xbar = d.transform_primal(&xs).unwrap();
        let min_bar = truth
            .iter()
            .map(|i| xbar.group_norm2(i))
            .fold(f64::INFINITY, f64::min);
        if eps >= 0.5 * (1.0 - 3.0 * mu * t as f64) * min_bar {
            continue;
        }
        let cfg = SolverConfig::default();
        let path = gpdasc_path(&d, &y, &cfg).map_err(|e| e.to_string())?;
        for st in path
            .steps
            .iter()
            .filter(|st| st.converged && st.active.len() <= t)
        {
            if !st.active.is_subset(&truth) {
                return Err(format!(
                    "active {:?} not inside {:?} at lambda={:e}",
                    st.active.as_slice(),
                    truth.as_slice(),
                    st.lambda
                ));
            }
            iterates += 1;
        }
        check_path_steps(&d, &y, &path)?;
        tested += 1;
    }
    Ok(format!(
        "{tested} instances, {iterates} iterates, 0 violations"
    ))
}

pub fn penalty_invariance(trials: usize) -> Check {
    let mut r = rng(307);
    for k in 0..trials {
        let n_groups = r.random_range(1..=10);
        let s = r.random_range(1..=5);
        let part = Arc::new(GroupPartition::uniform(n_groups, s).unwrap());
        let mut v = DVector::zeros(n_groups * s);
        for i in 0..n_groups {
            if r.random::<bool>() {
                for c in 0..s {
                    v[i * s + c] = r.sample(StandardNormal);
                }
            }
        }
        let mut w = v.clone();
        for i in 0..n_groups {
            let m = random_nonsingular(&mut r, s, 1e3);
            let g = &m * v.rows(i * s, s);
            w.rows_mut(i * s, s).copy_from(&g);
        }
        let a = group_norm(
            &GroupSignal::new(v, part.clone()).unwrap(),
            OuterExponent::Zero,
            2.0,
        )
        .map_err(|e| e.to_string())?;
        let b = group_norm(
            &GroupSignal::new(w, part).unwrap(),
            OuterExponent::Zero,
            2.0,
        )
        .map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("trial {k}: group count {a} became {b}"));
        }
    }
    Ok(format!("{trials} trials"))
}

pub fn noise_norm_mean(trials: usize) -> Check {
    let (n, sigma) = (50, 0.1);
    let mut sum = 0.0;
    for k in 0..trials {
        let p = GenParams::new(n, 20, 3, 3, 10.0, 0.0, sigma, 9000 + k as u64);
        sum += generate_instance(&p).map_err(|e| e.to_string())?.noise_norm;
    }
    let mean = sum / trials as f64;
    let target = sigma * (n as f64).sqrt();
    let rel = (mean - target).abs() / target;
    if rel > 0.05 {
        return Err(format!(
            "mean noise norm {mean} vs {target} ({:.2}%)",
            100.0 * rel
        ));
    }
    Ok(format!("{trials} instances, mean {mean:.4} vs {target:.4}"))
}
