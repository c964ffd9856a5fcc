//! Batch experiments: parameter sweeps x trials x solvers, written as CSV.
//!
//! Trial `t` of sweep point `k` draws its instance from the ChaCha8 stream
//! `(k << 32) | t` of the configured seed, so trials are independent of the
//! order in which they run. `trials.csv` and `summary.csv` contain no
//! timings and are bit-identical across runs; wall-clock times go to
//! `timing.csv`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_instance, metrics, GenParams};
use crate::baselines::{gomp, GompConfig, Selection};
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::solver::{gpdasc_path, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            Self::One(v) => vec![v.clone()],
            Self::Many(v) => v.clone(),
        }
    }
}

/// Each entry is a scalar or a list; the sweep is the Cartesian product.
/// `p` is optional and must equal `N s` when present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSweep {
    pub n: OneOrMany<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(rename = "N")]
    pub n_groups: OneOrMany<usize>,
    #[serde(rename = "T")]
    pub t: OneOrMany<usize>,
    pub s: OneOrMany<usize>,
    pub dr: OneOrMany<f64>,
    pub theta: OneOrMany<f64>,
    pub sigma: OneOrMany<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Gpdasc,
    Gomp,
}

impl SolverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Gpdasc => "gpdasc",
            Self::Gomp => "gomp",
        }
    }
}

fn default_one() -> f64 {
    1.0
}
fn default_rho() -> f64 {
    0.7
}
fn default_kmax() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub params: ParamSweep,
    pub trials: usize,
    pub solvers: Vec<SolverKind>,
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Discrepancy level is `eps_inflation * ||noise||`.
    #[serde(default = "default_one")]
    pub eps_inflation: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_kmax")]
    pub k_max: usize,
    #[serde(default)]
    pub gomp_transformed: bool,
}

impl BenchConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.points()?;
        Ok(cfg)
    }

    /// Sweep points in row-major order over `(n, N, T, s, dr, theta, sigma)`.
    pub fn points(&self) -> Result<Vec<GenParams>> {
        let sw = &self.params;
        let mut out = Vec::new();
        for &n in &sw.n.values() {
            for &n_groups in &sw.n_groups.values() {
                for &t in &sw.t.values() {
                    for &s in &sw.s.values() {
                        for &dr in &sw.dr.values() {
                            for &theta in &sw.theta.values() {
                                for &sigma in &sw.sigma.values() {
                                    let gp = GenParams::new(
                                        n, n_groups, t, s, dr, theta, sigma, self.seed,
                                    );
                                    if let Some(p) = sw.p {
                                        if p != gp.p {
                                            return Err(Error::InvalidParams(format!(
                                                "p={p} inconsistent with N*s={}",
                                                gp.p
                                            )));
                                        }
                                    }
                                    gp.validate()?;
                                    out.push(gp);
                                }
                            }
                        }
                    }
                }
            }
        }
        if self.solvers.is_empty() {
            return Err(Error::InvalidParams("no solvers requested".into()));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub point: usize,
    pub trial: usize,
    pub solver: SolverKind,
    pub params: GenParams,
    pub exact_recovery: bool,
    pub error: f64,
    pub psnr: f64,
    pub residual_norm: f64,
    pub n_active: usize,
    /// Outer path steps (gpdasc) or selected groups (gomp).
    pub iterations: usize,
    /// Median inner iterations per path step (gpdasc only, else 0).
    pub median_inner: f64,
    pub time_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRecord {
    pub point: usize,
    pub solver: SolverKind,
    pub params: GenParams,
    pub trials: usize,
    pub recovery_probability: f64,
    pub mean_error: f64,
    pub mean_residual: f64,
    pub mean_iterations: f64,
    pub mean_time_ms: f64,
}

#[derive(Debug, Clone, Default)]
pub struct BenchResults {
    pub trials: Vec<TrialRecord>,
    pub summary: Vec<SummaryRecord>,
}

impl BenchResults {
    pub fn summary_for(&self, point: usize, solver: SolverKind) -> Option<&SummaryRecord> {
        self.summary
            .iter()
            .find(|s| s.point == point && s.solver == solver)
    }
}

fn median(values: &mut [usize]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_unstable();
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m] as f64
    } else {
        0.5 * (values[m - 1] + values[m]) as f64
    }
}

/// Generates one instance and runs every requested solver on it.
pub fn run_trial(
    config: &BenchConfig,
    point: usize,
    params: &GenParams,
    trial: usize,
) -> Result<Vec<TrialRecord>> {
    let gp = params
        .clone()
        .with_stream(((point as u64) << 32) | trial as u64);
    let inst = generate_instance(&gp)?;
    let eps = config.eps_inflation * inst.noise_norm;
    let mut out = Vec::with_capacity(config.solvers.len());
    for &solver in &config.solvers {
        let t0 = Instant::now();
        let (x, iterations, median_inner) = match solver {
            SolverKind::Gpdasc => {
                let cfg = SolverConfig {
                    rho: config.rho,
                    k_max: config.k_max,
                    eps: Some(eps),
                    ..SolverConfig::default()
                };
                let path = gpdasc_path(&inst.design, &inst.y, &cfg)?;
                let mut inner: Vec<usize> = path.inner_iterations().collect();
                let med = median(&mut inner);
                (path.solution().clone(), path.outer_steps(), med)
            }
            SolverKind::Gomp => {
                let cfg = GompConfig {
                    max_groups: inst.design.n_groups(),
                    residual_tol: eps,
                    selection: if config.gomp_transformed {
                        Selection::Transformed
                    } else {
                        Selection::Raw
                    },
                };
                let r = gomp(&inst.design, &inst.y, &cfg)?;
                let k = r.order.len();
                (r.x, k, 0.0)
            }
        };
        let time_ms = t0.elapsed().as_secs_f64() * 1e3;
        let m = metrics(&x, &inst)?;
        out.push(TrialRecord {
            point,
            trial,
            solver,
            params: params.clone(),
            exact_recovery: m.exact_recovery,
            error: m.error,
            psnr: m.psnr,
            residual_norm: m.residual_norm,
            n_active: m.n_active,
            iterations,
            median_inner,
            time_ms,
        });
    }
    Ok(out)
}

pub fn run_benchmark(config: &BenchConfig) -> Result<BenchResults> {
    let points = config.points()?;
    let tasks: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|k| (0..config.trials).map(move |t| (k, t)))
        .collect();
    let per_task: Vec<Result<Vec<TrialRecord>>> = tasks
        .par_iter()
        .map(|&(k, t)| run_trial(config, k, &points[k], t))
        .collect();
    let mut trials = Vec::with_capacity(tasks.len() * config.solvers.len());
    for r in per_task {
        trials.extend(r?);
    }
    // collect() keeps task order; sort anyway so the layout never depends on it
    trials.sort_by_key(|r| {
        (
            r.point,
            r.trial,
            config.solvers.iter().position(|&s| s == r.solver),
        )
    });

    let mut summary = Vec::new();
    if config.trials > 0 {
        for (k, params) in points.iter().enumerate() {
            for &solver in &config.solvers {
                let rows: Vec<&TrialRecord> = trials
                    .iter()
                    .filter(|r| r.point == k && r.solver == solver)
                    .collect();
                let cnt = rows.len() as f64;
                let mean =
                    |f: &dyn Fn(&TrialRecord) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / cnt;
                summary.push(SummaryRecord {
                    point: k,
                    solver,
                    params: params.clone(),
                    trials: rows.len(),
                    recovery_probability: mean(&|r| r.exact_recovery as u8 as f64),
                    mean_error: mean(&|r| r.error),
                    mean_residual: mean(&|r| r.residual_norm),
                    mean_iterations: mean(&|r| r.iterations as f64),
                    mean_time_ms: mean(&|r| r.time_ms),
                });
            }
        }
    }
    Ok(BenchResults { trials, summary })
}

fn param_fields(p: &GenParams) -> Vec<String> {
    vec![
        p.n.to_string(),
        p.p.to_string(),
        p.n_groups.to_string(),
        p.t.to_string(),
        p.s.to_string(),
        fmt_f64(p.dr),
        fmt_f64(p.theta),
        fmt_f64(p.sigma),
    ]
}

const PARAM_HEADER: [&str; 8] = ["n", "p", "N", "T", "s", "dr", "theta", "sigma"];

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `trials.csv`, `summary.csv` and `timing.csv` into `out_dir`.
pub fn write_results(results: &BenchResults, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let mut header = vec!["point"];
    header.extend(PARAM_HEADER);
    header.extend([
        "trial",
        "solver",
        "exact_recovery",
        "error",
        "psnr",
        "residual",
        "n_active",
        "iterations",
        "median_inner",
    ]);
    write_csv(
        &out_dir.join("trials.csv"),
        &header,
        results.trials.iter().map(|r| {
            let mut row = vec![r.point.to_string()];
            row.extend(param_fields(&r.params));
            row.extend([
                r.trial.to_string(),
                r.solver.as_str().to_string(),
                (r.exact_recovery as u8).to_string(),
                fmt_f64(r.error),
                fmt_f64(r.psnr),
                fmt_f64(r.residual_norm),
                r.n_active.to_string(),
                r.iterations.to_string(),
                fmt_f64(r.median_inner),
            ]);
            row
        }),
    )?;

    let mut header = vec!["point"];
    header.extend(PARAM_HEADER);
    header.extend([
        "solver",
        "trials",
        "recovery_probability",
        "mean_error",
        "mean_residual",
        "mean_iterations",
    ]);
    write_csv(
        &out_dir.join("summary.csv"),
        &header,
        results.summary.iter().map(|s| {
            let mut row = vec![s.point.to_string()];
            row.extend(param_fields(&s.params));
            row.extend([
                s.solver.as_str().to_string(),
                s.trials.to_string(),
                fmt_f64(s.recovery_probability),
                fmt_f64(s.mean_error),
                fmt_f64(s.mean_residual),
                fmt_f64(s.mean_iterations),
            ]);
            row
        }),
    )?;

    let mut f = fs::File::create(out_dir.join("timing.csv"))?;
    writeln!(f, "point,trial,solver,time_ms")?;
    for r in &results.trials {
        writeln!(
            f,
            "{},{},{},{}",
            r.point,
            r.trial,
            r.solver.as_str(),
            fmt_f64(r.time_ms)
        )?;
    }
    Ok(())
}
