use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use groupsparse::baselines::{gomp, GompConfig, Selection};
use groupsparse::coherence::bmc;
use groupsparse::harness::{
    generate_instance, run_benchmark, write_results, BenchConfig, GenParams,
};
use groupsparse::io::{
    fmt_f64, read_matrix, read_partition, read_vector, write_matrix, write_partition, write_vector,
};
use groupsparse::solver::{gpdasc_path, SolverConfig};
use groupsparse::{Error, GroupedDesign, Result};

#[derive(Parser)]
#[command(
    name = "groupsparse",
    version,
    about = "Group-sparse recovery with the l0(l2) penalty"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic instance and write it to a directory.
    Gen(GenArgs),
    /// Run the continuation solver.
    Solve(SolveArgs),
    /// Run group orthogonal matching pursuit.
    Gomp(GompArgs),
    /// Mutual and blockwise mutual coherence of a design (JSON on stdout).
    Bmc(BmcArgs),
    /// Run a benchmark sweep from a JSON config.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    /// Number of groups.
    #[arg(long = "groups")]
    n_groups: usize,
    /// Number of nonzero groups.
    #[arg(long = "sparsity")]
    t: usize,
    /// Group size.
    #[arg(long = "group-size")]
    s: usize,
    #[arg(long, default_value_t = 10.0)]
    dr: f64,
    #[arg(long, default_value_t = 0.0)]
    theta: f64,
    #[arg(long, default_value_t = 1e-3)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// Design matrix CSV (one row per line).
    #[arg(long)]
    design: PathBuf,
    /// Partition file: one line of group sizes.
    #[arg(long)]
    partition: PathBuf,
    /// Data vector, one value per line.
    #[arg(long)]
    data: PathBuf,
    /// Recovered signal output, one value per line.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0.7)]
    rho: f64,
    #[arg(long, default_value_t = 5)]
    kmax: usize,
    /// Noise level for the discrepancy stop; without it the full path runs.
    #[arg(long)]
    eps: Option<f64>,
    /// Initial parameter (default ||y||^2 / 2).
    #[arg(long)]
    lambda0: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    max_outer: usize,
    /// Path log CSV: s, lambda, residual, n_active, inner_iters, time_ms.
    #[arg(long)]
    path_log: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectionArg {
    Raw,
    Transformed,
}

#[derive(Args)]
struct GompArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    max_groups: usize,
    /// Residual-norm stop.
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    #[arg(long, value_enum, default_value = "raw")]
    selection: SelectionArg,
}

#[derive(Args)]
struct BmcArgs {
    #[arg(long)]
    design: PathBuf,
    #[arg(long)]
    partition: PathBuf,
    /// Also write the pairwise coherence matrix as CSV.
    #[arg(long)]
    pairwise: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `out_dir` of the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_design(design: &Path, partition: &Path) -> Result<GroupedDesign> {
    let m = read_matrix(design)?;
    let part = read_partition(partition)?;
    let d = GroupedDesign::prepare(m, part)?;
    if !d.has_unit_columns() {
        log::warn!("design columns are not unit length; continuing");
    }
    Ok(d)
}

fn load_problem(args: &DataArgs) -> Result<(GroupedDesign, DVector<f64>)> {
    let d = load_design(&args.design, &args.partition)?;
    let y = read_vector(&args.data)?;
    if y.len() != d.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} values, design {} rows",
            y.len(),
            d.n_rows()
        )));
    }
    Ok((d, y))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => {
            let params = GenParams::new(a.n, a.n_groups, a.t, a.s, a.dr, a.theta, a.sigma, a.seed);
            let inst = generate_instance(&params)?;
            fs::create_dir_all(&a.out)?;
            write_matrix(&a.out.join("design.csv"), inst.design.matrix())?;
            write_partition(&a.out.join("partition.csv"), inst.design.partition())?;
            write_vector(&a.out.join("y.txt"), &inst.y)?;
            write_vector(&a.out.join("y_clean.txt"), &inst.y_clean)?;
            write_vector(&a.out.join("x_true.txt"), &inst.x_true.values)?;
            let active: Vec<String> = inst.true_active.iter().map(|i| i.to_string()).collect();
            fs::write(a.out.join("active.txt"), active.join(",") + "\n")?;
            fs::write(
                a.out.join("noise_norm.txt"),
                fmt_f64(inst.noise_norm) + "\n",
            )?;
            fs::write(
                a.out.join("params.json"),
                serde_json::to_string_pretty(&inst.params)? + "\n",
            )?;
        }
        Command::Solve(a) => {
            let (d, y) = load_problem(&a.data)?;
            let cfg = SolverConfig {
                lambda0: a.lambda0,
                rho: a.rho,
                k_max: a.kmax,
                eps: a.eps,
                max_outer: a.max_outer,
                ..SolverConfig::default()
            };
            let path = gpdasc_path(&d, &y, &cfg)?;
            write_vector(&a.data.out, &path.solution().values)?;
            if let Some(log_path) = a.path_log {
                let mut f = std::io::BufWriter::new(fs::File::create(log_path)?);
                writeln!(f, "s,lambda,residual,n_active,inner_iters,time_ms")?;
                for (s, st) in path.steps.iter().enumerate() {
                    writeln!(
                        f,
                        "{s},{},{},{},{},{}",
                        fmt_f64(st.lambda),
                        fmt_f64(st.residual_norm),
                        st.active.len(),
                        st.inner_iterations,
                        fmt_f64(st.elapsed.as_secs_f64() * 1e3)
                    )?;
                }
                f.flush()?;
            }
            eprintln!(
                "{} after {} steps, {} active groups, residual {:.6e}",
                path.termination.as_str(),
                path.outer_steps(),
                path.active().len(),
                path.last().residual_norm
            );
        }
        Command::Gomp(a) => {
            let (d, y) = load_problem(&a.data)?;
            let cfg = GompConfig {
                max_groups: a.max_groups,
                residual_tol: a.eps,
                selection: match a.selection {
                    SelectionArg::Raw => Selection::Raw,
                    SelectionArg::Transformed => Selection::Transformed,
                },
            };
            let r = gomp(&d, &y, &cfg)?;
            write_vector(&a.data.out, &r.x.values)?;
            eprintln!(
                "{} groups selected, residual {:.6e}{}",
                r.order.len(),
                r.residual_history.last().copied().unwrap_or(0.0),
                if r.ill_posed {
                    " (stopped: ill-posed refit)"
                } else {
                    ""
                }
            );
        }
        Command::Bmc(a) => {
            let d = load_design(&a.design, &a.partition)?;
            let report = bmc(&d)?;
            println!("{}", serde_json::to_string(&report.summary())?);
            if let Some(p) = a.pairwise {
                write_matrix(&p, &report.pairwise)?;
            }
        }
        Command::Bench(a) => {
            let text = fs::read_to_string(&a.config)?;
            let cfg = BenchConfig::from_json(&text)?;
            let out = a.out.or_else(|| cfg.out_dir.clone()).ok_or_else(|| {
                Error::InvalidParams("no output directory (out_dir or --out)".into())
            })?;
            let results = run_benchmark(&cfg)?;
            write_results(&results, &out)?;
            for s in &results.summary {
                eprintln!(
                    "point {} T={} theta={} {}: recovery {:.3}, mean error {:.3e}",
                    s.point,
                    s.params.t,
                    s.params.theta,
                    s.solver.as_str(),
                    s.recovery_probability,
                    s.mean_error
                );
            }
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
