//! Command-line front end: `simulate`, `fit` and `diagnose`.
//!
//! Exit codes: 0 success, 2 invalid arguments, 3 I/O failure, 4 sampler
//! failure. `SSHK_THREADS` caps the number of worker threads.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::diagnostics::{
    ess, iterations_until_rhat, quantiles, rank_normalized_rhat, rhat_trajectory, ChainSet,
    Convergence,
};
use crate::gibbs::{default_tau_inits, per_dataset_flops, run_experiment, Monitor, RunConfig, TauUpdate};
use crate::io::{self, BinaryMatrix, Summary, Table};
use crate::model::{self, Dataset, ModelKind, PriorConfig, TauPrior};
use crate::tau::IntegratorConfig;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_SAMPLER: i32 = 4;

/// A failed command with its exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        Self { code: EXIT_IO, message: format!("{}: {err}", path.display()) }
    }

    fn sampler(message: impl Into<String>) -> Self {
        Self { code: EXIT_SAMPLER, message: message.into() }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "sshk", version, about = "Spectral collapsed Gibbs sampling for shrinkage regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate genotype-like covariates and a liability-threshold phenotype.
    Simulate(SimulateArgs),
    /// Run the samplers on a dataset and write traces plus a summary.
    Fit(FitArgs),
    /// Convergence and mixing report for a set of trace files.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DataFormat {
    Csv,
    Binary,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    /// Fraction of nonzero coefficients, in (0, 1].
    #[arg(long, default_value_t = 0.001)]
    pub sparsity: f64,
    #[arg(long, default_value_t = 40.0)]
    pub noise_sd: f64,
    #[arg(long, default_value_t = 60.0)]
    pub threshold: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = DataFormat::Csv)]
    pub format: DataFormat,
    /// Write the continuous liability instead of its threshold indicator.
    #[arg(long)]
    pub continuous: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutcomeType {
    Linear,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TauUpdateArg {
    Spectral,
    Metropolis,
    Uncollapsed,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// CSV with a header row, or a binary SSHK matrix file.
    #[arg(long)]
    pub data: PathBuf,
    /// CSV column holding the outcome.
    #[arg(long, default_value = "y")]
    pub outcome_col: String,
    /// CSV column holding binomial trial counts (default: one trial per row).
    #[arg(long)]
    pub trials_col: Option<String>,
    #[arg(long, value_enum)]
    pub outcome_type: OutcomeType,
    #[arg(long, value_enum, default_value_t = TauUpdateArg::Spectral)]
    pub tau_update: TauUpdateArg,
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    /// Burn-in iterations (default: a fifth of the iterations).
    #[arg(long)]
    pub burnin: Option<usize>,
    /// Number of chains; must equal the number of initial values times the
    /// number of seeds when given.
    #[arg(long)]
    pub chains: Option<usize>,
    /// Comma-separated initial values of tau.
    #[arg(long, value_delimiter = ',')]
    pub tau_inits: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1u64, 2, 3])]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 1.0)]
    pub metropolis_step: f64,
    #[arg(long, default_value_t = 0.001)]
    pub eps_integral: f64,
    #[arg(long, default_value_t = 0.0001)]
    pub eps_density: f64,
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 4096)]
    pub max_grid: usize,
    /// Iterations at the end of each chain used for ESS (default: all after burn-in).
    #[arg(long)]
    pub tail_window: Option<usize>,
    /// Add an unpenalized intercept.
    #[arg(long)]
    pub intercept: bool,
    /// Record coefficient draws in the traces.
    #[arg(long)]
    pub monitor_beta: bool,
    #[arg(long, default_value_t = 1.0)]
    pub prior_a: f64,
    #[arg(long, default_value_t = 1.0)]
    pub prior_b: f64,
    /// Upper end of the uniform prior on tau.
    #[arg(long, default_value_t = 1.0)]
    pub tau_upper: f64,
    #[arg(long, default_value_t = 100.0)]
    pub sigma0_sq: f64,
    #[arg(long, default_value_t = 1.01)]
    pub threshold: f64,
    #[arg(long, default_value_t = 5)]
    pub stride: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Glob matching the trace files.
    #[arg(long)]
    pub traces: String,
    /// Trace column to analyze.
    #[arg(long, default_value = "log_tau")]
    pub quantity: String,
    #[arg(long, default_value_t = 1.01)]
    pub threshold: f64,
    #[arg(long, default_value_t = 5)]
    pub stride: usize,
    /// Report file (`key = value` lines).
    #[arg(long)]
    pub out: PathBuf,
    /// R-hat trajectory CSV (default: the report path with `.rhat.csv`).
    #[arg(long)]
    pub rhat_csv: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(cmd: Command) -> CliResult<()> {
    let pool = thread_pool()?;
    pool.install(|| match cmd {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Diagnose(a) => cmd_diagnose(&a),
    })
}

fn thread_pool() -> CliResult<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("SSHK_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::usage(format!("SSHK_THREADS must be a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| CliError::sampler(format!("cannot start worker threads: {e}")))
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

pub fn cmd_simulate(a: &SimulateArgs) -> CliResult<()> {
    if a.n == 0 || a.p == 0 {
        return Err(CliError::usage("--n and --p must be positive"));
    }
    if !(a.sparsity > 0.0 && a.sparsity <= 1.0) {
        return Err(CliError::usage(format!("--sparsity must lie in (0, 1], got {}", a.sparsity)));
    }
    if !(a.noise_sd > 0.0 && a.noise_sd.is_finite()) {
        return Err(CliError::usage("--noise-sd must be positive"));
    }
    if a.threshold.is_nan() {
        return Err(CliError::usage("--threshold must be a number"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let x = model::simulate_genotypes(a.n, a.p, &mut rng);
    let (outcome, beta) = if a.continuous {
        let k = model::support_size(a.sparsity, a.p);
        let support = rand::seq::index::sample(&mut rng, a.p, k);
        let mut idx = support.into_vec();
        idx.sort_unstable();
        let mut beta = DVector::zeros(a.p);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        for j in idx {
            beta[j] = normal.sample(&mut rng);
        }
        let noise = Normal::new(0.0, a.noise_sd).map_err(|e| CliError::usage(e.to_string()))?;
        let signal = &x * &beta;
        (DVector::from_fn(a.n, |i, _| signal[i] + noise.sample(&mut rng)), beta)
    } else {
        let (beta, y) = model::simulate_liability_phenotype(&x, a.sparsity, a.noise_sd, a.threshold, &mut rng)
            .map_err(|e| CliError::usage(e.to_string()))?;
        (DVector::from_iterator(a.n, y.into_iter().map(f64::from)), beta)
    };

    create_dir(&a.out)?;
    match a.format {
        DataFormat::Csv => {
            let path = a.out.join("data.csv");
            io::write_csv(&path, &data_table(&x, &outcome)).map_err(|e| CliError::io(&path, e))?;
        }
        DataFormat::Binary => {
            let path = a.out.join("data.sshk");
            let m = BinaryMatrix { x, outcome: Some(outcome), binary_outcome: !a.continuous };
            io::write_binary(&path, &m).map_err(|e| CliError::io(&path, e))?;
        }
    }
    let path = a.out.join("beta_true.csv");
    let table = Table {
        header: vec!["beta".into()],
        rows: beta.iter().map(|b| vec![*b]).collect(),
    };
    io::write_csv(&path, &table).map_err(|e| CliError::io(&path, e))
}

fn data_table(x: &DMatrix<f64>, y: &DVector<f64>) -> Table {
    let mut header: Vec<String> = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    let rows = (0..x.nrows())
        .map(|i| {
            let mut row: Vec<f64> = x.row(i).iter().copied().collect();
            row.push(y[i]);
            row
        })
        .collect();
    Table { header, rows }
}

fn load_dataset(a: &FitArgs) -> CliResult<Dataset<f64>> {
    let path = &a.data;
    let binary = io::is_binary(path).map_err(|e| CliError::io(path, e))?;
    let (x, y, trials) = if binary {
        let m = io::read_binary(path).map_err(|e| CliError::io(path, e))?;
        let y = m
            .outcome
            .ok_or_else(|| CliError::usage(format!("{} has no outcome column", path.display())))?;
        (m.x, y, None)
    } else {
        let t = io::read_csv(path).map_err(|e| CliError::io(path, e))?;
        let yj = t
            .column_index(&a.outcome_col)
            .ok_or_else(|| CliError::usage(format!("no column named {:?}", a.outcome_col)))?;
        let tj = match &a.trials_col {
            Some(name) => Some(
                t.column_index(name)
                    .ok_or_else(|| CliError::usage(format!("no column named {name:?}")))?,
            ),
            None => None,
        };
        let cols: Vec<usize> = (0..t.header.len()).filter(|j| *j != yj && Some(*j) != tj).collect();
        if cols.is_empty() || t.rows.is_empty() {
            return Err(CliError::usage("dataset needs at least one covariate and one row"));
        }
        let x = DMatrix::from_fn(t.rows.len(), cols.len(), |i, j| t.rows[i][cols[j]]);
        let y = DVector::from_fn(t.rows.len(), |i, _| t.rows[i][yj]);
        let trials = tj.map(|j| t.rows.iter().map(|r| r[j]).collect::<Vec<f64>>());
        (x, y, trials)
    };
    let counts = |v: &[f64], what: &str| -> CliResult<Vec<u32>> {
        v.iter()
            .map(|c| {
                if *c >= 0.0 && c.fract() == 0.0 && *c <= f64::from(u32::MAX) {
                    Ok(*c as u32)
                } else {
                    Err(CliError::usage(format!("{what} must be nonnegative integers, got {c}")))
                }
            })
            .collect()
    };
    let built = match a.outcome_type {
        OutcomeType::Linear => Dataset::linear(x, y, a.intercept),
        OutcomeType::Logistic => {
            let successes = counts(y.as_slice(), "successes")?;
            let trials = match trials {
                Some(t) => counts(&t, "trials")?,
                None => vec![1; successes.len()],
            };
            Dataset::binomial(x, successes, trials, a.intercept)
        }
    };
    built.map_err(|e| CliError::usage(format!("invalid dataset: {e}")))
}

fn fit_config(a: &FitArgs) -> CliResult<RunConfig> {
    let model = match a.outcome_type {
        OutcomeType::Linear => ModelKind::Linear,
        OutcomeType::Logistic => ModelKind::Logistic,
    };
    let update = match a.tau_update {
        TauUpdateArg::Spectral => TauUpdate::Spectral,
        TauUpdateArg::Metropolis => TauUpdate::Metropolis,
        TauUpdateArg::Uncollapsed => TauUpdate::Uncollapsed,
    };
    let mut cfg = RunConfig::new(model, update, a.iters);
    if let Some(b) = a.burnin {
        cfg.n_burnin = b;
    }
    cfg.tau_inits = a.tau_inits.clone().unwrap_or_else(default_tau_inits);
    cfg.seeds = a.seeds.clone();
    cfg.metropolis_step_init = a.metropolis_step;
    cfg.integrator = IntegratorConfig {
        eps_integral: a.eps_integral,
        eps_density: a.eps_density,
        delta: a.delta,
        max_grid: a.max_grid,
    };
    cfg.prior = PriorConfig {
        a: a.prior_a,
        b: a.prior_b,
        tau_prior: TauPrior::UniformTruncated { upper: a.tau_upper },
        sigma0_sq: a.sigma0_sq,
    };
    if a.monitor_beta {
        cfg.monitor.push(Monitor::Beta);
    }
    if let Some(c) = a.chains {
        if c != cfg.chains() {
            return Err(CliError::usage(format!(
                "--chains {c} does not match {} initial values x {} seeds",
                cfg.tau_inits.len(),
                cfg.seeds.len()
            )));
        }
    }
    if !(a.threshold > 1.0) || a.stride == 0 {
        return Err(CliError::usage("--threshold must exceed 1 and --stride must be positive"));
    }
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(cfg)
}

/// Trace file name of a chain.
pub fn trace_file_name(chain_index: usize) -> String {
    format!("chain_{chain_index:03}.csv")
}

pub fn cmd_fit(a: &FitArgs) -> CliResult<()> {
    let cfg = fit_config(a)?;
    let d = load_dataset(a)?;
    if d.p() < 2 && cfg.tau_update == TauUpdate::Uncollapsed {
        return Err(CliError::usage("the uncollapsed sampler needs at least two covariates"));
    }
    create_dir(&a.out_dir)?;

    let clock = Instant::now();
    let results = run_experiment(&cfg, &d);
    let wall = clock.elapsed().as_secs_f64();

    let mut outputs = Vec::new();
    let mut failures = Vec::new();
    for (c, r) in results.into_iter().enumerate() {
        match r {
            Ok(o) => {
                let path = a.out_dir.join(trace_file_name(c));
                io::write_csv(&path, &io::trace_table(&o)).map_err(|e| CliError::io(&path, e))?;
                outputs.push(o);
            }
            Err(e) => failures.push(format!("chain {c}: {e}")),
        }
    }

    let mut s = Summary::default();
    s.push("model", format!("{:?}", cfg.model).to_lowercase());
    s.push("tau_update", format!("{:?}", cfg.tau_update).to_lowercase());
    s.push("n", d.n());
    s.push("p", d.p());
    s.push("iterations", cfg.n_iter);
    s.push("burnin", cfg.n_burnin);
    s.push("chains", cfg.chains());
    s.push("failed_chains", failures.len());
    s.push("wall_seconds", wall);

    let report_path = a.out_dir.join("summary.txt");
    if outputs.len() >= 2 {
        let log_tau: Vec<Vec<f64>> = outputs.iter().map(|o| o.draws.log_tau()).collect();
        let all = ChainSet::new(log_tau).map_err(|e| CliError::sampler(e.to_string()))?;
        let report = convergence_report(&all, a.threshold, a.stride)
            .map_err(|e| CliError::sampler(e.to_string()))?;
        for (k, v) in &report.entries {
            s.push(k.clone(), v);
        }
        let tail = a.tail_window.unwrap_or(cfg.n_iter - cfg.n_burnin).clamp(4, cfg.n_iter);
        let tail_set = all.tail(tail).map_err(|e| CliError::sampler(e.to_string()))?;
        s.push("tail_window", tail);
        match ess(&tail_set) {
            Ok(e) => {
                let seconds: f64 = outputs
                    .iter()
                    .map(|o| (o.times.burnin + o.times.sampling).as_secs_f64())
                    .sum();
                let iters = (cfg.n_iter * outputs.len()) as f64;
                s.push("ess", e);
                s.push("iterations_per_ess", iters / e);
                s.push("seconds_per_ess", seconds / e);
            }
            Err(e) => s.push("ess", format!("undefined ({e})")),
        }
        let trajectory = rhat_trajectory(&all, trajectory_stride(a.stride, cfg.n_iter))
            .map_err(|e| CliError::sampler(e.to_string()))?;
        write_trajectory(&a.out_dir.join("rhat.csv"), &trajectory)?;
    }
    if let Some(rates) = outputs.iter().map(|o| o.acceptance_rate).collect::<Option<Vec<f64>>>() {
        if !rates.is_empty() {
            s.push("acceptance_rate", rates.iter().sum::<f64>() / rates.len() as f64);
        }
    }
    let flops = outputs
        .iter()
        .fold(crate::flops::FlopCounts::default(), |acc, o| acc + o.flops);
    s.push("flops_per_dataset", per_dataset_flops(&cfg, &d));
    s.push("flops_per_scan", flops.per_scan);
    s.push("flops_per_tau", flops.per_tau);
    s.push("decompositions", flops.decompositions);
    s.push("tau_evaluations", flops.tau_evaluations);
    for f in &failures {
        s.push("failure", f);
    }
    s.write(&report_path).map_err(|e| CliError::io(&report_path, e))?;

    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::sampler(failures.join("; ")))
    }
}

/// Keeps trajectory files to at most about 500 rows.
fn trajectory_stride(stride: usize, n_iter: usize) -> usize {
    let min = n_iter.div_ceil(500).max(1);
    stride.max(min.div_ceil(stride) * stride)
}

fn write_trajectory(path: &Path, rows: &[(usize, f64)]) -> CliResult<()> {
    let table = Table {
        header: vec!["iteration".into(), "rhat".into()],
        rows: rows.iter().map(|(l, r)| vec![*l as f64, *r]).collect(),
    };
    io::write_csv(path, &table).map_err(|e| CliError::io(path, e))
}

fn convergence_report(cs: &ChainSet<f64>, threshold: f64, stride: usize) -> crate::error::Result<Summary> {
    let mut s = Summary::default();
    s.push("rhat", rank_normalized_rhat(cs)?);
    let until = match iterations_until_rhat(cs, threshold, stride)? {
        Convergence::Reached(l) => l.to_string(),
        Convergence::NotReached => "NotReached".into(),
    };
    s.push("rhat_threshold", threshold);
    s.push("iterations_until_rhat", until);
    let pooled: Vec<f64> = cs.chains().iter().flatten().copied().collect();
    let q = quantiles(&pooled, &[0.025, 0.25, 0.5, 0.75, 0.975]);
    for (name, v) in ["q2.5", "q25", "q50", "q75", "q97.5"].iter().zip(q) {
        s.push(*name, v);
    }
    Ok(s)
}

pub fn cmd_diagnose(a: &DiagnoseArgs) -> CliResult<()> {
    if !(a.threshold > 1.0) || a.stride == 0 {
        return Err(CliError::usage("--threshold must exceed 1 and --stride must be positive"));
    }
    let pattern = glob::glob(&a.traces).map_err(|e| CliError::usage(format!("bad --traces pattern: {e}")))?;
    let mut paths = Vec::new();
    for entry in pattern {
        paths.push(entry.map_err(|e| CliError::io(e.path(), e.error()))?);
    }
    paths.sort();
    if paths.len() < 2 {
        return Err(CliError::usage(format!(
            "--traces must match at least two files, matched {}",
            paths.len()
        )));
    }
    let mut chains = Vec::new();
    for p in &paths {
        let t = io::read_csv(p).map_err(|e| CliError::io(p, e))?;
        let col = t
            .column(&a.quantity)
            .ok_or_else(|| CliError::usage(format!("{} has no column {:?}", p.display(), a.quantity)))?;
        chains.push(col);
    }
    let cs = ChainSet::new(chains).map_err(|e| CliError::usage(format!("traces: {e}")))?;

    let mut s = Summary::default();
    s.push("traces", paths.len());
    s.push("iterations", cs.n_iter());
    s.push("quantity", &a.quantity);
    let report = convergence_report(&cs, a.threshold, a.stride).map_err(|e| CliError::usage(e.to_string()))?;
    for (k, v) in &report.entries {
        s.push(k.clone(), v);
    }
    match ess(&cs) {
        Ok(e) => s.push("ess_pooled", e),
        Err(e) => s.push("ess_pooled", format!("undefined ({e})")),
    }
    for (k, chain) in cs.chains().iter().enumerate() {
        let v = match crate::diagnostics::ess_vector(chain) {
            Ok(e) => e.to_string(),
            Err(e) => format!("undefined ({e})"),
        };
        s.push(format!("ess_chain_{k}"), v);
    }
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    s.write(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    let csv = a.rhat_csv.clone().unwrap_or_else(|| {
        let mut name = a.out.as_os_str().to_owned();
        name.push(".rhat.csv");
        PathBuf::from(name)
    });
    let trajectory = rhat_trajectory(&cs, trajectory_stride(a.stride, cs.n_iter()))
        .map_err(|e| CliError::usage(e.to_string()))?;
    write_trajectory(&csv, &trajectory)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_stride_keeps_multiples() {
        assert_eq!(trajectory_stride(5, 1000), 5);
        assert_eq!(trajectory_stride(5, 10_000), 20);
        assert_eq!(trajectory_stride(7, 100_000), 203);
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["sshk", "simulate", "--n", "3"]), EXIT_USAGE);
        assert_eq!(run(["sshk", "bogus"]), EXIT_USAGE);
    }
}
