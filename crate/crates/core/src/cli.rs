//! The `mclt` command line.
//!
//! Exit codes: 0 success, 1 I/O or other failure, 2 configuration or usage
//! error, 3 budget error, 4 threshold violation under `--check`.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::analysis::{
    bolthausen_bound, check_report, corollary_bound, hall_bound, main_pass_policy, run_experiment,
    theorem3_bound, CheckOutcome,
};
use crate::augment::{check_batch, AugmentCheck};
use crate::config::{ExperimentConfig, OutputFormat};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::oracle::{enumerate_chain_with_budget, write_distribution_csv, ExactStatistics, DEFAULT_ATOM_BUDGET};
use crate::report::{fit_table, read_table_csv, write_summary_json, write_table_csv, write_table_json};
use crate::rng::RngPolicy;
use crate::sampler::{sample_paths, sample_summaries};
use crate::stats::estimate_s2;

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_BUDGET: u8 = 3;
pub const EXIT_CHECK: u8 = 4;

/// Monte Carlo and exact analysis of martingale CLT convergence rates.
#[derive(Debug, Parser)]
#[command(name = "mclt", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a rate experiment over an n grid and write the per-n table and summary.
    Simulate(SimulateArgs),
    /// Enumerate a chain exactly and write its laws and exact statistics.
    Oracle(OracleArgs),
    /// Fit power laws to the columns of an existing per-n table.
    Rates(RatesArgs),
    /// Augment a batch of paths and count how many satisfy each invariant.
    AugmentCheck(AugmentArgs),
    /// Evaluate the bound functionals at given moments.
    Bounds(BoundsArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KernelName {
    Rademacher,
    Banded,
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    #[arg(long, value_enum, default_value = "banded")]
    pub kernel: KernelName,
    #[arg(long, default_value_t = 0.75)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.25)]
    pub beta: f64,
}

impl KernelArgs {
    pub fn spec(&self) -> Result<KernelSpec> {
        let spec = match self.kernel {
            KernelName::Rademacher => KernelSpec::Rademacher,
            KernelName::Banded => KernelSpec::Banded {
                alpha: self.alpha,
                beta: self.beta,
            },
        };
        spec.validate().map_err(|e| Error::Config {
            field: "kernel".into(),
            reason: e.to_string(),
        })?;
        Ok(spec)
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON experiment config; the built-in default when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the table format.
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// Overrides the worker count. Output does not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Evaluate the rate thresholds and exit with code 4 if any fails.
    #[arg(long)]
    pub check: bool,
    /// Also dump the raw paths of the first grid point to this file.
    #[arg(long)]
    pub dump_paths: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long)]
    pub n: usize,
    /// Moment orders for the exact `‖V²−1‖_p^p`.
    #[arg(long = "p", default_values_t = [1.0, 2.0])]
    pub p_values: Vec<f64>,
    /// Maximum number of distinct atoms per step.
    #[arg(long, default_value_t = DEFAULT_ATOM_BUDGET)]
    pub budget: usize,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RatesArgs {
    /// Per-n table written by `simulate`.
    #[arg(long)]
    pub input: PathBuf,
    /// Weight points by inverse variance instead of plain least squares.
    #[arg(long)]
    pub weighted: bool,
    /// Write the fits here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long, default_value_t = 256)]
    pub n: usize,
    #[arg(long, default_value_t = 10_000)]
    pub m: usize,
    #[arg(long, default_value_t = 2.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Exit with code 4 unless every path passes every invariant.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(long)]
    pub n: usize,
    /// Total variance `s²`.
    #[arg(long)]
    pub s2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    /// `‖V²−1‖_p^p`.
    #[arg(long, default_value_t = 0.0)]
    pub v2_moment: f64,
    /// `Σ_i ‖X_i‖_{2p}^{2p}`; the Hall functional is skipped without it.
    #[arg(long)]
    pub moment_sum: Option<f64>,
    /// `‖V²−1‖₁`; defaults to `--v2-moment` when `p = 1`.
    #[arg(long)]
    pub v2_l1: Option<f64>,
    /// `‖V²−1‖∞`; the corollary functional is skipped without it.
    #[arg(long)]
    pub v2_sup: Option<f64>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        _ if e.is_budget() => EXIT_BUDGET,
        Error::AtGridPoint { source, .. } => exit_code(source),
        Error::Config { .. }
        | Error::InvalidKernel(_)
        | Error::InvalidArgument { .. }
        | Error::Precondition(_)
        | Error::Json(_) => EXIT_CONFIG,
        _ => EXIT_FAILURE,
    }
}

/// Parses `args` (program name first) and runs the command, writing
/// results to the filesystem and status lines to `stdout`.
pub fn run<I, T, W>(args: I, stdout: &mut W) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
    W: Write,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_CHECK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Returns `Ok(false)` when a `--check` threshold failed.
fn dispatch<W: Write>(command: Command, stdout: &mut W) -> Result<bool> {
    match command {
        Command::Simulate(a) => simulate(a, stdout),
        Command::Oracle(a) => oracle(a, stdout),
        Command::Rates(a) => rates(a, stdout),
        Command::AugmentCheck(a) => augment_check(a, stdout),
        Command::Bounds(a) => bounds(a, stdout),
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::Config {
                    field: "threads".into(),
                    reason: e.to_string(),
                })?;
            Ok(pool.install(f))
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn load_config(a: &SimulateArgs) -> Result<ExperimentConfig> {
    let mut config = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Config {
                field: "<file>".into(),
                reason: format!("{}: {e}", path.display()),
            })?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if let Some(out) = &a.out {
        config.output.path = out.clone();
    }
    if let Some(format) = a.format {
        config.output.format = format;
    }
    if a.threads.is_some() {
        config.threads = a.threads;
    }
    config.validate()?;
    Ok(config)
}

fn print_checks<W: Write>(outcomes: &[CheckOutcome], stdout: &mut W) -> Result<bool> {
    for o in outcomes {
        let tag = if o.passed { "PASS" } else { "FAIL" };
        writeln!(stdout, "{tag} {}: {}", o.name, o.detail)?;
    }
    Ok(outcomes.iter().all(|o| o.passed))
}

fn simulate<W: Write>(a: SimulateArgs, stdout: &mut W) -> Result<bool> {
    let config = load_config(&a)?;
    let report = with_threads(config.threads, || run_experiment(&config))??;
    let dir = &config.output.path;
    fs::create_dir_all(dir)?;
    let table = match config.output.format {
        OutputFormat::Csv => {
            let path = dir.join("rates.csv");
            write_table_csv(&report, create(&path)?)?;
            path
        }
        OutputFormat::Json => {
            let path = dir.join("rates.json");
            let mut w = create(&path)?;
            write_table_json(&report, &mut w)?;
            w.flush()?;
            path
        }
    };
    let summary = dir.join("summary.json");
    let mut w = create(&summary)?;
    write_summary_json(&report, &mut w)?;
    w.flush()?;
    writeln!(stdout, "wrote {} and {}", table.display(), summary.display())?;

    if let Some(path) = &a.dump_paths {
        let n = config.n_grid[0];
        let batch = with_threads(config.threads, || {
            sample_paths(&config.kernel, n, config.m, main_pass_policy(config.seed, n))
        })??;
        let mut w = create(path)?;
        batch.write_dump(&mut w)?;
        w.flush()?;
        writeln!(stdout, "wrote {} ({} paths of length {n})", path.display(), config.m)?;
    }

    if a.check {
        print_checks(&check_report(&report), stdout)
    } else {
        Ok(true)
    }
}

fn oracle<W: Write>(a: OracleArgs, stdout: &mut W) -> Result<bool> {
    let spec = a.kernel.spec()?;
    if let Some(&p) = a.p_values.iter().find(|&&p| !(p >= 1.0)) {
        return Err(Error::Config {
            field: "p".into(),
            reason: format!("{p} is below 1"),
        });
    }
    let chain = enumerate_chain_with_budget(&spec, a.n, a.budget)?;
    let stats = ExactStatistics::from_chain(&chain, &a.p_values)?;
    fs::create_dir_all(&a.out)?;
    let csv_path = a.out.join(format!("oracle_n{}.csv", a.n));
    write_distribution_csv(&chain, create(&csv_path)?)?;
    let json_path = a.out.join(format!("oracle_n{}.json", a.n));
    let mut w = create(&json_path)?;
    serde_json::to_writer_pretty(&mut w, &stats)?;
    w.flush()?;
    writeln!(stdout, "wrote {} and {}", csv_path.display(), json_path.display())?;
    Ok(true)
}

fn rates<W: Write>(a: RatesArgs, stdout: &mut W) -> Result<bool> {
    let table = read_table_csv(BufReader::new(File::open(&a.input)?))?;
    let fits = fit_table(&table, a.weighted);
    match &a.out {
        Some(path) => {
            let mut w = create(path)?;
            serde_json::to_writer_pretty(&mut w, &fits)?;
            w.flush()?;
            writeln!(stdout, "wrote {}", path.display())?;
        }
        None => {
            serde_json::to_writer_pretty(&mut *stdout, &fits)?;
            writeln!(stdout)?;
        }
    }
    Ok(true)
}

/// Total variance used to augment a batch: exact when known in closed form
/// or by enumeration, otherwise estimated from an independent batch.
fn augment_s2(spec: &KernelSpec, n: usize, m: usize, policy: RngPolicy) -> Result<f64> {
    match spec {
        KernelSpec::Rademacher => Ok(n as f64),
        _ if n <= 16 => Ok(crate::oracle::enumerate_chain(spec, n)?.s2()),
        _ => Ok(estimate_s2(&sample_summaries(spec, n, m.max(10_000), policy.derive(0x5332))?)?.value),
    }
}

#[derive(Serialize)]
struct AugmentReport {
    kernel: String,
    n: usize,
    gamma: f64,
    s2: f64,
    #[serde(flatten)]
    counts: AugmentCheck,
}

fn augment_check<W: Write>(a: AugmentArgs, stdout: &mut W) -> Result<bool> {
    let spec = a.kernel.spec()?;
    let max = spec.max_increment();
    if !(a.gamma >= max) {
        return Err(Error::Precondition(format!(
            "gamma = {} is below the largest increment {max} of {}",
            a.gamma,
            spec.label()
        )));
    }
    let policy = RngPolicy::new(a.seed);
    let s2 = augment_s2(&spec, a.n, a.m, policy)?;
    let batch = sample_paths(&spec, a.n, a.m, policy)?;
    let counts = check_batch(&batch, s2, a.gamma, policy)?;
    let report = AugmentReport {
        kernel: spec.label(),
        n: a.n,
        gamma: a.gamma,
        s2,
        counts,
    };
    serde_json::to_writer_pretty(&mut *stdout, &report)?;
    writeln!(stdout)?;
    Ok(!a.check || counts.all_pass())
}

#[derive(Serialize)]
struct BoundValues {
    hall: Option<f64>,
    bolthausen: f64,
    corollary: Option<f64>,
    theorem3: f64,
    note: &'static str,
}

fn bounds<W: Write>(a: BoundsArgs, stdout: &mut W) -> Result<bool> {
    if !(a.s2 > 0.0) {
        return Err(Error::Config {
            field: "s2".into(),
            reason: "must be positive".into(),
        });
    }
    let s = a.s2.sqrt();
    let v2_l1 = a.v2_l1.or((a.p == 1.0).then_some(a.v2_moment));
    let values = BoundValues {
        hall: a
            .moment_sum
            .map(|sum| hall_bound(a.p, a.v2_moment, a.s2, sum))
            .transpose()?,
        bolthausen: bolthausen_bound(a.n, s)?,
        corollary: match (v2_l1, a.v2_sup) {
            (Some(l1), Some(sup)) => Some(corollary_bound(l1, sup, a.n, s)?),
            _ => None,
        },
        theorem3: theorem3_bound(a.p, a.v2_moment, a.n, s)?,
        note: crate::report::CONSTANT_NOTE,
    };
    serde_json::to_writer_pretty(&mut *stdout, &values)?;
    writeln!(stdout)?;
    Ok(true)
}

/// Entry point for the binary.
pub fn main() -> ExitCode {
    run(std::env::args_os(), &mut io::stdout().lock())
}
