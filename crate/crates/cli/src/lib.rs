//! Command-line front end: `estimate` on a delimited file and `simulate` for
//! the built-in designs.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (including I/O),
//! 3 estimation error.

pub mod ingest;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sieve_ate::ate::{self, proposed_from_fits, AteEstimate, EstimateRecord};
use sieve_ate::sieve::fit_with_policy;
use sieve_ate::sim::{self, format_sig, run_monte_carlo, summarize_table, Scenario, ScenarioSpec};
use sieve_ate::{Family, FitOptions, KPolicy, Method};

pub use ingest::{ingest, write_dataset, ColumnMapping, Ingested};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Estimation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Estimation(_) => 3,
        }
    }

    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

#[derive(Debug, Parser)]
#[command(name = "sieve-ate", version, about = "Average treatment effects with sieve single-index nuisance models")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the treatment effect on a CSV file.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo study on a built-in design.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub outcome: String,
    /// 0/1 treatment column.
    #[arg(long)]
    pub treatment: String,
    /// Quantitative covariates.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    /// Qualitative covariates, expanded to indicators against the first sorted level.
    #[arg(long, value_delimiter = ',')]
    pub categorical: Vec<String>,
    /// `auto` (cross-validation over 2..=10), a fixed order, or a comma-separated grid.
    #[arg(long, default_value = "auto", value_parser = parse_k)]
    pub k: KPolicy,
    #[arg(long, value_delimiter = ',', default_value = "proposed,ps-regression,ps-residual", value_parser = parse_method)]
    pub methods: Vec<Method>,
    /// Export path; `.json` writes JSON, anything else CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Center and scale covariates before estimation.
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_parser = parse_scenario)]
    pub scenario: Scenario,
    #[arg(long)]
    pub n: usize,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 300)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "auto", value_parser = parse_k)]
    pub k: KPolicy,
    #[arg(long, value_delimiter = ',', default_value = "proposed,ps-regression,ps-residual", value_parser = parse_method)]
    pub methods: Vec<Method>,
    /// Output directory for summary.txt, summary.csv and replicates.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write every replicate dataset under `<out>/datasets/`.
    #[arg(long)]
    pub dump_datasets: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

fn parse_k(s: &str) -> Result<KPolicy, String> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("auto") {
        return Ok(KPolicy::default());
    }
    let ks = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| format!("invalid k `{t}`")))
        .collect::<Result<Vec<_>, _>>()?;
    if ks.contains(&0) {
        return Err("k must be at least 1".into());
    }
    Ok(match ks.as_slice() {
        [k] => KPolicy::Fixed(*k),
        _ => KPolicy::Grid(ks),
    })
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: sieve_ate::Error| e.to_string())
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse().map_err(|e: sieve_ate::Error| e.to_string())
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&config) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(config: &RunConfig) -> Result<(), CliError> {
    match &config.command {
        Command::Estimate(args) => estimate(args),
        Command::Simulate(args) => simulate(args),
    }
}

/// At least six significant digits, switching to exponent form for very
/// large or small magnitudes.
pub fn format_number(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e9).contains(&a) {
        format_sig(x, 6)
    } else {
        format!("{x:.5e}")
    }
}

fn proposed(data: &sieve_ate::Dataset, options: &FitOptions) -> Result<AteEstimate, String> {
    let treatment = fit_with_policy(data, Family::Logistic, options).map_err(|e| format!("treatment model: {e}"))?;
    let outcome = fit_with_policy(data, Family::Gaussian, options).map_err(|e| format!("outcome model: {e}"))?;
    proposed_from_fits(data, &treatment, &outcome).map_err(|e| format!("residual regression: {e}"))
}

fn estimate(args: &EstimateArgs) -> Result<(), CliError> {
    if args.covariates.is_empty() && args.categorical.is_empty() {
        return Err(CliError::Usage("estimate needs --covariates or --categorical".into()));
    }
    if args.methods.is_empty() {
        return Err(CliError::Usage("no methods requested".into()));
    }
    let mapping = ColumnMapping {
        outcome: args.outcome.clone(),
        treatment: args.treatment.clone(),
        covariates: args.covariates.clone(),
        categorical: args.categorical.clone(),
    };
    let ingested = ingest(&args.input, &mapping)?;
    for note in &ingested.notes {
        eprintln!("note: {note}");
    }
    let data = if args.standardize {
        ingested.dataset.standardized().map_err(|e| CliError::Data(e.to_string()))?
    } else {
        ingested.dataset
    };
    let options = FitOptions::default().with_k(args.k.clone());

    println!("n = {}, p = {}", data.n(), data.p());
    println!(
        "{:<14} {:>14} {:>14} {:>14} {:>14} {:>14} {:>9} {:>11}",
        "method", "alpha", "std_error", "ci_low", "ci_high", "p_value", "k_outcome", "k_treatment"
    );
    let mut records: Vec<EstimateRecord> = Vec::new();
    let mut failures = Vec::new();
    for &method in &args.methods {
        let result = match method {
            Method::Proposed => proposed(&data, &options),
            other => ate::estimate(other, &data, &options).map_err(|e| e.to_string()),
        };
        match result {
            Ok(est) => {
                let opt = |k: Option<usize>| k.map_or("-".to_string(), |k| k.to_string());
                println!(
                    "{:<14} {:>14} {:>14} {:>14} {:>14} {:>14} {:>9} {:>11}",
                    method.as_str(),
                    format_number(est.alpha),
                    format_number(est.std_error),
                    format_number(est.ci_low),
                    format_number(est.ci_high),
                    format_number(est.p_value),
                    opt(est.diagnostics.k_outcome),
                    opt(est.diagnostics.k_treatment),
                );
                for w in &est.diagnostics.warnings {
                    println!("  warning ({method}): {w}");
                }
                records.push(est.record());
            }
            Err(msg) => {
                println!("{:<14} failed: {msg}", method.as_str());
                failures.push(format!("{method}: {msg}"));
            }
        }
    }
    if let Some(path) = &args.out {
        export(path, &records)?;
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Estimation(format!("estimation failed ({})", failures.join("; "))))
    }
}

fn export<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CliError> {
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        let text = serde_json::to_string_pretty(records).map_err(|e| CliError::io(path, e))?;
        fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    } else {
        write_csv(path, records)
    }
}

fn write_csv<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    for r in records {
        w.serialize(r).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    if args.dump_datasets && args.out.is_none() {
        return Err(CliError::Usage("--dump-datasets needs --out".into()));
    }
    if args.n == 0 {
        return Err(CliError::Usage("--n must be positive".into()));
    }
    let spec = ScenarioSpec::new(args.scenario, args.n, args.alpha);
    let options = FitOptions::default().with_k(args.k.clone());
    let work = || run_monte_carlo(&spec, args.reps, args.seed, &args.methods, &options);
    let result = match args.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {t} worker threads: {e}")))?
            .install(work),
        None => work(),
    };
    let run = result.map_err(|e| match e {
        sieve_ate::Error::Precondition(m) => CliError::Usage(m),
        other => CliError::Estimation(other.to_string()),
    })?;
    let table = summarize_table(&run.summaries).map_err(|e| CliError::Estimation(e.to_string()))?;
    print!("{}", table.text);
    for w in &run.warnings {
        eprintln!("{w}");
    }

    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let txt = dir.join("summary.txt");
        fs::write(&txt, &table.text).map_err(|e| CliError::io(&txt, e))?;
        let csv_path = dir.join("summary.csv");
        fs::write(&csv_path, &table.csv).map_err(|e| CliError::io(&csv_path, e))?;
        write_csv(&dir.join("replicates.csv"), &run.records)?;
        if args.dump_datasets {
            let ddir = dir.join("datasets");
            fs::create_dir_all(&ddir).map_err(|e| CliError::io(&ddir, e))?;
            for r in 1..=args.reps as u64 {
                let data = sim::generate_replicate(&spec, args.seed, r).map_err(|e| CliError::Estimation(e.to_string()))?;
                write_dataset(&ddir.join(format!("replicate_{r:04}.csv")), &data, "y", "d")?;
            }
        }
    }
    Ok(())
}
