//! Simulation designs and the Monte Carlo harness.
//!
//! Three designs share `X ~ N(0, I_3)`, `e ~ N(0, 1)`, `gamma = (0.4, 0, 0.917)`
//! and `beta = (0.8, 0, -0.6)`:
//!
//! | design | `P(D = 1 | X)`                         | `Y - alpha D - e`               |
//! |--------|----------------------------------------|---------------------------------|
//! | I      | `expit(X' beta)`                       | `X' gamma`                      |
//! | II     | `expit((X' beta)^3 - 2 X' beta)`       | `exp(X' gamma)`                 |
//! | III    | `expit(X' beta + X_1^2)`               | `(X' gamma)^2 + X_2 X_3`        |
//!
//! Replicate `r` of a run seeded with `s` draws from ChaCha8 seeded with `s`
//! on stream `r`, so any replicate can be regenerated on its own and
//! replicates may run on any number of threads.

use std::collections::BTreeSet;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ate::{self, AteEstimate, Method};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::expit;
use crate::sieve::FitOptions;

pub const GAMMA: [f64; 3] = [0.4, 0.0, 0.917];
pub const BETA: [f64; 3] = [0.8, 0.0, -0.6];

/// Failure share above which a summary is flagged.
pub const FAILURE_WARNING_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    I,
    II,
    III,
}

impl Scenario {
    pub fn propensity(&self, x: &[f64; 3]) -> f64 {
        let u = dot(x, &BETA);
        expit(match self {
            Scenario::I => u,
            Scenario::II => u * u * u - 2.0 * u,
            Scenario::III => u + x[0] * x[0],
        })
    }

    /// `E[Y | D = 0, X]`.
    pub fn baseline(&self, x: &[f64; 3]) -> f64 {
        let v = dot(x, &GAMMA);
        match self {
            Scenario::I => v,
            Scenario::II => v.exp(),
            Scenario::III => v * v + x[1] * x[2],
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::I => "I",
            Scenario::II => "II",
            Scenario::III => "III",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Scenario::I),
            "II" | "2" => Ok(Scenario::II),
            "III" | "3" => Ok(Scenario::III),
            other => Err(Error::Precondition(format!("unknown scenario `{other}` (expected I, II or III)"))),
        }
    }
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n: usize,
    pub alpha_true: f64,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, n: usize, alpha_true: f64) -> Self {
        Self { scenario, n, alpha_true }
    }
}

/// One dataset from `spec`, identical to replicate 0 of a run seeded with `seed`.
pub fn generate(spec: &ScenarioSpec, seed: u64) -> Result<Dataset> {
    generate_replicate(spec, seed, 0)
}

/// Dataset for replicate `replicate` of a run seeded with `seed`.
pub fn generate_replicate(spec: &ScenarioSpec, seed: u64, replicate: u64) -> Result<Dataset> {
    if spec.n == 0 {
        return Err(Error::Precondition("sample size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    let n = spec.n;
    let mut x = DMatrix::zeros(n, 3);
    let mut d = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let xi: [f64; 3] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let p = spec.scenario.propensity(&xi);
        let di = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
        let eps: f64 = rng.sample(StandardNormal);
        for j in 0..3 {
            x[(i, j)] = xi[j];
        }
        d.push(di);
        y.push(spec.alpha_true * di + spec.scenario.baseline(&xi) + eps);
    }
    Dataset::new(y, d, x, vec!["x1".into(), "x2".into(), "x3".into()])
}

/// Per-(replicate, method) result, kept for export.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRecord {
    pub scenario: Scenario,
    pub n: usize,
    pub alpha_true: f64,
    pub method: Method,
    pub replicate: u64,
    pub alpha: Option<f64>,
    pub std_error: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub covered: Option<bool>,
    pub k_outcome: Option<usize>,
    pub k_treatment: Option<usize>,
    pub outcome_converged: Option<bool>,
    pub treatment_converged: Option<bool>,
    pub error: Option<String>,
}

impl ReplicateRecord {
    fn new(spec: &ScenarioSpec, method: Method, replicate: u64, result: Result<AteEstimate>) -> Self {
        let base = Self {
            scenario: spec.scenario,
            n: spec.n,
            alpha_true: spec.alpha_true,
            method,
            replicate,
            alpha: None,
            std_error: None,
            ci_low: None,
            ci_high: None,
            covered: None,
            k_outcome: None,
            k_treatment: None,
            outcome_converged: None,
            treatment_converged: None,
            error: None,
        };
        match result {
            Ok(est) => Self {
                alpha: Some(est.alpha),
                std_error: Some(est.std_error),
                ci_low: Some(est.ci_low),
                ci_high: Some(est.ci_high),
                covered: Some(est.covers(spec.alpha_true)),
                k_outcome: est.diagnostics.k_outcome,
                k_treatment: est.diagnostics.k_treatment,
                outcome_converged: est.diagnostics.outcome_converged,
                treatment_converged: est.diagnostics.treatment_converged,
                ..base
            },
            Err(e) => Self {
                error: Some(e.to_string()),
                ..base
            },
        }
    }
}

/// Monte Carlo summary for one `(scenario, n, alpha, method)` cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub scenario: Scenario,
    pub n: usize,
    pub alpha_true: f64,
    pub method: Method,
    pub mean: f64,
    /// Sample standard deviation of the estimates.
    pub sd: f64,
    /// Average reported standard error.
    pub mean_se: f64,
    pub ci_coverage: f64,
    /// Successful replicates.
    pub replicates: usize,
    pub failures: usize,
}

impl SimulationSummary {
    pub fn failure_rate(&self) -> f64 {
        self.failures as f64 / (self.replicates + self.failures) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloRun {
    pub summaries: Vec<SimulationSummary>,
    /// Sorted by replicate index, then by method in request order.
    pub records: Vec<ReplicateRecord>,
    pub warnings: Vec<String>,
}

/// Runs `replicates` replications of every requested estimator.
///
/// Replicates are numbered `1..=replicates`. Failed estimator runs are kept
/// in `records` and excluded from the summaries.
pub fn run_monte_carlo(
    spec: &ScenarioSpec,
    replicates: usize,
    seed: u64,
    methods: &[Method],
    options: &FitOptions,
) -> Result<MonteCarloRun> {
    if replicates < 2 {
        return Err(Error::Precondition(format!("need at least 2 replicates, got {replicates}")));
    }
    let mut seen = BTreeSet::new();
    let methods: Vec<Method> = methods.iter().copied().filter(|m| seen.insert(*m)).collect();
    if methods.is_empty() {
        return Ok(MonteCarloRun {
            summaries: Vec::new(),
            records: Vec::new(),
            warnings: Vec::new(),
        });
    }

    let per_replicate: Vec<Vec<ReplicateRecord>> = (1..=replicates as u64)
        .into_par_iter()
        .map(|r| match generate_replicate(spec, seed, r) {
            Ok(data) => methods
                .iter()
                .map(|&m| ReplicateRecord::new(spec, m, r, ate::estimate(m, &data, options)))
                .collect(),
            Err(e) => methods
                .iter()
                .map(|&m| ReplicateRecord::new(spec, m, r, Err(e.clone())))
                .collect(),
        })
        .collect();
    let records: Vec<ReplicateRecord> = per_replicate.into_iter().flatten().collect();

    let mut summaries = Vec::new();
    let mut warnings = Vec::new();
    for &method in &methods {
        let mine: Vec<&ReplicateRecord> = records.iter().filter(|r| r.method == method).collect();
        let ok: Vec<&ReplicateRecord> = mine.iter().copied().filter(|r| r.alpha.is_some()).collect();
        let failures = mine.len() - ok.len();
        if ok.is_empty() {
            warnings.push(format!(
                "WARNING: {method} failed on all {} replicates of scenario {} (n = {}, alpha = {})",
                mine.len(),
                spec.scenario,
                spec.n,
                spec.alpha_true
            ));
            continue;
        }
        let alphas: Vec<f64> = ok.iter().map(|r| r.alpha.unwrap_or(f64::NAN)).collect();
        let m = ok.len() as f64;
        let mean = alphas.iter().sum::<f64>() / m;
        let sd = if ok.len() > 1 {
            (alphas.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
        } else {
            0.0
        };
        let mean_se = ok.iter().map(|r| r.std_error.unwrap_or(f64::NAN)).sum::<f64>() / m;
        let covered = ok.iter().filter(|r| r.covered == Some(true)).count();
        let summary = SimulationSummary {
            scenario: spec.scenario,
            n: spec.n,
            alpha_true: spec.alpha_true,
            method,
            mean,
            sd,
            mean_se,
            ci_coverage: covered as f64 / m,
            replicates: ok.len(),
            failures,
        };
        if summary.failure_rate() > FAILURE_WARNING_RATE {
            warnings.push(format!(
                "WARNING: {method} failed on {failures} of {} replicates ({:.1}%) in scenario {} (n = {}, alpha = {})",
                mine.len(),
                100.0 * summary.failure_rate(),
                spec.scenario,
                spec.n,
                spec.alpha_true
            ));
        }
        summaries.push(summary);
    }
    Ok(MonteCarloRun {
        summaries,
        records,
        warnings,
    })
}

/// Formats `x` with at least `digits` significant digits in fixed notation.
pub fn format_sig(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return format!("{:.*}", digits.saturating_sub(1), 0.0);
    }
    let magnitude = x.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Rendered summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    /// Plain text grouped by scenario, n and method, with one
    /// `Mean SD SE CI` block per true effect.
    pub text: String,
    /// One comma-separated line per summary, full precision.
    pub csv: String,
}

pub fn summarize_table(rows: &[SimulationSummary]) -> Result<SummaryTable> {
    if rows.is_empty() {
        return Err(Error::Precondition("no summaries to tabulate".into()));
    }
    let mut alphas: Vec<f64> = Vec::new();
    for r in rows {
        if !alphas.iter().any(|a| a.to_bits() == r.alpha_true.to_bits()) {
            alphas.push(r.alpha_true);
        }
    }
    alphas.sort_by(f64::total_cmp);

    let mut groups: Vec<(Scenario, usize, Method)> = Vec::new();
    for r in rows {
        let key = (r.scenario, r.n, r.method);
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    groups.sort();

    const CELL: usize = 10;
    let block_width = 4 * (CELL + 1);
    let mut text = String::new();
    let _ = write!(text, "{:<8} {:>6} {:<14}", "Scenario", "n", "Method");
    for a in &alphas {
        let _ = write!(text, " | {:^block_width$}", format!("alpha = {a}"));
    }
    text.push('\n');
    let _ = write!(text, "{:<8} {:>6} {:<14}", "", "", "");
    for _ in &alphas {
        let _ = write!(text, " | ");
        for h in ["Mean", "SD", "SE", "CI"] {
            let _ = write!(text, "{h:>CELL$} ");
        }
    }
    text.push('\n');

    let mut last: Option<(Scenario, usize)> = None;
    for &(scenario, n, method) in &groups {
        let (s_label, n_label) = if last == Some((scenario, n)) {
            (String::new(), String::new())
        } else {
            (scenario.to_string(), n.to_string())
        };
        last = Some((scenario, n));
        let _ = write!(text, "{s_label:<8} {n_label:>6} {:<14}", method.as_str());
        for a in &alphas {
            let _ = write!(text, " | ");
            let cell = rows.iter().find(|r| {
                r.scenario == scenario && r.n == n && r.method == method && r.alpha_true.to_bits() == a.to_bits()
            });
            match cell {
                Some(r) => {
                    for v in [r.mean, r.sd, r.mean_se, r.ci_coverage] {
                        let _ = write!(text, "{:>CELL$} ", format_sig(v, 6));
                    }
                }
                None => {
                    for _ in 0..4 {
                        let _ = write!(text, "{:>CELL$} ", "-");
                    }
                }
            }
        }
        text.push('\n');
    }

    let failed: Vec<&SimulationSummary> = rows.iter().filter(|r| r.failures > 0).collect();
    if !failed.is_empty() {
        text.push('\n');
        for r in failed {
            let _ = writeln!(
                text,
                "Note: {} (scenario {}, n = {}, alpha = {}) failed on {} of {} replicates; failures are excluded{}",
                r.method,
                r.scenario,
                r.n,
                r.alpha_true,
                r.failures,
                r.failures + r.replicates,
                if r.failure_rate() > FAILURE_WARNING_RATE { " (WARNING: above 5%)" } else { "" }
            );
        }
    }

    let mut csv = String::from("scenario,n,alpha_true,method,mean,sd,mean_se,ci_coverage,replicates,failures\n");
    for r in rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{}",
            r.scenario, r.n, r.alpha_true, r.method, r.mean, r.sd, r.mean_se, r.ci_coverage, r.replicates, r.failures
        );
    }
    Ok(SummaryTable { text, csv })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn propensity_examples() {
        assert_abs_diff_eq!(Scenario::I.propensity(&[0.0, 0.0, 0.0]), 0.5, epsilon = 1e-15);
        // X' beta = sqrt(2) along beta.
        let s = std::f64::consts::SQRT_2;
        let x = [0.8 * s, 0.0, -0.6 * s];
        assert_abs_diff_eq!(Scenario::II.propensity(&x), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(Scenario::III.propensity(&[1.0, 0.0, 0.0]), expit(1.8), epsilon = 1e-15);
    }

    #[test]
    fn scenario_parsing() {
        assert_eq!("ii".parse::<Scenario>().unwrap(), Scenario::II);
        assert_eq!("3".parse::<Scenario>().unwrap(), Scenario::III);
        assert!("IV".parse::<Scenario>().is_err());
    }

    #[test]
    fn replicate_streams_are_independent_of_order() {
        let spec = ScenarioSpec::new(Scenario::III, 50, 0.5);
        let a = generate_replicate(&spec, 9, 3).unwrap();
        let _ = generate_replicate(&spec, 9, 2).unwrap();
        let b = generate_replicate(&spec, 9, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_replicate(&spec, 9, 4).unwrap());
        assert_ne!(a, generate_replicate(&spec, 10, 3).unwrap());
    }

    #[test]
    fn empty_method_set_gives_empty_run() {
        let spec = ScenarioSpec::new(Scenario::I, 50, 0.0);
        let run = run_monte_carlo(&spec, 3, 1, &[], &FitOptions::default()).unwrap();
        assert!(run.summaries.is_empty() && run.records.is_empty());
        assert!(run_monte_carlo(&spec, 1, 1, &[Method::Proposed], &FitOptions::default()).is_err());
    }

    fn row(scenario: Scenario, n: usize, alpha: f64, method: Method, failures: usize) -> SimulationSummary {
        SimulationSummary {
            scenario,
            n,
            alpha_true: alpha,
            method,
            mean: alpha,
            sd: 0.013,
            mean_se: 0.0125,
            ci_coverage: 0.954,
            replicates: 100,
            failures,
        }
    }

    #[test]
    fn table_layouts() {
        assert!(summarize_table(&[]).is_err());

        let one = summarize_table(&[row(Scenario::I, 300, 0.5, Method::Proposed, 0)]).unwrap();
        assert_eq!(one.text.lines().count(), 3);
        assert!(one.text.contains("0.0130000"));
        assert_eq!(one.csv.lines().count(), 2);

        let mut grid = Vec::new();
        for n in [300, 600] {
            for a in [0.0, 0.5] {
                for m in Method::ALL {
                    grid.push(row(Scenario::I, n, a, m, 0));
                }
            }
        }
        let t = summarize_table(&grid).unwrap();
        let body: Vec<&str> = t.text.lines().skip(2).collect();
        assert_eq!(body.len(), 6);
        assert!(t.text.lines().next().unwrap().contains("alpha = 0.5"));
        for line in body {
            assert_eq!(line.matches('|').count(), 2);
        }

        let f = summarize_table(&[row(Scenario::II, 600, 0.0, Method::PsResidual, 7)]).unwrap();
        assert!(f.text.contains("failed on 7 of 107"));
        assert!(f.text.contains("WARNING"));
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_sig(0.013, 6), "0.0130000");
        assert_eq!(format_sig(-289.99, 6), "-289.990");
        assert_eq!(format_sig(0.0, 6), "0.00000");
        assert_eq!(format_sig(123456789.0, 6), "123456789");
    }
}
