//! Command-line front end for `padic-expsum`.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input, 3 budget exceeded,
//! 4 precondition violated, 5 nonzero Fourier residual.

pub mod args;

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use num_rational::BigRational;
use padic_expsum::decay::{degree_bound_report, sweep, DegreeBoundReport, Verdict};
use padic_expsum::padic::{format_rational, parse_rational};
use padic_expsum::polymap::parse_polymap_infer;
use padic_expsum::{
    count_fibers_with, eval_naive, eval_recursive, fourier_check, parse_polymap, CountMethod, DecayRecord, DensityTable,
    Error, EvalRequest, Magnitude, PhaseHistogram, PolyMap, PrimeContext, PruningStats, SchwartzBruhat, Strategy,
    Valuation,
};
use serde::{Deserialize, Serialize};

use crate::args::{Cli, Command, Common, DecayArgs, DensityArgs, EvalArgs, EvalMethod, FourierArgs, Format};

pub const EXIT_IO: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_PRECONDITION: i32 = 4;
pub const EXIT_RESIDUAL: i32 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse(_)
            | Error::InvalidBall(_)
            | Error::NotPrime(_)
            | Error::ZeroBudget
            | Error::DimensionMismatch { .. }
            | Error::InvalidRange(_) => EXIT_INPUT,
            Error::BudgetExceeded { .. } | Error::SearchBudgetExceeded { .. } | Error::PrecisionOverflow { .. } => {
                EXIT_BUDGET
            }
            _ => EXIT_PRECONDITION,
        };
        let mut message = e.to_string();
        if code == EXIT_BUDGET {
            message.push_str(" (raise --budget, lower the level, or use --strategy sample:N)");
        }
        Self { code, message }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        Self {
            code: EXIT_IO,
            message: e.to_string(),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self {
            code: EXIT_IO,
            message: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self {
            code: EXIT_IO,
            message: e.to_string(),
        }
    }
}

/// Everything needed to reproduce a run; echoed in every JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub prime: u64,
    pub map: String,
    pub n: usize,
    pub r: usize,
    pub phi: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<(u32, u32)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub seed: u64,
    pub budget: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub config: RunConfig,
    pub histogram: PhaseHistogram,
    pub re: f64,
    pub im: f64,
    pub magnitude: Magnitude,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<PruningStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityOutput {
    pub config: RunConfig,
    pub table: DensityTable,
}

/// The compact fit record written by `decay`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub alpha_hat: Option<f64>,
    pub intercept: Option<f64>,
    pub residual: Option<f64>,
    pub d_f: u32,
    pub bound_exponent: Option<f64>,
    pub c_hat: Option<f64>,
    pub verdict: Verdict,
}

impl FitSummary {
    fn from_report(r: &DegreeBoundReport) -> Self {
        Self {
            alpha_hat: r.alpha_hat,
            intercept: r.fit.as_ref().map(|f| f.intercept),
            residual: r.fit.as_ref().map(|f| f.residual),
            d_f: r.d_f,
            bound_exponent: r.bound_exponent,
            c_hat: r.c_hat,
            verdict: r.verdict,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayOutput {
    pub config: RunConfig,
    pub records: Vec<DecayRecord>,
    pub fit: FitSummary,
    pub report: DegreeBoundReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierOutput {
    pub config: RunConfig,
    pub residual: PhaseHistogram,
    pub exact_zero: bool,
}

/// Runs a parsed command line and returns the exit code.
pub fn run(cli: Cli) -> Result<i32, CliError> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::input(e.to_string()))?;
    }
    match cli.command {
        Command::Eval(a) => cmd_eval(&a),
        Command::Density(a) => cmd_density(&a),
        Command::Decay(a) => cmd_decay(&a),
        Command::FourierCheck(a) => cmd_fourier_check(&a),
    }
}

fn context(c: &Common) -> Result<PrimeContext, CliError> {
    Ok(PrimeContext::new(c.prime, c.budget)?)
}

fn load_map(c: &Common) -> Result<PolyMap, CliError> {
    let parse_text = |text: &str| -> Result<PolyMap, CliError> {
        let f = match c.vars {
            Some(n) => parse_polymap(text, n),
            None => parse_polymap_infer(text),
        };
        f.map_err(|e| CliError::input(format!("map: {e}")))
    };
    match (&c.map, &c.map_file) {
        (Some(text), _) => parse_text(text),
        (None, Some(path)) => {
            let text = fs::read_to_string(path)?;
            if path.extension().is_some_and(|e| e == "json") {
                serde_json::from_str(&text).map_err(|e| CliError::input(format!("map file: {e}")))
            } else {
                parse_text(&text)
            }
        }
        (None, None) => Err(CliError::input("one of --map or --map-file is required")),
    }
}

fn load_phi(text: Option<&str>, n: usize) -> Result<SchwartzBruhat, CliError> {
    match text {
        None => Ok(SchwartzBruhat::trivial(n)),
        Some(t) => Ok(SchwartzBruhat::parse(t, n)?),
    }
}

fn parse_y(text: &str) -> Result<Vec<BigRational>, CliError> {
    text.split(',')
        .map(|s| parse_rational(s).map_err(|e| CliError::input(format!("--y: {e}"))))
        .collect()
}

fn base_config(command: &str, c: &Common, f: &PolyMap, phi: &SchwartzBruhat) -> RunConfig {
    RunConfig {
        command: command.into(),
        prime: c.prime,
        map: f.to_string(),
        n: f.n(),
        r: f.r(),
        phi: phi.to_string(),
        y: None,
        level: None,
        levels: None,
        strategy: None,
        method: None,
        epsilon: None,
        seed: 0,
        budget: c.budget,
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, bytes)?,
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.into_inner().map_err(|e| CliError {
        code: EXIT_IO,
        message: e.to_string(),
    })
}

pub fn cmd_eval(a: &EvalArgs) -> Result<i32, CliError> {
    let ctx = context(&a.common)?;
    let f = load_map(&a.common)?;
    let phi = load_phi(a.phi.as_deref(), f.n())?;
    let y = parse_y(&a.y)?;
    let req = EvalRequest::new(f.clone(), phi.clone(), y.clone(), ctx)?;
    let (histogram, stats) = match a.method {
        EvalMethod::Naive => (eval_naive(&req)?.reduce(), None),
        EvalMethod::Recursive => {
            let e = eval_recursive(&req)?;
            (e.histogram, Some(e.stats))
        }
    };
    let (re, im) = histogram.to_complex();
    let magnitude = histogram.magnitude();
    let mut config = base_config("eval", &a.common, &f, &phi);
    config.y = Some(y.iter().map(format_rational).collect());
    config.method = Some(format!("{:?}", a.method).to_lowercase());
    let out = EvalOutput {
        config,
        histogram,
        re,
        im,
        magnitude,
        stats,
    };
    let bytes = match a.common.format {
        Format::Json => json_bytes(&out)?,
        Format::Csv => csv_bytes(
            &["re", "im", "magnitude", "error", "exact_zero"].map(String::from),
            &[vec![
                re.to_string(),
                im.to_string(),
                magnitude.value.to_string(),
                magnitude.error.to_string(),
                magnitude.exact_zero.to_string(),
            ]],
        )?,
    };
    emit(a.common.out.as_deref(), &bytes)?;
    Ok(0)
}

pub fn density_csv(table: &DensityTable) -> Result<Vec<u8>, CliError> {
    let mut header: Vec<String> = (1..=table.r()).map(|i| format!("z_{i}")).collect();
    header.push("N".into());
    header.push("F".into());
    let rows: Vec<Vec<String>> = table
        .rows(true)
        .into_iter()
        .map(|row| {
            let mut cells: Vec<String> = row.z.iter().map(format_rational).collect();
            cells.push(row.count.to_string());
            cells.push(format!("{}/{}", row.density.numer(), row.density.denom()));
            cells
        })
        .collect();
    csv_bytes(&header, &rows)
}

pub fn cmd_density(a: &DensityArgs) -> Result<i32, CliError> {
    let ctx = context(&a.common)?;
    let f = load_map(&a.common)?;
    let method: CountMethod = a.method.into();
    let table = count_fibers_with(&f, a.level, method, &ctx)?;
    let bytes = match a.common.format {
        Format::Json => {
            let mut config = base_config("density", &a.common, &f, &SchwartzBruhat::trivial(f.n()));
            config.level = Some(a.level);
            config.method = Some(format!("{:?}", a.method).to_lowercase());
            json_bytes(&DensityOutput { config, table })?
        }
        Format::Csv => density_csv(&table)?,
    };
    emit(a.common.out.as_deref(), &bytes)?;
    Ok(0)
}

pub fn decay_csv(records: &[DecayRecord]) -> Result<Vec<u8>, CliError> {
    let header = ["m", "sup", "sup_error", "argmax_u", "exhaustive"].map(String::from);
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.level.to_string(),
                r.sup_magnitude.to_string(),
                r.sup_error.to_string(),
                r.argmax.iter().map(u64::to_string).collect::<Vec<_>>().join(";"),
                r.exhaustive.to_string(),
            ]
        })
        .collect();
    csv_bytes(&header, &rows)
}

pub fn cmd_decay(a: &DecayArgs) -> Result<i32, CliError> {
    let ctx = context(&a.common)?;
    let f = load_map(&a.common)?;
    let phi = load_phi(a.phi.as_deref(), f.n())?;
    let strategy = Strategy::parse(&a.strategy, a.seed).map_err(CliError::input)?;
    let (m0, m1) = a.levels;
    let records = sweep(&f, &phi, m0, m1, strategy, &ctx)?;
    let report = degree_bound_report(&f, &phi, &records, a.epsilon, &ctx);
    if let Some(banner) = &report.banner {
        eprintln!("{banner}");
    }
    let fit = FitSummary::from_report(&report);
    if let Some(path) = &a.fit_out {
        fs::write(path, json_bytes(&fit)?)?;
    }
    let bytes = match a.common.format {
        Format::Json => {
            let mut config = base_config("decay", &a.common, &f, &phi);
            config.levels = Some(a.levels);
            config.strategy = Some(strategy);
            config.epsilon = Some(a.epsilon);
            config.seed = a.seed;
            json_bytes(&DecayOutput {
                config,
                records,
                fit,
                report,
            })?
        }
        Format::Csv => decay_csv(&records)?,
    };
    emit(a.common.out.as_deref(), &bytes)?;
    Ok(0)
}

pub fn cmd_fourier_check(a: &FourierArgs) -> Result<i32, CliError> {
    let ctx = context(&a.common)?;
    let y = parse_y(&a.y)?;
    // The level condition does not depend on the map, so it is checked first.
    let required = y
        .iter()
        .filter_map(|v| match ctx.valuation(v) {
            Valuation::Finite(v) if v < 0 => Some((-v) as u32),
            _ => None,
        })
        .max()
        .unwrap_or(0);
    if required > a.level {
        return Err(Error::LevelTooLow {
            required,
            level: a.level,
        }
        .into());
    }
    let f = load_map(&a.common)?;
    let residual = fourier_check(&f, &y, a.level, &ctx)?;
    let exact_zero = residual.is_zero();
    let bytes = match a.common.format {
        Format::Json => {
            let mut config = base_config("fourier-check", &a.common, &f, &SchwartzBruhat::trivial(f.n()));
            config.y = Some(y.iter().map(format_rational).collect());
            config.level = Some(a.level);
            json_bytes(&FourierOutput {
                config,
                residual,
                exact_zero,
            })?
        }
        Format::Csv => csv_bytes(&["exact_zero".to_string()], &[vec![exact_zero.to_string()]])?,
    };
    emit(a.common.out.as_deref(), &bytes)?;
    if !exact_zero {
        eprintln!("nonzero Fourier residual");
        return Ok(EXIT_RESIDUAL);
    }
    Ok(0)
}
