use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use padic_expsum::padic::DEFAULT_NAIVE_BUDGET;
use padic_expsum::CountMethod;

#[derive(Debug, Parser)]
#[command(name = "padic-expsum", version, about = "Exact p-adic exponential integrals of polynomial maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate E_{phi,f}(y) exactly.
    Eval(EvalArgs),
    /// Fiber counts N_m(z) and densities F_m(z).
    Density(DensityArgs),
    /// Sup-norm sweep over levels, exponent fit and degree bound report.
    Decay(DecayArgs),
    /// Check E_f(y) against the Fourier transform of the level-m fiber counts.
    FourierCheck(FourierArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalMethod {
    Naive,
    Recursive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CountArg {
    Auto,
    Naive,
    Recursive,
}

impl From<CountArg> for CountMethod {
    fn from(m: CountArg) -> Self {
        match m {
            CountArg::Auto => CountMethod::Auto,
            CountArg::Naive => CountMethod::Naive,
            CountArg::Recursive => CountMethod::Recursive,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long, default_value_t = 3)]
    pub prime: u64,

    /// Polynomial map, components separated by ';' (e.g. "x1^2 + x2; 3*x1*x2").
    #[arg(long, conflicts_with = "map_file")]
    pub map: Option<String>,

    /// File holding the map as text, or as JSON when the name ends in .json.
    #[arg(long)]
    pub map_file: Option<PathBuf>,

    /// Number of variables (default: largest index used).
    #[arg(long)]
    pub vars: Option<usize>,

    /// Cap on brute-force points, recursive balls and enumerated directions.
    #[arg(long, env = "PADIC_EXPSUM_BUDGET", default_value_t = DEFAULT_NAIVE_BUDGET)]
    pub budget: u64,

    #[arg(long)]
    pub out: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,

    /// Schwartz-Bruhat weight "c1,..,cn@k[*w]; ..." (default: indicator of Z_p^n).
    #[arg(long)]
    pub phi: Option<String>,

    /// Comma-separated rationals, "a", "a/b" or "u/p^m".
    #[arg(long, allow_hyphen_values = true)]
    pub y: String,

    #[arg(long, value_enum, default_value_t = EvalMethod::Recursive)]
    pub method: EvalMethod,
}

#[derive(Debug, Clone, Args)]
pub struct DensityArgs {
    #[command(flatten)]
    pub common: Common,

    #[arg(long)]
    pub level: u32,

    #[arg(long, value_enum, default_value_t = CountArg::Auto)]
    pub method: CountArg,
}

#[derive(Debug, Clone, Args)]
pub struct DecayArgs {
    #[command(flatten)]
    pub common: Common,

    #[arg(long)]
    pub phi: Option<String>,

    /// Level window "m0..m1" with 1 <= m0 <= m1.
    #[arg(long, value_parser = parse_levels, default_value = "1..4")]
    pub levels: (u32, u32),

    /// "exhaustive" or "sample:N".
    #[arg(long, value_parser = check_strategy, default_value = "exhaustive")]
    pub strategy: String,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Slack on the exponent comparison.
    #[arg(long, default_value_t = padic_expsum::decay::DEFAULT_EPSILON)]
    pub epsilon: f64,

    /// Also write the fit summary as JSON to this path.
    #[arg(long)]
    pub fit_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FourierArgs {
    #[command(flatten)]
    pub common: Common,

    #[arg(long, allow_hyphen_values = true)]
    pub y: String,

    #[arg(long)]
    pub level: u32,
}

pub fn parse_levels(text: &str) -> Result<(u32, u32), String> {
    let (a, b) = text
        .split_once("..")
        .ok_or_else(|| format!("expected m0..m1, got {text:?}"))?;
    let a: u32 = a.trim().parse().map_err(|_| format!("bad level {a:?}"))?;
    let b: u32 = b.trim().parse().map_err(|_| format!("bad level {b:?}"))?;
    if a == 0 {
        return Err("levels start at 1".into());
    }
    if a > b {
        return Err(format!("empty level range {a}..{b}"));
    }
    Ok((a, b))
}

fn check_strategy(text: &str) -> Result<String, String> {
    padic_expsum::Strategy::parse(text, 0).map(|_| text.trim().to_string())
}
