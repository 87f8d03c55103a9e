//! Command-line grammar and the validated run configuration.

use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use randsum_core::{IndexSpec, SummandFamily, TestFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Condition functionals over the n grid, one CSV row each.
    Conditions,
    /// Kolmogorov distance of simulated random sums.
    Simulate,
    /// Smooth-metric rate audit (large-O or small-o).
    Rates,
    /// Characteristic-function identity for matched normal summands.
    CfCheck,
    /// Implication inequalities between the functionals.
    Audit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AuditKind {
    LargeO,
    SmallO,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

fn name_of<T: ValueEnum>(v: &T) -> String {
    v.to_possible_value().expect("no skipped variants").get_name().to_string()
}

fn family(s: &str) -> Result<SummandFamily, String> {
    SummandFamily::parse(s).map_err(|e| e.to_string())
}

fn index(s: &str) -> Result<IndexSpec, String> {
    s.parse().map_err(|e: randsum_core::Error| e.to_string())
}

fn test_function(s: &str) -> Result<TestFunction, String> {
    s.parse().map_err(|e: randsum_core::Error| e.to_string())
}

fn number(s: &str) -> Result<f64, String> {
    s.trim().parse::<f64>().map_err(|_| format!("'{s}' is not a number"))
}

fn positive(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be positive and finite"))
    }
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} must lie in (0, 1]"))
    }
}

fn finite(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be finite"))
    }
}

fn quad_tol(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if v > 0.0 && v <= 1e-4 {
        Ok(v)
    } else {
        Err(format!("{v} must lie in (0, 1e-4]"))
    }
}

fn grid_point(s: &str) -> Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(format!("'{s}' is not an integer >= 1")),
    }
}

fn trials(s: &str) -> Result<u64, String> {
    match s.trim().parse::<u64>() {
        Ok(m) if m >= 1 => Ok(m),
        _ => Err(format!("'{s}' is not an integer >= 1")),
    }
}

/// Raw flags as clap sees them. Every field is validated by its parser.
#[derive(Debug, Parser)]
#[command(name = "randsum", version, about = "Normal approximation diagnostics for random sums")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Summand family, e.g. `rademacher` or `family=twopoint,power=2`.
    #[arg(long, default_value = "rademacher", value_parser = family)]
    family: SummandFamily,
    /// Random index, e.g. `det`, `geom`, `poisson:5`. A pinned parameter overrides the n grid.
    #[arg(long, default_value = "det", value_parser = index)]
    index: IndexSpec,
    /// Comma-separated values of n.
    #[arg(long = "n-grid", visible_alias = "n", value_delimiter = ',', default_value = "10,100,1000", value_parser = grid_point)]
    n_grid: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.5", value_parser = positive)]
    epsilon: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1", value_parser = unit_interval)]
    delta: Vec<f64>,
    /// Points at which the characteristic functions are compared.
    #[arg(long = "t-grid", allow_hyphen_values = true, value_delimiter = ',', default_value = "0,0.5,1,2,4", value_parser = finite)]
    t_grid: Vec<f64>,
    #[arg(long, default_value = "100000", value_parser = trials)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Absolute tolerance per integral.
    #[arg(long = "quad-tol", default_value = "1e-10", value_parser = quad_tol)]
    quad_tol: f64,
    /// Test function: sin, cos, clamp, bump or const=<c>.
    #[arg(long = "fn", default_value = "sin", value_parser = test_function)]
    function: TestFunction,
    /// Hoelder order of the test function's derivative.
    #[arg(long, default_value = "1", value_parser = unit_interval)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "large-o")]
    audit: AuditKind,
    /// Defaults to json for `audit` and `cf-check`, csv otherwise.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Write output here (atomically) instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the resolved flags and exit.
    #[arg(long = "print-config")]
    print_config: bool,
}

/// A fully validated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub family: SummandFamily,
    pub index: IndexSpec,
    pub n_grid: Vec<usize>,
    pub epsilon: Vec<f64>,
    pub delta: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub trials: u64,
    pub seed: u64,
    pub quad_tol: f64,
    pub function: TestFunction,
    pub alpha: f64,
    pub audit: AuditKind,
    pub format: Format,
    pub out: Option<PathBuf>,
}

/// What the command line asked for.
#[derive(Debug)]
pub enum Invocation {
    Run(RunConfig),
    PrintConfig(RunConfig),
}

/// Parse `argv` (program name first).
pub fn parse_args<I, T>(argv: I) -> Result<Invocation, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    let format = cli.format.unwrap_or(match cli.command {
        Command::Audit | Command::CfCheck => Format::Json,
        _ => Format::Csv,
    });
    if cli.command == Command::Rates && cli.audit == AuditKind::SmallO && cli.function.derivative_sup_norm() < 1.0 {
        return Err(clap::Error::raw(
            clap::error::ErrorKind::ValueValidation,
            format!("--fn '{}': the small-o audit needs sup |f'| >= 1\n", cli.function),
        ));
    }
    let config = RunConfig {
        command: cli.command,
        family: cli.family,
        index: cli.index,
        n_grid: cli.n_grid,
        epsilon: cli.epsilon,
        delta: cli.delta,
        t_grid: cli.t_grid,
        trials: cli.trials,
        seed: cli.seed,
        quad_tol: cli.quad_tol,
        function: cli.function,
        alpha: cli.alpha,
        audit: cli.audit,
        format,
        out: cli.out,
    };
    Ok(if cli.print_config { Invocation::PrintConfig(config) } else { Invocation::Run(config) })
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Flags that parse back to this configuration (program name excluded).
    pub fn to_args(&self) -> Vec<String> {
        let mut args = vec![
            name_of(&self.command),
            "--family".into(),
            self.family.to_string(),
            "--index".into(),
            self.index.to_string(),
            "--n-grid".into(),
            join(&self.n_grid),
            "--epsilon".into(),
            join(&self.epsilon),
            "--delta".into(),
            join(&self.delta),
            "--t-grid".into(),
            join(&self.t_grid),
            "--trials".into(),
            self.trials.to_string(),
            "--seed".into(),
            self.seed.to_string(),
            "--quad-tol".into(),
            self.quad_tol.to_string(),
            "--fn".into(),
            self.function.to_string(),
            "--alpha".into(),
            self.alpha.to_string(),
            "--audit".into(),
            name_of(&self.audit),
            "--format".into(),
            name_of(&self.format),
        ];
        if let Some(out) = &self.out {
            args.push("--out".into());
            args.push(out.display().to_string());
        }
        args
    }
}
