//! Command-line front end: CSV ingestion, configuration and JSON reports.
//!
//! Every report is a single JSON object on one line, floats written with 17
//! significant digits, keys in a fixed order.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpec, DomainMode, InfluenceMode};
use crate::error::{Error, Result};
use crate::estimator::{estimate, Diagnostics, EstimateReport, ThresholdRule, TrimConfig};
use crate::montecarlo::{run_replications, DgpSpec, MonteCarloReport};
use crate::oracle::{builtin_design, exact_trim_bias, BiasDecomposition, BUILTIN_DESIGNS};
use crate::sieve::{Normalization, Sample};

/// Largest orthonormality residual accepted by `basis-check`.
pub const BASIS_CHECK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(
    name = "trimratio",
    version,
    about = "Bias-corrected trimmed estimation of E[B/A]"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate E[B/A] from a CSV file with header `a,b`.
    Estimate(EstimateArgs),
    /// Monte Carlo study under the Gamma/Normal heavy-tail design.
    Simulate(SimulateArgs),
    /// Exact trimming-bias decomposition for a built-in design.
    OracleBias(OracleArgs),
    /// Orthonormality residual of the Legendre basis in both conventions.
    BasisCheck(BasisCheckArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BasisArg {
    Shifted,
    Literal,
}

impl From<BasisArg> for DomainMode {
    fn from(b: BasisArg) -> Self {
        match b {
            BasisArg::Shifted => DomainMode::ShiftedUnit,
            BasisArg::Literal => DomainMode::Literal,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InfluenceArg {
    Sandwich,
    Literal,
}

impl From<InfluenceArg> for InfluenceMode {
    fn from(i: InfluenceArg) -> Self {
        match i {
            InfluenceArg::Sandwich => InfluenceMode::Sandwich,
            InfluenceArg::Literal => InfluenceMode::Literal,
        }
    }
}

/// Basis, threshold and interval options shared by `estimate` and `simulate`.
#[derive(Debug, Args)]
pub struct FitArgs {
    /// Fixed trimming threshold on the normalised scale.
    #[arg(long, conflicts_with = "rate_c")]
    pub h: Option<f64>,
    /// Constant C of the rate rule h = C n^(-r) (default when --h is absent: 1).
    #[arg(long = "rate-C", alias = "rate-c")]
    pub rate_c: Option<f64>,
    #[arg(long, value_enum, default_value = "shifted")]
    pub basis: BasisArg,
    #[arg(long, value_enum, default_value = "sandwich")]
    pub influence: InfluenceArg,
    /// Confidence level of the normal interval.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Hypothesised value for the t-statistic.
    #[arg(long, default_value_t = 0.0)]
    pub null: f64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl FitArgs {
    fn trim_config(&self) -> Result<TrimConfig> {
        let config = match self.h {
            Some(h) => TrimConfig::fixed(h)?,
            None => TrimConfig::rate(self.rate_c.unwrap_or(1.0))?,
        };
        Ok(config.with_level(self.level)?.with_null(self.null))
    }

    fn basis_spec(&self, degree: usize, k: usize) -> Result<BasisSpec> {
        BasisSpec::new(degree, k, self.basis.into(), self.influence.into())
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Smoothness order k.
    #[arg(long = "k")]
    pub k: usize,
    /// Basis degree K.
    #[arg(long = "K")]
    pub degree: usize,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub beta: f64,
    #[arg(long)]
    pub c1: f64,
    #[arg(long)]
    pub c2: f64,
    #[arg(long)]
    pub d: f64,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub reps: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long = "k", default_value_t = 4)]
    pub k: usize,
    #[arg(long = "K", default_value_t = 6)]
    pub degree: usize,
    /// Draw B = c1 A exactly.
    #[arg(long)]
    pub noiseless: bool,
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// One of the built-in design names.
    #[arg(long)]
    pub design: String,
    #[arg(long)]
    pub h: f64,
    #[arg(long = "k")]
    pub k: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BasisCheckArgs {
    #[arg(long = "K")]
    pub degree: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// JSON shape of an `estimate` report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateJson {
    pub theta_trimmed: f64,
    pub bias_hat: f64,
    pub theta_corrected: f64,
    pub std_error: f64,
    pub ci: [f64; 2],
    pub h: f64,
    pub k: usize,
    #[serde(rename = "K")]
    pub degree: usize,
    pub n: usize,
    pub n_trimmed: usize,
    pub normalization_scale: f64,
    pub confidence_level: f64,
    pub t_stat: f64,
    pub null_value: f64,
    pub c_hat: Vec<f64>,
    pub derivs_at_zero: Vec<f64>,
    pub threshold_rule: ThresholdRule,
    pub threshold_unclamped: f64,
    pub diagnostics: Diagnostics,
}

impl EstimateJson {
    pub fn new(report: &EstimateReport, norm: Normalization) -> Self {
        EstimateJson {
            theta_trimmed: report.theta_trimmed,
            bias_hat: report.bias_hat,
            theta_corrected: report.theta_corrected,
            std_error: report.std_error,
            ci: [report.ci_lower, report.ci_upper],
            h: report.h(),
            k: report.smoothness,
            degree: report.degree,
            n: report.n,
            n_trimmed: report.n_trimmed,
            normalization_scale: norm.scale,
            confidence_level: report.confidence_level,
            t_stat: report.t_stat,
            null_value: report.null_value,
            c_hat: report.c_hat.clone(),
            derivs_at_zero: report.derivs_at_zero.clone(),
            threshold_rule: report.threshold.rule,
            threshold_unclamped: report.threshold.unclamped,
            diagnostics: report.diagnostics.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleJson {
    pub design: String,
    pub h: f64,
    pub k: usize,
    pub main_terms: Vec<f64>,
    pub main_sum: f64,
    pub remainder: f64,
    pub total: f64,
    pub identity_residual: f64,
    pub mass_above_one: f64,
}

impl OracleJson {
    fn new(design: &str, h: f64, k: usize, b: &BiasDecomposition) -> Self {
        OracleJson {
            design: design.to_string(),
            h,
            k,
            main_terms: b.main_terms.clone(),
            main_sum: b.main_sum(),
            remainder: b.remainder,
            total: b.total,
            identity_residual: b.identity_residual,
            mass_above_one: b.mass_above_one,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasisCheckJson {
    #[serde(rename = "K")]
    pub degree: usize,
    pub shifted: f64,
    pub literal: f64,
    pub max_abs_residual: f64,
    pub tolerance: f64,
}

/// Reads a two-column `a,b` CSV and normalises it to `max(a) <= 1`.
pub fn ingest_csv(path: &Path) -> Result<(Sample, Normalization)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes.as_slice());

    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(Error::Validation(format!("{} is empty", path.display()))),
        Some(r) => r.map_err(|e| csv_error(&e))?,
    };
    let fields: Vec<&str> = header
        .iter()
        .map(|f| f.trim_start_matches('\u{feff}'))
        .collect();
    if fields != ["a", "b"] {
        return Err(Error::Parse {
            line: 1,
            message: format!("header must be exactly `a,b`, found `{}`", fields.join(",")),
        });
    }

    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut nonpositive = Vec::new();
    for record in records {
        let record = record.map_err(|e| csv_error(&e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let parse = |s: &str, name: &str| -> Result<f64> {
            let v: f64 = s.trim().parse().map_err(|_| Error::Parse {
                line,
                message: format!("column {name}: `{s}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("column {name}: `{s}` is not finite"),
                });
            }
            Ok(v)
        };
        let ai = parse(&record[0], "a")?;
        let bi = parse(&record[1], "b")?;
        if ai <= 0.0 {
            nonpositive.push(line);
        }
        a.push(ai);
        b.push(bi);
    }
    if !nonpositive.is_empty() {
        return Err(Error::Validation(format!(
            "column a must be positive (A does not have a mass at 0); offending lines {nonpositive:?}"
        )));
    }
    if a.is_empty() {
        return Err(Error::Validation(format!(
            "{} has a header but no data rows",
            path.display()
        )));
    }
    Ok(Sample::new(a, b)?.normalize())
}

fn csv_error(e: &csv::Error) -> Error {
    Error::Parse {
        line: e.position().map(|p| p.line()).unwrap_or(0),
        message: e.to_string(),
    }
}

/// Writes floats as `{:.16e}`, i.e. 17 significant digits.
struct SignificantDigits;

impl serde_json::ser::Formatter for SignificantDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Serialises `value` as one line of JSON terminated by a single newline.
pub fn to_json_line<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SignificantDigits);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Numerical(format!("report serialisation failed: {e}")))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// Writes a report to `path`, or to stdout when `path` is `None`.
pub fn emit_report<T: Serialize>(report: &T, path: Option<&Path>) -> Result<()> {
    let line = to_json_line(report)?;
    match path {
        Some(p) => fs::write(p, line).map_err(|e| Error::io(p, e)),
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(line.as_bytes())
                .and_then(|_| lock.flush())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

pub fn run_estimate(args: &EstimateArgs) -> Result<EstimateJson> {
    let spec = args.fit.basis_spec(args.degree, args.k)?;
    let config = args.fit.trim_config()?;
    let (sample, norm) = ingest_csv(&args.input)?;
    let report = estimate(&sample, &spec, &config)?;
    if report.diagnostics.gram_warning {
        eprintln!(
            "warning: Gram condition number {:.3e} is large; derivative estimates may be unstable",
            report.diagnostics.gram_condition
        );
    }
    Ok(EstimateJson::new(&report, norm))
}

pub fn run_simulate(args: &SimulateArgs) -> Result<MonteCarloReport> {
    let mut dgp = DgpSpec::new(args.alpha, args.beta, args.c1, args.c2, args.d);
    if args.noiseless {
        dgp = dgp.noiseless();
    }
    let spec = args.fit.basis_spec(args.degree, args.k)?;
    let config = args.fit.trim_config()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = args.threads {
        if t == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_replications(&dgp, args.n, args.reps, &spec, &config, args.seed))
}

pub fn run_oracle(args: &OracleArgs) -> Result<OracleJson> {
    let design = builtin_design(&args.design).ok_or_else(|| {
        Error::Config(format!(
            "unknown design '{}'; available: {}",
            args.design,
            BUILTIN_DESIGNS.join(", ")
        ))
    })?;
    design.validate()?;
    let b = exact_trim_bias(&design, args.h, args.k)?;
    Ok(OracleJson::new(&args.design, args.h, args.k, &b))
}

pub fn run_basis_check(args: &BasisCheckArgs) -> Result<BasisCheckJson> {
    let residual = |mode| -> Result<f64> {
        Ok(
            BasisSpec::new(args.degree, 2, mode, InfluenceMode::Sandwich)?
                .orthonormality_residual(),
        )
    };
    if args.degree < 2 {
        return Err(Error::Config(format!(
            "basis-check needs K >= 2, got {}",
            args.degree
        )));
    }
    let shifted = residual(DomainMode::ShiftedUnit)?;
    let literal = residual(DomainMode::Literal)?;
    Ok(BasisCheckJson {
        degree: args.degree,
        shifted,
        literal,
        max_abs_residual: shifted.max(literal),
        tolerance: BASIS_CHECK_TOLERANCE,
    })
}

/// Executes a parsed command and writes its report.
pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Estimate(args) => emit_report(&run_estimate(args)?, args.fit.out.as_deref()),
        Command::Simulate(args) => emit_report(&run_simulate(args)?, args.fit.out.as_deref()),
        Command::OracleBias(args) => emit_report(&run_oracle(args)?, args.out.as_deref()),
        Command::BasisCheck(args) => {
            let check = run_basis_check(args)?;
            emit_report(&check, args.out.as_deref())?;
            if !(check.max_abs_residual <= BASIS_CHECK_TOLERANCE) {
                return Err(Error::Numerical(format!(
                    "orthonormality residual {:.3e} exceeds {BASIS_CHECK_TOLERANCE:.0e}",
                    check.max_abs_residual
                )));
            }
            Ok(())
        }
    }
}
