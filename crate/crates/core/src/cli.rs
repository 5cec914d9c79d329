//! Command-line front end. Subcommands write CSV to `--output` and a one-line
//! summary to stdout; without `--output` the CSV takes stdout and the summary
//! moves to stderr.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::dataset::{diabetes, expand_quadratic, load_csv, standardize, StandardizedDataset};
use crate::error::{Error, Result};
use crate::mc::{
    conjecture_bias_report, estimate_df_mc, pilot_grid, unbiasedness_report, MonteCarloSettings, SyntheticModel,
};
use crate::path::{compute_path, default_max_steps, LassoPath};
use crate::selection::{estimate_sigma2, select_optimal, write_selection_csv, Criterion};

#[derive(Debug, Parser)]
#[command(name = "lassodf", version, about = "Exact lasso paths, degrees of freedom and Cp/AIC/BIC selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Transition points and coefficient table of the full path.
    Path {
        #[command(flatten)]
        common: Common,
        /// Also write the coefficient table (one row per transition point).
        #[arg(long)]
        coefficients: Option<PathBuf>,
    },
    /// Minimize Cp, AIC or BIC over the path.
    Select {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "cp")]
        criterion: Criterion,
        /// Known noise variance; defaults to the full least-squares estimate.
        #[arg(long)]
        sigma2: Option<f64>,
    },
    /// df estimate, RSS and all three criteria on a lambda grid.
    DfCurve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        sigma2: Option<f64>,
        /// Comma-separated lambdas, or "transitions".
        #[arg(long, default_value = "transitions")]
        lambdas: LambdaGrid,
    },
    /// Monte Carlo check that the nonzero count is unbiased for df.
    VerifyDf {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        mc: MonteCarloArgs,
        /// Comma-separated lambdas, or "transitions" for a pilot-path grid.
        #[arg(long, default_value = "transitions")]
        lambdas: LambdaGrid,
    },
    /// Monte Carlo df of the last-step-with-k-predictors rule, for each k.
    ConjectureBias {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        mc: MonteCarloArgs,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// CSV with a header row; the bundled diabetes data when omitted.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Response column name or 0-based index; defaults to the last column.
    #[arg(long)]
    pub response: Option<String>,
    /// Add pairwise products and squares of the predictors.
    #[arg(long)]
    pub expand_quadratic: bool,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MonteCarloArgs {
    #[arg(long, default_value_t = 2000)]
    pub replications: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Noise sd of the synthetic model as a multiple of the least-squares estimate.
    #[arg(long, default_value_t = 1.0)]
    pub sigma_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LambdaGrid {
    Transitions,
    Values(Vec<f64>),
}

impl FromStr for LambdaGrid {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.trim().eq_ignore_ascii_case("transitions") {
            return Ok(LambdaGrid::Transitions);
        }
        let values = s
            .split(',')
            .map(|t| {
                let v: f64 = t.trim().parse().map_err(|_| format!("cannot parse {t:?} as a number"))?;
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(format!("lambda must be finite and nonnegative, got {t}"));
                }
                Ok(v)
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(LambdaGrid::Values(values))
    }
}

fn load(common: &Common) -> Result<StandardizedDataset> {
    let mut raw = match &common.input {
        Some(path) => match &common.response {
            Some(r) => match r.parse::<usize>() {
                Ok(i) => load_csv(path, i)?,
                Err(_) => load_csv(path, r.as_str())?,
            },
            None => load_csv_last(path)?,
        },
        None => {
            if common.response.as_deref().is_some_and(|r| r != "y") {
                return Err(Error::MissingResponse(common.response.clone().unwrap_or_default()));
            }
            diabetes()
        }
    };
    if common.expand_quadratic {
        raw = expand_quadratic(&raw, true)?;
    }
    standardize(&raw)
}

fn load_csv_last(path: &Path) -> Result<crate::dataset::RawDataset> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let columns = csv::Reader::from_reader(text.as_bytes()).headers()?.len();
    if columns == 0 {
        return Err(Error::InvalidInput(format!("{} has no header row", path.display())));
    }
    crate::dataset::parse_csv(&text, columns - 1)
}

fn sink(output: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match output {
        Some(path) => Box::new(BufWriter::new(File::create(path).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?)),
        None => Box::new(io::stdout()),
    })
}

fn sigma2_or_estimate(ds: &StandardizedDataset, sigma2: Option<f64>) -> Result<f64> {
    match sigma2 {
        Some(s) if s > 0.0 && s.is_finite() => Ok(s),
        Some(s) => Err(Error::InvalidInput(format!("--sigma2 must be positive, got {s}"))),
        None => estimate_sigma2(ds),
    }
}

fn path_of(ds: &StandardizedDataset) -> Result<LassoPath> {
    compute_path(ds, default_max_steps(ds.p()).max(512))
}

fn note(summary: &mut dyn Write, common: &Common, line: String) {
    if common.output.is_some() {
        writeln!(summary, "{line}").ok();
    } else {
        eprintln!("{line}");
    }
}

/// Runs one command, writing the human-readable summary to `summary`.
pub fn run(cli: Cli, summary: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Path { common, coefficients } => {
            let ds = load(&common)?;
            let path = path_of(&ds)?;
            path.write_transitions_csv(sink(&common.output)?)?;
            if let Some(coef) = &coefficients {
                path.write_coefficients_csv(sink(&Some(coef.clone()))?)?;
            }
            note(
                summary,
                &common,
                format!("{} transitions, lambda_max = {}", path.n_transitions(), path.lambda_max()),
            );
        }
        Command::Select {
            common,
            criterion,
            sigma2,
        } => {
            let ds = load(&common)?;
            let sigma2 = sigma2_or_estimate(&ds, sigma2)?;
            let path = path_of(&ds)?;
            let report = select_optimal(&path, criterion, sigma2)?;
            if let Some(out) = &common.output {
                write_selection_csv(&path, sigma2, sink(&Some(out.clone()))?)?;
            }
            let names: Vec<&str> = report
                .chosen_beta
                .iter()
                .zip(&ds.names)
                .filter(|(b, _)| **b != 0.0)
                .map(|(_, n)| n.as_str())
                .collect();
            writeln!(
                summary,
                "{criterion}: lambda = {}, sigma2 = {sigma2}, {} nonzero coefficients: {}",
                report.chosen_lambda,
                report.chosen_df(),
                names.join(" ")
            )
            .ok();
        }
        Command::DfCurve {
            common,
            sigma2,
            lambdas,
        } => {
            let ds = load(&common)?;
            let sigma2 = sigma2_or_estimate(&ds, sigma2)?;
            let path = path_of(&ds)?;
            let grid = match lambdas {
                LambdaGrid::Transitions => path.transition_lambdas().to_vec(),
                LambdaGrid::Values(v) => v,
            };
            let mut w = csv::Writer::from_writer(sink(&common.output)?);
            w.write_record(["lambda", "df_hat", "rss", "cp", "aic", "bic"])?;
            for &lambda in &grid {
                let fit = path.fit_at(lambda)?;
                let mut row = vec![lambda.to_string(), fit.df_hat.to_string(), fit.rss.to_string()];
                for c in Criterion::ALL {
                    row.push(c.evaluate(fit.rss, fit.df_hat, ds.n(), sigma2)?.to_string());
                }
                w.write_record(&row)?;
            }
            w.flush().map_err(csv::Error::from)?;
        }
        Command::VerifyDf { common, mc, lambdas } => {
            let ds = load(&common)?;
            let model = SyntheticModel::from_ols(&ds, mc.sigma_scale)?;
            let settings = MonteCarloSettings::new(mc.replications, mc.seed);
            if settings.replications < 2 {
                return Err(Error::InvalidInput("--replications must be at least 2".into()));
            }
            let grid = match lambdas {
                LambdaGrid::Transitions => pilot_grid(&model, mc.seed, 50)?,
                LambdaGrid::Values(v) => v,
            };
            let report = estimate_df_mc(&model, &grid, &settings)?;
            report.write_csv(sink(&common.output)?)?;
            let cover = unbiasedness_report(&report);
            note(
                summary,
                &common,
                format!(
                    "signal/noise = {:.3}, {} replications ({} skipped), CI covers zero at {:.3} of {} grid points",
                    model.signal_to_noise(),
                    report.replications,
                    report.skipped,
                    cover.coverage,
                    grid.len()
                ),
            );
        }
        Command::ConjectureBias { common, mc } => {
            let ds = load(&common)?;
            let model = SyntheticModel::from_ols(&ds, mc.sigma_scale)?;
            let report = conjecture_bias_report(&model, &MonteCarloSettings::new(mc.replications, mc.seed))?;
            report.write_csv(sink(&common.output)?)?;
            note(
                summary,
                &common,
                format!(
                    "{} replications ({} skipped), max |bias| = {:.4}",
                    report.replications,
                    report.skipped,
                    report.max_abs_bias()
                ),
            );
        }
    }
    Ok(())
}

/// Parses `args`, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            e.print().ok();
            return code;
        }
    };
    let stdout = io::stdout();
    match run(cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
