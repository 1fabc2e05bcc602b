use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lemr_core::harness::{DEFAULT_SPLITS, DEFAULT_VALIDATION_RATIO};
use lemr_core::{exec, LemrError};

mod commands;

/// Label-efficient model ranking over saved prediction bundles.
#[derive(Debug, Parser)]
#[command(name = "lemr", version, about, long_about = None)]
#[command(after_help = "Exit status: 0 on success, 1 on a contract violation (bad flags, \
    invalid bundle contents, failed oracle), 2 on I/O or format errors.\n\
    LEMR_THREADS caps worker threads (0 or unset = one per core).")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a bundle's invariants and print the violation report as JSON.
    Validate {
        /// Bundle directory.
        bundle: PathBuf,
    },
    /// Generate a synthetic bundle.
    Synth(SynthArgs),
    /// Run the ranking loop once on one split and print the result as JSON.
    Run(RunArgs),
    /// Run all 16 ensemble x acquisition x committee configs and write CSV reports.
    Grid(ReportArgs),
    /// Run one config over several budgets and write CSV reports.
    Sweep(ReportArgs),
    /// Find the smallest budget at which every split has zero optimal gap.
    MinBudget(MinBudgetArgs),
    /// Convert a logit dump (labels.csv plus logits_<k>.csv) into a bundle.
    ConvertLogits(ConvertArgs),
}

/// Run-config flags. Precedence: defaults, then --config, then flags.
#[derive(Debug, Args)]
struct ConfigArgs {
    /// Config file of `key = value` lines (same keys as these flags, with underscores).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// hard | soft [default: hard]
    #[arg(long, value_name = "KIND")]
    ensemble_kind: Option<String>,
    /// random | uncertainty | margin | entropy [default: uncertainty]
    #[arg(long, value_name = "STRATEGY")]
    acquisition: Option<String>,
    /// zscore | all_model [default: zscore]
    #[arg(long, value_name = "METHOD")]
    committee: Option<String>,
    /// Labels acquired per round [default: max(1, ceil(budget / 10))]
    #[arg(long, value_name = "N")]
    iteration_budget: Option<usize>,
    /// Modified z-score scale constant [default: 0.6745]
    #[arg(long, value_name = "X", allow_negative_numbers = true)]
    zscore_delta: Option<f64>,
    /// Modified z-score threshold [default: -3.5]
    #[arg(long, value_name = "X", allow_negative_numbers = true)]
    zscore_tau: Option<f64>,
    /// modal | expected [default: modal]
    #[arg(long, value_name = "MODE")]
    accuracy_mode: Option<String>,
    /// Rebuild pseudo-labels with the final committee before ranking [default: off]
    #[arg(long)]
    final_regenerate: bool,
    /// Spend budget % iteration_budget in one last partial round [default: off]
    #[arg(long)]
    spend_remainder: bool,
}

/// Split and seeding flags shared by every run-family subcommand.
#[derive(Debug, Args)]
struct HarnessArgs {
    /// Base seed for splits and runs.
    #[arg(long)]
    seed: u64,
    /// Number of validation/test splits.
    #[arg(long, default_value_t = DEFAULT_SPLITS)]
    n_splits: usize,
    /// Fraction of samples placed in the validation set.
    #[arg(long, default_value_t = DEFAULT_VALIDATION_RATIO)]
    validation_ratio: f64,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    num_models: usize,
    #[arg(long)]
    num_samples: usize,
    #[arg(long)]
    num_classes: usize,
    /// Comma-separated per-model accuracies; overrides --accuracy-min/--accuracy-max.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    accuracies: Option<Vec<f64>>,
    /// Lower bound of uniformly drawn accuracies.
    #[arg(long, default_value_t = 0.4)]
    accuracy_min: f64,
    /// Upper bound of uniformly drawn accuracies.
    #[arg(long, default_value_t = 0.9)]
    accuracy_max: f64,
    /// Lower bound of the intended-class probability [default: 1/C + 0.1]
    #[arg(long)]
    confidence_low: Option<f64>,
    /// Upper bound of the intended-class probability.
    #[arg(long, default_value_t = 0.95)]
    confidence_high: f64,
    #[arg(long)]
    seed: u64,
    /// csv | binary
    #[arg(long, default_value = "binary")]
    storage: String,
    /// Output bundle directory.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Bundle directory.
    bundle: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    harness: HarnessArgs,
    /// Which of the seeded splits to run on.
    #[arg(long, default_value_t = 0)]
    split_index: usize,
    /// Total labels to acquire [default: 0]
    #[arg(long, conflicts_with = "budget_ratio")]
    budget: Option<usize>,
    /// Budget as a fraction of the validation set.
    #[arg(long)]
    budget_ratio: Option<f64>,
    /// Ask for each label on standard input instead of reading bundle labels.
    #[arg(long)]
    interactive_oracle: bool,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Bundle directory.
    bundle: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    harness: HarnessArgs,
    /// Comma-separated budget ratios [default: 0,0.1,0.2,0.3,0.4,0.5]
    #[arg(long, value_delimiter = ',', value_name = "LIST", conflicts_with = "budgets")]
    budget_ratios: Option<Vec<f64>>,
    /// Comma-separated absolute budgets.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    budgets: Option<Vec<usize>>,
    /// Output directory for rows.csv and aggregates.csv.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct MinBudgetArgs {
    /// Bundle directory.
    bundle: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    harness: HarnessArgs,
    /// Scan step in labels [default: max(1, floor(|D_V| / 100))]
    #[arg(long)]
    step: Option<usize>,
    /// Search every design-grid config instead of just the configured one.
    #[arg(long)]
    grid: bool,
}

#[derive(Debug, Args)]
struct ConvertArgs {
    /// Logit dump directory.
    input: PathBuf,
    /// Bundle name [default: input directory name]
    #[arg(long)]
    name: Option<String>,
    /// csv | binary
    #[arg(long, default_value = "binary")]
    storage: String,
    /// Output bundle directory.
    #[arg(long)]
    output: PathBuf,
}

enum Outcome {
    Ok,
    Violations,
}

fn threads_from_env() -> Result<usize, LemrError> {
    match std::env::var("LEMR_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map_err(|_| LemrError::Contract(format!("LEMR_THREADS must be a count, found {v:?}"))),
        _ => Ok(0),
    }
}

fn exit_code(err: &anyhow::Error) -> (u8, Option<&'static str>) {
    match err.downcast_ref::<LemrError>() {
        Some(LemrError::Format(f)) => (2, Some(f.code())),
        Some(LemrError::Cell { source, .. }) => match source.as_ref() {
            LemrError::Format(f) => (2, Some(f.code())),
            e => (if e.is_contract() { 1 } else { 2 }, None),
        },
        Some(e) => (if e.is_contract() { 1 } else { 2 }, None),
        None => (2, None),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            eprintln!("lemr: {} (see --help)", first.trim());
            return ExitCode::from(1);
        }
    };
    let result = threads_from_env()
        .map_err(anyhow::Error::from)
        .and_then(|threads| exec::with_threads(threads, || commands::dispatch(cli.command)));
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Violations) => ExitCode::from(1),
        Err(err) => {
            let (code, tag) = exit_code(&err);
            let text = format!("{err:#}").replace('\n', " ");
            match tag {
                Some(tag) => eprintln!("lemr: error[{tag}]: {text}"),
                None => eprintln!("lemr: error: {text}"),
            }
            ExitCode::from(code)
        }
    }
}
