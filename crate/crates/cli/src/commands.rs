use std::io::{BufRead, Write};
use std::path::Path;

use anyhow::{Context, Result};
use lemr_core::harness::{make_splits, min_budget_to_zero_gap, run_cells};
use lemr_core::io::{
    read_bundle, read_bundle_unvalidated, read_logit_dump, write_aggregate_csv, write_bundle,
    write_report_csv, Storage,
};
use lemr_core::metrics::evaluate;
use lemr_core::{
    generate_model_set, lemr_run, seed, validate_bundle, BudgetSpec, BundleOracle, ConfigTemplate, Execution,
    FormatError, LabelOracle, LemrError, SplitView, SynthSpec,
};
use serde_json::json;

use super::{
    Command, ConfigArgs, ConvertArgs, HarnessArgs, MinBudgetArgs, Outcome, ReportArgs, RunArgs, SynthArgs,
};

const DEFAULT_BUDGET_RATIOS: [f64; 6] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];

pub(crate) fn dispatch(command: Command) -> Result<Outcome> {
    match command {
        Command::Validate { bundle } => validate(&bundle),
        Command::Synth(args) => synth(args),
        Command::Run(args) => run(args),
        Command::Grid(args) => report(args, true),
        Command::Sweep(args) => report(args, false),
        Command::MinBudget(args) => min_budget(args),
        Command::ConvertLogits(args) => convert(args),
    }
}

/// Writes to stdout, treating a closed pipe as success.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e).context("writing to stdout"),
        _ => Ok(()),
    }
}

fn contract(msg: impl Into<String>) -> anyhow::Error {
    LemrError::Contract(msg.into()).into()
}

fn template(args: &ConfigArgs) -> Result<ConfigTemplate> {
    let mut t = ConfigTemplate::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|source| LemrError::Format(FormatError::Io { path: path.clone(), source }))?;
        t.apply_text(&text).with_context(|| format!("in {}", path.display()))?;
    }
    let text_flags = [
        ("ensemble_kind", &args.ensemble_kind),
        ("acquisition_strategy", &args.acquisition),
        ("committee_method", &args.committee),
        ("accuracy_mode", &args.accuracy_mode),
    ];
    for (key, value) in text_flags {
        if let Some(v) = value {
            t.set(key, v)?;
        }
    }
    if let Some(b) = args.iteration_budget {
        t.set("iteration_budget", &b.to_string())?;
    }
    if let Some(d) = args.zscore_delta {
        t.set("zscore_delta", &d.to_string())?;
    }
    if let Some(tau) = args.zscore_tau {
        t.set("zscore_tau", &tau.to_string())?;
    }
    t.final_regenerate |= args.final_regenerate;
    t.spend_remainder |= args.spend_remainder;
    Ok(t)
}

fn splits(harness: &HarnessArgs, num_samples: usize) -> Result<Vec<SplitView>> {
    Ok(make_splits(num_samples, harness.validation_ratio, harness.n_splits, harness.seed)?)
}

fn validate(path: &Path) -> Result<Outcome> {
    let bundle = read_bundle_unvalidated(path)?;
    let report = validate_bundle(&bundle);
    let out = json!({
        "bundle": bundle.name(),
        "valid": report.is_valid(),
        "violations": report.violations,
    });
    emit(&(serde_json::to_string_pretty(&out)? + "\n"))?;
    Ok(if report.is_valid() { Outcome::Ok } else { Outcome::Violations })
}

fn synth(args: SynthArgs) -> Result<Outcome> {
    let storage: Storage = args.storage.parse()?;
    let target_accuracies = match args.accuracies {
        Some(list) => list,
        None => {
            if args.accuracy_min.is_nan()
                || args.accuracy_max.is_nan()
                || args.accuracy_min > args.accuracy_max
            {
                return Err(contract("--accuracy-min must not exceed --accuracy-max"));
            }
            SynthSpec::uniform_accuracies(
                args.num_models,
                args.accuracy_min,
                args.accuracy_max,
                seed::mix(args.seed, 1),
            )
        }
    };
    let confidence_low = args
        .confidence_low
        .unwrap_or_else(|| (1.0 / args.num_classes.max(1) as f64 + 0.1).min(args.confidence_high));
    let spec = SynthSpec {
        num_models: args.num_models,
        num_samples: args.num_samples,
        num_classes: args.num_classes,
        target_accuracies,
        confidence_low,
        confidence_high: args.confidence_high,
        seed: args.seed,
    };
    let bundle = generate_model_set(&spec)?;
    write_bundle(&bundle, &args.output, storage)?;
    emit(&format!("{}\n", args.output.display()))?;
    Ok(Outcome::Ok)
}

/// Prompts on stderr and reads one class index per line from stdin.
struct StdinOracle {
    num_classes: usize,
}

impl LabelOracle for StdinOracle {
    fn label(&mut self, sample: usize) -> std::result::Result<usize, String> {
        let stdin = std::io::stdin();
        loop {
            eprint!("label for sample {sample} (0..{}): ", self.num_classes);
            let _ = std::io::stderr().flush();
            let mut line = String::new();
            match stdin.lock().read_line(&mut line) {
                Ok(0) => return Err("end of input".into()),
                Ok(_) => {}
                Err(e) => return Err(e.to_string()),
            }
            match line.trim().parse::<usize>() {
                Ok(y) if y < self.num_classes => return Ok(y),
                _ => eprintln!("expected an integer in [0, {})", self.num_classes),
            }
        }
    }
}

fn run(args: RunArgs) -> Result<Outcome> {
    let mut t = template(&args.config)?;
    match (args.budget, args.budget_ratio) {
        (Some(b), _) => t.budget = Some(BudgetSpec::Absolute(b)),
        (None, Some(r)) => t.set("budget_ratio", &r.to_string())?,
        (None, None) => {}
    }
    let bundle = read_bundle(&args.bundle)?;
    let all = splits(&args.harness, bundle.num_samples())?;
    let split = all.get(args.split_index).ok_or_else(|| {
        contract(format!("--split-index {} but only {} splits", args.split_index, all.len()))
    })?;
    let budget = t.budget.unwrap_or(BudgetSpec::Absolute(0)).resolve(split.validation_len())?;
    let config = t.instantiate(budget, seed::run_seed(args.harness.seed, split.split_id, &t.fingerprint()));
    let result = if args.interactive_oracle {
        let mut oracle = StdinOracle { num_classes: bundle.num_classes() };
        lemr_run(&bundle, split, &config, &mut oracle)?
    } else {
        lemr_run(&bundle, split, &config, &mut BundleOracle(&bundle))?
    };
    let metrics = evaluate(&bundle, split, &result)?;
    let out = json!({
        "bundle": bundle.name(),
        "split_id": split.split_id,
        "validation_size": split.validation_len(),
        "config": config,
        "ranking": result.ranking,
        "selection_accuracy": result.selection_accuracy,
        "labels_acquired": result.labels_acquired,
        "committee_history": result.committee_history,
        "batch_history": result.batch_history,
        "metrics": metrics,
    });
    emit(&(serde_json::to_string_pretty(&out)? + "\n"))?;
    Ok(Outcome::Ok)
}

fn report(args: ReportArgs, grid: bool) -> Result<Outcome> {
    let t = template(&args.config)?;
    let budgets: Vec<BudgetSpec> = match (&args.budget_ratios, &args.budgets, t.budget) {
        (Some(ratios), _, _) => ratios.iter().map(|&r| BudgetSpec::Ratio(r)).collect(),
        (None, Some(counts), _) => counts.iter().map(|&b| BudgetSpec::Absolute(b)).collect(),
        (None, None, Some(b)) => vec![b],
        (None, None, None) => DEFAULT_BUDGET_RATIOS.iter().map(|&r| BudgetSpec::Ratio(r)).collect(),
    };
    if budgets.is_empty() {
        return Err(contract("no budgets given"));
    }
    let bundle = read_bundle(&args.bundle)?;
    let splits = splits(&args.harness, bundle.num_samples())?;
    let templates = if grid { t.design_grid() } else { vec![t] };
    let report = run_cells(&bundle, &templates, &budgets, &splits, args.harness.seed, Execution::default())?;
    let rows = args.output.join("rows.csv");
    let aggregates = args.output.join("aggregates.csv");
    write_report_csv(&report, &rows)?;
    write_aggregate_csv(&report.aggregates, &aggregates)?;
    emit(&format!("{}\n{}\n", rows.display(), aggregates.display()))?;
    Ok(Outcome::Ok)
}

fn min_budget(args: MinBudgetArgs) -> Result<Outcome> {
    let t = template(&args.config)?;
    let bundle = read_bundle(&args.bundle)?;
    let splits = splits(&args.harness, bundle.num_samples())?;
    let validation_len = splits[0].validation_len();
    let step = args.step.unwrap_or((validation_len / 100).max(1));
    let templates = if args.grid { t.design_grid() } else { vec![t] };
    emit("config,min_budget,validation_size\n")?;
    for template in &templates {
        let found = min_budget_to_zero_gap(
            &bundle,
            template,
            &splits,
            step,
            args.harness.seed,
            Execution::default(),
        )?;
        emit(&format!("{},{found},{validation_len}\n", template.fingerprint()))?;
    }
    Ok(Outcome::Ok)
}

fn convert(args: ConvertArgs) -> Result<Outcome> {
    let storage: Storage = args.storage.parse()?;
    let name = match args.name {
        Some(n) => n,
        None => args
            .input
            .canonicalize()
            .ok()
            .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "bundle".into()),
    };
    let bundle = read_logit_dump(&args.input, &name)?;
    write_bundle(&bundle, &args.output, storage)?;
    emit(&format!("{}\n", args.output.display()))?;
    Ok(Outcome::Ok)
}
