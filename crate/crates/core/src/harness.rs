//! Evaluation protocol: seeded splits, budget sweeps, the 16-point design
//! grid, and the minimum-budget search.
//!
//! Cells (config x budget x split) are independent and run through
//! [`exec::map`]; rows are sorted by (config, budget, split) before
//! aggregation, so reports never depend on the execution mode or thread count.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{floor_fraction, BudgetSpec, ConfigTemplate};
use crate::error::{LemrError, Result};
use crate::exec::{self, Execution};
use crate::metrics::evaluate;
use crate::model_set::{ModelSetBundle, SplitView};
use crate::pipeline::{lemr_run, BundleOracle};
use crate::seed;

pub const DEFAULT_VALIDATION_RATIO: f64 = 0.2;
pub const DEFAULT_SPLITS: usize = 50;

/// `n_splits` seeded validation/test splits of `0..num_samples`.
///
/// Split `s` shuffles the indices with a generator seeded by
/// `seed::split_seed(seed, s)`; the first `floor(ratio * num_samples)` go to
/// validation. Both sides are returned in ascending order.
pub fn make_splits(
    num_samples: usize,
    validation_ratio: f64,
    n_splits: usize,
    seed: u64,
) -> Result<Vec<SplitView>> {
    if !(validation_ratio > 0.0 && validation_ratio < 1.0) {
        return Err(LemrError::contract(format!("validation ratio {validation_ratio} must be in (0, 1)")));
    }
    if n_splits < 1 {
        return Err(LemrError::contract("need at least one split"));
    }
    let n_val = floor_fraction(validation_ratio, num_samples);
    if n_val == 0 || n_val >= num_samples {
        return Err(LemrError::contract(format!(
            "ratio {validation_ratio} of {num_samples} samples leaves an empty side"
        )));
    }
    Ok((0..n_splits as u64)
        .map(|split_id| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::split_seed(seed, split_id));
            let mut perm: Vec<usize> = (0..num_samples).collect();
            let n = num_samples as u64;
            for i in 0..num_samples.saturating_sub(1) {
                let j = rng.gen_range(i as u64..n) as usize;
                perm.swap(i, j);
            }
            let mut test = perm.split_off(n_val);
            perm.sort_unstable();
            test.sort_unstable();
            SplitView::new(perm, test, split_id)
        })
        .collect())
}

/// One (config, budget, split) result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub config: String,
    pub ensemble: String,
    pub acquisition: String,
    pub committee: String,
    pub budget: usize,
    pub budget_ratio: f64,
    pub split_id: u64,
    /// Signed test-accuracy gap as a fraction.
    pub optimal_gap: f64,
    pub ranking_correction: Option<f64>,
    pub labels_acquired: usize,
}

/// Per-(config, budget) summary across splits. Standard deviations are
/// population deviations (a single row has deviation 0).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub config: String,
    pub ensemble: String,
    pub acquisition: String,
    pub committee: String,
    pub budget: usize,
    pub budget_ratio: f64,
    pub count: usize,
    pub mean_optimal_gap: f64,
    pub std_optimal_gap: f64,
    pub mean_abs_optimal_gap: f64,
    /// Mean over rows where the correlation is defined; NaN if none are.
    pub mean_ranking_correction: f64,
    pub std_ranking_correction: f64,
    pub correction_count: usize,
    pub mean_labels_acquired: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub rows: Vec<ExperimentRow>,
    pub aggregates: Vec<Aggregate>,
}

fn row_key(row: &ExperimentRow) -> (&str, usize, u64) {
    (row.config.as_str(), row.budget, row.split_id)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Groups rows by (config, budget) and summarizes each group.
/// Rows are sorted in place into (config, budget, split) order.
pub fn aggregate_report(rows: &mut [ExperimentRow]) -> Result<Vec<Aggregate>> {
    if rows.is_empty() {
        return Err(LemrError::contract("cannot aggregate an empty report"));
    }
    rows.sort_by(|a, b| row_key(a).cmp(&row_key(b)));
    let mut groups: BTreeMap<(&str, usize), Vec<&ExperimentRow>> = BTreeMap::new();
    for row in rows.iter() {
        groups.entry((row.config.as_str(), row.budget)).or_default().push(row);
    }
    Ok(groups
        .into_values()
        .map(|group| {
            let first = group[0];
            let gaps: Vec<f64> = group.iter().map(|r| r.optimal_gap).collect();
            let abs_gaps: Vec<f64> = gaps.iter().map(|g| g.abs()).collect();
            let corrections: Vec<f64> = group.iter().filter_map(|r| r.ranking_correction).collect();
            let labels: Vec<f64> = group.iter().map(|r| r.labels_acquired as f64).collect();
            let (mean_optimal_gap, std_optimal_gap) = mean_std(&gaps);
            let (mean_ranking_correction, std_ranking_correction) = mean_std(&corrections);
            Aggregate {
                config: first.config.clone(),
                ensemble: first.ensemble.clone(),
                acquisition: first.acquisition.clone(),
                committee: first.committee.clone(),
                budget: first.budget,
                budget_ratio: first.budget_ratio,
                count: group.len(),
                mean_optimal_gap,
                std_optimal_gap,
                mean_abs_optimal_gap: mean_std(&abs_gaps).0,
                mean_ranking_correction,
                std_ranking_correction,
                correction_count: corrections.len(),
                mean_labels_acquired: mean_std(&labels).0,
            }
        })
        .collect())
}

/// Runs one cell with the bundle's stored labels as the oracle.
pub fn run_cell(
    bundle: &ModelSetBundle,
    template: &ConfigTemplate,
    budget: BudgetSpec,
    split: &SplitView,
    base_seed: u64,
) -> Result<ExperimentRow> {
    let fingerprint = template.fingerprint();
    let validation_len = split.validation_len();
    let resolved = budget.resolve(validation_len)?;
    let wrap = |e: LemrError| LemrError::Cell {
        config: fingerprint.clone(),
        budget: resolved,
        split_id: split.split_id,
        source: Box::new(e),
    };
    let config = template.instantiate(resolved, seed::run_seed(base_seed, split.split_id, &fingerprint));
    let result = lemr_run(bundle, split, &config, &mut BundleOracle(bundle)).map_err(wrap)?;
    let metrics = evaluate(bundle, split, &result).map_err(wrap)?;
    Ok(ExperimentRow {
        config: fingerprint.clone(),
        ensemble: template.ensemble_kind.to_string(),
        acquisition: template.acquisition_strategy.to_string(),
        committee: template.committee_method.to_string(),
        budget: resolved,
        budget_ratio: budget.ratio(validation_len),
        split_id: split.split_id,
        optimal_gap: metrics.optimal_gap,
        ranking_correction: metrics.ranking_correction,
        labels_acquired: result.labels_acquired,
    })
}

/// Runs every (template, budget, split) cell and aggregates.
pub fn run_cells(
    bundle: &ModelSetBundle,
    templates: &[ConfigTemplate],
    budgets: &[BudgetSpec],
    splits: &[SplitView],
    base_seed: u64,
    execution: Execution,
) -> Result<ExperimentReport> {
    let mut cells = Vec::with_capacity(templates.len() * budgets.len() * splits.len());
    for template in templates {
        for &budget in budgets {
            for split in splits {
                cells.push((template, budget, split));
            }
        }
    }
    let results = exec::map(execution, &cells, |&(template, budget, split)| {
        run_cell(bundle, template, budget, split, base_seed)
    });
    let mut rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    let aggregates = aggregate_report(&mut rows)?;
    Ok(ExperimentReport { rows, aggregates })
}

/// One config over a list of budget ratios.
pub fn run_budget_sweep(
    bundle: &ModelSetBundle,
    template: &ConfigTemplate,
    budget_ratios: &[f64],
    splits: &[SplitView],
    base_seed: u64,
    execution: Execution,
) -> Result<ExperimentReport> {
    if let Some(r) = budget_ratios.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(LemrError::contract(format!("budget ratio {r} outside [0, 1]")));
    }
    let budgets: Vec<BudgetSpec> = budget_ratios.iter().map(|&r| BudgetSpec::Ratio(r)).collect();
    run_cells(bundle, std::slice::from_ref(template), &budgets, splits, base_seed, execution)
}

/// All 16 ensemble x acquisition x committee combinations of `base`.
pub fn run_design_grid(
    bundle: &ModelSetBundle,
    base: &ConfigTemplate,
    budgets: &[BudgetSpec],
    splits: &[SplitView],
    base_seed: u64,
    execution: Execution,
) -> Result<ExperimentReport> {
    run_cells(bundle, &base.design_grid(), budgets, splits, base_seed, execution)
}

/// Smallest scanned budget at which every split picks a model with the
/// reference model's test accuracy (split-averaged |gap| exactly 0).
///
/// Scans `0, step, 2*step, ...` below `|D_V|`, then `|D_V|` itself; that last
/// probe spends the remainder when `step` does not divide `|D_V|`. The
/// per-round batch is the template's iteration budget, or `step` if unset.
pub fn min_budget_to_zero_gap(
    bundle: &ModelSetBundle,
    template: &ConfigTemplate,
    splits: &[SplitView],
    step: usize,
    base_seed: u64,
    execution: Execution,
) -> Result<usize> {
    if step < 1 {
        return Err(LemrError::contract("scan step must be at least 1"));
    }
    let validation_len = splits.first().ok_or_else(|| LemrError::contract("no splits"))?.validation_len();
    if splits.iter().any(|s| s.validation_len() != validation_len) {
        return Err(LemrError::contract("splits differ in validation size"));
    }
    let mut probe_template = template.clone();
    probe_template.iteration_budget = Some(template.iteration_budget.unwrap_or(step));

    let mut budget = 0;
    loop {
        let last = budget >= validation_len;
        let budget_now = budget.min(validation_len);
        let mut t = probe_template.clone();
        if last && budget_now % t.iteration_budget.unwrap_or(step) != 0 {
            t.spend_remainder = true;
        }
        let rows = exec::map(execution, splits, |split| {
            run_cell(bundle, &t, BudgetSpec::Absolute(budget_now), split, base_seed)
        });
        let mut all_zero = true;
        for row in rows {
            if row?.optimal_gap != 0.0 {
                all_zero = false;
            }
        }
        if all_zero || last {
            return Ok(budget_now);
        }
        budget += step;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(config: &str, budget: usize, split_id: u64, gap: f64) -> ExperimentRow {
        ExperimentRow {
            config: config.into(),
            ensemble: "hard".into(),
            acquisition: "random".into(),
            committee: "zscore".into(),
            budget,
            budget_ratio: 0.0,
            split_id,
            optimal_gap: gap,
            ranking_correction: Some(1.0),
            labels_acquired: budget,
        }
    }

    #[test]
    fn splits_have_expected_sizes_and_are_deterministic() {
        let a = make_splits(10, 0.2, 3, 7).unwrap();
        assert_eq!(a.len(), 3);
        for s in &a {
            assert_eq!(s.validation_indices.len(), 2);
            assert_eq!(s.test_indices.len(), 8);
            s.check(10).unwrap();
        }
        assert_eq!(a, make_splits(10, 0.2, 3, 7).unwrap());
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn split_contract() {
        assert!(make_splits(10, 0.0, 1, 0).is_err());
        assert!(make_splits(10, 1.0, 1, 0).is_err());
        assert!(make_splits(10, 0.05, 1, 0).is_err());
        assert!(make_splits(10, 0.2, 0, 0).is_err());
    }

    #[test]
    fn aggregate_single_row() {
        let mut rows = vec![row("a", 1, 0, 0.25)];
        let agg = aggregate_report(&mut rows).unwrap();
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].mean_optimal_gap, 0.25);
        assert_eq!(agg[0].std_optimal_gap, 0.0);
    }

    #[test]
    fn aggregate_mean_and_order() {
        let mut rows = vec![row("b", 1, 1, 0.3), row("a", 2, 0, 0.0), row("b", 1, 0, 0.1)];
        let agg = aggregate_report(&mut rows).unwrap();
        assert_eq!(
            rows.iter().map(|r| (r.config.as_str(), r.split_id)).collect::<Vec<_>>(),
            vec![("a", 0), ("b", 0), ("b", 1)]
        );
        assert_eq!(agg.len(), 2);
        assert!((agg[1].mean_optimal_gap - 0.2).abs() < 1e-15);
        assert_eq!(agg[1].count, 2);
        assert!(aggregate_report(&mut []).is_err());
    }

    #[test]
    fn aggregate_skips_undefined_corrections() {
        let mut a = row("a", 1, 0, 0.0);
        a.ranking_correction = None;
        let mut rows = vec![a, row("a", 1, 1, 0.0)];
        let agg = aggregate_report(&mut rows).unwrap();
        assert_eq!(agg[0].correction_count, 1);
        assert_eq!(agg[0].mean_ranking_correction, 1.0);
    }
}
