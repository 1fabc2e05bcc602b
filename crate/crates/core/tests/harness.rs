use lemr_core::harness::{make_splits, min_budget_to_zero_gap, run_budget_sweep, run_design_grid};
use lemr_core::{
    generate_model_set, BudgetSpec, CommitteeMethod, ConfigTemplate, Execution, ModelSetBundle, SynthSpec,
};

fn synth(k: usize, n: usize, c: usize, seed: u64) -> ModelSetBundle {
    generate_model_set(&SynthSpec {
        num_models: k,
        num_samples: n,
        num_classes: c,
        target_accuracies: SynthSpec::uniform_accuracies(k, 0.4, 0.9, seed),
        confidence_low: 1.0 / c as f64 + 0.05,
        confidence_high: 0.95,
        seed,
    })
    .unwrap()
}

#[test]
fn default_split_sizes() {
    let splits = make_splits(2000, 0.2, 50, 0).unwrap();
    assert_eq!(splits.len(), 50);
    for (s, split) in splits.iter().enumerate() {
        assert_eq!(split.split_id, s as u64);
        assert_eq!(split.validation_len(), 400);
        assert_eq!(split.test_indices.len(), 1600);
        split.check(2000).unwrap();
    }
    assert_ne!(splits[0].validation_indices, splits[1].validation_indices);
    assert_eq!(splits, make_splits(2000, 0.2, 50, 0).unwrap());
}

#[test]
fn design_grid_row_count() {
    let b = synth(6, 200, 3, 1);
    let splits = make_splits(200, 0.2, 2, 1).unwrap();
    let report = run_design_grid(
        &b,
        &ConfigTemplate::default(),
        &[BudgetSpec::Ratio(0.25)],
        &splits,
        0,
        Execution::Sequential,
    )
    .unwrap();
    assert_eq!(report.rows.len(), 32);
    assert_eq!(report.aggregates.len(), 16);
    assert!(report.rows.iter().all(|r| r.budget == 10 && r.labels_acquired == 10));
}

#[test]
fn zero_ratio_is_committee_independent_and_full_ratio_is_exact() {
    let b = synth(10, 500, 4, 2);
    let splits = make_splits(500, 0.2, 3, 2).unwrap();
    let mut by_method = Vec::new();
    for method in CommitteeMethod::ALL {
        let t = ConfigTemplate { committee_method: method, iteration_budget: Some(10), ..Default::default() };
        by_method.push(run_budget_sweep(&b, &t, &[0.0, 1.0], &splits, 5, Execution::Sequential).unwrap());
    }
    for (z, a) in by_method[0].rows.iter().zip(&by_method[1].rows) {
        if z.budget == 0 {
            assert_eq!(z.optimal_gap, a.optimal_gap);
            assert_eq!(z.ranking_correction, a.ranking_correction);
        } else {
            for r in [z, a] {
                assert_eq!(r.optimal_gap, 0.0);
                assert!((r.ranking_correction.unwrap() - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn parallel_and_sequential_agree() {
    let b = synth(8, 300, 3, 3);
    let splits = make_splits(300, 0.2, 4, 3).unwrap();
    let budgets = [BudgetSpec::Ratio(0.1), BudgetSpec::Absolute(30)];
    let seq =
        run_design_grid(&b, &ConfigTemplate::default(), &budgets, &splits, 9, Execution::Sequential).unwrap();
    let par =
        run_design_grid(&b, &ConfigTemplate::default(), &budgets, &splits, 9, Execution::Parallel).unwrap();
    assert_eq!(seq, par);
}

#[test]
fn min_budget_is_monotone_in_scan_and_bounded() {
    let b = synth(8, 150, 3, 4);
    let splits = make_splits(150, 0.2, 3, 4).unwrap();
    let found =
        min_budget_to_zero_gap(&b, &ConfigTemplate::default(), &splits, 5, 0, Execution::Sequential).unwrap();
    assert!(found <= 30);
    assert_eq!(found % 5, 0);
    // the reported budget really does zero every split
    let t = ConfigTemplate { iteration_budget: Some(5), ..Default::default() };
    let report = run_budget_sweep(&b, &t, &[found as f64 / 30.0], &splits, 0, Execution::Sequential).unwrap();
    assert!(report.rows.iter().all(|r| r.optimal_gap == 0.0));
}

#[test]
fn min_budget_with_non_dividing_step_reaches_full_set() {
    let b = synth(6, 60, 2, 5);
    let splits = make_splits(60, 0.2, 2, 5).unwrap();
    let found =
        min_budget_to_zero_gap(&b, &ConfigTemplate::default(), &splits, 7, 0, Execution::Sequential).unwrap();
    assert!(found <= 12);
    assert!(found == 12 || found.is_multiple_of(7));
}

#[test]
fn bad_inputs_are_rejected() {
    let b = synth(3, 50, 2, 6);
    assert!(make_splits(50, 0.0, 1, 0).is_err());
    assert!(make_splits(50, 0.2, 0, 0).is_err());
    let splits = make_splits(50, 0.2, 1, 0).unwrap();
    assert!(
        run_budget_sweep(&b, &ConfigTemplate::default(), &[1.5], &splits, 0, Execution::Sequential).is_err()
    );
    assert!(
        min_budget_to_zero_gap(&b, &ConfigTemplate::default(), &splits, 0, 0, Execution::Sequential).is_err()
    );
}
