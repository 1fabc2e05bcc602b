use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lemr_core::harness::{make_splits, run_design_grid};
use lemr_core::{
    generate_model_set, lemr_run, AcquisitionStrategy, BudgetSpec, BundleOracle, CommitteeMethod,
    ConfigTemplate, EnsembleKind, Execution, ModelSetBundle, RunConfig, SynthSpec,
};

fn bundle(k: usize, n: usize, c: usize) -> ModelSetBundle {
    generate_model_set(&SynthSpec {
        num_models: k,
        num_samples: n,
        num_classes: c,
        target_accuracies: SynthSpec::uniform_accuracies(k, 0.3, 0.6, 1),
        confidence_low: 0.35,
        confidence_high: 0.95,
        seed: 7,
    })
    .unwrap()
}

fn design_grid(c: &mut Criterion) {
    let b = bundle(20, 1000, 4);
    let splits = make_splits(1000, 0.2, 8, 3).unwrap();
    let budgets = [BudgetSpec::Ratio(0.1), BudgetSpec::Ratio(0.3)];
    let mut group = c.benchmark_group("design_grid");
    group.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |bench, &exec| {
            bench
                .iter(|| run_design_grid(&b, &ConfigTemplate::default(), &budgets, &splits, 0, exec).unwrap())
        });
    }
    group.finish();
}

fn single_run(c: &mut Criterion) {
    let b = bundle(50, 2500, 10);
    let split = make_splits(2500, 0.2, 1, 0).unwrap().remove(0);
    let mut group = c.benchmark_group("lemr_run");
    for strategy in [AcquisitionStrategy::Random, AcquisitionStrategy::Entropy] {
        let cfg = RunConfig::new(EnsembleKind::Soft, strategy, CommitteeMethod::Zscore, 100);
        group.bench_function(strategy.as_str(), |bench| {
            bench.iter(|| lemr_run(black_box(&b), &split, &cfg, &mut BundleOracle(&b)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, design_grid, single_run);
criterion_main!(benches);
