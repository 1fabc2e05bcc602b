//! The iterative ranking loop and the final model ranking.
//!
//! One run executes `T = floor(B / b)` rounds. Each round:
//!
//! 1. pseudo-labels every still-unlabelled validation sample with the current
//!    committee (the pseudo-label set is rebuilt from scratch),
//! 2. selects a batch with the configured acquisition strategy,
//! 3. asks the oracle for the batch's labels and moves those samples from the
//!    pseudo-label set to the ground-truth set,
//! 4. re-selects the committee from the full model set.
//!
//! Models are then ranked by accuracy against whatever pseudo-labels and
//! ground truth remain. When no round runs (`T = 0`) the pseudo-labels come
//! from the all-model committee. `final_regenerate` rebuilds the pseudo-labels
//! with the last committee before ranking; `spend_remainder` spends
//! `B - T*b` labels in one extra, smaller round.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::acquisition::{select_batch, AcquisitionStrategy};
use crate::committee::{
    model_accuracies, select_committee, AccuracyMode, CommitteeMethod, GroundTruthSet, ZScoreParams,
};
use crate::ensemble::{generate_pseudo_labels, Committee, EnsembleKind, PseudoLabelSet};
use crate::error::{LemrError, Result};
use crate::model_set::{ModelSetBundle, SplitView};

/// Default per-round batch for budget `budget`: `max(1, ceil(budget / 10))`.
pub fn default_iteration_budget(budget: usize) -> usize {
    budget.div_ceil(10).max(1)
}

/// One point of the design space plus the loop's knobs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub ensemble_kind: EnsembleKind,
    pub acquisition_strategy: AcquisitionStrategy,
    pub committee_method: CommitteeMethod,
    /// Total ground-truth labels allowed (`B`).
    pub budget: usize,
    /// Labels acquired per round (`b`).
    pub iteration_budget: usize,
    pub zscore_params: ZScoreParams,
    pub accuracy_mode: AccuracyMode,
    pub final_regenerate: bool,
    pub spend_remainder: bool,
    pub seed: u64,
}

impl RunConfig {
    /// A config with every knob at its default and `b = max(1, ceil(B/10))`.
    pub fn new(
        ensemble_kind: EnsembleKind,
        acquisition_strategy: AcquisitionStrategy,
        committee_method: CommitteeMethod,
        budget: usize,
    ) -> Self {
        Self {
            ensemble_kind,
            acquisition_strategy,
            committee_method,
            budget,
            iteration_budget: default_iteration_budget(budget),
            zscore_params: ZScoreParams::default(),
            accuracy_mode: AccuracyMode::default(),
            final_regenerate: false,
            spend_remainder: false,
            seed: 0,
        }
    }

    pub fn with_iteration_budget(mut self, b: usize) -> Self {
        self.iteration_budget = b;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// `ensemble/acquisition/committee`, e.g. `hard/uncertainty/zscore`.
    pub fn fingerprint(&self) -> String {
        format!("{}/{}/{}", self.ensemble_kind, self.acquisition_strategy, self.committee_method)
    }

    /// Number of full rounds, `floor(B / b)`.
    pub fn rounds(&self) -> usize {
        self.budget / self.iteration_budget.max(1)
    }

    /// Batch sizes the loop will request, in order.
    pub fn batch_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.iteration_budget; self.rounds()];
        let remainder = self.budget - self.rounds() * self.iteration_budget;
        if self.spend_remainder && remainder > 0 {
            sizes.push(remainder);
        }
        sizes
    }

    pub fn check(&self, validation_len: usize) -> Result<()> {
        if self.iteration_budget < 1 {
            return Err(LemrError::contract("iteration budget must be at least 1"));
        }
        if self.budget > validation_len {
            return Err(LemrError::contract(format!(
                "budget {} exceeds the {validation_len} validation samples",
                self.budget
            )));
        }
        ZScoreParams::new(self.zscore_params.delta, self.zscore_params.tau)?;
        Ok(())
    }
}

/// Source of ground-truth labels for acquired samples.
pub trait LabelOracle {
    fn label(&mut self, sample: usize) -> std::result::Result<usize, String>;
}

impl<F> LabelOracle for F
where
    F: FnMut(usize) -> std::result::Result<usize, String>,
{
    fn label(&mut self, sample: usize) -> std::result::Result<usize, String> {
        self(sample)
    }
}

/// Answers from the labels stored in a bundle.
#[derive(Debug, Clone, Copy)]
pub struct BundleOracle<'a>(pub &'a ModelSetBundle);

impl LabelOracle for BundleOracle<'_> {
    fn label(&mut self, sample: usize) -> std::result::Result<usize, String> {
        self.0.labels().get(sample).copied().ok_or_else(|| format!("no stored label for sample {sample}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankingResult {
    /// Model indices, best first.
    pub ranking: Vec<usize>,
    /// Accuracy used for ranking, indexed by model.
    pub selection_accuracy: Vec<f64>,
    pub labels_acquired: usize,
    /// Committee used by each round, followed by the committee selected after
    /// the last round. A run without rounds records only the all-model committee.
    pub committee_history: Vec<Committee>,
    /// Samples acquired in each round.
    pub batch_history: Vec<Vec<usize>>,
}

/// Model indices ordered by descending score, ties by ascending index.
pub fn order_by_score(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    order
}

/// Ranks every model by accuracy against the label state.
pub fn rank_models(
    bundle: &ModelSetBundle,
    pseudo_labels: &PseudoLabelSet,
    ground_truth: &GroundTruthSet,
    mode: AccuracyMode,
) -> Result<RankingResult> {
    let selection_accuracy = model_accuracies(bundle, pseudo_labels, ground_truth, mode)?;
    Ok(RankingResult {
        ranking: order_by_score(&selection_accuracy),
        selection_accuracy,
        labels_acquired: ground_truth.len(),
        committee_history: Vec::new(),
        batch_history: Vec::new(),
    })
}

fn pseudo_label_pool(
    bundle: &ModelSetBundle,
    committee: &Committee,
    pool: &BTreeSet<usize>,
    kind: EnsembleKind,
) -> Result<PseudoLabelSet> {
    if pool.is_empty() {
        return Ok(PseudoLabelSet::new(bundle.num_classes()));
    }
    let unlabeled: Vec<usize> = pool.iter().copied().collect();
    generate_pseudo_labels(bundle, committee, &unlabeled, kind)
}

/// Runs the full acquisition loop and ranks the models.
pub fn lemr_run(
    bundle: &ModelSetBundle,
    split: &SplitView,
    config: &RunConfig,
    oracle: &mut dyn LabelOracle,
) -> Result<RankingResult> {
    split.check(bundle.num_samples())?;
    config.check(split.validation_len())?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pool: BTreeSet<usize> = split.validation_indices.iter().copied().collect();
    let mut ground_truth = GroundTruthSet::new(bundle.num_classes());
    let mut committee = Committee::all(bundle.num_models())?;
    let mut committee_history = vec![committee.clone()];
    let mut batch_history = Vec::new();
    let mut pseudo_labels = None;

    for size in config.batch_sizes() {
        let mut round_labels = pseudo_label_pool(bundle, &committee, &pool, config.ensemble_kind)?;
        let batch = select_batch(config.acquisition_strategy, &round_labels, size, &mut rng)?;
        for &sample in &batch.selected_indices {
            let class = oracle.label(sample).map_err(|reason| LemrError::Oracle { index: sample, reason })?;
            if class >= bundle.num_classes() {
                return Err(LemrError::Oracle {
                    index: sample,
                    reason: format!("label {class} out of range"),
                });
            }
            ground_truth.insert(sample, class)?;
            round_labels.remove(sample);
            pool.remove(&sample);
        }
        committee = select_committee(
            config.committee_method,
            bundle,
            &round_labels,
            &ground_truth,
            &config.zscore_params,
            config.accuracy_mode,
        )?;
        committee_history.push(committee.clone());
        batch_history.push(batch.selected_indices);
        pseudo_labels = Some(round_labels);
    }

    let pseudo_labels = match pseudo_labels {
        Some(labels) if !config.final_regenerate => labels,
        // no rounds ran, so `committee` is still the all-model committee
        _ => pseudo_label_pool(bundle, &committee, &pool, config.ensemble_kind)?,
    };

    let mut result = rank_models(bundle, &pseudo_labels, &ground_truth, config.accuracy_mode)?;
    result.committee_history = committee_history;
    result.batch_history = batch_history;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle() -> ModelSetBundle {
        // 3 models, 6 samples, C = 2; model 0 perfect, model 1 always 0, model 2 always 1
        let labels = vec![0, 1, 0, 1, 1, 0];
        let mut preds = Vec::new();
        for &y in &labels {
            preds.extend(if y == 0 { [0.8f32, 0.2] } else { [0.3, 0.7] });
        }
        for _ in 0..6 {
            preds.extend([0.6f32, 0.4]);
        }
        for _ in 0..6 {
            preds.extend([0.45f32, 0.55]);
        }
        ModelSetBundle::new("p", 3, 6, 2, preds, labels).unwrap()
    }

    fn split() -> SplitView {
        SplitView::new(vec![0, 1, 2, 3], vec![4, 5], 0)
    }

    #[test]
    fn default_iteration_budget_rule() {
        assert_eq!(default_iteration_budget(0), 1);
        assert_eq!(default_iteration_budget(7), 1);
        assert_eq!(default_iteration_budget(10), 1);
        assert_eq!(default_iteration_budget(11), 2);
        assert_eq!(default_iteration_budget(400), 40);
    }

    #[test]
    fn batch_sizes_with_and_without_remainder() {
        let mut c =
            RunConfig::new(EnsembleKind::Hard, AcquisitionStrategy::Random, CommitteeMethod::Zscore, 7)
                .with_iteration_budget(3);
        assert_eq!(c.batch_sizes(), vec![3, 3]);
        c.spend_remainder = true;
        assert_eq!(c.batch_sizes(), vec![3, 3, 1]);
    }

    #[test]
    fn rank_models_orders_by_accuracy_then_index() {
        assert_eq!(order_by_score(&[0.5, 0.9, 0.7]), vec![1, 2, 0]);
        assert_eq!(order_by_score(&[0.4, 0.4, 0.4, 0.4]), vec![0, 1, 2, 3]);
    }

    #[test]
    fn full_budget_gives_exact_validation_accuracy() {
        let b = bundle();
        let cfg =
            RunConfig::new(EnsembleKind::Soft, AcquisitionStrategy::Entropy, CommitteeMethod::Zscore, 4)
                .with_iteration_budget(2);
        let r = lemr_run(&b, &split(), &cfg, &mut BundleOracle(&b)).unwrap();
        assert_eq!(r.labels_acquired, 4);
        assert_eq!(r.selection_accuracy, vec![1.0, 0.5, 0.5]);
        assert_eq!(r.ranking, vec![0, 1, 2]);
        assert_eq!(r.batch_history.len(), 2);
        assert_eq!(r.committee_history.len(), 3);
    }

    #[test]
    fn zero_budget_uses_all_model_pseudo_labels() {
        let b = bundle();
        for method in CommitteeMethod::ALL {
            let cfg = RunConfig::new(EnsembleKind::Hard, AcquisitionStrategy::Uncertainty, method, 0);
            let r = lemr_run(&b, &split(), &cfg, &mut BundleOracle(&b)).unwrap();
            assert_eq!(r.labels_acquired, 0);
            assert_eq!(r.committee_history, vec![Committee::all(3).unwrap()]);
            assert!(r.batch_history.is_empty());
        }
    }

    #[test]
    fn budget_over_pool_is_rejected() {
        let b = bundle();
        let cfg = RunConfig::new(EnsembleKind::Hard, AcquisitionStrategy::Random, CommitteeMethod::Zscore, 5);
        assert!(matches!(lemr_run(&b, &split(), &cfg, &mut BundleOracle(&b)), Err(LemrError::Contract(_))));
    }

    #[test]
    fn oracle_failure_names_the_index() {
        let b = bundle();
        let cfg =
            RunConfig::new(EnsembleKind::Hard, AcquisitionStrategy::Uncertainty, CommitteeMethod::Zscore, 2)
                .with_iteration_budget(1);
        let mut failing =
            |i: usize| -> std::result::Result<usize, String> { Err(format!("no label for {i}")) };
        match lemr_run(&b, &split(), &cfg, &mut failing) {
            Err(LemrError::Oracle { index, .. }) => assert!(split().validation_indices.contains(&index)),
            other => panic!("expected oracle error, got {other:?}"),
        }
    }

    #[test]
    fn all_model_history_is_constant() {
        let b = bundle();
        let cfg =
            RunConfig::new(EnsembleKind::Soft, AcquisitionStrategy::Margin, CommitteeMethod::AllModel, 3)
                .with_iteration_budget(1);
        let r = lemr_run(&b, &split(), &cfg, &mut BundleOracle(&b)).unwrap();
        assert!(r.committee_history.iter().all(|c| c.len() == 3));
        assert_eq!(r.labels_acquired, 3);
    }
}
