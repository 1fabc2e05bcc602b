//! Optimal gap and ranking correction against the fully labelled reference.

use serde::Serialize;

use crate::error::{LemrError, Result};
use crate::model_set::{ModelSetBundle, SplitView};
use crate::pipeline::{order_by_score, RankingResult};

/// Per-model accuracy on the fully labelled validation set, and its ranking.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationRanking {
    pub accuracy: Vec<f64>,
    pub ranking: Vec<usize>,
}

impl ValidationRanking {
    /// The reference "best" model: highest accuracy, lowest index on ties.
    pub fn best(&self) -> usize {
        self.ranking[0]
    }
}

fn accuracy_on(bundle: &ModelSetBundle, indices: &[usize], model: usize) -> f64 {
    let hits = indices.iter().filter(|&&i| bundle.predicted_class(model, i) == bundle.label(i)).count();
    hits as f64 / indices.len() as f64
}

pub fn full_validation_ranking(bundle: &ModelSetBundle, split: &SplitView) -> Result<ValidationRanking> {
    split.check(bundle.num_samples())?;
    let accuracy: Vec<f64> =
        (0..bundle.num_models()).map(|k| accuracy_on(bundle, &split.validation_indices, k)).collect();
    Ok(ValidationRanking { ranking: order_by_score(&accuracy), accuracy })
}

/// Fraction of test samples on which `model`'s argmax matches the label.
pub fn test_accuracy(bundle: &ModelSetBundle, split: &SplitView, model: usize) -> Result<f64> {
    if split.test_indices.is_empty() {
        return Err(LemrError::contract("split has no test samples"));
    }
    if model >= bundle.num_models() {
        return Err(LemrError::contract(format!("model {model} out of range")));
    }
    if let Some(&i) = split.test_indices.iter().find(|&&i| i >= bundle.num_samples()) {
        return Err(LemrError::contract(format!("test index {i} out of range")));
    }
    Ok(accuracy_on(bundle, &split.test_indices, model))
}

/// Test accuracy of the reference pick minus that of the method's top model.
/// Signed: negative when the method's pick does better on test.
pub fn optimal_gap(bundle: &ModelSetBundle, split: &SplitView, method: &RankingResult) -> Result<f64> {
    let reference = full_validation_ranking(bundle, split)?;
    gap_against(bundle, split, &reference, method)
}

fn gap_against(
    bundle: &ModelSetBundle,
    split: &SplitView,
    reference: &ValidationRanking,
    method: &RankingResult,
) -> Result<f64> {
    let pick = *method.ranking.first().ok_or_else(|| LemrError::contract("method ranking is empty"))?;
    let best = reference.best();
    if pick == best {
        return Ok(0.0);
    }
    Ok(test_accuracy(bundle, split, best)? - test_accuracy(bundle, split, pick)?)
}

/// 1-based ranks, ascending by value; tied values share their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average-rank tie handling.
pub fn spearman(scores_a: &[f64], scores_b: &[f64]) -> Result<f64> {
    if scores_a.len() != scores_b.len() {
        return Err(LemrError::contract(format!(
            "score vectors differ in length ({} vs {})",
            scores_a.len(),
            scores_b.len()
        )));
    }
    if scores_a.len() < 2 {
        return Err(LemrError::UndefinedCorrelation("need at least two items".into()));
    }
    pearson(&average_ranks(scores_a), &average_ranks(scores_b))
        .ok_or_else(|| LemrError::UndefinedCorrelation("a score vector is constant".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalMetrics {
    /// Signed gap as a fraction; the harness reports it in percentage points.
    pub optimal_gap: f64,
    /// `None` when the correlation is undefined (a constant score vector).
    pub ranking_correction: Option<f64>,
    pub chosen_model: usize,
    pub reference_model: usize,
}

/// Scores a finished run against the fully labelled split.
pub fn evaluate(bundle: &ModelSetBundle, split: &SplitView, method: &RankingResult) -> Result<EvalMetrics> {
    let reference = full_validation_ranking(bundle, split)?;
    let optimal_gap = gap_against(bundle, split, &reference, method)?;
    let ranking_correction = match spearman(&reference.accuracy, &method.selection_accuracy) {
        Ok(r) => Some(r),
        Err(LemrError::UndefinedCorrelation(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(EvalMetrics {
        optimal_gap,
        ranking_correction,
        chosen_model: method.ranking[0],
        reference_model: reference.best(),
    })
}
