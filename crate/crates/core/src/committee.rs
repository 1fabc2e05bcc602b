//! Model committee selection from the current label state.
//!
//! The Z-score rule is the modified Z-score: median-centred and scaled by the
//! median absolute deviation (MAD). A model stays in the committee when its
//! score is at least `tau`; with the default `tau = -3.5` only extreme low
//! outliers are dropped.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ensemble::{Committee, PseudoLabelSet};
use crate::error::{LemrError, Result};
use crate::exec;
use crate::model_set::ModelSetBundle;

/// Ground-truth labels acquired so far, keyed by sample index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruthSet {
    num_classes: usize,
    entries: BTreeMap<usize, usize>,
}

impl GroundTruthSet {
    pub fn new(num_classes: usize) -> Self {
        Self { num_classes, entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, sample: usize, class: usize) -> Result<()> {
        if class >= self.num_classes {
            return Err(LemrError::contract(format!(
                "label {class} for sample {sample} out of range [0, {})",
                self.num_classes
            )));
        }
        self.entries.insert(sample, class);
        Ok(())
    }

    pub fn get(&self, sample: usize) -> Option<usize> {
        self.entries.get(&sample).copied()
    }

    pub fn contains(&self, sample: usize) -> bool {
        self.entries.contains_key(&sample)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.entries.iter().map(|(&i, &c)| (i, c))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZScoreParams {
    /// Scaling constant; must be positive.
    pub delta: f64,
    /// Keep-threshold on the scaled score.
    pub tau: f64,
}

impl ZScoreParams {
    pub const DEFAULT_DELTA: f64 = 0.6745;
    pub const DEFAULT_TAU: f64 = -3.5;

    pub fn new(delta: f64, tau: f64) -> Result<Self> {
        if !(delta > 0.0) || !tau.is_finite() || !delta.is_finite() {
            return Err(LemrError::contract(format!(
                "z-score params need finite delta > 0 and finite tau, got delta={delta}, tau={tau}"
            )));
        }
        Ok(Self { delta, tau })
    }
}

impl Default for ZScoreParams {
    fn default() -> Self {
        Self { delta: Self::DEFAULT_DELTA, tau: Self::DEFAULT_TAU }
    }
}

/// How pseudo-labelled samples count toward a model's accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyMode {
    /// 1 when the model's class equals the pseudo-label's argmax.
    #[default]
    Modal,
    /// The pseudo-label's mass on the model's class.
    Expected,
}

impl AccuracyMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AccuracyMode::Modal => "modal",
            AccuracyMode::Expected => "expected",
        }
    }
}

impl fmt::Display for AccuracyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AccuracyMode {
    type Err = LemrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "modal" => Ok(AccuracyMode::Modal),
            "expected" => Ok(AccuracyMode::Expected),
            other => Err(LemrError::contract(format!("unknown accuracy mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommitteeMethod {
    Zscore,
    AllModel,
}

impl CommitteeMethod {
    pub const ALL: [CommitteeMethod; 2] = [CommitteeMethod::Zscore, CommitteeMethod::AllModel];

    pub fn as_str(self) -> &'static str {
        match self {
            CommitteeMethod::Zscore => "zscore",
            CommitteeMethod::AllModel => "all_model",
        }
    }
}

impl fmt::Display for CommitteeMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CommitteeMethod {
    type Err = LemrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zscore" => Ok(CommitteeMethod::Zscore),
            "all_model" | "all-model" => Ok(CommitteeMethod::AllModel),
            other => Err(LemrError::contract(format!("unknown committee method {other:?}"))),
        }
    }
}

/// Label state with the modal class of each pseudo-label resolved once.
struct LabelView<'a> {
    pseudo: Vec<(usize, usize, &'a [f64])>,
    ground: Vec<(usize, usize)>,
}

impl<'a> LabelView<'a> {
    fn new(pseudo_labels: &'a PseudoLabelSet, ground_truth: &GroundTruthSet) -> Result<Self> {
        if pseudo_labels.is_empty() && ground_truth.is_empty() {
            return Err(LemrError::contract("accuracy needs at least one labelled sample"));
        }
        if let Some((i, _)) = ground_truth.iter().find(|&(i, _)| pseudo_labels.contains(i)) {
            return Err(LemrError::contract(format!(
                "sample {i} is in both the pseudo-label and ground-truth sets"
            )));
        }
        let pseudo = pseudo_labels.iter().map(|(i, d)| (i, crate::model_set::argmax(d), d)).collect();
        Ok(Self { pseudo, ground: ground_truth.iter().collect() })
    }

    fn total(&self) -> usize {
        self.pseudo.len() + self.ground.len()
    }

    /// Pseudo terms are summed in ascending sample order, then the ground-truth
    /// count is added, then the total is divided once.
    fn accuracy(&self, bundle: &ModelSetBundle, model: usize, mode: AccuracyMode) -> f64 {
        let ground_hits = self.ground.iter().filter(|&&(j, y)| bundle.predicted_class(model, j) == y).count();
        let total = self.total() as f64;
        match mode {
            AccuracyMode::Modal => {
                let pseudo_hits = self
                    .pseudo
                    .iter()
                    .filter(|&&(i, modal, _)| bundle.predicted_class(model, i) == modal)
                    .count();
                (pseudo_hits + ground_hits) as f64 / total
            }
            AccuracyMode::Expected => {
                let mut mass = 0.0;
                for &(i, _, dist) in &self.pseudo {
                    mass += dist[bundle.predicted_class(model, i)];
                }
                (mass + ground_hits as f64) / total
            }
        }
    }
}

/// Accuracy of `model` against the combined pseudo-label and ground-truth state.
pub fn model_accuracy(
    bundle: &ModelSetBundle,
    model: usize,
    pseudo_labels: &PseudoLabelSet,
    ground_truth: &GroundTruthSet,
    mode: AccuracyMode,
) -> Result<f64> {
    if model >= bundle.num_models() {
        return Err(LemrError::contract(format!("model {model} out of range")));
    }
    let view = LabelView::new(pseudo_labels, ground_truth)?;
    Ok(view.accuracy(bundle, model, mode))
}

/// [`model_accuracy`] for every model, in model order.
pub fn model_accuracies(
    bundle: &ModelSetBundle,
    pseudo_labels: &PseudoLabelSet,
    ground_truth: &GroundTruthSet,
    mode: AccuracyMode,
) -> Result<Vec<f64>> {
    let view = LabelView::new(pseudo_labels, ground_truth)?;
    let work = bundle.num_models() * view.total();
    Ok(exec::map_range(bundle.num_models(), work, |k| view.accuracy(bundle, k, mode)))
}

/// Median; the mean of the two middle values when the length is even.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let n = sorted.len();
    Some(if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 })
}

/// Keeps models whose modified Z-score is at least `params.tau`.
///
/// Falls back to every model when the MAD is zero or nothing passes.
pub fn zscore_select(accuracies: &[f64], params: &ZScoreParams) -> Result<Committee> {
    let k = accuracies.len();
    let center = median(accuracies).ok_or_else(|| LemrError::contract("no models to select from"))?;
    let deviations: Vec<f64> = accuracies.iter().map(|a| (a - center).abs()).collect();
    let mad = median(&deviations).unwrap_or(0.0);
    if mad == 0.0 {
        return Committee::all(k);
    }
    let kept: Vec<usize> = accuracies
        .iter()
        .enumerate()
        .filter(|&(_, &a)| params.delta * (a - center) / mad >= params.tau)
        .map(|(i, _)| i)
        .collect();
    if kept.is_empty() {
        Committee::all(k)
    } else {
        Committee::new(kept, k)
    }
}

pub fn all_model_select(bundle: &ModelSetBundle) -> Result<Committee> {
    Committee::all(bundle.num_models())
}

/// Chooses the next committee from the full model set.
pub fn select_committee(
    method: CommitteeMethod,
    bundle: &ModelSetBundle,
    pseudo_labels: &PseudoLabelSet,
    ground_truth: &GroundTruthSet,
    params: &ZScoreParams,
    mode: AccuracyMode,
) -> Result<Committee> {
    match method {
        CommitteeMethod::AllModel => all_model_select(bundle),
        CommitteeMethod::Zscore => {
            let acc = model_accuracies(bundle, pseudo_labels, ground_truth, mode)?;
            zscore_select(&acc, params)
        }
    }
}
