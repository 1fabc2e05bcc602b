//! Pseudo-label generation from a model committee.
//!
//! Both variants accumulate in `f64` over the committee in ascending model
//! index and divide once by the committee size, so the output does not depend
//! on the order members were listed in.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{LemrError, Result};
use crate::exec;
use crate::model_set::{argmax, ModelSetBundle};

/// Tolerance on a pseudo-label's sum.
pub const PSEUDO_LABEL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    /// Mean of one-hot votes.
    Hard,
    /// Mean of probability rows.
    Soft,
}

impl EnsembleKind {
    pub const ALL: [EnsembleKind; 2] = [EnsembleKind::Hard, EnsembleKind::Soft];

    pub fn as_str(self) -> &'static str {
        match self {
            EnsembleKind::Hard => "hard",
            EnsembleKind::Soft => "soft",
        }
    }
}

impl fmt::Display for EnsembleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnsembleKind {
    type Err = LemrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(EnsembleKind::Hard),
            "soft" => Ok(EnsembleKind::Soft),
            other => Err(LemrError::contract(format!("unknown ensemble kind {other:?}"))),
        }
    }
}

/// A nonempty, duplicate-free set of model indices, kept in ascending order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct Committee(Vec<usize>);

impl Committee {
    pub fn new(mut model_indices: Vec<usize>, num_models: usize) -> Result<Self> {
        if model_indices.is_empty() {
            return Err(LemrError::contract("committee is empty"));
        }
        model_indices.sort_unstable();
        if model_indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(LemrError::contract("committee lists a model twice"));
        }
        if let Some(&last) = model_indices.last() {
            if last >= num_models {
                return Err(LemrError::contract(format!(
                    "committee member {last} out of range for {num_models} models"
                )));
            }
        }
        Ok(Committee(model_indices))
    }

    /// Every model in `0..num_models`.
    pub fn all(num_models: usize) -> Result<Self> {
        Self::new((0..num_models).collect(), num_models)
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn check_against(&self, bundle: &ModelSetBundle) -> Result<()> {
        match self.0.last() {
            Some(&last) if last < bundle.num_models() => Ok(()),
            Some(&last) => Err(LemrError::contract(format!(
                "committee member {last} out of range for {} models",
                bundle.num_models()
            ))),
            None => Err(LemrError::contract("committee is empty")),
        }
    }
}

fn check_sample(bundle: &ModelSetBundle, sample: usize) -> Result<()> {
    if sample >= bundle.num_samples() {
        return Err(LemrError::contract(format!("sample {sample} out of range")));
    }
    Ok(())
}

/// Mean of the committee's one-hot predictions on `sample`.
pub fn hard_ensemble(bundle: &ModelSetBundle, committee: &Committee, sample: usize) -> Result<Vec<f64>> {
    committee.check_against(bundle)?;
    check_sample(bundle, sample)?;
    let mut votes = vec![0u32; bundle.num_classes()];
    for &k in committee.members() {
        votes[bundle.predicted_class(k, sample)] += 1;
    }
    let n = committee.len() as f64;
    Ok(votes.into_iter().map(|v| f64::from(v) / n).collect())
}

/// Mean of the committee's probability rows on `sample`.
pub fn soft_ensemble(bundle: &ModelSetBundle, committee: &Committee, sample: usize) -> Result<Vec<f64>> {
    committee.check_against(bundle)?;
    check_sample(bundle, sample)?;
    let mut acc = vec![0.0f64; bundle.num_classes()];
    for &k in committee.members() {
        for (c, slot) in acc.iter_mut().enumerate() {
            *slot += bundle.prob(k, sample, c);
        }
    }
    let n = committee.len() as f64;
    for slot in &mut acc {
        *slot /= n;
    }
    Ok(acc)
}

pub fn ensemble(
    bundle: &ModelSetBundle,
    committee: &Committee,
    sample: usize,
    kind: EnsembleKind,
) -> Result<Vec<f64>> {
    match kind {
        EnsembleKind::Hard => hard_ensemble(bundle, committee, sample),
        EnsembleKind::Soft => soft_ensemble(bundle, committee, sample),
    }
}

/// Pseudo-label distributions keyed by sample index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PseudoLabelSet {
    num_classes: usize,
    entries: BTreeMap<usize, Vec<f64>>,
}

impl PseudoLabelSet {
    pub fn new(num_classes: usize) -> Self {
        Self { num_classes, entries: BTreeMap::new() }
    }

    /// Inserts a distribution after checking it is a simplex over the set's classes.
    pub fn insert(&mut self, sample: usize, dist: Vec<f64>) -> Result<()> {
        if dist.len() != self.num_classes {
            return Err(LemrError::contract(format!(
                "pseudo-label for sample {sample} has {} classes, expected {}",
                dist.len(),
                self.num_classes
            )));
        }
        check_simplex(&dist, PSEUDO_LABEL_TOLERANCE)?;
        self.entries.insert(sample, dist);
        Ok(())
    }

    pub fn get(&self, sample: usize) -> Option<&[f64]> {
        self.entries.get(&sample).map(Vec::as_slice)
    }

    pub fn remove(&mut self, sample: usize) -> Option<Vec<f64>> {
        self.entries.remove(&sample)
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

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Entries in ascending sample order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> + '_ {
        self.entries.iter().map(|(&i, d)| (i, d.as_slice()))
    }

    /// Sample indices in ascending order.
    pub fn keys(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.keys().copied()
    }

    /// Modal (argmax) class of each entry, in ascending sample order.
    pub fn modal_classes(&self) -> Vec<(usize, usize)> {
        self.entries.iter().map(|(&i, d)| (i, argmax(d))).collect()
    }
}

/// Checks nonnegativity and the sum of `dist` against `tolerance`.
pub fn check_simplex(dist: &[f64], tolerance: f64) -> Result<()> {
    if dist.is_empty() {
        return Err(LemrError::contract("empty distribution"));
    }
    if let Some(x) = dist.iter().find(|&&x| !(x >= 0.0)) {
        return Err(LemrError::contract(format!("distribution has entry {x}")));
    }
    let sum: f64 = dist.iter().sum();
    if !((sum - 1.0).abs() <= tolerance) {
        return Err(LemrError::contract(format!("distribution sums to {sum}")));
    }
    Ok(())
}

/// Runs the configured ensemble on every index in `unlabeled`.
pub fn generate_pseudo_labels(
    bundle: &ModelSetBundle,
    committee: &Committee,
    unlabeled: &[usize],
    kind: EnsembleKind,
) -> Result<PseudoLabelSet> {
    if unlabeled.is_empty() {
        return Err(LemrError::contract("no unlabeled samples to pseudo-label"));
    }
    let work = unlabeled.len() * committee.len() * bundle.num_classes();
    let dists = exec::map_range(unlabeled.len(), work, |j| ensemble(bundle, committee, unlabeled[j], kind));
    let mut set = PseudoLabelSet::new(bundle.num_classes());
    for (&sample, dist) in unlabeled.iter().zip(dists) {
        set.insert(sample, dist?)?;
    }
    Ok(set)
}
