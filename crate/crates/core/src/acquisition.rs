//! Active label acquisition: scoring pseudo-labels and picking the next batch.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::ensemble::{check_simplex, PseudoLabelSet, PSEUDO_LABEL_TOLERANCE};
use crate::error::{LemrError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionStrategy {
    Random,
    Uncertainty,
    Margin,
    Entropy,
}

impl AcquisitionStrategy {
    pub const ALL: [AcquisitionStrategy; 4] = [
        AcquisitionStrategy::Random,
        AcquisitionStrategy::Uncertainty,
        AcquisitionStrategy::Margin,
        AcquisitionStrategy::Entropy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AcquisitionStrategy::Random => "random",
            AcquisitionStrategy::Uncertainty => "uncertainty",
            AcquisitionStrategy::Margin => "margin",
            AcquisitionStrategy::Entropy => "entropy",
        }
    }
}

impl fmt::Display for AcquisitionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AcquisitionStrategy {
    type Err = LemrError;

    fn from_str(s: &str) -> Result<Self> {
        AcquisitionStrategy::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| LemrError::contract(format!("unknown acquisition strategy {s:?}")))
    }
}

/// `1 - max(dist)`.
pub fn score_uncertainty(dist: &[f64]) -> Result<f64> {
    check_simplex(dist, PSEUDO_LABEL_TOLERANCE)?;
    Ok(uncertainty_unchecked(dist))
}

/// Gap between the two largest entries.
pub fn score_margin(dist: &[f64]) -> Result<f64> {
    if dist.len() < 2 {
        return Err(LemrError::contract("margin needs at least two classes"));
    }
    check_simplex(dist, PSEUDO_LABEL_TOLERANCE)?;
    Ok(margin_unchecked(dist))
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn score_entropy(dist: &[f64]) -> Result<f64> {
    check_simplex(dist, PSEUDO_LABEL_TOLERANCE)?;
    Ok(entropy_unchecked(dist))
}

fn uncertainty_unchecked(dist: &[f64]) -> f64 {
    1.0 - dist.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn margin_unchecked(dist: &[f64]) -> f64 {
    let (mut top1, mut top2) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &p in dist {
        if p > top1 {
            top2 = top1;
            top1 = p;
        } else if p > top2 {
            top2 = p;
        }
    }
    top1 - top2
}

fn entropy_unchecked(dist: &[f64]) -> f64 {
    let mut h = 0.0;
    for &p in dist {
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    h
}

/// The samples chosen for annotation in one round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcquisitionBatch {
    pub selected_indices: Vec<usize>,
    /// Score of each selected sample. Random selection records `0.0`.
    pub scores: Vec<f64>,
}

impl AcquisitionBatch {
    pub fn len(&self) -> usize {
        self.selected_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected_indices.is_empty()
    }
}

/// Picks up to `b` samples from `pseudo_labels`.
///
/// Uncertainty and entropy take the highest scores, margin the lowest. Ties go
/// to the lower sample index. Random draws a partial Fisher-Yates shuffle over
/// the keys in ascending order and is the only strategy that touches `rng`.
pub fn select_batch<R: RngCore + ?Sized>(
    strategy: AcquisitionStrategy,
    pseudo_labels: &PseudoLabelSet,
    b: usize,
    rng: &mut R,
) -> Result<AcquisitionBatch> {
    if b < 1 {
        return Err(LemrError::contract("batch size must be at least 1"));
    }
    if pseudo_labels.is_empty() {
        return Err(LemrError::contract("no pseudo-labels to select from"));
    }
    let take = b.min(pseudo_labels.len());
    let (score_fn, descending): (fn(&[f64]) -> f64, bool) = match strategy {
        AcquisitionStrategy::Random => {
            let mut keys: Vec<usize> = pseudo_labels.keys().collect();
            let n = keys.len() as u64;
            for i in 0..take {
                let j = rng.gen_range(i as u64..n) as usize;
                keys.swap(i, j);
            }
            keys.truncate(take);
            return Ok(AcquisitionBatch { scores: vec![0.0; take], selected_indices: keys });
        }
        AcquisitionStrategy::Uncertainty => (uncertainty_unchecked, true),
        AcquisitionStrategy::Entropy => (entropy_unchecked, true),
        AcquisitionStrategy::Margin => {
            if pseudo_labels.num_classes() < 2 {
                return Err(LemrError::contract("margin needs at least two classes"));
            }
            (margin_unchecked, false)
        }
    };
    let mut scored: Vec<(usize, f64)> = pseudo_labels.iter().map(|(i, d)| (i, score_fn(d))).collect();
    // stable: equal scores keep ascending sample order
    scored.sort_by(|a, b| {
        let ord = a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal);
        if descending {
            ord.reverse()
        } else {
            ord
        }
    });
    scored.truncate(take);
    let (selected_indices, scores) = scored.into_iter().unzip();
    Ok(AcquisitionBatch { selected_indices, scores })
}
