//! Saved model outputs: the prediction tensor of a model set plus ground truth.
//!
//! Predictions are kept at dump precision (`f32`, model-major, then sample,
//! then class). Every read used by the ranking math goes through
//! [`ModelSetBundle::prob`], which divides by the row sum in `f64`, so rows that
//! drifted within the simplex tolerance are renormalized on the fly.

use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use crate::error::{LemrError, Result};

/// Absolute tolerance on a prediction row's sum.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// Rows whose sum drifts further than this from 1 are rewritten when a bundle
/// is built. A rewritten `f32` row lands within `2^-24` of 1, below this bound,
/// so rewriting is idempotent.
pub const RENORMALIZE_THRESHOLD: f64 = 1e-7;

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (c, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = c;
        }
    }
    best
}

/// The saved outputs of `K` models on a pool of samples, with ground truth.
#[derive(Clone, PartialEq)]
pub struct ModelSetBundle {
    name: String,
    num_models: usize,
    num_samples: usize,
    num_classes: usize,
    predictions: Vec<f32>,
    labels: Vec<usize>,
    row_sums: Vec<f64>,
    predicted: Vec<u32>,
}

impl fmt::Debug for ModelSetBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSetBundle")
            .field("name", &self.name)
            .field("num_models", &self.num_models)
            .field("num_samples", &self.num_samples)
            .field("num_classes", &self.num_classes)
            .finish_non_exhaustive()
    }
}

impl ModelSetBundle {
    /// Builds a bundle, renormalizing rows within tolerance, and rejects it if
    /// any invariant is violated.
    pub fn new(
        name: impl Into<String>,
        num_models: usize,
        num_samples: usize,
        num_classes: usize,
        mut predictions: Vec<f32>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        check_lengths(num_models, num_samples, num_classes, &predictions, &labels)?;
        if num_classes > 0 {
            for row in predictions.chunks_exact_mut(num_classes) {
                renormalize_row(row);
            }
        }
        let bundle = Self::from_raw(name, num_models, num_samples, num_classes, predictions, labels)?;
        let report = validate_bundle(&bundle);
        if let Some(first) = report.violations.first() {
            return Err(LemrError::contract(format!(
                "invalid bundle ({} violations), first: {first}",
                report.violations.len()
            )));
        }
        Ok(bundle)
    }

    /// Builds a bundle without renormalizing or checking invariants. Only the
    /// tensor lengths are checked. Use [`validate_bundle`] on the result.
    pub fn from_raw(
        name: impl Into<String>,
        num_models: usize,
        num_samples: usize,
        num_classes: usize,
        predictions: Vec<f32>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        check_lengths(num_models, num_samples, num_classes, &predictions, &labels)?;
        let (row_sums, predicted) = if num_classes == 0 {
            (vec![0.0; num_models * num_samples], vec![0; num_models * num_samples])
        } else {
            predictions
                .chunks_exact(num_classes)
                .map(|row| {
                    let sum: f64 = row.iter().map(|&x| f64::from(x)).sum();
                    (sum, argmax(row) as u32)
                })
                .unzip()
        };
        Ok(Self {
            name: name.into(),
            num_models,
            num_samples,
            num_classes,
            predictions,
            labels,
            row_sums,
            predicted,
        })
    }

    /// Convenience constructor from `f64` rows, stored at `f32` precision.
    pub fn from_f64(
        name: impl Into<String>,
        num_models: usize,
        num_samples: usize,
        num_classes: usize,
        predictions: &[f64],
        labels: Vec<usize>,
    ) -> Result<Self> {
        let predictions = predictions.iter().map(|&x| x as f32).collect();
        Self::new(name, num_models, num_samples, num_classes, predictions, labels)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_models(&self) -> usize {
        self.num_models
    }

    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// The stored tensor, model-major.
    pub fn raw_predictions(&self) -> &[f32] {
        &self.predictions
    }

    pub fn raw_row(&self, model: usize, sample: usize) -> &[f32] {
        let start = self.offset(model, sample);
        &self.predictions[start..start + self.num_classes]
    }

    /// Normalized probability of `class` under `model` on `sample`.
    #[inline]
    pub fn prob(&self, model: usize, sample: usize, class: usize) -> f64 {
        let row = model * self.num_samples + sample;
        f64::from(self.predictions[row * self.num_classes + class]) / self.row_sums[row]
    }

    /// Predicted class of `model` on `sample` (argmax, lowest index on ties).
    #[inline]
    pub fn predicted_class(&self, model: usize, sample: usize) -> usize {
        self.predicted[model * self.num_samples + sample] as usize
    }

    pub fn label(&self, sample: usize) -> usize {
        self.labels[sample]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    fn offset(&self, model: usize, sample: usize) -> usize {
        (model * self.num_samples + sample) * self.num_classes
    }
}

fn check_lengths(
    num_models: usize,
    num_samples: usize,
    num_classes: usize,
    predictions: &[f32],
    labels: &[usize],
) -> Result<()> {
    let expected = num_models
        .checked_mul(num_samples)
        .and_then(|x| x.checked_mul(num_classes))
        .ok_or_else(|| LemrError::contract("bundle dimensions overflow"))?;
    if predictions.len() != expected {
        return Err(LemrError::contract(format!(
            "prediction tensor has {} entries, expected {num_models}x{num_samples}x{num_classes} = {expected}",
            predictions.len()
        )));
    }
    if labels.len() != num_samples {
        return Err(LemrError::contract(format!("{} labels for {num_samples} samples", labels.len())));
    }
    Ok(())
}

/// Rescales a row whose sum is within tolerance but visibly off 1.
/// Rows outside tolerance are left for validation to report.
pub(crate) fn renormalize_row(row: &mut [f32]) {
    let sum: f64 = row.iter().map(|&x| f64::from(x)).sum();
    let drift = (sum - 1.0).abs();
    if drift > RENORMALIZE_THRESHOLD && drift <= SIMPLEX_TOLERANCE {
        for x in row.iter_mut() {
            *x = (f64::from(*x) / sum) as f32;
        }
    }
}

/// One broken invariant.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NoModels,
    TooFewClasses { num_classes: usize },
    NoSamples,
    NegativeEntry { model: usize, sample: usize, class: usize, value: f64 },
    RowSum { model: usize, sample: usize, sum: f64 },
    LabelOutOfRange { sample: usize, label: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoModels => write!(f, "bundle has no models"),
            Violation::TooFewClasses { num_classes } => {
                write!(f, "bundle has {num_classes} classes, need at least 2")
            }
            Violation::NoSamples => write!(f, "bundle has no samples"),
            Violation::NegativeEntry { model, sample, class, value } => {
                write!(f, "model {model}, sample {sample}: entry {class} is {value} (must be >= 0)")
            }
            Violation::RowSum { model, sample, sum } => {
                write!(f, "model {model}, sample {sample}: row sums to {sum}")
            }
            Violation::LabelOutOfRange { sample, label } => {
                write!(f, "sample {sample}: label {label} out of range")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lists every invariant violation in `bundle`. Never fails.
pub fn validate_bundle(bundle: &ModelSetBundle) -> ValidationReport {
    let mut violations = Vec::new();
    if bundle.num_models == 0 {
        violations.push(Violation::NoModels);
    }
    if bundle.num_classes < 2 {
        violations.push(Violation::TooFewClasses { num_classes: bundle.num_classes });
    }
    if bundle.num_samples == 0 {
        violations.push(Violation::NoSamples);
    }
    if bundle.num_classes > 0 {
        for (row_index, row) in bundle.predictions.chunks_exact(bundle.num_classes).enumerate() {
            let model = row_index / bundle.num_samples;
            let sample = row_index % bundle.num_samples;
            for (class, &x) in row.iter().enumerate() {
                // `!(x >= 0)` also catches NaN
                if !(x >= 0.0) {
                    violations.push(Violation::NegativeEntry { model, sample, class, value: f64::from(x) });
                }
            }
            let sum = bundle.row_sums[row_index];
            if !((sum - 1.0).abs() <= SIMPLEX_TOLERANCE) {
                violations.push(Violation::RowSum { model, sample, sum });
            }
        }
    }
    for (sample, &label) in bundle.labels.iter().enumerate() {
        if label >= bundle.num_classes {
            violations.push(Violation::LabelOutOfRange { sample, label });
        }
    }
    ValidationReport { violations }
}

/// Disjoint validation/test index sets drawn from a bundle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitView {
    pub validation_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub split_id: u64,
}

impl SplitView {
    pub fn new(validation_indices: Vec<usize>, test_indices: Vec<usize>, split_id: u64) -> Self {
        Self { validation_indices, test_indices, split_id }
    }

    /// Checks disjointness, range, and non-emptiness against `num_samples`.
    pub fn check(&self, num_samples: usize) -> Result<()> {
        if self.validation_indices.is_empty() || self.test_indices.is_empty() {
            return Err(LemrError::contract("split has an empty side"));
        }
        let mut seen = HashSet::with_capacity(self.validation_indices.len());
        for &i in &self.validation_indices {
            if i >= num_samples {
                return Err(LemrError::contract(format!("validation index {i} out of range")));
            }
            if !seen.insert(i) {
                return Err(LemrError::contract(format!("validation index {i} repeated")));
            }
        }
        let mut seen_test = HashSet::with_capacity(self.test_indices.len());
        for &i in &self.test_indices {
            if i >= num_samples {
                return Err(LemrError::contract(format!("test index {i} out of range")));
            }
            if seen.contains(&i) {
                return Err(LemrError::contract(format!("index {i} on both sides of the split")));
            }
            if !seen_test.insert(i) {
                return Err(LemrError::contract(format!("test index {i} repeated")));
            }
        }
        Ok(())
    }

    pub fn validation_len(&self) -> usize {
        self.validation_indices.len()
    }
}
