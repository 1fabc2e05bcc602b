//! Synthetic model sets with controlled per-model accuracy.
//!
//! Each sample gets a uniform ground-truth class. Model `k` then "intends" the
//! true class with probability `p_k` and a uniformly drawn wrong class
//! otherwise, putting mass `q ~ U[low, high]` on the intended class and
//! `(1 - q) / (C - 1)` on every other class.

mod oracle;

pub use oracle::{oracle_lemr_run, ORACLE_MAX_MODELS, ORACLE_MAX_VALIDATION};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{LemrError, Result};
use crate::model_set::ModelSetBundle;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthSpec {
    pub num_models: usize,
    pub num_samples: usize,
    pub num_classes: usize,
    /// Probability that each model intends the true class, in `[0, 1]`.
    pub target_accuracies: Vec<f64>,
    /// Lower bound on the intended-class mass, in `(1/C, 1]`.
    pub confidence_low: f64,
    pub confidence_high: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// Accuracies evenly spaced from `low` to `high` inclusive.
    pub fn linear_accuracies(num_models: usize, low: f64, high: f64) -> Vec<f64> {
        if num_models == 1 {
            return vec![(low + high) / 2.0];
        }
        (0..num_models).map(|k| low + (high - low) * k as f64 / (num_models - 1) as f64).collect()
    }

    /// Accuracies drawn uniformly from `[low, high)` with their own generator.
    pub fn uniform_accuracies(num_models: usize, low: f64, high: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..num_models).map(|_| low + (high - low) * rng.gen::<f64>()).collect()
    }

    pub fn check(&self) -> Result<()> {
        if self.num_models == 0 || self.num_samples == 0 || self.num_classes < 2 {
            return Err(LemrError::contract("synthetic spec needs K >= 1, N >= 1 and C >= 2"));
        }
        if self.target_accuracies.len() != self.num_models {
            return Err(LemrError::contract(format!(
                "{} target accuracies for {} models",
                self.target_accuracies.len(),
                self.num_models
            )));
        }
        if let Some(p) = self.target_accuracies.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(LemrError::contract(format!("target accuracy {p} outside [0, 1]")));
        }
        let chance = 1.0 / self.num_classes as f64;
        if !(self.confidence_low > chance
            && self.confidence_low <= self.confidence_high
            && self.confidence_high <= 1.0)
        {
            return Err(LemrError::contract(format!(
                "confidence bounds [{}, {}] must be ordered within (1/C, 1]",
                self.confidence_low, self.confidence_high
            )));
        }
        Ok(())
    }
}

pub fn generate_model_set(spec: &SynthSpec) -> Result<ModelSetBundle> {
    spec.check()?;
    let (k_models, n, c) = (spec.num_models, spec.num_samples, spec.num_classes);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c as u64) as usize).collect();
    let mut predictions = Vec::with_capacity(k_models * n * c);
    let spread = spec.confidence_high - spec.confidence_low;
    for &p in &spec.target_accuracies {
        for &label in &labels {
            let intended = if rng.gen::<f64>() < p {
                label
            } else {
                let r = rng.gen_range(0..(c - 1) as u64) as usize;
                if r >= label {
                    r + 1
                } else {
                    r
                }
            };
            let q = spec.confidence_low + spread * rng.gen::<f64>();
            let rest = (1.0 - q) / (c - 1) as f64;
            predictions.extend((0..c).map(|class| if class == intended { q as f32 } else { rest as f32 }));
        }
    }
    ModelSetBundle::new(format!("synth-{}", spec.seed), k_models, n, c, predictions, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_set::validate_bundle;

    fn spec(p: Vec<f64>, n: usize, c: usize, low: f64, high: f64, seed: u64) -> SynthSpec {
        SynthSpec {
            num_models: p.len(),
            num_samples: n,
            num_classes: c,
            target_accuracies: p,
            confidence_low: low,
            confidence_high: high,
            seed,
        }
    }

    fn argmax_accuracy(b: &ModelSetBundle, k: usize) -> f64 {
        (0..b.num_samples()).filter(|&i| b.predicted_class(k, i) == b.label(i)).count() as f64
            / b.num_samples() as f64
    }

    #[test]
    fn perfect_model_matches_labels() {
        let b = generate_model_set(&spec(vec![1.0], 200, 3, 1.0, 1.0, 1)).unwrap();
        assert_eq!(argmax_accuracy(&b, 0), 1.0);
    }

    #[test]
    fn chance_model_is_near_chance() {
        let b = generate_model_set(&spec(vec![0.25], 20_000, 4, 0.5, 0.9, 2)).unwrap();
        assert!((argmax_accuracy(&b, 0) - 0.25).abs() < 0.02);
    }

    #[test]
    fn empirical_accuracy_tracks_targets() {
        let p = SynthSpec::linear_accuracies(20, 0.4, 0.9);
        let b = generate_model_set(&spec(p.clone(), 2000, 4, 0.4, 0.9, 3)).unwrap();
        for (k, &target) in p.iter().enumerate() {
            let got = argmax_accuracy(&b, k);
            assert!((got - target).abs() <= 0.03, "model {k}: {got} vs {target}");
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let s = spec(vec![0.7, 0.6], 50, 3, 0.5, 0.9, 4);
        assert_eq!(generate_model_set(&s).unwrap(), generate_model_set(&s).unwrap());
        let mut label_sets = Vec::new();
        for seed in 0..10 {
            let b = generate_model_set(&SynthSpec { seed, ..s.clone() }).unwrap();
            assert!(validate_bundle(&b).is_valid());
            label_sets.push(b.labels().to_vec());
        }
        label_sets.sort();
        label_sets.dedup();
        assert_eq!(label_sets.len(), 10);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(generate_model_set(&spec(vec![0.5], 10, 2, 0.4, 0.9, 0)).is_err());
        assert!(generate_model_set(&spec(vec![0.5], 10, 2, 0.9, 0.6, 0)).is_err());
        assert!(generate_model_set(&spec(vec![1.5], 10, 2, 0.6, 0.9, 0)).is_err());
        assert!(generate_model_set(&spec(vec![], 10, 2, 0.6, 0.9, 0)).is_err());
        let mut s = spec(vec![0.5], 10, 2, 0.6, 0.9, 0);
        s.num_models = 2;
        assert!(generate_model_set(&s).is_err());
    }
}
