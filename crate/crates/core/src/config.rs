//! Run-config templates and their plain-text `key = value` file format.
//!
//! ```text
//! # comments start with '#'
//! ensemble_kind = hard            # hard | soft
//! acquisition_strategy = entropy  # random | uncertainty | margin | entropy
//! committee_method = zscore       # zscore | all_model
//! budget_ratio = 0.2              # or: budget = 80
//! iteration_budget = 8            # default max(1, ceil(budget / 10))
//! zscore_delta = 0.6745
//! zscore_tau = -3.5
//! accuracy_mode = modal           # modal | expected
//! final_regenerate = false
//! spend_remainder = false
//! seed = 42
//! ```

use serde::Serialize;

use crate::acquisition::AcquisitionStrategy;
use crate::committee::{AccuracyMode, CommitteeMethod, ZScoreParams};
use crate::ensemble::EnsembleKind;
use crate::error::{LemrError, Result};
use crate::pipeline::{default_iteration_budget, RunConfig};

/// Keys accepted in a config file.
pub const CONFIG_KEYS: &[&str] = &[
    "ensemble_kind",
    "acquisition_strategy",
    "committee_method",
    "budget",
    "budget_ratio",
    "iteration_budget",
    "zscore_delta",
    "zscore_tau",
    "accuracy_mode",
    "final_regenerate",
    "spend_remainder",
    "seed",
];

/// A budget given either as a label count or as a fraction of the validation set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetSpec {
    Absolute(usize),
    Ratio(f64),
}

impl BudgetSpec {
    /// Label count for a validation set of `validation_len` samples;
    /// ratios resolve to `floor(ratio * validation_len)`.
    pub fn resolve(self, validation_len: usize) -> Result<usize> {
        match self {
            BudgetSpec::Absolute(b) => Ok(b),
            BudgetSpec::Ratio(r) => {
                if !(0.0..=1.0).contains(&r) {
                    return Err(LemrError::contract(format!("budget ratio {r} outside [0, 1]")));
                }
                Ok(floor_fraction(r, validation_len))
            }
        }
    }

    /// The ratio reported alongside a resolved budget.
    pub fn ratio(self, validation_len: usize) -> f64 {
        match self {
            BudgetSpec::Ratio(r) => r,
            BudgetSpec::Absolute(b) => b as f64 / validation_len as f64,
        }
    }
}

/// `floor(ratio * n)`, nudged so products like `0.3 * 10` land on 3.
pub(crate) fn floor_fraction(ratio: f64, n: usize) -> usize {
    ((ratio * n as f64) + 1e-9).floor() as usize
}

/// Everything in a [`RunConfig`] except the resolved budget, plus an optional
/// budget and seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigTemplate {
    pub ensemble_kind: EnsembleKind,
    pub acquisition_strategy: AcquisitionStrategy,
    pub committee_method: CommitteeMethod,
    pub budget: Option<BudgetSpec>,
    pub iteration_budget: Option<usize>,
    pub zscore_params: ZScoreParams,
    pub accuracy_mode: AccuracyMode,
    pub final_regenerate: bool,
    pub spend_remainder: bool,
    pub seed: Option<u64>,
}

impl Default for ConfigTemplate {
    fn default() -> Self {
        Self {
            ensemble_kind: EnsembleKind::Hard,
            acquisition_strategy: AcquisitionStrategy::Uncertainty,
            committee_method: CommitteeMethod::Zscore,
            budget: None,
            iteration_budget: None,
            zscore_params: ZScoreParams::default(),
            accuracy_mode: AccuracyMode::Modal,
            final_regenerate: false,
            spend_remainder: false,
            seed: None,
        }
    }
}

impl ConfigTemplate {
    pub fn fingerprint(&self) -> String {
        format!("{}/{}/{}", self.ensemble_kind, self.acquisition_strategy, self.committee_method)
    }

    /// A concrete config for `budget` labels and generator seed `seed`.
    pub fn instantiate(&self, budget: usize, seed: u64) -> RunConfig {
        RunConfig {
            ensemble_kind: self.ensemble_kind,
            acquisition_strategy: self.acquisition_strategy,
            committee_method: self.committee_method,
            budget,
            iteration_budget: self.iteration_budget.unwrap_or_else(|| default_iteration_budget(budget)),
            zscore_params: self.zscore_params,
            accuracy_mode: self.accuracy_mode,
            final_regenerate: self.final_regenerate,
            spend_remainder: self.spend_remainder,
            seed,
        }
    }

    /// The same knobs across every ensemble x acquisition x committee combination.
    pub fn design_grid(&self) -> Vec<ConfigTemplate> {
        let mut grid = Vec::with_capacity(16);
        for ensemble_kind in EnsembleKind::ALL {
            for acquisition_strategy in AcquisitionStrategy::ALL {
                for committee_method in CommitteeMethod::ALL {
                    grid.push(ConfigTemplate {
                        ensemble_kind,
                        acquisition_strategy,
                        committee_method,
                        ..self.clone()
                    });
                }
            }
        }
        grid
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| LemrError::contract(format!("invalid value {value:?} for {key} ({what})"));
        match key {
            "ensemble_kind" => self.ensemble_kind = value.parse()?,
            "acquisition_strategy" => self.acquisition_strategy = value.parse()?,
            "committee_method" => self.committee_method = value.parse()?,
            "budget" => self.budget = Some(BudgetSpec::Absolute(value.parse().map_err(|_| bad("count"))?)),
            "budget_ratio" => {
                let r: f64 = value.parse().map_err(|_| bad("real"))?;
                if !(0.0..=1.0).contains(&r) {
                    return Err(bad("must be in [0, 1]"));
                }
                self.budget = Some(BudgetSpec::Ratio(r));
            }
            "iteration_budget" => {
                let b: usize = value.parse().map_err(|_| bad("count"))?;
                if b == 0 {
                    return Err(bad("must be at least 1"));
                }
                self.iteration_budget = Some(b);
            }
            "zscore_delta" => {
                let delta = value.parse().map_err(|_| bad("real"))?;
                self.zscore_params = ZScoreParams::new(delta, self.zscore_params.tau)?;
            }
            "zscore_tau" => {
                let tau = value.parse().map_err(|_| bad("real"))?;
                self.zscore_params = ZScoreParams::new(self.zscore_params.delta, tau)?;
            }
            "accuracy_mode" => self.accuracy_mode = value.parse()?,
            "final_regenerate" => self.final_regenerate = value.parse().map_err(|_| bad("bool"))?,
            "spend_remainder" => self.spend_remainder = value.parse().map_err(|_| bad("bool"))?,
            "seed" => self.seed = Some(value.parse().map_err(|_| bad("integer"))?),
            _ => return Err(LemrError::contract(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Parses a config file body on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut template = Self::default();
        template.apply_text(text)?;
        Ok(template)
    }

    /// Applies a config file body on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| LemrError::contract(format!("config line {}: expected key = value", n + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| LemrError::contract(format!("config line {}: {e}", n + 1)))?;
        }
        Ok(())
    }
}
