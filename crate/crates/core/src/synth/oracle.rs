//! A deliberately naive re-implementation of the ranking loop, used only to
//! cross-check [`crate::pipeline::lemr_run`]. It shares no algorithm code with
//! the ensemble, acquisition, committee, or pipeline modules: everything is a
//! literal loop over plain vectors. Floating-point operations are performed in
//! the same order as the main path so results compare exactly.

#![allow(clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::acquisition::AcquisitionStrategy;
use crate::committee::{AccuracyMode, CommitteeMethod};
use crate::ensemble::{Committee, EnsembleKind};
use crate::error::{LemrError, Result};
use crate::model_set::{ModelSetBundle, SplitView};
use crate::pipeline::{LabelOracle, RankingResult, RunConfig};

pub const ORACLE_MAX_MODELS: usize = 8;
pub const ORACLE_MAX_VALIDATION: usize = 32;

fn first_max(values: &[f64]) -> usize {
    let mut best = 0;
    for c in 1..values.len() {
        if values[c] > values[best] {
            best = c;
        }
    }
    best
}

fn model_class(bundle: &ModelSetBundle, k: usize, i: usize) -> usize {
    let row = bundle.raw_row(k, i);
    let mut best = 0;
    for c in 1..row.len() {
        if row[c] > row[best] {
            best = c;
        }
    }
    best
}

fn pseudo_label(bundle: &ModelSetBundle, members: &[usize], i: usize, kind: EnsembleKind) -> Vec<f64> {
    let c_count = bundle.num_classes();
    let n = members.len() as f64;
    match kind {
        EnsembleKind::Hard => {
            let mut votes = vec![0u32; c_count];
            for &k in members {
                votes[model_class(bundle, k, i)] += 1;
            }
            votes.iter().map(|&v| f64::from(v) / n).collect()
        }
        EnsembleKind::Soft => {
            let mut total = vec![0.0; c_count];
            for &k in members {
                for c in 0..c_count {
                    total[c] += bundle.prob(k, i, c);
                }
            }
            total.iter().map(|t| t / n).collect()
        }
    }
}

fn score(strategy: AcquisitionStrategy, d: &[f64]) -> f64 {
    match strategy {
        AcquisitionStrategy::Uncertainty => {
            let mut top = f64::NEG_INFINITY;
            for &p in d {
                top = top.max(p);
            }
            1.0 - top
        }
        AcquisitionStrategy::Margin => {
            let mut sorted = d.to_vec();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            sorted[0] - sorted[1]
        }
        AcquisitionStrategy::Entropy => {
            let mut h = 0.0;
            for &p in d {
                if p > 0.0 {
                    h -= p * p.ln();
                }
            }
            h
        }
        AcquisitionStrategy::Random => 0.0,
    }
}

/// `pseudo` is kept in ascending sample order.
fn pick(
    strategy: AcquisitionStrategy,
    pseudo: &[(usize, Vec<f64>)],
    size: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let take = size.min(pseudo.len());
    if strategy == AcquisitionStrategy::Random {
        let mut keys: Vec<usize> = pseudo.iter().map(|e| e.0).collect();
        for i in 0..take {
            let j = rng.gen_range(i as u64..keys.len() as u64) as usize;
            keys.swap(i, j);
        }
        keys.truncate(take);
        return keys;
    }
    let lower_is_better = strategy == AcquisitionStrategy::Margin;
    let mut chosen: Vec<usize> = Vec::new();
    for _ in 0..take {
        let mut best: Option<(usize, f64)> = None;
        for (i, d) in pseudo {
            if chosen.contains(i) {
                continue;
            }
            let s = score(strategy, d);
            let better = match best {
                None => true,
                Some((_, bs)) => {
                    if lower_is_better {
                        s < bs
                    } else {
                        s > bs
                    }
                }
            };
            if better {
                best = Some((*i, s));
            }
        }
        chosen.push(best.unwrap().0);
    }
    chosen
}

fn accuracies(
    bundle: &ModelSetBundle,
    pseudo: &[(usize, Vec<f64>)],
    ground: &[(usize, usize)],
    mode: AccuracyMode,
) -> Vec<f64> {
    let total = (pseudo.len() + ground.len()) as f64;
    let mut out = Vec::new();
    for k in 0..bundle.num_models() {
        let mut ground_hits = 0usize;
        for &(j, y) in ground {
            if model_class(bundle, k, j) == y {
                ground_hits += 1;
            }
        }
        let a = match mode {
            AccuracyMode::Modal => {
                let mut hits = 0usize;
                for (i, d) in pseudo {
                    if model_class(bundle, k, *i) == first_max(d) {
                        hits += 1;
                    }
                }
                (hits + ground_hits) as f64 / total
            }
            AccuracyMode::Expected => {
                let mut mass = 0.0;
                for (i, d) in pseudo {
                    mass += d[model_class(bundle, k, *i)];
                }
                (mass + ground_hits as f64) / total
            }
        };
        out.push(a);
    }
    out
}

fn middle(values: &[f64]) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

fn next_committee(acc: &[f64], config: &RunConfig) -> Vec<usize> {
    let everyone: Vec<usize> = (0..acc.len()).collect();
    if config.committee_method == CommitteeMethod::AllModel {
        return everyone;
    }
    let m = middle(acc);
    let devs: Vec<f64> = acc.iter().map(|a| (a - m).abs()).collect();
    let mad = middle(&devs);
    if mad == 0.0 {
        return everyone;
    }
    let mut kept = Vec::new();
    for k in 0..acc.len() {
        let z = config.zscore_params.delta * (acc[k] - m) / mad;
        if z >= config.zscore_params.tau {
            kept.push(k);
        }
    }
    if kept.is_empty() {
        everyone
    } else {
        kept
    }
}

fn rank(acc: &[f64]) -> Vec<usize> {
    let mut left: Vec<usize> = (0..acc.len()).collect();
    let mut order = Vec::new();
    while !left.is_empty() {
        let mut best = 0;
        for p in 1..left.len() {
            if acc[left[p]] > acc[left[best]] {
                best = p;
            }
        }
        order.push(left.remove(best));
    }
    order
}

fn label_all(
    bundle: &ModelSetBundle,
    members: &[usize],
    pool: &[usize],
    kind: EnsembleKind,
) -> Vec<(usize, Vec<f64>)> {
    let mut sorted = pool.to_vec();
    sorted.sort_unstable();
    sorted.into_iter().map(|i| (i, pseudo_label(bundle, members, i, kind))).collect()
}

/// Loop-literal reference for [`crate::pipeline::lemr_run`] on tiny instances.
pub fn oracle_lemr_run(
    bundle: &ModelSetBundle,
    split: &SplitView,
    config: &RunConfig,
    oracle: &mut dyn LabelOracle,
) -> Result<RankingResult> {
    if bundle.num_models() > ORACLE_MAX_MODELS || split.validation_len() > ORACLE_MAX_VALIDATION {
        return Err(LemrError::contract(format!(
            "oracle instance too large (K = {}, |D_V| = {}); limits are {ORACLE_MAX_MODELS} and {ORACLE_MAX_VALIDATION}",
            bundle.num_models(),
            split.validation_len()
        )));
    }
    if config.budget > split.validation_len() || config.iteration_budget == 0 {
        return Err(LemrError::contract("bad budget"));
    }
    let b = config.iteration_budget;
    let t_rounds = config.budget / b;
    let mut sizes = vec![b; t_rounds];
    if config.spend_remainder && config.budget > t_rounds * b {
        sizes.push(config.budget - t_rounds * b);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pool: Vec<usize> = split.validation_indices.clone();
    let mut ground: Vec<(usize, usize)> = Vec::new();
    let mut members: Vec<usize> = (0..bundle.num_models()).collect();
    let mut history = vec![members.clone()];
    let mut batches = Vec::new();
    let mut pseudo: Vec<(usize, Vec<f64>)> = Vec::new();

    for size in &sizes {
        pseudo = label_all(bundle, &members, &pool, config.ensemble_kind);
        let chosen = pick(config.acquisition_strategy, &pseudo, *size, &mut rng);
        for &j in &chosen {
            let y = oracle.label(j).map_err(|reason| LemrError::Oracle { index: j, reason })?;
            if y >= bundle.num_classes() {
                return Err(LemrError::Oracle { index: j, reason: format!("label {y} out of range") });
            }
            ground.push((j, y));
            pseudo.retain(|e| e.0 != j);
            pool.retain(|&i| i != j);
        }
        ground.sort_unstable();
        let acc = accuracies(bundle, &pseudo, &ground, config.accuracy_mode);
        members = next_committee(&acc, config);
        history.push(members.clone());
        batches.push(chosen);
    }
    if sizes.is_empty() || config.final_regenerate {
        pseudo = label_all(bundle, &members, &pool, config.ensemble_kind);
    }

    let acc = accuracies(bundle, &pseudo, &ground, config.accuracy_mode);
    let committee_history =
        history.into_iter().map(|m| Committee::new(m, bundle.num_models())).collect::<Result<Vec<_>>>()?;
    Ok(RankingResult {
        ranking: rank(&acc),
        selection_accuracy: acc,
        labels_acquired: ground.len(),
        committee_history,
        batch_history: batches,
    })
}
