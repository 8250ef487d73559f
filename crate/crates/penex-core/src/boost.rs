//! Multi-class AdaBoost (SAMME) over decision stumps: exhaustive weighted
//! stump fitting, the per-round classifier weight and reweighting step, and
//! ensemble training with early stop on useless rounds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CoreError, Result};

/// Odds ratio substituted for (1−ε)/ε when a stump is perfect.
pub const PERFECT_ROUND_ODDS: f64 = 1e12;

/// Axis-aligned single-split classifier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature_index: usize,
    pub threshold: f64,
    pub left_class: usize,
    pub right_class: usize,
}

impl Stump {
    /// `left_class` when `x[feature] ≤ threshold`, else `right_class`.
    pub fn predict(&self, x: &[f64]) -> usize {
        if x[self.feature_index] <= self.threshold {
            self.left_class
        } else {
            self.right_class
        }
    }
}

/// Weighted vote of stumps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub members: Vec<(Stump, f64)>,
    pub num_classes: usize,
}

impl Ensemble {
    /// Per-class vote mass `Σ_m η_m·1{g_m(x) = k}`.
    pub fn votes(&self, x: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.num_classes];
        for (stump, eta) in &self.members {
            v[stump.predict(x)] += eta;
        }
        v
    }

    /// Vote argmax, ties to the lowest class index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let v = self.votes(x);
        let mut best = 0;
        for (k, &vote) in v.iter().enumerate().skip(1) {
            if vote > v[best] {
                best = k;
            }
        }
        best
    }

    /// Vote margin of the true class over the runner-up, normalized by the
    /// total vote mass.
    pub fn margin(&self, x: &[f64], label: usize) -> f64 {
        let v = self.votes(x);
        let runner_up = v
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != label)
            .map(|(_, &vote)| vote)
            .fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = self.members.iter().map(|&(_, eta)| eta).sum();
        if total > 0.0 {
            (v[label] - runner_up) / total
        } else {
            0.0
        }
    }
}

/// Best stump for one feature: weighted error and the split realizing it.
fn best_split_for_feature(
    data: &Dataset,
    weights: &[f64],
    feature: usize,
) -> (f64, Stump) {
    let n = data.len();
    let k = data.num_classes;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        data.row(a)[feature]
            .total_cmp(&data.row(b)[feature])
            .then(a.cmp(&b))
    });

    let mut right = vec![0.0f64; k];
    for i in 0..n {
        right[data.labels[i]] += weights[i];
    }
    let total: f64 = weights.iter().sum();
    let mut left = vec![0.0f64; k];

    let argmax = |counts: &[f64]| -> usize {
        let mut best = 0;
        for (c, &w) in counts.iter().enumerate().skip(1) {
            if w > counts[best] {
                best = c;
            }
        }
        best
    };

    // Candidate thresholds in increasing order: −∞, midpoints of
    // consecutive distinct sorted values, +∞.
    let mut thresholds = vec![f64::NEG_INFINITY];
    for w in order.windows(2) {
        let (a, b) = (data.row(w[0])[feature], data.row(w[1])[feature]);
        if a < b {
            thresholds.push((a + b) / 2.0);
        }
    }
    thresholds.push(f64::INFINITY);

    let mut best_err = f64::INFINITY;
    let mut best = Stump { feature_index: feature, threshold: 0.0, left_class: 0, right_class: 0 };
    let mut pos = 0;
    for t in thresholds {
        while pos < n && data.row(order[pos])[feature] <= t {
            let i = order[pos];
            left[data.labels[i]] += weights[i];
            right[data.labels[i]] -= weights[i];
            pos += 1;
        }
        let (lc, rc) = (argmax(&left), argmax(&right));
        let err = total - left[lc] - right[rc];
        if err < best_err {
            best_err = err;
            best = Stump { feature_index: feature, threshold: t, left_class: lc, right_class: rc };
        }
    }
    (best_err, best)
}

/// Exhaustive weighted stump fit over features × thresholds × class
/// assignments; ties resolve to the lowest (feature, threshold) pair and
/// then the lowest class indices.
pub fn fit_stump(data: &Dataset, weights: &[f64]) -> Result<Stump> {
    if data.is_empty() {
        return Err(CoreError::Contract("cannot fit a stump to an empty dataset".into()));
    }
    if weights.len() != data.len() {
        return Err(CoreError::Dimension(format!(
            "{} weights for {} samples",
            weights.len(),
            data.len()
        )));
    }
    if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(CoreError::Contract("weights must be finite and nonnegative".into()));
    }
    let per_feature: Vec<(f64, Stump)> = (0..data.num_features)
        .into_par_iter()
        .map(|f| best_split_for_feature(data, weights, f))
        .collect();
    // Features arrive in index order, so a strict comparison keeps the
    // lexicographically first optimum.
    let mut best = per_feature[0].clone();
    for candidate in per_feature.into_iter().skip(1) {
        if candidate.0 < best.0 {
            best = candidate;
        }
    }
    Ok(best.1)
}

/// Classifier weight `ln((1−ε)/ε) + ln(K−1)`, with the odds capped at
/// [`PERFECT_ROUND_ODDS`] when ε = 0.
pub fn samme_eta(epsilon: f64, num_classes: usize) -> f64 {
    let odds = if epsilon <= 0.0 { PERFECT_ROUND_ODDS } else { (1.0 - epsilon) / epsilon };
    odds.ln() + ((num_classes - 1) as f64).ln()
}

/// One accepted boosting round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptedRound {
    pub stump: Stump,
    pub eta: f64,
    /// Updated sample weights, normalized to sum 1.
    pub weights: Vec<f64>,
    pub epsilon: f64,
}

/// Result of attempting a boosting round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RoundOutcome {
    Accepted(AcceptedRound),
    /// The best stump was no better than class-proportional guessing.
    Rejected { epsilon: f64 },
}

/// Fits a stump to the weighted sample, computes its weighted error and
/// classifier weight, and up-weights the misclassified points:
/// `w ← w·exp(η·1{wrong})`, renormalized to sum 1. A round at or beyond
/// ε = (K−1)/K is rejected.
pub fn samme_round(data: &Dataset, weights: &[f64]) -> Result<RoundOutcome> {
    let stump = fit_stump(data, weights)?;
    let k = data.num_classes;
    let mut epsilon = 0.0;
    let wrong: Vec<bool> = (0..data.len())
        .map(|i| {
            let miss = stump.predict(data.row(i)) != data.labels[i];
            if miss {
                epsilon += weights[i];
            }
            miss
        })
        .collect();
    if epsilon >= (k - 1) as f64 / k as f64 {
        return Ok(RoundOutcome::Rejected { epsilon });
    }
    let eta = samme_eta(epsilon, k);
    let mut new_weights: Vec<f64> = weights
        .iter()
        .zip(&wrong)
        .map(|(&w, &miss)| if miss { w * eta.exp() } else { w })
        .collect();
    let z: f64 = new_weights.iter().sum();
    for w in &mut new_weights {
        *w /= z;
    }
    Ok(RoundOutcome::Accepted(AcceptedRound { stump, eta, weights: new_weights, epsilon }))
}

/// Per-round training log line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based round number.
    pub round: usize,
    pub epsilon: f64,
    pub eta: f64,
    /// Ensemble training accuracy after this round.
    pub train_acc: f64,
    /// Mean normalized vote margin after this round.
    pub mean_margin: f64,
    /// Sum of the updated sample weights (1 up to rounding).
    pub weight_sum: f64,
}

/// A trained ensemble with its per-round history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostReport {
    pub ensemble: Ensemble,
    pub rounds: Vec<RoundRecord>,
    /// Set when boosting stopped before the requested round count.
    pub stopped_early: Option<String>,
}

/// Runs up to `rounds` SAMME rounds from uniform weights. The seed is part
/// of the interface but unused: the exhaustive stump search is already
/// deterministic.
pub fn samme_train(data: &Dataset, rounds: usize, _seed: u64) -> Result<BoostReport> {
    if rounds == 0 {
        return Err(CoreError::Parameter("need at least one boosting round".into()));
    }
    if data.is_empty() {
        return Err(CoreError::Contract("cannot boost an empty dataset".into()));
    }
    let n = data.len();
    let mut weights = vec![1.0 / n as f64; n];
    let mut ensemble = Ensemble { members: Vec::new(), num_classes: data.num_classes };
    let mut records = Vec::new();
    let mut stopped_early = None;

    for round in 1..=rounds {
        match samme_round(data, &weights)? {
            RoundOutcome::Accepted(accepted) => {
                ensemble.members.push((accepted.stump, accepted.eta));
                let correct = (0..n)
                    .filter(|&i| ensemble.predict(data.row(i)) == data.labels[i])
                    .count();
                let mean_margin = (0..n)
                    .map(|i| ensemble.margin(data.row(i), data.labels[i]))
                    .sum::<f64>()
                    / n as f64;
                records.push(RoundRecord {
                    round,
                    epsilon: accepted.epsilon,
                    eta: accepted.eta,
                    train_acc: correct as f64 / n as f64,
                    mean_margin,
                    weight_sum: accepted.weights.iter().sum(),
                });
                weights = accepted.weights;
            }
            RoundOutcome::Rejected { epsilon } => {
                stopped_early = Some(format!(
                    "round {round} rejected: weighted error {epsilon} is no better than \
                     class-proportional guessing"
                ));
                break;
            }
        }
    }
    Ok(BoostReport { ensemble, rounds: records, stopped_early })
}
