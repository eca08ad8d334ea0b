//! Discrete AdaBoost over depth-1 decision stumps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::N_PAIRS;

/// Weighted error used in place of an exact zero when computing the stage
/// weight of a perfect stump.
const MIN_ERROR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    /// +1: predicts troll above the threshold; -1: predicts troll at or below.
    pub polarity: i8,
    pub stage_weight: f64,
}

impl Stump {
    /// The stump's vote in {-1, +1}.
    pub fn sign(&self, x: &[f64; N_PAIRS]) -> f64 {
        let above = x[self.feature] > self.threshold;
        if above == (self.polarity > 0) {
            1.0
        } else {
            -1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BoostModel {
    pub stumps: Vec<Stump>,
}

impl BoostModel {
    /// Additive score `sum_k stage_weight_k * sign_k(x)`.
    pub fn score(&self, x: &[f64; N_PAIRS]) -> f64 {
        self.stumps.iter().map(|s| s.stage_weight * s.sign(x)).sum()
    }

    /// Troll iff the score is strictly above `threshold`.
    pub fn predict(&self, x: &[f64; N_PAIRS], threshold: f64) -> bool {
        self.score(x) > threshold
    }

    /// The first `k` rounds of the ensemble.
    pub fn truncated(&self, k: usize) -> BoostModel {
        BoostModel {
            stumps: self.stumps[..k.min(self.stumps.len())].to_vec(),
        }
    }

    /// Share of total absolute stage weight spent on each feature.
    pub fn feature_importance(&self) -> [f64; N_PAIRS] {
        let mut imp = [0.0; N_PAIRS];
        for s in &self.stumps {
            imp[s.feature] += s.stage_weight.abs();
        }
        let total: f64 = imp.iter().sum();
        if total > 0.0 {
            imp.iter_mut().for_each(|v| *v /= total);
        }
        imp
    }
}

pub fn predict_score(model: &BoostModel, x: &[f64; N_PAIRS]) -> f64 {
    model.score(x)
}

pub fn predict(model: &BoostModel, x: &[f64; N_PAIRS], threshold: f64) -> bool {
    model.predict(x, threshold)
}

pub fn feature_importance(model: &BoostModel) -> [f64; N_PAIRS] {
    model.feature_importance()
}

/// Per-round bookkeeping, mainly for checking training invariants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundTrace {
    pub weighted_error: f64,
    pub stage_weight: f64,
    /// Sum of sample weights after the update.
    pub weight_sum: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub rounds: usize,
    pub learning_rate: f64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            rounds: 500,
            learning_rate: 0.05,
        }
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    polarity: i8,
    error: f64,
}

/// Lowest weighted-error stump; ties go to the lower feature, then the lower
/// threshold, then polarity +1.
fn best_stump(
    x: &[[f64; N_PAIRS]],
    y: &[bool],
    w: &[f64],
    order: &[Vec<usize>],
) -> Option<Candidate> {
    let pos_total: f64 = y.iter().zip(w).filter(|(&l, _)| l).map(|(_, &v)| v).sum();
    let neg_total: f64 = y.iter().zip(w).filter(|(&l, _)| !l).map(|(_, &v)| v).sum();
    let mut best: Option<Candidate> = None;
    for (j, idx) in order.iter().enumerate() {
        let (mut pos_le, mut neg_le) = (0.0, 0.0);
        let mut k = 0;
        while k < idx.len() {
            let v = x[idx[k]][j];
            while k < idx.len() && x[idx[k]][j] == v {
                if y[idx[k]] {
                    pos_le += w[idx[k]];
                } else {
                    neg_le += w[idx[k]];
                }
                k += 1;
            }
            if k == idx.len() {
                break;
            }
            let next = x[idx[k]][j];
            let mut threshold = v + (next - v) / 2.0;
            if threshold >= next {
                threshold = v;
            }
            let up = pos_le + (neg_total - neg_le);
            let down = neg_le + (pos_total - pos_le);
            for (polarity, error) in [(1i8, up), (-1i8, down)] {
                if best.as_ref().is_none_or(|b| error < b.error) {
                    best = Some(Candidate {
                        feature: j,
                        threshold,
                        polarity,
                        error,
                    });
                }
            }
        }
    }
    best
}

fn check_training_input(x: &[[f64; N_PAIRS]], y: &[bool], cfg: &BoostConfig) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!("{} rows but {} labels", x.len(), y.len())));
    }
    if !y.iter().any(|&l| l) || y.iter().all(|&l| l) {
        return Err(Error::SingleClass);
    }
    if cfg.rounds == 0 || cfg.learning_rate.is_nan() || cfg.learning_rate <= 0.0 {
        return Err(Error::Config(format!(
            "boosting needs rounds >= 1 and a positive learning rate, got {} and {}",
            cfg.rounds, cfg.learning_rate
        )));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite feature value"));
    }
    Ok(())
}

pub fn train_adaboost(x: &[[f64; N_PAIRS]], y: &[bool], cfg: &BoostConfig) -> Result<BoostModel> {
    train_adaboost_traced(x, y, cfg).map(|(m, _)| m)
}

/// Trains and also returns one [`RoundTrace`] per retained stump.
pub fn train_adaboost_traced(
    x: &[[f64; N_PAIRS]],
    y: &[bool],
    cfg: &BoostConfig,
) -> Result<(BoostModel, Vec<RoundTrace>)> {
    check_training_input(x, y, cfg)?;
    let n = x.len();
    let order: Vec<Vec<usize>> = (0..N_PAIRS)
        .map(|j| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| x[a][j].total_cmp(&x[b][j]));
            idx
        })
        .collect();
    let mut w = vec![1.0 / n as f64; n];
    let mut model = BoostModel::default();
    let mut trace = Vec::new();
    for _ in 0..cfg.rounds {
        let Some(c) = best_stump(x, y, &w, &order) else {
            break;
        };
        let mut stump = Stump {
            feature: c.feature,
            threshold: c.threshold,
            polarity: c.polarity,
            stage_weight: 0.0,
        };
        let votes: Vec<f64> = x.iter().map(|row| stump.sign(row)).collect();
        let error: f64 = votes
            .iter()
            .zip(y)
            .zip(&w)
            .filter(|((&v, &l), _)| (v > 0.0) != l)
            .map(|(_, &wi)| wi)
            .sum();
        if error >= 0.5 {
            break;
        }
        let perfect = error <= 0.0;
        let e = error.max(MIN_ERROR);
        stump.stage_weight = cfg.learning_rate * 0.5 * ((1.0 - e) / e).ln();
        for ((wi, &v), &l) in w.iter_mut().zip(&votes).zip(y) {
            let target = if l { 1.0 } else { -1.0 };
            *wi *= (-stump.stage_weight * target * v).exp();
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|wi| *wi /= total);
        model.stumps.push(stump);
        trace.push(RoundTrace {
            weighted_error: error,
            stage_weight: stump.stage_weight,
            weight_sum: w.iter().sum(),
        });
        if perfect {
            break;
        }
    }
    if model.stumps.is_empty() {
        return Err(Error::invalid("no stump separates the classes better than chance"));
    }
    Ok((model, trace))
}
