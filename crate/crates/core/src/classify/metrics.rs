use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Area under the ROC curve: the probability that a random positive outscores
/// a random negative, ties counting one half. Counted exactly over all pairs
/// by sorting, so the result is invariant under any strictly increasing map
/// of the scores.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the number of (positive, negative) wins, ties counted once.
    let mut doubled: u128 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < idx.len() {
        let v = scores[idx[i]];
        let (mut pos_here, mut neg_here) = (0u64, 0u64);
        while i < idx.len() && scores[idx[i]] == v {
            if labels[idx[i]] {
                pos_here += 1;
            } else {
                neg_here += 1;
            }
            i += 1;
        }
        doubled += 2 * pos_here as u128 * neg_below as u128 + pos_here as u128 * neg_here as u128;
        neg_below += neg_here;
    }
    Ok(doubled as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn from_predictions(predicted: &[bool], actual: &[bool]) -> Confusion {
        let mut c = Confusion::default();
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p, a) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Threshold metrics plus AUC for one evaluation, or their average.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub auc: f64,
    pub tpr: f64,
    pub tnr: f64,
    /// Zero when nothing is predicted positive.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

impl Metrics {
    pub fn from_confusion(c: &Confusion, auc: f64) -> Metrics {
        let tpr = ratio(c.tp, c.tp + c.fn_);
        let precision = ratio(c.tp, c.tp + c.fp);
        let f1 = if precision + tpr > 0.0 {
            2.0 * precision * tpr / (precision + tpr)
        } else {
            0.0
        };
        Metrics {
            auc,
            tpr,
            tnr: ratio(c.tn, c.tn + c.fp),
            precision,
            recall: tpr,
            f1,
            accuracy: ratio(c.tp + c.tn, c.tp + c.tn + c.fp + c.fn_),
        }
    }

    /// Scores at a decision threshold; predicted positive iff `score > threshold`.
    pub fn evaluate(scores: &[f64], labels: &[bool], threshold: f64) -> Result<Metrics> {
        let auc = roc_auc(scores, labels)?;
        let predicted: Vec<bool> = scores.iter().map(|&s| s > threshold).collect();
        Ok(Metrics::from_confusion(
            &Confusion::from_predictions(&predicted, labels),
            auc,
        ))
    }

    /// Field-wise arithmetic mean.
    pub fn mean(items: &[Metrics]) -> Metrics {
        let n = items.len().max(1) as f64;
        let sum = |f: fn(&Metrics) -> f64| items.iter().map(f).sum::<f64>() / n;
        Metrics {
            auc: sum(|m| m.auc),
            tpr: sum(|m| m.tpr),
            tnr: sum(|m| m.tnr),
            precision: sum(|m| m.precision),
            recall: sum(|m| m.recall),
            f1: sum(|m| m.f1),
            accuracy: sum(|m| m.accuracy),
        }
    }
}
