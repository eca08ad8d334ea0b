use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classify::boost::{train_adaboost, BoostConfig, BoostModel};
use crate::classify::metrics::Metrics;
use crate::classify::standardize::Standardizer;
use crate::classify::LabeledSample;
use crate::error::{Error, Result};
use crate::mdp::N_PAIRS;
use crate::par::{self, Execution};
use crate::sim::derive_seed;

/// A trained scorer: larger scores mean "more troll-like".
pub trait Scorer {
    fn score(&self, x: &[f64; N_PAIRS]) -> f64;
    /// Non-negative per-feature importances summing to 1, when available.
    fn importance(&self) -> Option<[f64; N_PAIRS]>;
}

/// Something that can be trained on labelled rows.
pub trait Learner: Sync {
    type Model: Scorer;
    fn fit(&self, x: &[[f64; N_PAIRS]], y: &[bool]) -> Result<Self::Model>;
}

impl Scorer for BoostModel {
    fn score(&self, x: &[f64; N_PAIRS]) -> f64 {
        BoostModel::score(self, x)
    }

    fn importance(&self) -> Option<[f64; N_PAIRS]> {
        Some(self.feature_importance())
    }
}

impl Learner for BoostConfig {
    type Model = BoostModel;

    fn fit(&self, x: &[[f64; N_PAIRS]], y: &[bool]) -> Result<BoostModel> {
        train_adaboost(x, y, self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub rounds: usize,
    pub learning_rate: f64,
    pub folds: usize,
    pub undersample_parts: usize,
    /// Standardize features with training-fold statistics.
    pub standardize: bool,
    pub threshold: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            rounds: 500,
            learning_rate: 0.05,
            folds: 10,
            undersample_parts: 5,
            standardize: true,
            threshold: 0.0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Config("classifier.rounds must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "classifier.learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("classifier.folds must be at least 2, got {}", self.folds)));
        }
        if self.undersample_parts == 0 {
            return Err(Error::Config("classifier.undersample_parts must be at least 1".into()));
        }
        if !self.threshold.is_finite() {
            return Err(Error::Config("classifier.threshold must be finite".into()));
        }
        Ok(())
    }

    pub fn boost(&self) -> BoostConfig {
        BoostConfig {
            rounds: self.rounds,
            learning_rate: self.learning_rate,
        }
    }
}

/// Balanced datasets: every positive plus one of `parts` disjoint, near-equal
/// subsets of the shuffled negatives. Each dataset keeps input order.
pub fn undersample_splits(
    samples: &[LabeledSample],
    parts: usize,
    seed: u64,
) -> Result<Vec<Vec<LabeledSample>>> {
    if parts == 0 {
        return Err(Error::Config("undersampling needs at least one part".into()));
    }
    let mut negatives: Vec<usize> = (0..samples.len())
        .filter(|&i| !samples[i].label.is_positive())
        .collect();
    if negatives.len() < parts {
        return Err(Error::invalid(format!(
            "{} negatives cannot be split into {parts} parts",
            negatives.len()
        )));
    }
    negatives.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = negatives.len() / parts;
    let extra = negatives.len() % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let len = base + usize::from(p < extra);
        let mut keep = vec![false; samples.len()];
        for &i in &negatives[start..start + len] {
            keep[i] = true;
        }
        start += len;
        out.push(
            samples
                .iter()
                .zip(&keep)
                .filter(|(s, &k)| k || s.label.is_positive())
                .map(|(s, _)| s.clone())
                .collect(),
        );
    }
    Ok(out)
}

/// Fold index per sample. Each class is shuffled independently and dealt
/// round-robin, continuing from where the previous class stopped.
pub fn stratified_folds(labels: &[bool], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for class in [true, false] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < folds {
            return Err(Error::invalid(format!(
                "class has {} members, fewer than {folds} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = next;
            next = (next + 1) % folds;
        }
    }
    Ok(assignment)
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub metrics: Metrics,
    pub feature_importance: [f64; N_PAIRS],
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitReport {
    pub split: usize,
    pub n_positive: usize,
    pub n_negative: usize,
    pub metrics: Metrics,
    pub feature_importance: [f64; N_PAIRS],
    pub folds: Vec<FoldReport>,
}

/// Aggregate metrics with the per-split and per-fold breakdown.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub metrics: Metrics,
    pub feature_importance: [f64; N_PAIRS],
    pub splits: Vec<SplitReport>,
}

fn mean_importance(items: impl Iterator<Item = [f64; N_PAIRS]>) -> [f64; N_PAIRS] {
    let mut sum = [0.0; N_PAIRS];
    let mut n = 0usize;
    for imp in items {
        for (s, v) in sum.iter_mut().zip(imp) {
            *s += v;
        }
        n += 1;
    }
    if n > 0 {
        sum.iter_mut().for_each(|v| *v /= n as f64);
    }
    sum
}

fn run_fold<L: Learner>(
    learner: &L,
    x: &[[f64; N_PAIRS]],
    y: &[bool],
    assignment: &[usize],
    fold: usize,
    cfg: &ClassifierConfig,
) -> Result<FoldReport> {
    let (mut train_x, mut train_y, mut test_x, mut test_y) = (vec![], vec![], vec![], vec![]);
    for i in 0..x.len() {
        if assignment[i] == fold {
            test_x.push(x[i]);
            test_y.push(y[i]);
        } else {
            train_x.push(x[i]);
            train_y.push(y[i]);
        }
    }
    if cfg.standardize {
        let s = Standardizer::fit(&train_x)?;
        train_x = s.apply_all(&train_x);
        test_x = s.apply_all(&test_x);
    }
    let model = learner.fit(&train_x, &train_y)?;
    let scores: Vec<f64> = test_x.iter().map(|r| model.score(r)).collect();
    Ok(FoldReport {
        fold,
        n_train: train_x.len(),
        n_test: test_x.len(),
        metrics: Metrics::evaluate(&scores, &test_y, cfg.threshold)?,
        feature_importance: model.importance().unwrap_or([0.0; N_PAIRS]),
    })
}

fn split_report(split: usize, samples: &[LabeledSample], folds: Vec<FoldReport>) -> SplitReport {
    let n_positive = samples.iter().filter(|s| s.label.is_positive()).count();
    let metrics: Vec<Metrics> = folds.iter().map(|f| f.metrics).collect();
    SplitReport {
        split,
        n_positive,
        n_negative: samples.len() - n_positive,
        metrics: Metrics::mean(&metrics),
        feature_importance: mean_importance(folds.iter().map(|f| f.feature_importance)),
        folds,
    }
}

/// Stratified k-fold evaluation of one dataset.
pub fn cross_validate_with<L: Learner>(
    learner: &L,
    samples: &[LabeledSample],
    cfg: &ClassifierConfig,
    seed: u64,
    exec: Execution,
) -> Result<SplitReport> {
    let x: Vec<[f64; N_PAIRS]> = samples.iter().map(|s| s.features).collect();
    let y: Vec<bool> = samples.iter().map(|s| s.label.is_positive()).collect();
    let assignment = stratified_folds(&y, cfg.folds, seed)?;
    let folds: Vec<usize> = (0..cfg.folds).collect();
    let reports = par::map(exec, &folds, |&f| run_fold(learner, &x, &y, &assignment, f, cfg));
    Ok(split_report(0, samples, reports.into_iter().collect::<Result<_>>()?))
}

/// Undersampling followed by stratified cross-validation of each balanced
/// dataset; metrics are averaged over folds, then over splits.
pub fn evaluate_with<L: Learner>(
    learner: &L,
    samples: &[LabeledSample],
    cfg: &ClassifierConfig,
    seed: u64,
    exec: Execution,
) -> Result<EvalReport> {
    cfg.validate()?;
    if samples.iter().any(|s| s.features.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid("non-finite feature value"));
    }
    let n_pos = samples.iter().filter(|s| s.label.is_positive()).count();
    if n_pos == 0 || n_pos == samples.len() {
        return Err(Error::SingleClass);
    }
    let datasets = undersample_splits(samples, cfg.undersample_parts, derive_seed(seed, 0))?;
    let x: Vec<Vec<[f64; N_PAIRS]>> = datasets
        .iter()
        .map(|d| d.iter().map(|s| s.features).collect())
        .collect();
    let y: Vec<Vec<bool>> = datasets
        .iter()
        .map(|d| d.iter().map(|s| s.label.is_positive()).collect())
        .collect();
    let assignments = (0..datasets.len())
        .map(|i| stratified_folds(&y[i], cfg.folds, derive_seed(seed, 1 + i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..datasets.len())
        .flat_map(|d| (0..cfg.folds).map(move |f| (d, f)))
        .collect();
    let results = par::map(exec, &jobs, |&(d, f)| run_fold(learner, &x[d], &y[d], &assignments[d], f, cfg));
    let mut results = results.into_iter();
    let mut splits = Vec::with_capacity(datasets.len());
    for (d, dataset) in datasets.iter().enumerate() {
        let folds = results.by_ref().take(cfg.folds).collect::<Result<Vec<_>>>()?;
        splits.push(split_report(d, dataset, folds));
    }
    let metrics: Vec<Metrics> = splits.iter().map(|s| s.metrics).collect();
    Ok(EvalReport {
        metrics: Metrics::mean(&metrics),
        feature_importance: mean_importance(splits.iter().map(|s| s.feature_importance)),
        splits,
    })
}

/// [`evaluate_with`] using boosted stumps.
pub fn cross_validate(
    samples: &[LabeledSample],
    cfg: &ClassifierConfig,
    seed: u64,
    exec: Execution,
) -> Result<EvalReport> {
    evaluate_with(&cfg.boost(), samples, cfg, seed, exec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activity::Label;

    fn sample(id: usize, label: Label, v: f64) -> LabeledSample {
        let mut features = [0.0; N_PAIRS];
        features[0] = v;
        features[5] = (id % 7) as f64;
        LabeledSample {
            account_id: format!("a{id:04}"),
            features,
            label,
        }
    }

    fn imbalanced(n_pos: usize, n_neg: usize) -> Vec<LabeledSample> {
        (0..n_pos + n_neg)
            .map(|i| {
                if i < n_pos {
                    sample(i, Label::Troll, 1.0 + (i % 5) as f64)
                } else {
                    sample(i, Label::User, -1.0 - (i % 3) as f64)
                }
            })
            .collect()
    }

    #[test]
    fn undersample_sizes() {
        let data = imbalanced(342, 1981);
        let splits = undersample_splits(&data, 5, 7).unwrap();
        assert_eq!(splits.len(), 5);
        let mut seen = std::collections::BTreeSet::new();
        for s in &splits {
            let pos = s.iter().filter(|x| x.label.is_positive()).count();
            let neg = s.len() - pos;
            assert_eq!(pos, 342);
            assert!(neg == 396 || neg == 397, "{neg}");
            for x in s.iter().filter(|x| !x.label.is_positive()) {
                assert!(seen.insert(x.account_id.clone()), "negative reused");
            }
        }
        assert_eq!(seen.len(), 1981);
    }

    #[test]
    fn undersample_identity_and_determinism() {
        let data = imbalanced(4, 9);
        let one = undersample_splits(&data, 1, 3).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0], data);
        assert_eq!(undersample_splits(&data, 3, 11).unwrap(), undersample_splits(&data, 3, 11).unwrap());
        assert!(undersample_splits(&data, 10, 0).is_err());
    }

    #[test]
    fn two_folds_on_four_balanced() {
        let labels = [true, false, true, false];
        let a = stratified_folds(&labels, 2, 42).unwrap();
        for f in 0..2 {
            let pos = (0..4).filter(|&i| a[i] == f && labels[i]).count();
            let neg = (0..4).filter(|&i| a[i] == f && !labels[i]).count();
            assert_eq!((pos, neg), (1, 1));
        }
        assert_eq!(a, stratified_folds(&labels, 2, 42).unwrap());
    }

    #[test]
    fn small_class_rejected() {
        assert!(stratified_folds(&[true, false, false, false], 2, 0).is_err());
    }

    #[test]
    fn separable_data_scores_perfectly() {
        let data = imbalanced(30, 90);
        let cfg = ClassifierConfig {
            rounds: 20,
            folds: 3,
            undersample_parts: 3,
            ..ClassifierConfig::default()
        };
        let report = cross_validate(&data, &cfg, 5, Execution::Sequential).unwrap();
        assert_eq!(report.splits.len(), 3);
        assert_eq!(report.metrics.auc, 1.0);
        assert_eq!(report.metrics.recall, report.metrics.tpr);
        assert!((report.feature_importance.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let par = cross_validate(&data, &cfg, 5, Execution::Parallel).unwrap();
        assert_eq!(serde_json::to_string(&report).unwrap(), serde_json::to_string(&par).unwrap());
    }
}
