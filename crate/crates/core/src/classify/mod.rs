//! Troll/user classification on per-account reward vectors.

mod boost;
mod cv;
mod metrics;
mod standardize;

use serde::{Deserialize, Serialize};

use crate::activity::Label;
use crate::mdp::N_PAIRS;

pub use boost::{
    feature_importance, predict, predict_score, train_adaboost, train_adaboost_traced, BoostConfig,
    BoostModel, RoundTrace, Stump,
};
pub use cv::{
    cross_validate, cross_validate_with, evaluate_with, stratified_folds, undersample_splits,
    ClassifierConfig, EvalReport, FoldReport, Learner, Scorer, SplitReport,
};
pub use metrics::{roc_auc, Confusion, Metrics};
pub use standardize::{standardize, Standardizer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub account_id: String,
    pub features: [f64; N_PAIRS],
    pub label: Label,
}
