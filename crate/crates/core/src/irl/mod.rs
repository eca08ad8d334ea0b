//! Maximum-entropy inverse reinforcement learning over the interaction MDP.

mod deep;
mod linear;
pub mod objective;
pub mod soft_vi;
pub mod visitation;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{N_FEATURES, N_PAIRS};

pub use deep::{deep_maxent_irl, deep_objective_gradient, DeepIrlFit, MlpReward};
pub use linear::{linear_objective_gradient, maxent_irl, IrlFit};
pub use objective::{Demonstration, ObjectiveEval};
pub use soft_vi::{
    residual_trace, soft_value_iteration, soft_value_iteration_with, SoftPolicy, SoftSolution,
};
pub use visitation::{
    discounted_visitation, empirical_counts, expected_visitation, initial_distribution,
    normalized_counts,
};

/// Reward of each of the 12 state-action pairs, indexed by `pair_index`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardVector(pub [f64; N_PAIRS]);

/// Weights of the five features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaVector(pub [f64; N_FEATURES]);

impl RewardVector {
    pub fn new(r: [f64; N_PAIRS]) -> Result<Self> {
        if r.iter().all(|x| x.is_finite()) {
            Ok(RewardVector(r))
        } else {
            Err(Error::Numerical("non-finite reward".into()))
        }
    }
}

impl ThetaVector {
    pub fn new(theta: [f64; N_FEATURES]) -> Result<Self> {
        if theta.iter().all(|x| x.is_finite()) {
            Ok(ThetaVector(theta))
        } else {
            Err(Error::Numerical("non-finite feature weight".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IrlConfig {
    pub gamma: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub vi_tolerance: f64,
    pub max_vi_iterations: usize,
    /// Horizon of the forward visitation diagnostic; trajectory length when
    /// unset.
    pub horizon: Option<usize>,
    /// Hidden layer widths of the deep reward model.
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for IrlConfig {
    fn default() -> Self {
        IrlConfig {
            gamma: 0.9,
            learning_rate: 0.5,
            epochs: 200,
            vi_tolerance: 1e-6,
            max_vi_iterations: soft_vi::DEFAULT_MAX_ITERATIONS,
            horizon: None,
            hidden: vec![8],
            seed: 0,
        }
    }
}

impl IrlConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0,1)", self.gamma));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.vi_tolerance.is_nan() || self.vi_tolerance <= 0.0 {
            return bad(format!("vi_tolerance {} must be positive", self.vi_tolerance));
        }
        if self.max_vi_iterations == 0 {
            return bad("max_vi_iterations must be positive".into());
        }
        if self.horizon == Some(0) {
            return bad("horizon must be positive".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("deep reward model needs at least one non-empty hidden layer".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum IrlVariant {
    #[default]
    Linear,
    Deep,
}

impl std::str::FromStr for IrlVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(IrlVariant::Linear),
            "deep" => Ok(IrlVariant::Deep),
            _ => Err(Error::Config(format!("unknown IRL variant {s:?}"))),
        }
    }
}
