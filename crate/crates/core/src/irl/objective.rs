//! The MaxEnt objective shared by the linear and deep reward models: the
//! per-step log-likelihood of the demonstrated actions under the soft-optimal
//! policy, and its exact gradient with respect to the 12 pair rewards.
//!
//! With `c` the demonstrated pair counts, `m(s,a) = n_s pi(a|s)` the counts
//! the policy itself would produce at the demonstrated states, and
//! `P[p][p'] = T(s'|s,a) pi(a'|s')`, the reward gradient is
//!
//! ```text
//! dL/dr = (D_emp - D_exp) / n,   D_emp = (I - gamma P^T)^-1 c,
//!                                D_exp = (I - gamma P^T)^-1 m
//! ```
//!
//! i.e. the difference of two discounted visitation vectors of equal mass
//! `n / (1 - gamma)`.

use crate::error::{Error, Result};
use crate::irl::soft_vi::{log_sum_exp, soft_value_iteration_with, SoftSolution};
use crate::irl::visitation::{discounted_visitation, empirical_counts};
use crate::irl::IrlConfig;
use crate::mdp::{Trajectory, TransitionModel, N_ACTIONS, N_PAIRS, N_STATES};

/// Sufficient statistics of one demonstration.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub counts: [f64; N_PAIRS],
    pub state_counts: [f64; N_STATES],
    pub steps: usize,
}

impl Demonstration {
    pub fn from_trajectory(traj: &Trajectory) -> Result<Self> {
        let counts = empirical_counts(traj)?;
        let state_counts =
            std::array::from_fn(|s| counts[s * N_ACTIONS..(s + 1) * N_ACTIONS].iter().sum());
        Ok(Demonstration {
            counts,
            state_counts,
            steps: traj.len(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct ObjectiveEval {
    /// Mean log-likelihood per demonstrated step.
    pub log_likelihood: f64,
    pub reward_gradient: [f64; N_PAIRS],
    /// Discounted visitation seeded by the demonstrated pairs.
    pub empirical_visitation: [f64; N_PAIRS],
    /// Discounted visitation seeded by the policy's own choices.
    pub expected_visitation: [f64; N_PAIRS],
    pub solution: SoftSolution,
}

pub fn evaluate(
    t: &TransitionModel,
    demo: &Demonstration,
    rewards: &[f64; N_PAIRS],
    cfg: &IrlConfig,
    warm_start: Option<&[f64; N_STATES]>,
) -> Result<ObjectiveEval> {
    let solution = soft_value_iteration_with(
        t,
        rewards,
        cfg.gamma,
        cfg.vi_tolerance,
        cfg.max_vi_iterations,
        warm_start,
    )?;
    let n = demo.steps as f64;
    let mut log_likelihood = 0.0;
    for s in 0..N_STATES {
        let z = log_sum_exp(&solution.q[s]);
        for a in 0..N_ACTIONS {
            let c = demo.counts[s * N_ACTIONS + a];
            if c > 0.0 {
                log_likelihood += c * (solution.q[s][a] - z);
            }
        }
    }
    log_likelihood /= n;

    let policy_counts: [f64; N_PAIRS] = std::array::from_fn(|p| {
        demo.state_counts[p / N_ACTIONS] * solution.policy.pi[p / N_ACTIONS][p % N_ACTIONS]
    });
    let empirical = discounted_visitation(t, &solution.policy, &demo.counts, cfg.gamma)?;
    let expected = discounted_visitation(t, &solution.policy, &policy_counts, cfg.gamma)?;
    let reward_gradient: [f64; N_PAIRS] = std::array::from_fn(|p| (empirical[p] - expected[p]) / n);
    if !log_likelihood.is_finite() || reward_gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical("non-finite MaxEnt objective or gradient".into()));
    }
    Ok(ObjectiveEval {
        log_likelihood,
        reward_gradient,
        empirical_visitation: empirical,
        expected_visitation: expected,
        solution,
    })
}
