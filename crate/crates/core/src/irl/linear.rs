use serde::Serialize;

use crate::error::Result;
use crate::irl::objective::{evaluate, Demonstration, ObjectiveEval};
use crate::irl::soft_vi::SoftPolicy;
use crate::irl::visitation::{expected_visitation, initial_distribution, normalized_counts};
use crate::irl::{IrlConfig, RewardVector, ThetaVector};
use crate::mdp::{FeatureMatrix, Trajectory, TransitionModel, N_FEATURES, N_PAIRS, N_STATES};

/// Result of one per-account fit.
#[derive(Debug, Clone, Serialize)]
pub struct IrlFit {
    pub rewards: RewardVector,
    /// Feature weights; `None` for the deep model.
    pub theta: Option<ThetaVector>,
    /// Mean per-step log-likelihood of the demonstration at the final reward.
    pub log_likelihood: f64,
    pub policy: SoftPolicy,
    /// Demonstrated pair counts scaled to the visitation horizon.
    pub observed_counts: [f64; N_PAIRS],
    /// Forward-pass expected pair counts of the fitted policy from the
    /// demonstration's first state over the same horizon.
    pub expected_counts: [f64; N_PAIRS],
}

/// Mean log-likelihood and its gradient with respect to `theta`.
pub fn linear_objective_gradient(
    f: &FeatureMatrix,
    t: &TransitionModel,
    demo: &Demonstration,
    theta: &[f64; N_FEATURES],
    cfg: &IrlConfig,
) -> Result<(f64, [f64; N_FEATURES])> {
    let eval = evaluate(t, demo, &f.rewards(theta), cfg, None)?;
    Ok((eval.log_likelihood, f.project(&eval.reward_gradient)))
}

/// Linear MaxEnt IRL: gradient ascent on `theta` from zero with
/// `theta += lr * f (D_emp - D_exp) / n` each epoch, `r = theta^T f`.
pub fn maxent_irl(
    f: &FeatureMatrix,
    t: &TransitionModel,
    traj: &Trajectory,
    cfg: &IrlConfig,
) -> Result<IrlFit> {
    cfg.validate()?;
    let demo = Demonstration::from_trajectory(traj)?;
    let mut theta = [0.0; N_FEATURES];
    let mut warm: Option<[f64; N_STATES]> = None;
    for _ in 0..cfg.epochs {
        let eval = evaluate(t, &demo, &f.rewards(&theta), cfg, warm.as_ref())?;
        let grad = f.project(&eval.reward_gradient);
        for (th, g) in theta.iter_mut().zip(grad) {
            *th += cfg.learning_rate * g;
        }
        warm = Some(eval.solution.relative_v);
    }
    let theta = ThetaVector::new(theta)?;
    let rewards = RewardVector::new(f.rewards(&theta.0))?;
    let eval = evaluate(t, &demo, &rewards.0, cfg, warm.as_ref())?;
    finish(t, traj, cfg, rewards, Some(theta), eval)
}

pub(crate) fn finish(
    t: &TransitionModel,
    traj: &Trajectory,
    cfg: &IrlConfig,
    rewards: RewardVector,
    theta: Option<ThetaVector>,
    eval: ObjectiveEval,
) -> Result<IrlFit> {
    let horizon = cfg.horizon.unwrap_or(traj.len());
    let rho0 = initial_distribution(traj)?;
    Ok(IrlFit {
        rewards,
        theta,
        log_likelihood: eval.log_likelihood,
        policy: eval.solution.policy,
        observed_counts: normalized_counts(traj, horizon)?,
        expected_counts: expected_visitation(t, &eval.solution.policy, &rho0, horizon)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::irl::visitation::discounted_visitation;
    use crate::mdp::{estimate_transitions, Action, State};

    fn toy_trajectory() -> Trajectory {
        let (tw, rt, rp, nt) = (Action::Tw, Action::Rt, Action::Rp, Action::Nt);
        let (rt_s, rp_s, nt_s) = (State::Rt, State::Rp, State::Nt);
        Trajectory::new(
            "toy",
            vec![
                (nt_s, tw),
                (rt_s, tw),
                (nt_s, rt),
                (rp_s, rp),
                (nt_s, tw),
                (rt_s, nt),
                (rp_s, tw),
                (nt_s, tw),
                (rt_s, rp),
                (nt_s, tw),
            ],
        )
    }

    #[test]
    fn one_epoch_closed_form() {
        let traj = toy_trajectory();
        let t = estimate_transitions(&traj).unwrap();
        let f = FeatureMatrix::canonical();
        let cfg = IrlConfig {
            epochs: 1,
            learning_rate: 0.3,
            ..IrlConfig::default()
        };
        let fit = maxent_irl(&f, &t, &traj, &cfg).unwrap();
        // At theta = 0 the policy is uniform.
        let uniform = SoftPolicy::uniform();
        let demo = Demonstration::from_trajectory(&traj).unwrap();
        let m: [f64; N_PAIRS] = std::array::from_fn(|p| demo.state_counts[p / 4] * 0.25);
        let d_emp = discounted_visitation(&t, &uniform, &demo.counts, cfg.gamma).unwrap();
        let d_exp = discounted_visitation(&t, &uniform, &m, cfg.gamma).unwrap();
        let diff: [f64; N_PAIRS] = std::array::from_fn(|p| (d_emp[p] - d_exp[p]) / traj.len() as f64);
        let expected = f.project(&diff).map(|g| cfg.learning_rate * g);
        let theta = fit.theta.unwrap().0;
        for k in 0..N_FEATURES {
            assert!((theta[k] - expected[k]).abs() < 1e-12, "{theta:?} vs {expected:?}");
        }
    }

    #[test]
    fn deterministic() {
        let traj = toy_trajectory();
        let t = estimate_transitions(&traj).unwrap();
        let f = FeatureMatrix::canonical();
        let cfg = IrlConfig {
            epochs: 20,
            ..IrlConfig::default()
        };
        let a = maxent_irl(&f, &t, &traj, &cfg).unwrap();
        let b = maxent_irl(&f, &t, &traj.clone(), &cfg).unwrap();
        assert_eq!(a.rewards, b.rewards);
        assert_eq!(a.theta, b.theta);
    }

    #[test]
    fn fit_increases_likelihood() {
        let traj = toy_trajectory();
        let t = estimate_transitions(&traj).unwrap();
        let f = FeatureMatrix::canonical();
        let demo = Demonstration::from_trajectory(&traj).unwrap();
        let cfg = IrlConfig::default();
        let (ll0, _) = linear_objective_gradient(&f, &t, &demo, &[0.0; 5], &cfg).unwrap();
        let fit = maxent_irl(&f, &t, &traj, &cfg).unwrap();
        assert!(fit.log_likelihood > ll0);
        let total: f64 = fit.expected_counts.iter().sum();
        assert!((total - traj.len() as f64).abs() < 1e-9);
    }
}
