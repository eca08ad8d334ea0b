use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::irl::soft_vi::SoftPolicy;
use crate::mdp::{Trajectory, TransitionModel, N_ACTIONS, N_PAIRS, N_STATES};

/// Expected state-action visit counts over `horizon` steps from `rho0`:
/// `d_0 = rho0`, `d_{t+1}(s') = sum_{s,a} d_t(s) pi(a|s) T(s'|s,a)`,
/// accumulating `d_t(s) pi(a|s)` per pair. The result sums to `horizon`.
pub fn expected_visitation(
    t: &TransitionModel,
    policy: &SoftPolicy,
    rho0: &[f64; N_STATES],
    horizon: usize,
) -> Result<[f64; N_PAIRS]> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let mass: f64 = rho0.iter().sum();
    if (mass - 1.0).abs() > 1e-9 || rho0.iter().any(|&x| x < 0.0) {
        return Err(Error::invalid(format!("initial distribution sums to {mass}")));
    }
    let mut visits = [0.0; N_PAIRS];
    let mut d = *rho0;
    for _ in 0..horizon {
        let mut next = [0.0; N_STATES];
        for s in 0..N_STATES {
            for a in 0..N_ACTIONS {
                let w = d[s] * policy.pi[s][a];
                visits[s * N_ACTIONS + a] += w;
                for (n, p) in next.iter_mut().zip(&t.probs[s][a]) {
                    *n += w * p;
                }
            }
        }
        d = next;
    }
    Ok(visits)
}

/// Raw per-pair step counts of a trajectory.
pub fn empirical_counts(traj: &Trajectory) -> Result<[f64; N_PAIRS]> {
    if traj.is_empty() {
        return Err(Error::invalid(format!("trajectory {} is empty", traj.account_id)));
    }
    let mut counts = [0.0; N_PAIRS];
    for p in traj.pair_indices() {
        counts[p] += 1.0;
    }
    Ok(counts)
}

/// Pair counts rescaled to total mass `horizon`.
pub fn normalized_counts(traj: &Trajectory, horizon: usize) -> Result<[f64; N_PAIRS]> {
    let counts = empirical_counts(traj)?;
    let scale = horizon as f64 / traj.len() as f64;
    Ok(counts.map(|c| c * scale))
}

/// Indicator of the first step's state.
pub fn initial_distribution(traj: &Trajectory) -> Result<[f64; N_STATES]> {
    let (s, _) = traj
        .steps
        .first()
        .ok_or_else(|| Error::invalid(format!("trajectory {} is empty", traj.account_id)))?;
    let mut rho = [0.0; N_STATES];
    rho[s.index()] = 1.0;
    Ok(rho)
}

/// Pair-to-pair kernel `P[p][p'] = T(s'|s,a) pi(a'|s')`.
fn pair_kernel(t: &TransitionModel, policy: &SoftPolicy) -> SMatrix<f64, N_PAIRS, N_PAIRS> {
    SMatrix::from_fn(|p, q| {
        let (s, a) = (p / N_ACTIONS, p % N_ACTIONS);
        let (s2, a2) = (q / N_ACTIONS, q % N_ACTIONS);
        t.probs[s][a][s2] * policy.pi[s2][a2]
    })
}

/// Discounted pair visitation generated by `seed`: the solution of
/// `x = seed + gamma * P^T x`, i.e. `sum_k gamma^k (P^T)^k seed`.
pub fn discounted_visitation(
    t: &TransitionModel,
    policy: &SoftPolicy,
    seed: &[f64; N_PAIRS],
    gamma: f64,
) -> Result<[f64; N_PAIRS]> {
    let kernel = pair_kernel(t, policy);
    let system = SMatrix::<f64, N_PAIRS, N_PAIRS>::identity() - kernel.transpose() * gamma;
    let rhs = SVector::<f64, N_PAIRS>::from_column_slice(seed);
    let x = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular visitation system".into()))?;
    Ok(std::array::from_fn(|p| x[p]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{Action, State};

    #[test]
    fn single_step_horizon() {
        let mut policy = SoftPolicy::uniform();
        policy.pi[1] = [0.1, 0.2, 0.3, 0.4];
        let rho = [0.2, 0.5, 0.3];
        let v = expected_visitation(&TransitionModel::uniform(), &policy, &rho, 1).unwrap();
        for s in 0..N_STATES {
            for a in 0..N_ACTIONS {
                assert!((v[s * N_ACTIONS + a] - rho[s] * policy.pi[s][a]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn uniform_two_steps() {
        let v = expected_visitation(
            &TransitionModel::uniform(),
            &SoftPolicy::uniform(),
            &[1.0 / 3.0; 3],
            2,
        )
        .unwrap();
        for x in v {
            assert!((x - 1.0 / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_chain_concentrates() {
        // Always tw; tw keeps the state fixed.
        let mut probs = TransitionModel::uniform().probs;
        for s in 0..N_STATES {
            probs[s][Action::Tw.index()] = [0.0; N_STATES];
            probs[s][Action::Tw.index()][s] = 1.0;
        }
        let t = TransitionModel::from_probs(probs).unwrap();
        let policy = SoftPolicy {
            pi: [[1.0, 0.0, 0.0, 0.0]; N_STATES],
        };
        let v = expected_visitation(&t, &policy, &[0.0, 1.0, 0.0], 7).unwrap();
        let hot = State::Rp.index() * N_ACTIONS + Action::Tw.index();
        for (p, x) in v.iter().enumerate() {
            if p == hot {
                assert_eq!(*x, 7.0);
            } else {
                assert_eq!(*x, 0.0);
            }
        }
    }

    #[test]
    fn counts_and_initial_state() {
        let t = Trajectory::new("a", vec![(State::Rt, Action::Tw), (State::Rt, Action::Tw)]);
        let c = empirical_counts(&t).unwrap();
        assert_eq!(c[0], 2.0);
        assert_eq!(c.iter().sum::<f64>(), 2.0);
        let t = Trajectory::new("a", vec![(State::Rp, Action::Nt), (State::Nt, Action::Tw)]);
        assert_eq!(initial_distribution(&t).unwrap(), [0.0, 1.0, 0.0]);
        assert!(empirical_counts(&Trajectory::new("e", vec![])).is_err());
        assert!(initial_distribution(&Trajectory::new("e", vec![])).is_err());
    }

    #[test]
    fn counts_match_independent_tally() {
        let steps = vec![
            (State::Rt, Action::Tw),
            (State::Nt, Action::Rt),
            (State::Rp, Action::Nt),
            (State::Rt, Action::Tw),
        ];
        let c = empirical_counts(&Trajectory::new("a", steps.clone())).unwrap();
        for s in State::ALL {
            for a in Action::ALL {
                let tally = steps.iter().filter(|&&x| x == (s, a)).count() as f64;
                assert_eq!(c[crate::mdp::pair_index(s, a)], tally);
            }
        }
    }

    #[test]
    fn discounted_visitation_matches_power_series() {
        let mut policy = SoftPolicy::uniform();
        policy.pi[0] = [0.7, 0.1, 0.1, 0.1];
        let mut probs = TransitionModel::uniform().probs;
        probs[0][0] = [0.6, 0.3, 0.1];
        let t = TransitionModel::from_probs(probs).unwrap();
        let seed: [f64; N_PAIRS] = std::array::from_fn(|p| (p % 5) as f64);
        let gamma = 0.8;
        let x = discounted_visitation(&t, &policy, &seed, gamma).unwrap();
        // Power series with explicit loops.
        let mut term = seed;
        let mut acc = seed;
        for _ in 0..400 {
            let mut next = [0.0; N_PAIRS];
            for p in 0..N_PAIRS {
                let (s, a) = (p / 4, p % 4);
                for s2 in 0..3 {
                    for a2 in 0..4 {
                        next[s2 * 4 + a2] += gamma * term[p] * t.probs[s][a][s2] * policy.pi[s2][a2];
                    }
                }
            }
            term = next;
            for p in 0..N_PAIRS {
                acc[p] += term[p];
            }
        }
        for p in 0..N_PAIRS {
            assert!((x[p] - acc[p]).abs() < 1e-9);
        }
    }
}
