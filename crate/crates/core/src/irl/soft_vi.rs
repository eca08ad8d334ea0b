use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{TransitionModel, N_ACTIONS, N_PAIRS, N_STATES};

/// Default iteration cap for [`soft_value_iteration`].
pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;

/// Stochastic policy `pi[s][a]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftPolicy {
    pub pi: [[f64; N_ACTIONS]; N_STATES],
}

impl SoftPolicy {
    pub fn uniform() -> Self {
        SoftPolicy {
            pi: [[1.0 / N_ACTIONS as f64; N_ACTIONS]; N_STATES],
        }
    }

    /// Row-wise softmax of `q / temperature`.
    pub fn from_q(q: &[[f64; N_ACTIONS]; N_STATES], temperature: f64) -> Self {
        let mut pi = [[0.0; N_ACTIONS]; N_STATES];
        for (row, qs) in pi.iter_mut().zip(q) {
            let scaled: [f64; N_ACTIONS] = std::array::from_fn(|a| qs[a] / temperature);
            let z = log_sum_exp(&scaled);
            for (p, x) in row.iter_mut().zip(scaled) {
                *p = (x - z).exp();
            }
        }
        SoftPolicy { pi }
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.pi[s][a]
    }

    /// Mean absolute difference over all 12 entries.
    pub fn mean_abs_diff(&self, other: &SoftPolicy) -> f64 {
        let total: f64 = self
            .pi
            .iter()
            .flatten()
            .zip(other.pi.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .sum();
        total / N_PAIRS as f64
    }

    pub fn max_abs_diff(&self, other: &SoftPolicy) -> f64 {
        self.pi
            .iter()
            .flatten()
            .zip(other.pi.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct SoftSolution {
    pub policy: SoftPolicy,
    pub q: [[f64; N_ACTIONS]; N_STATES],
    pub v: [f64; N_STATES],
    /// Relative values at convergence; usable as a warm start.
    pub relative_v: [f64; N_STATES],
    pub iterations: usize,
    pub residual: f64,
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn backup(
    t: &TransitionModel,
    r: &[f64; N_PAIRS],
    gamma: f64,
    v: &[f64; N_STATES],
) -> [[f64; N_ACTIONS]; N_STATES] {
    std::array::from_fn(|s| {
        std::array::from_fn(|a| {
            let next: f64 = t.probs[s][a].iter().zip(v).map(|(p, x)| p * x).sum();
            r[s * N_ACTIONS + a] + gamma * next
        })
    })
}

fn span(xs: &[f64; N_STATES]) -> f64 {
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    hi - lo
}

/// One relative-value sweep: returns the new relative values and the span
/// of the Bellman change.
fn sweep(
    t: &TransitionModel,
    r: &[f64; N_PAIRS],
    gamma: f64,
    h: &[f64; N_STATES],
) -> ([f64; N_STATES], [f64; N_STATES], f64) {
    let q = backup(t, r, gamma, h);
    let w: [f64; N_STATES] = std::array::from_fn(|s| log_sum_exp(&q[s]));
    let delta: [f64; N_STATES] = std::array::from_fn(|s| w[s] - h[s]);
    let next: [f64; N_STATES] = std::array::from_fn(|s| w[s] - w[N_STATES - 1]);
    (next, delta, span(&delta))
}

fn check_inputs(r: &[f64; N_PAIRS], gamma: f64, tol: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::invalid(format!("discount {gamma} outside [0,1)")));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::invalid(format!("tolerance {tol} must be positive")));
    }
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite reward".into()));
    }
    Ok(())
}

/// Soft (log-sum-exp) value iteration for state-action rewards `r`.
///
/// Iterates `V(s) = log sum_a exp Q(s,a)`, `Q = r + gamma * T V` on values
/// taken relative to the NT state, stopping once the span of the Bellman
/// change falls below `tol`. The absolute level of `V` is restored from the
/// final change, so `Q` and `V` approximate the true fixed point and the
/// policy `exp(Q - V)` is unaffected by constant reward shifts.
pub fn soft_value_iteration(
    t: &TransitionModel,
    r: &[f64; N_PAIRS],
    gamma: f64,
    tol: f64,
) -> Result<SoftSolution> {
    soft_value_iteration_with(t, r, gamma, tol, DEFAULT_MAX_ITERATIONS, None)
}

pub fn soft_value_iteration_with(
    t: &TransitionModel,
    r: &[f64; N_PAIRS],
    gamma: f64,
    tol: f64,
    max_iterations: usize,
    warm_start: Option<&[f64; N_STATES]>,
) -> Result<SoftSolution> {
    check_inputs(r, gamma, tol)?;
    let mut h = warm_start.copied().unwrap_or([0.0; N_STATES]);
    let mut residual = f64::INFINITY;
    for it in 1..=max_iterations {
        let (next, delta, res) = sweep(t, r, gamma, &h);
        residual = res;
        if !res.is_finite() {
            return Err(Error::Numerical(format!("soft value iteration diverged at iteration {it}")));
        }
        if res < tol {
            let mean_delta = delta.iter().sum::<f64>() / N_STATES as f64;
            let level = if gamma == 0.0 { 0.0 } else { gamma * mean_delta / (1.0 - gamma) };
            let w: [f64; N_STATES] = std::array::from_fn(|s| h[s] + delta[s]);
            let v: [f64; N_STATES] = std::array::from_fn(|s| w[s] + level);
            let q = backup(t, r, gamma, &v);
            // Policy from relative values: identical up to a per-state constant.
            let q_rel = backup(t, r, gamma, &next);
            return Ok(SoftSolution {
                policy: SoftPolicy::from_q(&q_rel, 1.0),
                q,
                v,
                relative_v: next,
                iterations: it,
                residual,
            });
        }
        h = next;
    }
    Err(Error::NonConvergence {
        iterations: max_iterations,
        residual,
    })
}

/// Convergence residuals of the first `iterations` sweeps, for diagnostics.
pub fn residual_trace(
    t: &TransitionModel,
    r: &[f64; N_PAIRS],
    gamma: f64,
    iterations: usize,
) -> Vec<f64> {
    let mut h = [0.0; N_STATES];
    let mut out = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let (next, _, res) = sweep(t, r, gamma, &h);
        out.push(res);
        h = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Plain absolute-value fixed-point iteration, independent of the
    /// relative scheme above.
    fn brute_force_q(t: &TransitionModel, r: &[f64; N_PAIRS], gamma: f64) -> [[f64; N_ACTIONS]; N_STATES] {
        let mut v = [0.0; N_STATES];
        loop {
            let mut q = [[0.0; N_ACTIONS]; N_STATES];
            for s in 0..N_STATES {
                for a in 0..N_ACTIONS {
                    let mut e = 0.0;
                    for s2 in 0..N_STATES {
                        e += t.probs[s][a][s2] * v[s2];
                    }
                    q[s][a] = r[s * N_ACTIONS + a] + gamma * e;
                }
            }
            let mut change: f64 = 0.0;
            for s in 0..N_STATES {
                let nv = q[s].iter().map(|x| x.exp()).sum::<f64>().ln();
                change = change.max((nv - v[s]).abs());
                v[s] = nv;
            }
            if change < 1e-13 {
                return q;
            }
        }
    }

    #[test]
    fn zero_discount_returns_rewards() {
        let r: [f64; N_PAIRS] = std::array::from_fn(|p| p as f64 * 0.3 - 1.0);
        let sol = soft_value_iteration(&TransitionModel::uniform(), &r, 0.0, 1e-9).unwrap();
        for s in 0..N_STATES {
            for a in 0..N_ACTIONS {
                assert_eq!(sol.q[s][a], r[s * N_ACTIONS + a]);
            }
        }
    }

    #[test]
    fn constant_reward_gives_uniform_policy() {
        let sol = soft_value_iteration(&TransitionModel::uniform(), &[2.5; N_PAIRS], 0.9, 1e-9).unwrap();
        for row in sol.policy.pi {
            for p in row {
                assert!((p - 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matches_brute_force_fixed_point() {
        let mut r = [0.0; N_PAIRS];
        for s in 0..N_STATES {
            r[s * N_ACTIONS] = 1.0;
        }
        let t = TransitionModel::uniform();
        let sol = soft_value_iteration(&t, &r, 0.9, 1e-13).unwrap();
        let q = brute_force_q(&t, &r, 0.9);
        for s in 0..N_STATES {
            for a in 0..N_ACTIONS {
                assert!((sol.q[s][a] - q[s][a]).abs() < 1e-10, "{} vs {}", sol.q[s][a], q[s][a]);
            }
        }
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let r: [f64; N_PAIRS] = std::array::from_fn(|p| ((p * 7) % 5) as f64);
        // Sticky dynamics mix slowly.
        let mut probs = TransitionModel::uniform().probs;
        for s in 0..N_STATES {
            for a in 0..N_ACTIONS {
                probs[s][a] = [0.01; N_STATES];
                probs[s][a][s] = 0.98;
            }
        }
        let t = TransitionModel::from_probs(probs).unwrap();
        match soft_value_iteration_with(&t, &r, 0.99, 1e-12, 3, None) {
            Err(Error::NonConvergence { iterations, residual }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-12);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_discount() {
        assert!(soft_value_iteration(&TransitionModel::uniform(), &[0.0; N_PAIRS], 1.0, 1e-6).is_err());
    }
}
