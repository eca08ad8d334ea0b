use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::irl::linear::{finish, IrlFit};
use crate::irl::objective::{evaluate, Demonstration};
use crate::irl::{IrlConfig, RewardVector};
use crate::mdp::{FeatureMatrix, Trajectory, TransitionModel, N_FEATURES, N_PAIRS, N_STATES};

#[derive(Debug, Clone, PartialEq, Serialize)]
struct Dense {
    n_in: usize,
    n_out: usize,
    /// Row-major `n_out x n_in`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Dense {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_out)
            .map(|o| {
                let row = &self.weights[o * self.n_in..(o + 1) * self.n_in];
                self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }
}

/// Fully connected reward approximator: 5 features in, tanh hidden layers,
/// one linear output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MlpReward {
    layers: Vec<Dense>,
}

impl MlpReward {
    fn shapes(hidden: &[usize]) -> Result<Vec<(usize, usize)>> {
        if hidden.is_empty() || hidden.contains(&0) {
            return Err(Error::invalid("reward network needs at least one non-empty hidden layer"));
        }
        let mut dims = vec![N_FEATURES];
        dims.extend_from_slice(hidden);
        dims.push(1);
        Ok(dims.windows(2).map(|w| (w[0], w[1])).collect())
    }

    /// All weights and biases zero, so every reward is zero.
    pub fn zeros(hidden: &[usize]) -> Result<Self> {
        let layers = Self::shapes(hidden)?
            .into_iter()
            .map(|(n_in, n_out)| Dense {
                n_in,
                n_out,
                weights: vec![0.0; n_in * n_out],
                bias: vec![0.0; n_out],
            })
            .collect();
        Ok(MlpReward { layers })
    }

    /// Weights uniform in `+-1/sqrt(fan_in)`, zero biases.
    pub fn init(hidden: &[usize], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = Self::shapes(hidden)?
            .into_iter()
            .map(|(n_in, n_out)| {
                let bound = 1.0 / (n_in as f64).sqrt();
                Dense {
                    n_in,
                    n_out,
                    weights: (0..n_in * n_out).map(|_| rng.random_range(-bound..bound)).collect(),
                    bias: vec![0.0; n_out],
                }
            })
            .collect();
        Ok(MlpReward { layers })
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.num_params(), "parameter count mismatch");
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[at..at + nw]);
            at += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[at..at + nb]);
            at += nb;
        }
    }

    /// Layer inputs for one feature column; the last entry is the output.
    fn forward(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = l.apply(acts.last().unwrap());
            if i < last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        acts
    }

    pub fn reward(&self, features: &[f64; N_FEATURES]) -> f64 {
        self.forward(features).last().unwrap()[0]
    }

    pub fn rewards(&self, f: &FeatureMatrix) -> [f64; N_PAIRS] {
        std::array::from_fn(|p| self.reward(&f.column(p)))
    }

    /// Gradient of `sum_p upstream[p] * r_p` with respect to the parameters,
    /// in `params()` order.
    pub fn backprop(&self, f: &FeatureMatrix, upstream: &[f64; N_PAIRS]) -> Vec<f64> {
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = self
            .layers
            .iter()
            .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
            .collect();
        let last = self.layers.len() - 1;
        for (p, &g) in upstream.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let acts = self.forward(&f.column(p));
            let mut delta = vec![g];
            for i in (0..self.layers.len()).rev() {
                let l = &self.layers[i];
                let input = &acts[i];
                let (gw, gb) = &mut grads[i];
                for o in 0..l.n_out {
                    gb[o] += delta[o];
                    for j in 0..l.n_in {
                        gw[o * l.n_in + j] += delta[o] * input[j];
                    }
                }
                if i == 0 {
                    break;
                }
                // Back through the weights, then the tanh that produced `input`.
                let mut prev = vec![0.0; l.n_in];
                for o in 0..l.n_out {
                    for j in 0..l.n_in {
                        prev[j] += delta[o] * l.weights[o * l.n_in + j];
                    }
                }
                debug_assert!(i - 1 < last);
                for (d, a) in prev.iter_mut().zip(input) {
                    *d *= 1.0 - a * a;
                }
                delta = prev;
            }
        }
        let mut out = Vec::with_capacity(self.num_params());
        for (gw, gb) in grads {
            out.extend(gw);
            out.extend(gb);
        }
        out
    }
}

/// Mean log-likelihood and its gradient with respect to the network
/// parameters.
pub fn deep_objective_gradient(
    f: &FeatureMatrix,
    t: &TransitionModel,
    demo: &Demonstration,
    net: &MlpReward,
    cfg: &IrlConfig,
) -> Result<(f64, Vec<f64>)> {
    let eval = evaluate(t, demo, &net.rewards(f), cfg, None)?;
    Ok((eval.log_likelihood, net.backprop(f, &eval.reward_gradient)))
}

#[derive(Debug, Clone, Serialize)]
pub struct DeepIrlFit {
    pub fit: IrlFit,
    pub net: MlpReward,
}

/// Deep MaxEnt IRL: the same reward gradient as the linear model,
/// backpropagated through an [`MlpReward`] initialised from `cfg.seed`.
pub fn deep_maxent_irl(
    f: &FeatureMatrix,
    t: &TransitionModel,
    traj: &Trajectory,
    cfg: &IrlConfig,
    hidden: &[usize],
) -> Result<DeepIrlFit> {
    cfg.validate()?;
    let demo = Demonstration::from_trajectory(traj)?;
    let mut net = MlpReward::init(hidden, cfg.seed)?;
    let mut params = net.params();
    let mut warm: Option<[f64; N_STATES]> = None;
    for _ in 0..cfg.epochs {
        let eval = evaluate(t, &demo, &net.rewards(f), cfg, warm.as_ref())?;
        let grad = net.backprop(f, &eval.reward_gradient);
        for (w, g) in params.iter_mut().zip(&grad) {
            *w += cfg.learning_rate * g;
        }
        net.set_params(&params);
        warm = Some(eval.solution.relative_v);
    }
    let rewards = RewardVector::new(net.rewards(f))?;
    let eval = evaluate(t, &demo, &rewards.0, cfg, warm.as_ref())?;
    let fit = finish(t, traj, cfg, rewards, None, eval)?;
    Ok(DeepIrlFit { fit, net })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_gives_zero_rewards() {
        let net = MlpReward::zeros(&[8]).unwrap();
        assert_eq!(net.rewards(&FeatureMatrix::canonical()), [0.0; N_PAIRS]);
    }

    #[test]
    fn requires_hidden_layer() {
        assert!(MlpReward::init(&[], 0).is_err());
        assert!(MlpReward::zeros(&[4, 0]).is_err());
    }

    #[test]
    fn params_round_trip() {
        let mut net = MlpReward::init(&[3, 2], 7).unwrap();
        assert_eq!(net.num_params(), 5 * 3 + 3 + 3 * 2 + 2 + 2 + 1);
        let p: Vec<f64> = (0..net.num_params()).map(|i| i as f64 * 0.01).collect();
        net.set_params(&p);
        assert_eq!(net.params(), p);
    }

    #[test]
    fn backprop_matches_finite_differences_of_weighted_sum() {
        let f = FeatureMatrix::canonical();
        let net = MlpReward::init(&[4, 3], 3).unwrap();
        let upstream: [f64; N_PAIRS] = std::array::from_fn(|p| (p as f64 - 5.5) * 0.2);
        let analytic = net.backprop(&f, &upstream);
        let base = net.params();
        let h = 1e-6;
        for i in 0..base.len() {
            let eval = |delta: f64| {
                let mut n = net.clone();
                let mut p = base.clone();
                p[i] += delta;
                n.set_params(&p);
                n.rewards(&f).iter().zip(&upstream).map(|(r, u)| r * u).sum::<f64>()
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            assert!((fd - analytic[i]).abs() < 1e-7, "param {i}: {fd} vs {}", analytic[i]);
        }
    }
}
