//! Synthetic accounts with known rewards acting in the interaction MDP.
//!
//! An agent in state `s` samples an action from the soft-optimal policy of
//! its true reward; the environment answers with a next state drawn from a
//! per-action response table. Active actions and non-NT states are logged;
//! `nt` and `NT` leave no trace, exactly as in real activity logs.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::activity::{ActivityEvent, EventKind, Label};
use crate::error::{Error, Result};
use crate::irl::{soft_value_iteration, SoftPolicy};
use crate::mdp::{
    Action, FeatureMatrix, State, Trajectory, TransitionModel, N_ACTIONS, N_FEATURES, N_PAIRS,
    N_STATES,
};
use crate::par::{self, Execution};

/// Next-state probabilities given the agent's action, `response[a][s']`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentModel {
    pub response: [[f64; N_STATES]; N_ACTIONS],
}

impl Default for EnvironmentModel {
    /// Original tweets and replies draw more engagement than retweets or
    /// silence.
    fn default() -> Self {
        EnvironmentModel {
            response: [
                [0.35, 0.20, 0.45],
                [0.20, 0.10, 0.70],
                [0.15, 0.40, 0.45],
                [0.10, 0.10, 0.80],
            ],
        }
    }
}

impl EnvironmentModel {
    pub fn validate(&self) -> Result<()> {
        for (a, row) in self.response.iter().enumerate() {
            let total: f64 = row.iter().sum();
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("environment row {a} is not a distribution")));
            }
        }
        Ok(())
    }

    /// The MDP dynamics the agent faces: `T[s][a] = response[a]`.
    pub fn transitions(&self) -> TransitionModel {
        let probs = std::array::from_fn(|_| self.response);
        TransitionModel {
            probs,
            counts: [[[0; N_STATES]; N_ACTIONS]; N_STATES],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrueReward {
    Theta([f64; N_FEATURES]),
    Pairs([f64; N_PAIRS]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub reward: TrueReward,
    pub temperature: f64,
    pub label: Label,
    /// Discount the agent plans with.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_gamma() -> f64 {
    0.9
}

impl AgentSpec {
    pub fn with_theta(theta: [f64; N_FEATURES], label: Label) -> Self {
        AgentSpec {
            reward: TrueReward::Theta(theta),
            temperature: 1.0,
            label,
            gamma: default_gamma(),
        }
    }

    pub fn with_rewards(r: [f64; N_PAIRS], label: Label) -> Self {
        AgentSpec {
            reward: TrueReward::Pairs(r),
            temperature: 1.0,
            label,
            gamma: default_gamma(),
        }
    }

    pub fn rewards(&self) -> [f64; N_PAIRS] {
        match &self.reward {
            TrueReward::Theta(theta) => FeatureMatrix::canonical().rewards(theta),
            TrueReward::Pairs(r) => *r,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(Error::invalid(format!("temperature {} must be positive", self.temperature)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!("agent gamma {} outside [0,1)", self.gamma)));
        }
        Ok(())
    }

    /// Behaviour policy: softmax of the soft-optimal Q over `temperature`.
    pub fn policy(&self, env: &EnvironmentModel) -> Result<SoftPolicy> {
        self.validate()?;
        let sol = soft_value_iteration(&env.transitions(), &self.rewards(), self.gamma, 1e-12)?;
        Ok(SoftPolicy::from_q(&sol.q, self.temperature))
    }
}

/// Both the hidden state-action path and the log it leaves.
#[derive(Debug, Clone)]
pub struct SimulatedRun {
    pub steps: Vec<(State, Action)>,
    pub events: Vec<ActivityEvent>,
}

impl SimulatedRun {
    pub fn trajectory(&self, account_id: &str) -> Trajectory {
        Trajectory::new(account_id, self.steps.clone())
    }
}

fn sample(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Round-off: fall back to the last index with positive mass.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

const BASE_TIMESTAMP_MS: u64 = 1_451_606_400_000;
const MAX_GAP_MS: u64 = 3_600_000;

/// Runs one agent for `steps` decisions starting in NT.
pub fn simulate_run(
    account_id: &str,
    spec: &AgentSpec,
    env: &EnvironmentModel,
    steps: usize,
    seed: u64,
) -> Result<SimulatedRun> {
    if steps == 0 {
        return Err(Error::invalid("simulation needs at least one step"));
    }
    env.validate()?;
    let policy = spec.policy(env)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ts = BASE_TIMESTAMP_MS;
    let mut state = State::Nt;
    let mut path = Vec::with_capacity(steps);
    let mut events = Vec::new();
    let mut emit = |rng: &mut ChaCha8Rng, kind: EventKind| {
        ts += rng.random_range(1..=MAX_GAP_MS);
        events.push(ActivityEvent {
            account_id: account_id.to_string(),
            timestamp: ts,
            kind,
        });
    };
    for _ in 0..steps {
        let action = Action::ALL[sample(&mut rng, &policy.pi[state.index()])];
        path.push((state, action));
        if let Some(kind) = EventKind::from_action(action) {
            emit(&mut rng, kind);
        }
        state = State::ALL[sample(&mut rng, &env.response[action.index()])];
        if let Some(kind) = EventKind::from_state(state) {
            emit(&mut rng, kind);
        }
    }
    Ok(SimulatedRun { steps: path, events })
}

/// The event log of [`simulate_run`].
pub fn simulate_agent(
    account_id: &str,
    spec: &AgentSpec,
    env: &EnvironmentModel,
    steps: usize,
    seed: u64,
) -> Result<Vec<ActivityEvent>> {
    simulate_run(account_id, spec, env, steps, seed).map(|r| r.events)
}

/// Transition probabilities of the trajectories recovered from the log of a
/// stationary agent, which differ from the environment because silent
/// `(NT, nt)` stretches are invisible and a passive event followed by an
/// action is read as a reaction to it.
///
/// After an observed `(s, a)` with `a != nt` the pending state is cleared:
/// a non-NT response is observed directly, while an NT response leaves the
/// agent silent-pending until it acts (observed NT) or a later response
/// arrives. After `(s, nt)` the pair was flushed by an arriving response,
/// which is the next observed state. `(NT, nt)` is never observed and keeps
/// the uniform row of the estimator.
pub fn composed_dynamics(env: &EnvironmentModel, policy: &SoftPolicy) -> TransitionModel {
    let nt = Action::Nt.index();
    let (rt, rp, none) = (State::Rt.index(), State::Rp.index(), State::Nt.index());
    let q = policy.pi[none][nt];
    let e = env.response[nt];
    // Next observed state when acting from NT with nothing pending.
    let denom = 1.0 - q * e[none];
    let mut from_idle = [0.0; N_STATES];
    from_idle[none] = (1.0 - q) / denom;
    from_idle[rt] = q * e[rt] / denom;
    from_idle[rp] = q * e[rp] / denom;

    let mut probs = TransitionModel::uniform().probs;
    for s in 0..N_STATES {
        for a in 0..N_ACTIONS {
            if a == nt {
                if s == none {
                    continue;
                }
                let engaged = e[rt] + e[rp];
                probs[s][a] = [e[rt] / engaged, e[rp] / engaged, 0.0];
            } else {
                let resp = env.response[a];
                probs[s][a] = std::array::from_fn(|x| {
                    let direct = if x == none { 0.0 } else { resp[x] };
                    direct + resp[none] * from_idle[x]
                });
            }
        }
    }
    TransitionModel {
        probs,
        counts: [[[0; N_STATES]; N_ACTIONS]; N_STATES],
    }
}

/// SplitMix64 finaliser over `(master, stream)`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationConfig {
    pub n_troll: usize,
    pub n_user: usize,
    pub troll: AgentSpec,
    pub user: AgentSpec,
    pub env: EnvironmentModel,
    /// Per-account step counts are drawn uniformly from this range.
    pub min_steps: usize,
    pub max_steps: usize,
    /// Standard deviation of per-account Gaussian noise on the profile's
    /// feature weights or pair rewards.
    pub jitter: f64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        PopulationConfig {
            n_troll: 150,
            n_user: 750,
            troll: AgentSpec::with_theta([-0.5, -0.5, 1.2, 0.4, -0.2], Label::Troll),
            user: AgentSpec::with_theta([0.5, 0.5, 0.2, 0.2, 0.4], Label::User),
            env: EnvironmentModel::default(),
            min_steps: 200,
            max_steps: 200,
            jitter: 0.3,
        }
    }
}

impl PopulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_troll == 0 || self.n_user == 0 {
            return Err(Error::invalid("population needs at least one troll and one user"));
        }
        if self.min_steps == 0 || self.min_steps > self.max_steps {
            return Err(Error::invalid(format!(
                "invalid step range {}..={}",
                self.min_steps, self.max_steps
            )));
        }
        if !self.jitter.is_finite() || self.jitter < 0.0 {
            return Err(Error::invalid(format!("jitter {} must be non-negative", self.jitter)));
        }
        self.env.validate()?;
        self.troll.validate()?;
        self.user.validate()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AccountTruth {
    pub account_id: String,
    pub label: Label,
    pub rewards: [f64; N_PAIRS],
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct Population {
    pub events: Vec<ActivityEvent>,
    pub labels: BTreeMap<String, Label>,
    pub truth: Vec<AccountTruth>,
}

fn jittered(spec: &AgentSpec, jitter: f64, rng: &mut ChaCha8Rng) -> AgentSpec {
    let mut out = spec.clone();
    if jitter > 0.0 {
        let noise = Normal::new(0.0, jitter).expect("jitter validated");
        match &mut out.reward {
            TrueReward::Theta(th) => th.iter_mut().for_each(|x| *x += noise.sample(rng)),
            TrueReward::Pairs(r) => r.iter_mut().for_each(|x| *x += noise.sample(rng)),
        }
    }
    out
}

/// Simulates `n_troll + n_user` independent accounts. Account `i` uses seed
/// `derive_seed(seed, i)` for its profile noise, length and event stream.
pub fn generate_population(cfg: &PopulationConfig, seed: u64, exec: Execution) -> Result<Population> {
    cfg.validate()?;
    let jobs: Vec<(usize, String, &AgentSpec)> = (0..cfg.n_troll)
        .map(|i| (i, format!("troll_{i:05}"), &cfg.troll))
        .chain((0..cfg.n_user).map(|i| (cfg.n_troll + i, format!("user_{i:05}"), &cfg.user)))
        .collect();
    let runs = par::map(exec, &jobs, |(idx, id, profile)| -> Result<_> {
        let account_seed = derive_seed(seed, *idx as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(account_seed);
        let spec = jittered(profile, cfg.jitter, &mut rng);
        let steps = rng.random_range(cfg.min_steps..=cfg.max_steps);
        let run_seed: u64 = rng.random();
        let events = simulate_agent(id, &spec, &cfg.env, steps, run_seed)?;
        Ok((
            AccountTruth {
                account_id: id.clone(),
                label: profile.label,
                rewards: spec.rewards(),
                steps,
            },
            events,
        ))
    });
    let mut pop = Population {
        events: Vec::new(),
        labels: BTreeMap::new(),
        truth: Vec::with_capacity(jobs.len()),
    };
    for run in runs {
        let (truth, events) = run?;
        pop.labels.insert(truth.account_id.clone(), truth.label);
        pop.events.extend(events);
        pop.truth.push(truth);
    }
    Ok(pop)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activity::{build_trajectory, filter_accounts};

    #[test]
    fn zero_reward_is_uniform() {
        let spec = AgentSpec::with_rewards([0.0; N_PAIRS], Label::User);
        let run = simulate_run("a", &spec, &EnvironmentModel::default(), 10_000, 1).unwrap();
        for a in Action::ALL {
            let freq = run.steps.iter().filter(|(_, x)| *x == a).count() as f64 / 10_000.0;
            assert!((freq - 0.25).abs() < 0.05, "{a}: {freq}");
        }
    }

    #[test]
    fn tweet_bonus_makes_tweeting_modal() {
        let mut r = [0.0; N_PAIRS];
        for s in 0..N_STATES {
            r[s * N_ACTIONS + Action::Tw.index()] = 10.0;
        }
        let spec = AgentSpec::with_rewards(r, Label::Troll);
        let run = simulate_run("a", &spec, &EnvironmentModel::default(), 2_000, 2).unwrap();
        let count = |a: Action| run.steps.iter().filter(|(_, x)| *x == a).count();
        for a in [Action::Rt, Action::Rp, Action::Nt] {
            assert!(count(Action::Tw) > count(a));
        }
    }

    #[test]
    fn same_seed_same_log() {
        let spec = AgentSpec::with_theta([0.1, -0.2, 0.3, 0.0, 0.5], Label::User);
        let env = EnvironmentModel::default();
        let a = simulate_agent("a", &spec, &env, 300, 9).unwrap();
        let b = simulate_agent("a", &spec, &env, 300, 9).unwrap();
        assert_eq!(a, b);
        let c = simulate_agent("a", &spec, &env, 300, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn timestamps_strictly_increase() {
        let spec = AgentSpec::with_theta([0.0; 5], Label::User);
        let ev = simulate_agent("a", &spec, &EnvironmentModel::default(), 500, 3).unwrap();
        assert!(ev.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
    }

    #[test]
    fn log_reconstruction_skips_only_idle_silence() {
        let spec = AgentSpec::with_theta([0.2, 0.1, 0.3, -0.1, 0.2], Label::User);
        let run = simulate_run("a", &spec, &EnvironmentModel::default(), 400, 4).unwrap();
        let traj = build_trajectory("a", &run.events).unwrap();
        let active = run.steps.iter().filter(|(_, a)| *a != Action::Nt).count();
        let observed_active = traj.steps.iter().filter(|(_, a)| *a != Action::Nt).count();
        assert_eq!(active, observed_active);
        assert!(traj.steps.iter().all(|&p| p != (State::Nt, Action::Nt)));
    }

    #[test]
    fn composed_rows_are_stochastic() {
        let spec = AgentSpec::with_theta([0.3, -0.4, 0.5, 0.1, -0.2], Label::User);
        let env = EnvironmentModel::default();
        let t = composed_dynamics(&env, &spec.policy(&env).unwrap());
        for rows in t.probs {
            for row in rows {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn population_seeds_are_disjoint() {
        let cfg = PopulationConfig {
            n_troll: 3,
            n_user: 3,
            min_steps: 50,
            max_steps: 80,
            ..PopulationConfig::default()
        };
        let pop = generate_population(&cfg, 5, Execution::default()).unwrap();
        assert_eq!(pop.labels.len(), 6);
        let grouped = filter_accounts(&pop.events, 0);
        let streams: Vec<Vec<_>> = grouped
            .values()
            .map(|evs| evs.iter().map(|e| (e.timestamp, e.kind)).collect())
            .collect();
        for i in 0..streams.len() {
            for j in i + 1..streams.len() {
                assert_ne!(streams[i], streams[j]);
            }
        }
        assert!(PopulationConfig { n_troll: 0, ..cfg }.validate().is_err());
    }
}
