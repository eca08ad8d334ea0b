//! The interaction MDP: three feedback states, four actions, the binary
//! state-action feature map and per-account transition estimates.
//!
//! Index layout is fixed: states RT=0, RP=1, NT=2; actions tw=0, rt=1,
//! rp=2, nt=3; a state-action pair lives at `4 * state + action`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_STATES: usize = 3;
pub const N_ACTIONS: usize = 4;
pub const N_PAIRS: usize = N_STATES * N_ACTIONS;
pub const N_FEATURES: usize = 5;

/// Feedback the environment gives an account.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum State {
    /// Passive retweet: someone re-shared the account's content.
    #[serde(rename = "RT")]
    Rt,
    /// Passive reply or mention.
    #[serde(rename = "RP")]
    Rp,
    /// No engagement.
    #[serde(rename = "NT")]
    Nt,
}

/// What the account does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    #[serde(rename = "tw")]
    Tw,
    #[serde(rename = "rt")]
    Rt,
    #[serde(rename = "rp")]
    Rp,
    #[serde(rename = "nt")]
    Nt,
}

impl State {
    pub const ALL: [State; N_STATES] = [State::Rt, State::Rp, State::Nt];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<State> {
        State::ALL.get(i).copied()
    }

    pub fn code(self) -> &'static str {
        match self {
            State::Rt => "RT",
            State::Rp => "RP",
            State::Nt => "NT",
        }
    }
}

impl Action {
    pub const ALL: [Action; N_ACTIONS] = [Action::Tw, Action::Rt, Action::Rp, Action::Nt];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    pub fn code(self) -> &'static str {
        match self {
            Action::Tw => "tw",
            Action::Rt => "rt",
            Action::Rp => "rp",
            Action::Nt => "nt",
        }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for State {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "RT" => Ok(State::Rt),
            "RP" => Ok(State::Rp),
            "NT" => Ok(State::Nt),
            _ => Err(Error::invalid(format!("unknown state code {s:?}"))),
        }
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tw" => Ok(Action::Tw),
            "rt" => Ok(Action::Rt),
            "rp" => Ok(Action::Rp),
            "nt" => Ok(Action::Nt),
            _ => Err(Error::invalid(format!("unknown action code {s:?}"))),
        }
    }
}

/// Position of `(state, action)` in every 12-long reward or count vector.
pub fn pair_index(state: State, action: Action) -> usize {
    N_ACTIONS * state.index() + action.index()
}

pub fn pair_from_index(p: usize) -> (State, Action) {
    assert!(p < N_PAIRS, "pair index {p} out of range");
    (
        State::ALL[p / N_ACTIONS],
        Action::ALL[p % N_ACTIONS],
    )
}

/// Column header code of a pair, e.g. `RT_tw`.
pub fn pair_code(p: usize) -> String {
    let (s, a) = pair_from_index(p);
    format!("{}_{}", s.code(), a.code())
}

/// Names of the five features, in row order.
pub const FEATURE_NAMES: [&str; N_FEATURES] = ["RT", "RP", "tw", "rt", "rp"];

/// Binary feature vector `(RT, RP, tw, rt, rp)` of a pair. NT and nt are
/// the all-zero encodings of their group.
pub fn encode_features(state: State, action: Action) -> [f64; N_FEATURES] {
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    [
        flag(state == State::Rt),
        flag(state == State::Rp),
        flag(action == Action::Tw),
        flag(action == Action::Rt),
        flag(action == Action::Rp),
    ]
}

/// The 5x12 map from pairs to features; column `p` is `encode_features` of
/// pair `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    entries: [[f64; N_PAIRS]; N_FEATURES],
}

impl FeatureMatrix {
    pub fn canonical() -> Self {
        let mut entries = [[0.0; N_PAIRS]; N_FEATURES];
        for p in 0..N_PAIRS {
            let (s, a) = pair_from_index(p);
            let col = encode_features(s, a);
            for (row, v) in entries.iter_mut().zip(col) {
                row[p] = v;
            }
        }
        FeatureMatrix { entries }
    }

    /// Arbitrary matrix, mainly for exercising rank guards.
    pub fn from_rows(entries: [[f64; N_PAIRS]; N_FEATURES]) -> Self {
        FeatureMatrix { entries }
    }

    pub fn rows(&self) -> &[[f64; N_PAIRS]; N_FEATURES] {
        &self.entries
    }

    pub fn get(&self, feature: usize, pair: usize) -> f64 {
        self.entries[feature][pair]
    }

    pub fn column(&self, pair: usize) -> [f64; N_FEATURES] {
        std::array::from_fn(|k| self.entries[k][pair])
    }

    /// `theta^T f`: the 12 rewards induced by feature weights.
    pub fn rewards(&self, theta: &[f64; N_FEATURES]) -> [f64; N_PAIRS] {
        std::array::from_fn(|p| (0..N_FEATURES).map(|k| theta[k] * self.entries[k][p]).sum())
    }

    /// `f * v` for a 12-vector `v`.
    pub fn project(&self, v: &[f64; N_PAIRS]) -> [f64; N_FEATURES] {
        std::array::from_fn(|k| self.entries[k].iter().zip(v).map(|(a, b)| a * b).sum())
    }

    /// Numerical rank by partial-pivot elimination.
    pub fn rank(&self) -> usize {
        let mut m = self.entries;
        let mut rank = 0;
        for col in 0..N_PAIRS {
            if rank == N_FEATURES {
                break;
            }
            let pivot = (rank..N_FEATURES)
                .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
                .unwrap();
            if m[pivot][col].abs() < 1e-12 {
                continue;
            }
            m.swap(rank, pivot);
            for r in 0..N_FEATURES {
                if r != rank {
                    let factor = m[r][col] / m[rank][col];
                    for c in col..N_PAIRS {
                        m[r][c] -= factor * m[rank][c];
                    }
                }
            }
            rank += 1;
        }
        rank
    }
}

impl Default for FeatureMatrix {
    fn default() -> Self {
        Self::canonical()
    }
}

/// Ordered state-action pairs observed for one account.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub account_id: String,
    pub steps: Vec<(State, Action)>,
}

impl Trajectory {
    pub fn new(account_id: impl Into<String>, steps: Vec<(State, Action)>) -> Self {
        Trajectory {
            account_id: account_id.into(),
            steps,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn pair_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps.iter().map(|&(s, a)| pair_index(s, a))
    }
}

/// Row-stochastic `T[s][a][s']` together with the counts it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionModel {
    pub probs: [[[f64; N_STATES]; N_ACTIONS]; N_STATES],
    pub counts: [[[u64; N_STATES]; N_ACTIONS]; N_STATES],
}

impl TransitionModel {
    /// Every row uniform, no counts.
    pub fn uniform() -> Self {
        TransitionModel {
            probs: [[[1.0 / N_STATES as f64; N_STATES]; N_ACTIONS]; N_STATES],
            counts: [[[0; N_STATES]; N_ACTIONS]; N_STATES],
        }
    }

    /// Builds a model from explicit probabilities, checking stochasticity.
    pub fn from_probs(probs: [[[f64; N_STATES]; N_ACTIONS]; N_STATES]) -> Result<Self> {
        for (s, rows) in probs.iter().enumerate() {
            for (a, row) in rows.iter().enumerate() {
                if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(Error::invalid(format!("T[{s}][{a}] has an entry outside [0,1]")));
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid(format!("T[{s}][{a}] sums to {total}")));
                }
            }
        }
        Ok(TransitionModel {
            probs,
            counts: [[[0; N_STATES]; N_ACTIONS]; N_STATES],
        })
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64; N_STATES] {
        &self.probs[s][a]
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().flatten().flatten().sum()
    }

    /// Largest absolute entry-wise difference against another model.
    pub fn max_abs_diff(&self, other: &TransitionModel) -> f64 {
        self.probs
            .iter()
            .flatten()
            .flatten()
            .zip(other.probs.iter().flatten().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Maximum-likelihood transitions from consecutive steps of one trajectory.
/// Rows never observed fall back to uniform.
pub fn estimate_transitions(traj: &Trajectory) -> Result<TransitionModel> {
    if traj.len() < 2 {
        return Err(Error::invalid(format!(
            "trajectory {} has {} steps; at least 2 are needed to estimate transitions",
            traj.account_id,
            traj.len()
        )));
    }
    let mut counts = [[[0u64; N_STATES]; N_ACTIONS]; N_STATES];
    for w in traj.steps.windows(2) {
        let (s, a) = w[0];
        let (next, _) = w[1];
        counts[s.index()][a.index()][next.index()] += 1;
    }
    let mut probs = [[[0.0; N_STATES]; N_ACTIONS]; N_STATES];
    for s in 0..N_STATES {
        for a in 0..N_ACTIONS {
            let row = &counts[s][a];
            let total: u64 = row.iter().sum();
            for s2 in 0..N_STATES {
                probs[s][a][s2] = if total == 0 {
                    1.0 / N_STATES as f64
                } else {
                    row[s2] as f64 / total as f64
                };
            }
        }
    }
    Ok(TransitionModel { probs, counts })
}
