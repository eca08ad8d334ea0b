//! Per-account reward inference from social-activity logs with maximum-entropy
//! inverse reinforcement learning, and troll/user classification on the
//! inferred rewards.
//!
//! Accounts are modelled in a three-state, four-action MDP: the environment's
//! feedback (retweeted `RT`, replied to or mentioned `RP`, ignored `NT`) is
//! the state and the account's own behaviour (tweet `tw`, retweet `rt`,
//! reply or mention `rp`, silence `nt`) is the action. Each account's
//! trajectory is fit independently, producing 12 pair rewards that feed a
//! boosted-stump classifier and a two-sample statistical comparison.

#![allow(clippy::needless_range_loop)]

pub mod activity;
pub mod analysis;
pub mod classify;
pub mod error;
pub mod irl;
pub mod mdp;
pub mod par;
pub mod pipeline;
pub mod sim;
pub mod table;

pub use error::{Error, ErrorClass, Result};
pub use par::Execution;
