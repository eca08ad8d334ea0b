//! Activity logs: JSONL ingestion, per-account filtering and the
//! pending-state pairing that turns interleaved events into trajectories.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Action, State, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ActiveTweet,
    ActiveRetweet,
    ActiveReplyOrMention,
    PassiveRetweet,
    PassiveReplyOrMention,
}

impl EventKind {
    pub fn is_active(self) -> bool {
        matches!(
            self,
            EventKind::ActiveTweet | EventKind::ActiveRetweet | EventKind::ActiveReplyOrMention
        )
    }

    /// The action an active event represents.
    pub fn action(self) -> Option<Action> {
        match self {
            EventKind::ActiveTweet => Some(Action::Tw),
            EventKind::ActiveRetweet => Some(Action::Rt),
            EventKind::ActiveReplyOrMention => Some(Action::Rp),
            _ => None,
        }
    }

    /// The state a passive event puts the account in.
    pub fn state(self) -> Option<State> {
        match self {
            EventKind::PassiveRetweet => Some(State::Rt),
            EventKind::PassiveReplyOrMention => Some(State::Rp),
            _ => None,
        }
    }

    pub fn from_action(a: Action) -> Option<EventKind> {
        match a {
            Action::Tw => Some(EventKind::ActiveTweet),
            Action::Rt => Some(EventKind::ActiveRetweet),
            Action::Rp => Some(EventKind::ActiveReplyOrMention),
            Action::Nt => None,
        }
    }

    pub fn from_state(s: State) -> Option<EventKind> {
        match s {
            State::Rt => Some(EventKind::PassiveRetweet),
            State::Rp => Some(EventKind::PassiveReplyOrMention),
            State::Nt => None,
        }
    }
}

/// Class of an account. Trolls are the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    User,
    Troll,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Troll => "troll",
            Label::User => "user",
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Troll
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "troll" => Ok(Label::Troll),
            "user" => Ok(Label::User),
            _ => Err(Error::invalid(format!("unknown label {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivityEvent {
    pub account_id: String,
    /// Epoch milliseconds.
    pub timestamp: u64,
    pub kind: EventKind,
}

/// Wire form of one log line.
#[derive(Debug, Serialize, Deserialize)]
struct LogRecord {
    account_id: String,
    ts: i64,
    kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<Label>,
}

/// Parsed log: events in file order plus any labels carried on the lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActivityLog {
    pub events: Vec<ActivityEvent>,
    pub labels: BTreeMap<String, Label>,
}

/// Reads a JSONL activity log. Blank lines are ignored; anything else that
/// does not match the schema is an error carrying its 1-based line number.
pub fn parse_activity_log<R: BufRead>(reader: R) -> Result<ActivityLog> {
    let mut log = ActivityLog::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LogRecord = serde_json::from_str(&line).map_err(|e| Error::Schema {
            line: line_no,
            message: e.to_string(),
        })?;
        if rec.ts < 0 {
            return Err(Error::Schema {
                line: line_no,
                message: format!("negative timestamp {}", rec.ts),
            });
        }
        if let Some(label) = rec.label {
            match log.labels.get(&rec.account_id) {
                Some(&prev) if prev != label => {
                    return Err(Error::Schema {
                        line: line_no,
                        message: format!(
                            "account {} labelled both {prev} and {label}",
                            rec.account_id
                        ),
                    })
                }
                _ => {
                    log.labels.insert(rec.account_id.clone(), label);
                }
            }
        }
        log.events.push(ActivityEvent {
            account_id: rec.account_id,
            timestamp: rec.ts as u64,
            kind: rec.kind,
        });
    }
    Ok(log)
}

/// Writes events in the ingestion schema, attaching `label` when known.
pub fn write_activity_log<W: Write>(
    mut out: W,
    events: &[ActivityEvent],
    labels: &BTreeMap<String, Label>,
) -> Result<()> {
    for e in events {
        let rec = LogRecord {
            account_id: e.account_id.clone(),
            ts: e.timestamp as i64,
            kind: e.kind,
            label: labels.get(&e.account_id).copied(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Groups events per account, keeping accounts with at least `k` active and
/// at least `k` passive events. Each group is sorted by timestamp; ties keep
/// input order.
pub fn filter_accounts(
    events: &[ActivityEvent],
    k: usize,
) -> BTreeMap<String, Vec<ActivityEvent>> {
    let mut grouped: BTreeMap<String, Vec<ActivityEvent>> = BTreeMap::new();
    for e in events {
        grouped.entry(e.account_id.clone()).or_default().push(e.clone());
    }
    grouped.retain(|_, evs| {
        let active = evs.iter().filter(|e| e.kind.is_active()).count();
        let passive = evs.len() - active;
        active >= k && passive >= k
    });
    for evs in grouped.values_mut() {
        evs.sort_by_key(|e| e.timestamp);
    }
    grouped
}

/// Pairs chronologically sorted events into `(state, action)` steps.
///
/// A passive event sets the pending state; an active event emits
/// `(pending, action)` and resets pending to NT. A passive event arriving
/// while another passive state is pending first flushes `(pending, nt)`,
/// as does a pending state left at the end.
pub fn build_trajectory(account_id: &str, events: &[ActivityEvent]) -> Result<Trajectory> {
    if events.is_empty() {
        return Err(Error::invalid(format!("account {account_id} has no events")));
    }
    let mut steps = Vec::with_capacity(events.len());
    let mut pending = State::Nt;
    for e in events {
        if let Some(action) = e.kind.action() {
            steps.push((pending, action));
            pending = State::Nt;
        } else if let Some(state) = e.kind.state() {
            if pending != State::Nt {
                steps.push((pending, Action::Nt));
            }
            pending = state;
        }
    }
    if pending != State::Nt {
        steps.push((pending, Action::Nt));
    }
    Ok(Trajectory::new(account_id, steps))
}

#[derive(Serialize, Deserialize)]
struct TrajectoryRecord {
    account_id: String,
    steps: Vec<(State, Action)>,
}

pub fn write_trajectories<W: Write>(mut out: W, trajectories: &[Trajectory]) -> Result<()> {
    for t in trajectories {
        let rec = TrajectoryRecord {
            account_id: t.account_id.clone(),
            steps: t.steps.clone(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trajectories<R: BufRead>(reader: R) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TrajectoryRecord = serde_json::from_str(&line).map_err(|e| Error::Schema {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(Trajectory::new(rec.account_id, rec.steps));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(kind: EventKind, ts: u64) -> ActivityEvent {
        ActivityEvent {
            account_id: "a".into(),
            timestamp: ts,
            kind,
        }
    }

    use EventKind::*;

    #[test]
    fn parses_one_record() {
        let log = parse_activity_log(r#"{"account_id":"a1","ts":1000,"kind":"active_tweet"}"#.as_bytes())
            .unwrap();
        assert_eq!(
            log.events,
            vec![ActivityEvent {
                account_id: "a1".into(),
                timestamp: 1000,
                kind: ActiveTweet
            }]
        );
        assert!(log.labels.is_empty());
    }

    #[test]
    fn empty_input_is_empty_log() {
        let log = parse_activity_log("".as_bytes()).unwrap();
        assert!(log.events.is_empty());
    }

    #[test]
    fn unknown_kind_reports_line() {
        let input = "{\"account_id\":\"a\",\"ts\":1,\"kind\":\"active_tweet\"}\n\
                     {\"account_id\":\"a\",\"ts\":2,\"kind\":\"banana\"}\n";
        match parse_activity_log(input.as_bytes()) {
            Err(Error::Schema { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn missing_field_and_negative_ts_are_errors() {
        let missing = r#"{"account_id":"a","kind":"active_tweet"}"#;
        assert!(matches!(
            parse_activity_log(missing.as_bytes()),
            Err(Error::Schema { line: 1, .. })
        ));
        let negative = r#"{"account_id":"a","ts":-5,"kind":"active_tweet"}"#;
        assert!(matches!(
            parse_activity_log(negative.as_bytes()),
            Err(Error::Schema { line: 1, .. })
        ));
    }

    #[test]
    fn labels_are_collected_and_conflicts_rejected() {
        let ok = "{\"account_id\":\"a\",\"ts\":1,\"kind\":\"active_tweet\",\"label\":\"troll\"}\n\
                  {\"account_id\":\"a\",\"ts\":2,\"kind\":\"passive_retweet\"}\n";
        let log = parse_activity_log(ok.as_bytes()).unwrap();
        assert_eq!(log.labels["a"], Label::Troll);
        let bad = "{\"account_id\":\"a\",\"ts\":1,\"kind\":\"active_tweet\",\"label\":\"troll\"}\n\
                   {\"account_id\":\"a\",\"ts\":2,\"kind\":\"passive_retweet\",\"label\":\"user\"}\n";
        assert!(matches!(
            parse_activity_log(bad.as_bytes()),
            Err(Error::Schema { line: 2, .. })
        ));
    }

    fn account(active: usize, passive: usize) -> Vec<ActivityEvent> {
        let mut out = Vec::new();
        for i in 0..active {
            out.push(ev(ActiveTweet, i as u64));
        }
        for i in 0..passive {
            out.push(ev(PassiveRetweet, i as u64));
        }
        out
    }

    #[test]
    fn filter_boundaries() {
        assert_eq!(filter_accounts(&account(10, 10), 10).len(), 1);
        assert!(filter_accounts(&account(9, 50), 10).is_empty());
        assert_eq!(filter_accounts(&account(1, 1), 1).len(), 1);
    }

    #[test]
    fn filter_sorts_stably() {
        let events = vec![ev(ActiveTweet, 5), ev(PassiveRetweet, 3), ev(ActiveRetweet, 3)];
        let kept = filter_accounts(&events, 1);
        let kinds: Vec<_> = kept["a"].iter().map(|e| e.kind).collect();
        assert_eq!(kinds, vec![PassiveRetweet, ActiveRetweet, ActiveTweet]);
    }

    #[test]
    fn pairing_rule_hand_trace() {
        let events = vec![
            ev(PassiveRetweet, 1),
            ev(ActiveTweet, 2),
            ev(ActiveRetweet, 3),
            ev(PassiveReplyOrMention, 4),
            ev(PassiveRetweet, 5),
            ev(ActiveReplyOrMention, 6),
        ];
        let t = build_trajectory("a", &events).unwrap();
        assert_eq!(
            t.steps,
            vec![
                (State::Rt, Action::Tw),
                (State::Nt, Action::Rt),
                (State::Rp, Action::Nt),
                (State::Rt, Action::Rp)
            ]
        );
    }

    #[test]
    fn pairing_edge_cases() {
        let t = build_trajectory("a", &[ev(ActiveTweet, 1)]).unwrap();
        assert_eq!(t.steps, vec![(State::Nt, Action::Tw)]);
        let t = build_trajectory("a", &[ev(PassiveRetweet, 1)]).unwrap();
        assert_eq!(t.steps, vec![(State::Rt, Action::Nt)]);
        assert!(build_trajectory("a", &[]).is_err());
    }

    #[test]
    fn trajectory_jsonl_uses_codes() {
        let t = Trajectory::new("x", vec![(State::Rt, Action::Tw), (State::Nt, Action::Rp)]);
        let mut buf = Vec::new();
        write_trajectories(&mut buf, std::slice::from_ref(&t)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "{\"account_id\":\"x\",\"steps\":[[\"RT\",\"tw\"],[\"NT\",\"rp\"]]}\n");
        assert_eq!(read_trajectories(buf.as_slice()).unwrap(), vec![t]);
    }
}
