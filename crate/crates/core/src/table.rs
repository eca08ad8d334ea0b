//! CSV tables exchanged between pipeline stages.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::activity::Label;
use crate::classify::LabeledSample;
use crate::error::{Error, Result};
use crate::mdp::{pair_code, FEATURE_NAMES, N_FEATURES, N_PAIRS};

/// Fitted rewards for one account.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardRecord {
    pub account_id: String,
    pub label: Option<Label>,
    pub rewards: [f64; N_PAIRS],
    pub theta: [f64; N_FEATURES],
}

impl RewardRecord {
    pub fn to_sample(&self) -> Option<LabeledSample> {
        self.label.map(|label| LabeledSample {
            account_id: self.account_id.clone(),
            features: self.rewards,
            label,
        })
    }
}

pub fn reward_header() -> Vec<String> {
    let mut h = vec!["account_id".to_string(), "label".to_string()];
    h.extend((0..N_PAIRS).map(|p| format!("r_{}", pair_code(p))));
    h.extend(FEATURE_NAMES.iter().map(|f| format!("theta_{f}")));
    h
}

pub fn write_rewards<W: Write>(out: W, records: &[RewardRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(reward_header())?;
    for r in records {
        let mut row = vec![
            r.account_id.clone(),
            r.label.map(|l| l.as_str().to_string()).unwrap_or_default(),
        ];
        row.extend(r.rewards.iter().chain(&r.theta).map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_float(field: &str, line: usize, column: &str) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Schema {
        line,
        message: format!("column {column}: {field:?} is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Schema {
            line,
            message: format!("column {column}: non-finite value"),
        });
    }
    Ok(v)
}

/// Reads a rewards table. The reward and label columns are required; theta
/// columns default to zero when absent.
pub fn read_rewards<R: Read>(input: R) -> Result<Vec<RewardRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let missing = |name: &str| Error::Schema {
        line: 1,
        message: format!("missing column {name}"),
    };
    let id_col = find("account_id").ok_or_else(|| missing("account_id"))?;
    let label_col = find("label").ok_or_else(|| missing("label"))?;
    let names = reward_header();
    let reward_cols = names[2..2 + N_PAIRS]
        .iter()
        .map(|n| find(n).ok_or_else(|| missing(n)))
        .collect::<Result<Vec<_>>>()?;
    let theta_cols: Vec<Option<usize>> = names[2 + N_PAIRS..].iter().map(|n| find(n)).collect();
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let label = match row.get(label_col).unwrap_or("").trim() {
            "" => None,
            s => Some(s.parse().map_err(|_| Error::Schema {
                line,
                message: format!("unknown label {s:?}"),
            })?),
        };
        let mut rewards = [0.0; N_PAIRS];
        for (p, &c) in reward_cols.iter().enumerate() {
            rewards[p] = parse_float(row.get(c).unwrap_or(""), line, &names[2 + p])?;
        }
        let mut theta = [0.0; N_FEATURES];
        for (k, c) in theta_cols.iter().enumerate() {
            if let Some(c) = *c {
                theta[k] = parse_float(row.get(c).unwrap_or(""), line, &names[2 + N_PAIRS + k])?;
            }
        }
        out.push(RewardRecord {
            account_id: row.get(id_col).unwrap_or("").to_string(),
            label,
            rewards,
            theta,
        });
    }
    Ok(out)
}

pub fn write_labels<W: Write>(out: W, labels: &BTreeMap<String, Label>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["account_id", "label"])?;
    for (id, l) in labels {
        w.write_record([id.as_str(), l.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels<R: Read>(input: R) -> Result<BTreeMap<String, Label>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let (Some(id_col), Some(label_col)) = (
        headers.iter().position(|h| h == "account_id"),
        headers.iter().position(|h| h == "label"),
    ) else {
        return Err(Error::Schema {
            line: 1,
            message: "labels file needs account_id and label columns".into(),
        });
    };
    let mut out = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let label: Label = row.get(label_col).unwrap_or("").trim().parse().map_err(|_| Error::Schema {
            line: i + 2,
            message: format!("unknown label {:?}", row.get(label_col).unwrap_or("")),
        })?;
        out.insert(row.get(id_col).unwrap_or("").to_string(), label);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rewards_round_trip() {
        let records = vec![
            RewardRecord {
                account_id: "a".into(),
                label: Some(Label::Troll),
                rewards: std::array::from_fn(|p| p as f64 / 3.0 - 1.0),
                theta: [0.1, -0.2, 1e-17, 5.0, -7.25],
            },
            RewardRecord {
                account_id: "b,with comma".into(),
                label: None,
                rewards: [0.0; N_PAIRS],
                theta: [0.0; N_FEATURES],
            },
        ];
        let mut buf = Vec::new();
        write_rewards(&mut buf, &records).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("account_id,label,r_RT_tw,r_RT_rt,r_RT_rp,r_RT_nt,r_RP_tw"));
        assert!(text.lines().next().unwrap().ends_with("r_NT_nt,theta_RT,theta_RP,theta_tw,theta_rt,theta_rp"));
        assert_eq!(read_rewards(buf.as_slice()).unwrap(), records);
    }

    #[test]
    fn missing_label_column() {
        let text = "account_id,r_RT_tw\nx,1\n";
        assert!(matches!(read_rewards(text.as_bytes()), Err(Error::Schema { .. })));
    }

    #[test]
    fn labels_round_trip() {
        let labels: BTreeMap<_, _> = [("u".to_string(), Label::User), ("t".to_string(), Label::Troll)].into();
        let mut buf = Vec::new();
        write_labels(&mut buf, &labels).unwrap();
        assert_eq!(read_labels(buf.as_slice()).unwrap(), labels);
    }
}
