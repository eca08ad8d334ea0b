//! Two-class comparison of fitted rewards.

use std::io::Write;

use nalgebra::{Matrix5, Vector5};
use serde::Serialize;

use crate::activity::Label;
use crate::error::{Error, Result};
use crate::mdp::{pair_code, FeatureMatrix, FEATURE_NAMES, N_FEATURES, N_PAIRS};
use crate::table::RewardRecord;

/// Significance level used to flag differing distributions.
pub const SIGNIFICANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Survival function of the Kolmogorov distribution,
/// `Q(l) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 l^2)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u32 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov test. The statistic is exact; the p-value
/// is the asymptotic one with effective size `n m / (n + m)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("KS test needs two non-empty samples"));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::invalid("NaN in KS sample"));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as i128, ys.len() as i128);
    let (mut i, mut j) = (0usize, 0usize);
    let mut best: i128 = 0;
    while i < xs.len() && j < ys.len() {
        let v = if xs[i] <= ys[j] { xs[i] } else { ys[j] };
        while i < xs.len() && xs[i] == v {
            i += 1;
        }
        while j < ys.len() && ys[j] == v {
            j += 1;
        }
        best = best.max((i as i128 * m - j as i128 * n).abs());
    }
    // Once one sample is exhausted the gap only narrows.
    let statistic = best as f64 / (n * m) as f64;
    let ne = (n * m) as f64 / (n + m) as f64;
    Ok(KsResult {
        statistic,
        p_value: kolmogorov_sf(ne.sqrt() * statistic),
    })
}

/// Least-squares `theta` with `theta^T f ~ r`, from `(f f^T) theta = f r`.
pub fn recover_theta(f: &FeatureMatrix, r: &[f64; N_PAIRS]) -> Result<[f64; N_FEATURES]> {
    if f.rank() < N_FEATURES {
        return Err(Error::invalid(format!(
            "feature matrix has rank {} < {N_FEATURES}",
            f.rank()
        )));
    }
    let rows = f.rows();
    let gram = Matrix5::from_fn(|i, j| rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum());
    let rhs = Vector5::from(f.project(r));
    let theta = gram
        .cholesky()
        .ok_or_else(|| Error::Numerical("Gram matrix is not positive definite".into()))?
        .solve(&rhs);
    Ok(std::array::from_fn(|k| theta[k]))
}

/// Linear-interpolation quantile of sorted data, `q` in [0, 1].
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Population variance.
    pub variance: f64,
    /// Minimum, lower quartile, median, upper quartile, maximum.
    pub quantiles: [f64; 5],
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Summary> {
        if values.is_empty() {
            return Err(Error::invalid("cannot summarise an empty sample"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Summary {
            n: values.len(),
            mean,
            variance,
            quantiles: [0.0, 0.25, 0.5, 0.75, 1.0].map(|q| quantile_sorted(&sorted, q)),
        })
    }
}

/// One compared variable: a reward pair or a theta component.
#[derive(Debug, Clone, Serialize)]
pub struct VariableComparison {
    pub name: String,
    pub troll: Summary,
    pub user: Summary,
    /// Troll mean minus user mean.
    pub mean_difference: f64,
    pub ks: KsResult,
    pub significant: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassComparison {
    pub n_troll: usize,
    pub n_user: usize,
    /// Whether reward summaries are on jointly standardized values.
    pub standardized: bool,
    pub significance_level: f64,
    pub pairs: Vec<VariableComparison>,
    pub theta: Vec<VariableComparison>,
}

fn compare(name: String, troll: &[f64], user: &[f64], shown_troll: &[f64], shown_user: &[f64]) -> Result<VariableComparison> {
    let ks = ks_two_sample(troll, user)?;
    let t = Summary::of(shown_troll)?;
    let u = Summary::of(shown_user)?;
    Ok(VariableComparison {
        name,
        troll: t,
        user: u,
        mean_difference: t.mean - u.mean,
        ks,
        significant: ks.p_value < SIGNIFICANCE,
    })
}

fn standardize_jointly(columns: &mut [Vec<f64>]) {
    for col in columns {
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let sd = if sd > 0.0 { sd } else { 1.0 };
        col.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    }
}

/// Per-pair and per-theta class summaries with KS tests. KS statistics use
/// the raw values; reward summaries are shown after joint standardization
/// when `standardize` is set.
pub fn class_compare(records: &[RewardRecord], standardize: bool) -> Result<ClassComparison> {
    let labelled: Vec<(&RewardRecord, Label)> = records
        .iter()
        .filter_map(|r| r.label.map(|l| (r, l)))
        .collect();
    let is_troll: Vec<bool> = labelled.iter().map(|(_, l)| l.is_positive()).collect();
    let n_troll = is_troll.iter().filter(|&&t| t).count();
    let n_user = labelled.len() - n_troll;
    if n_troll == 0 || n_user == 0 {
        return Err(Error::SingleClass);
    }
    let split = |col: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let t = col.iter().zip(&is_troll).filter(|(_, &t)| t).map(|(v, _)| *v).collect();
        let u = col.iter().zip(&is_troll).filter(|(_, &t)| !t).map(|(v, _)| *v).collect();
        (t, u)
    };
    let raw: Vec<Vec<f64>> = (0..N_PAIRS)
        .map(|p| labelled.iter().map(|(r, _)| r.rewards[p]).collect())
        .collect();
    let mut shown = raw.clone();
    if standardize {
        standardize_jointly(&mut shown);
    }
    let pairs = (0..N_PAIRS)
        .map(|p| {
            let (t, u) = split(&raw[p]);
            let (st, su) = split(&shown[p]);
            compare(pair_code(p), &t, &u, &st, &su)
        })
        .collect::<Result<Vec<_>>>()?;
    let theta = (0..N_FEATURES)
        .map(|k| {
            let col: Vec<f64> = labelled.iter().map(|(r, _)| r.theta[k]).collect();
            let (t, u) = split(&col);
            compare(format!("theta_{}", FEATURE_NAMES[k]), &t, &u, &t, &u)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClassComparison {
        n_troll,
        n_user,
        standardized: standardize,
        significance_level: SIGNIFICANCE,
        pairs,
        theta,
    })
}

/// Long-format CSV: `class,pair,stat,value`. Test results use class `both`.
pub fn write_long_csv<W: Write>(out: W, cmp: &ClassComparison) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["class", "pair", "stat", "value"])?;
    const Q_NAMES: [&str; 5] = ["min", "q1", "median", "q3", "max"];
    for v in cmp.pairs.iter().chain(&cmp.theta) {
        for (class, s) in [("troll", &v.troll), ("user", &v.user)] {
            let mut stats = vec![("n", s.n as f64), ("mean", s.mean), ("variance", s.variance)];
            stats.extend(Q_NAMES.iter().copied().zip(s.quantiles));
            for (stat, value) in stats {
                w.write_record([class, &v.name, stat, &value.to_string()])?;
            }
        }
        let tests = [
            ("mean_difference", v.mean_difference),
            ("ks_statistic", v.ks.statistic),
            ("ks_p_value", v.ks.p_value),
            ("significant", f64::from(u8::from(v.significant))),
        ];
        for (stat, value) in tests {
            w.write_record(["both", &v.name, stat, &value.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_examples() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_two_sample(&a, &a).unwrap().statistic, 0.0);
        assert_eq!(ks_two_sample(&a, &a).unwrap().p_value, 1.0);
        assert_eq!(ks_two_sample(&a, &[4.0, 5.0]).unwrap().statistic, 1.0);
        let d = ks_two_sample(&a, &[1.5, 2.5, 3.5]).unwrap().statistic;
        assert_eq!(d, 1.0 / 3.0);
        assert!(ks_two_sample(&[], &a).is_err());
    }

    #[test]
    fn kolmogorov_reference_points() {
        // Classical critical values: Q(1.36) ~ 0.05, Q(1.63) ~ 0.01.
        assert!((kolmogorov_sf(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_sf(1.628) - 0.01).abs() < 1e-3);
        assert!(kolmogorov_sf(5.0) < 1e-20);
    }

    #[test]
    fn theta_recovery_examples() {
        let f = FeatureMatrix::canonical();
        let r = f.rewards(&[1.0; N_FEATURES]);
        for v in recover_theta(&f, &r).unwrap() {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert_eq!(recover_theta(&f, &[0.0; N_PAIRS]).unwrap(), [0.0; N_FEATURES]);
        let mut flat = *f.rows();
        flat[4] = flat[3];
        assert!(recover_theta(&FeatureMatrix::from_rows(flat), &r).is_err());
    }

    #[test]
    fn quantiles_interpolate() {
        let s = Summary::of(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(s.quantiles, [1.0, 1.75, 2.5, 3.25, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.variance, 1.25);
    }

    fn record(id: usize, label: Label, rewards: [f64; N_PAIRS]) -> RewardRecord {
        RewardRecord {
            account_id: id.to_string(),
            label: Some(label),
            rewards,
            theta: recover_theta(&FeatureMatrix::canonical(), &rewards).unwrap(),
        }
    }

    #[test]
    fn disjoint_pair_flagged_and_zero_pair_not() {
        let records: Vec<_> = (0..200)
            .map(|i| {
                let troll = i % 2 == 0;
                let mut r = [0.0; N_PAIRS];
                r[0] = if troll { 10.0 + i as f64 } else { -(i as f64) };
                r[1] = (i % 17) as f64;
                record(i, if troll { Label::Troll } else { Label::User }, r)
            })
            .collect();
        let cmp = class_compare(&records, true).unwrap();
        assert!(cmp.pairs[0].significant);
        assert_eq!(cmp.pairs[0].ks.statistic, 1.0);
        let nt_nt = &cmp.pairs[N_PAIRS - 1];
        assert_eq!(nt_nt.ks.statistic, 0.0);
        assert!(!nt_nt.significant);
        let mut buf = Vec::new();
        write_long_csv(&mut buf, &cmp).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("class,pair,stat,value\n"));
        assert!(text.contains("both,RT_tw,significant,1"));
    }

    #[test]
    fn single_class_rejected() {
        let records = vec![record(0, Label::User, [0.0; N_PAIRS]), record(1, Label::User, [1.0; N_PAIRS])];
        assert!(matches!(class_compare(&records, true), Err(Error::SingleClass)));
    }
}
