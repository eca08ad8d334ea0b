//! Pipeline stages and the file-based subcommands built on them.
//!
//! Every stage is a pure function of its inputs, the configuration and the
//! seed; the `cmd_*` wrappers add file I/O and write the effective
//! configuration next to their outputs.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::activity::{
    build_trajectory, filter_accounts, parse_activity_log, write_activity_log, write_trajectories,
    ActivityEvent, ActivityLog, Label,
};
use crate::analysis::{class_compare, recover_theta, write_long_csv, ClassComparison};
use crate::classify::{cross_validate, ClassifierConfig, EvalReport, LabeledSample, Metrics};
use crate::error::{Error, Result};
use crate::irl::{deep_maxent_irl, maxent_irl, IrlConfig, IrlVariant};
use crate::mdp::{estimate_transitions, pair_code, FeatureMatrix, Trajectory, N_FEATURES, N_PAIRS};
use crate::par::{self, Execution};
use crate::sim::{generate_population, PopulationConfig};
use crate::table::{read_labels, read_rewards, write_labels, write_rewards, RewardRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Show reward summaries on jointly standardized values.
    pub standardize: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { standardize: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub k_values: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            k_values: vec![5, 10, 15, 20, 25],
        }
    }
}

/// Input and output locations. Unset inputs default to the conventional file
/// name inside `out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub out: PathBuf,
    pub events: Option<PathBuf>,
    /// Overrides labels carried in the activity log or rewards table.
    pub labels: Option<PathBuf>,
    pub rewards: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            out: PathBuf::from("out"),
            events: None,
            labels: None,
            rewards: None,
        }
    }
}

impl Paths {
    pub fn events(&self) -> PathBuf {
        self.events.clone().unwrap_or_else(|| self.out.join(EVENTS_FILE))
    }

    pub fn rewards(&self) -> PathBuf {
        self.rewards.clone().unwrap_or_else(|| self.out.join(REWARDS_FILE))
    }
}

pub const EVENTS_FILE: &str = "events.jsonl";
pub const LABELS_FILE: &str = "labels.csv";
pub const TRUTH_FILE: &str = "truth.jsonl";
pub const REWARDS_FILE: &str = "rewards.csv";
pub const REWARD_ERRORS_FILE: &str = "rewards_errors.csv";
pub const TRAJECTORIES_FILE: &str = "trajectories.jsonl";
pub const METRICS_FILE: &str = "metrics.json";
pub const IMPORTANCE_FILE: &str = "feature_importance.csv";
pub const ANALYSIS_FILE: &str = "analysis.json";
pub const ANALYSIS_LONG_FILE: &str = "analysis_long.csv";
pub const SWEEP_CSV_FILE: &str = "sweep_k.csv";
pub const SWEEP_JSON_FILE: &str = "sweep_k.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Minimum number of active and of passive events per retained account.
    pub k: usize,
    pub seed: u64,
    pub irl_variant: IrlVariant,
    pub irl: IrlConfig,
    pub classifier: ClassifierConfig,
    pub analysis: AnalysisConfig,
    pub sweep: SweepConfig,
    pub simulation: PopulationConfig,
    pub paths: Paths,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k: 10,
            seed: 0,
            irl_variant: IrlVariant::Linear,
            irl: IrlConfig::default(),
            classifier: ClassifierConfig::default(),
            analysis: AnalysisConfig::default(),
            sweep: SweepConfig::default(),
            simulation: PopulationConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a TOML file; missing keys take their defaults.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        self.irl.validate()?;
        self.classifier.validate()?;
        self.simulation
            .validate()
            .map_err(|e| Error::Config(format!("simulation: {e}")))?;
        check_k_values(&self.sweep.k_values)
    }
}

fn check_k_values(ks: &[usize]) -> Result<()> {
    if ks.is_empty() || ks.contains(&0) || ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!(
            "k values must be non-empty, positive and strictly ascending, got {ks:?}"
        )));
    }
    Ok(())
}

/// An account whose reward fit failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitFailure {
    pub account_id: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct RewardsOutcome {
    pub trajectories: Vec<Trajectory>,
    pub records: Vec<RewardRecord>,
    pub failures: Vec<FitFailure>,
}

/// Fits rewards and feature weights for one trajectory with its own
/// estimated dynamics. The deep model's weights are the least-squares
/// projection of its rewards onto the features.
pub fn fit_trajectory(
    traj: &Trajectory,
    variant: IrlVariant,
    cfg: &IrlConfig,
) -> Result<([f64; N_PAIRS], [f64; N_FEATURES])> {
    let f = FeatureMatrix::canonical();
    let t = estimate_transitions(traj)?;
    match variant {
        IrlVariant::Linear => {
            let fit = maxent_irl(&f, &t, traj, cfg)?;
            let theta = fit.theta.map(|th| th.0).unwrap_or([0.0; N_FEATURES]);
            Ok((fit.rewards.0, theta))
        }
        IrlVariant::Deep => {
            let fit = deep_maxent_irl(&f, &t, traj, cfg, &cfg.hidden)?;
            let r = fit.fit.rewards.0;
            Ok((r, recover_theta(&f, &r)?))
        }
    }
}

/// Filter, trajectory construction and per-account IRL. Accounts whose fit
/// fails are reported in `failures`; only an empty retained set is fatal.
pub fn fit_rewards(
    events: &[ActivityEvent],
    labels: &BTreeMap<String, Label>,
    k: usize,
    variant: IrlVariant,
    cfg: &IrlConfig,
    exec: Execution,
) -> Result<RewardsOutcome> {
    cfg.validate()?;
    let retained = filter_accounts(events, k);
    if retained.is_empty() {
        return Err(Error::EmptyRetainedSet);
    }
    let trajectories = retained
        .iter()
        .map(|(id, evs)| build_trajectory(id, evs))
        .collect::<Result<Vec<_>>>()?;
    let fits = par::map(exec, &trajectories, |t| fit_trajectory(t, variant, cfg));
    let mut records = Vec::with_capacity(trajectories.len());
    let mut failures = Vec::new();
    for (traj, fit) in trajectories.iter().zip(fits) {
        match fit {
            Ok((rewards, theta)) => records.push(RewardRecord {
                account_id: traj.account_id.clone(),
                label: labels.get(&traj.account_id).copied(),
                rewards,
                theta,
            }),
            Err(e) => failures.push(FitFailure {
                account_id: traj.account_id.clone(),
                error: e.to_string(),
            }),
        }
    }
    Ok(RewardsOutcome {
        trajectories,
        records,
        failures,
    })
}

/// Labelled samples from a rewards table; unlabelled rows are skipped.
pub fn labeled_samples(records: &[RewardRecord]) -> Vec<LabeledSample> {
    records.iter().filter_map(RewardRecord::to_sample).collect()
}

pub fn classify_records(
    records: &[RewardRecord],
    cfg: &ClassifierConfig,
    seed: u64,
    exec: Execution,
) -> Result<EvalReport> {
    cross_validate(&labeled_samples(records), cfg, seed, exec)
}

/// One row of the varying-k table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub k: usize,
    pub retained: usize,
    pub fitted: usize,
    pub metrics: Option<Metrics>,
    pub error: Option<String>,
}

/// Reruns filtering, IRL and cross-validation for each `k`. A failing `k`
/// is recorded in its row and the sweep continues.
pub fn varying_k_sweep(
    events: &[ActivityEvent],
    labels: &BTreeMap<String, Label>,
    k_values: &[usize],
    cfg: &PipelineConfig,
    exec: Execution,
) -> Result<Vec<SweepRow>> {
    check_k_values(k_values)?;
    let mut rows = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let retained = filter_accounts(events, k).len();
        let mut row = SweepRow {
            k,
            retained,
            fitted: 0,
            metrics: None,
            error: None,
        };
        let result = fit_rewards(events, labels, k, cfg.irl_variant, &cfg.irl, exec).and_then(|out| {
            row.fitted = out.records.len();
            classify_records(&out.records, &cfg.classifier, cfg.seed, exec)
        });
        match result {
            Ok(report) => row.metrics = Some(report.metrics),
            Err(e) => row.error = Some(e.to_string()),
        }
        rows.push(row);
    }
    Ok(rows)
}

// ---- file-level subcommands ----

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn echo_config(cfg: &PipelineConfig, command: &str) -> Result<PathBuf> {
    let path = cfg.paths.out.join(format!("{command}.config.toml"));
    let mut w = create(&path)?;
    w.write_all(cfg.to_toml()?.as_bytes())?;
    w.flush()?;
    Ok(path)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn read_log(cfg: &PipelineConfig) -> Result<ActivityLog> {
    let mut log = parse_activity_log(open(&cfg.paths.events())?)?;
    if let Some(p) = &cfg.paths.labels {
        log.labels = read_labels(open(p)?)?;
    }
    Ok(log)
}

fn read_reward_table(cfg: &PipelineConfig) -> Result<Vec<RewardRecord>> {
    let mut records = read_rewards(open(&cfg.paths.rewards())?)?;
    if let Some(p) = &cfg.paths.labels {
        let labels = read_labels(open(p)?)?;
        for r in &mut records {
            r.label = labels.get(&r.account_id).copied();
        }
    }
    Ok(records)
}

/// Files written by a subcommand, in write order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outputs(pub Vec<PathBuf>);

/// Simulates a labelled population and writes its activity log, labels and
/// ground-truth rewards.
pub fn cmd_simulate(cfg: &PipelineConfig, exec: Execution) -> Result<Outputs> {
    cfg.validate()?;
    let pop = generate_population(&cfg.simulation, cfg.seed, exec)?;
    let out = &cfg.paths.out;
    let events = out.join(EVENTS_FILE);
    let mut w = create(&events)?;
    write_activity_log(&mut w, &pop.events, &pop.labels)?;
    w.flush()?;
    let labels = out.join(LABELS_FILE);
    let mut w = create(&labels)?;
    write_labels(&mut w, &pop.labels)?;
    w.flush()?;
    let truth = out.join(TRUTH_FILE);
    let mut w = create(&truth)?;
    for t in &pop.truth {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(Outputs(vec![events, labels, truth, echo_config(cfg, "simulate")?]))
}

/// Fits per-account rewards from the activity log.
pub fn cmd_rewards(cfg: &PipelineConfig, exec: Execution) -> Result<Outputs> {
    cfg.validate()?;
    let log = read_log(cfg)?;
    let outcome = fit_rewards(&log.events, &log.labels, cfg.k, cfg.irl_variant, &cfg.irl, exec)?;
    let out = &cfg.paths.out;
    let rewards = out.join(REWARDS_FILE);
    let mut w = create(&rewards)?;
    write_rewards(&mut w, &outcome.records)?;
    w.flush()?;
    let errors = out.join(REWARD_ERRORS_FILE);
    let mut w = csv::Writer::from_writer(create(&errors)?);
    w.write_record(["account_id", "error"])?;
    for f in &outcome.failures {
        w.write_record([&f.account_id, &f.error])?;
    }
    w.flush()?;
    drop(w);
    let trajectories = out.join(TRAJECTORIES_FILE);
    let mut w = create(&trajectories)?;
    write_trajectories(&mut w, &outcome.trajectories)?;
    w.flush()?;
    Ok(Outputs(vec![rewards, errors, trajectories, echo_config(cfg, "rewards")?]))
}

#[derive(Serialize)]
struct Echoed<'a, T> {
    config: &'a PipelineConfig,
    #[serde(flatten)]
    body: T,
}

/// Undersampled, cross-validated classification of a rewards table.
pub fn cmd_classify(cfg: &PipelineConfig, exec: Execution) -> Result<Outputs> {
    cfg.validate()?;
    let records = read_reward_table(cfg)?;
    let report = classify_records(&records, &cfg.classifier, cfg.seed, exec)?;
    let out = &cfg.paths.out;
    let metrics = out.join(METRICS_FILE);
    write_json(&metrics, &Echoed { config: cfg, body: &report })?;
    let importance = out.join(IMPORTANCE_FILE);
    let mut w = csv::Writer::from_writer(create(&importance)?);
    w.write_record(["pair", "importance"])?;
    for (p, v) in report.feature_importance.iter().enumerate() {
        w.write_record([pair_code(p), v.to_string()])?;
    }
    w.flush()?;
    drop(w);
    Ok(Outputs(vec![metrics, importance, echo_config(cfg, "classify")?]))
}

pub fn analyze_records(records: &[RewardRecord], cfg: &PipelineConfig) -> Result<ClassComparison> {
    class_compare(records, cfg.analysis.standardize)
}

/// Troll/user reward comparison.
pub fn cmd_analyze(cfg: &PipelineConfig) -> Result<Outputs> {
    cfg.validate()?;
    let records = read_reward_table(cfg)?;
    let cmp = analyze_records(&records, cfg)?;
    let out = &cfg.paths.out;
    let json = out.join(ANALYSIS_FILE);
    write_json(&json, &Echoed { config: cfg, body: &cmp })?;
    let long = out.join(ANALYSIS_LONG_FILE);
    let mut w = create(&long)?;
    write_long_csv(&mut w, &cmp)?;
    w.flush()?;
    Ok(Outputs(vec![json, long, echo_config(cfg, "analyze")?]))
}

/// Classification quality as a function of the activity threshold `k`.
pub fn cmd_sweep_k(cfg: &PipelineConfig, exec: Execution) -> Result<Outputs> {
    cfg.validate()?;
    let log = read_log(cfg)?;
    let rows = varying_k_sweep(&log.events, &log.labels, &cfg.sweep.k_values, cfg, exec)?;
    let out = &cfg.paths.out;
    let csv_path = out.join(SWEEP_CSV_FILE);
    let mut w = csv::Writer::from_writer(create(&csv_path)?);
    w.write_record([
        "k", "retained", "fitted", "auc", "accuracy", "precision", "recall", "f1", "tpr", "tnr", "error",
    ])?;
    for r in &rows {
        let mut rec = vec![r.k.to_string(), r.retained.to_string(), r.fitted.to_string()];
        match &r.metrics {
            Some(m) => rec.extend(
                [m.auc, m.accuracy, m.precision, m.recall, m.f1, m.tpr, m.tnr].map(|v| v.to_string()),
            ),
            None => rec.extend(std::iter::repeat_n(String::new(), 7)),
        }
        rec.push(r.error.clone().unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    drop(w);
    let json = out.join(SWEEP_JSON_FILE);
    #[derive(Serialize)]
    struct Body<'a> {
        rows: &'a [SweepRow],
    }
    write_json(&json, &Echoed { config: cfg, body: Body { rows: &rows } })?;
    Ok(Outputs(vec![csv_path, json, echo_config(cfg, "sweep_k")?]))
}
