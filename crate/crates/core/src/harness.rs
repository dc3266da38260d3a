//! Experiment orchestration: seeded trials over antidote fractions,
//! transferability matrices, metric pairs, filler sweeps, and report and
//! embedding output.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::antidote::{generate_n, AntidoteConfig, AntidoteUser};
use crate::baselines::{batch_optimized_antidote, naive_antidote, regularized_from, BaselineKind, RegularizationConfig};
use crate::data::{generate_synthetic, load_groups, load_item_groups, load_ratings, RatingDataset, RatingScale, SyntheticConfig, UserGroup};
use crate::error::{Error, Result};
use crate::factorization::{rmse, train, FactorModel, TrainConfig};
use crate::metrics::{all_scores, ItemNormalization, MetricKind};

/// Where an experiment gets its ratings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    /// A fresh synthetic dataset per trial, seeded with the trial seed.
    Synthetic(SyntheticConfig),
    Files {
        ratings: PathBuf,
        groups: PathBuf,
        #[serde(default)]
        item_groups: Option<PathBuf>,
        scale: RatingScale,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SyntheticConfig::default())
    }
}

impl DataSource {
    pub fn load(&self, seed: u64) -> Result<RatingDataset> {
        match self {
            DataSource::Synthetic(cfg) => generate_synthetic(&SyntheticConfig { seed, ..cfg.clone() }),
            DataSource::Files {
                ratings,
                groups,
                item_groups,
                scale,
            } => {
                let ds = load_ratings(ratings, scale.clone())?;
                let ds = load_groups(groups, ds)?;
                match item_groups {
                    Some(p) => load_item_groups(p, ds),
                    None => Ok(ds),
                }
            }
        }
    }
}

/// Intervention applied after the unmodified model is trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Sequentially optimized antidote users.
    Antidote,
    None,
    Regularization,
    Maximum,
    Minimum,
    Random,
    BatchOptimized,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Antidote => "antidote",
            Method::None => "none",
            Method::Regularization => "regularization",
            Method::Maximum => "maximum",
            Method::Minimum => "minimum",
            Method::Random => "random",
            Method::BatchOptimized => "batch-optimized",
        }
    }

    pub fn baseline(self) -> Option<BaselineKind> {
        match self {
            Method::Antidote => None,
            Method::None => Some(BaselineKind::None),
            Method::Regularization => Some(BaselineKind::Regularization),
            Method::Maximum => Some(BaselineKind::Maximum),
            Method::Minimum => Some(BaselineKind::Minimum),
            Method::Random => Some(BaselineKind::Random),
            Method::BatchOptimized => Some(BaselineKind::BatchOptimized),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase().replace('_', "-");
        if s == "antidote" || s == "optimized" || s == "sequential" {
            return Ok(Method::Antidote);
        }
        let b: BaselineKind = s.parse()?;
        Ok(match b {
            BaselineKind::None => Method::None,
            BaselineKind::Regularization => Method::Regularization,
            BaselineKind::Maximum => Method::Maximum,
            BaselineKind::Minimum => Method::Minimum,
            BaselineKind::Random => Method::Random,
            BaselineKind::BatchOptimized => Method::BatchOptimized,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub source: DataSource,
    pub method: Method,
    /// Metric(s) the method optimizes; two for the multi-metric objective.
    pub targets: Vec<MetricKind>,
    /// Metrics written to the report.
    pub eval_metrics: Vec<MetricKind>,
    pub fractions: Vec<f64>,
    /// Filler budgets for sweeps.
    pub filler_counts: Vec<usize>,
    /// Fraction used by transferability runs and filler sweeps.
    pub fixed_fraction: f64,
    pub trials: usize,
    /// Trial `t` uses seed `seed + t` for data, training and antidote draws.
    pub seed: u64,
    /// Run trials concurrently. Results do not depend on it.
    pub parallel: bool,
    pub train: TrainConfig,
    pub antidote: AntidoteConfig,
    pub regularization: RegularizationConfig,
    pub normalization: ItemNormalization,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            source: DataSource::default(),
            method: Method::Antidote,
            targets: vec![MetricKind::Value],
            eval_metrics: MetricKind::ALL.to_vec(),
            fractions: vec![0.005, 0.01, 0.02, 0.03],
            filler_counts: vec![50, 100, 200, 400],
            fixed_fraction: 0.02,
            trials: 5,
            seed: 0,
            parallel: true,
            train: TrainConfig::default(),
            antidote: AntidoteConfig::default(),
            regularization: RegularizationConfig::default(),
            normalization: ItemNormalization::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() || self.targets.len() > 2 {
            return Err(Error::Config(format!(
                "expected one or two target metrics, got {}",
                self.targets.len()
            )));
        }
        if self.targets.len() == 2 && self.targets[0] == self.targets[1] {
            return Err(Error::Validation(format!("metric pair repeats {}", self.targets[0])));
        }
        if self.eval_metrics.is_empty() {
            return Err(Error::Config("no evaluation metrics".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.fractions.is_empty() {
            return Err(Error::Config("no antidote fractions".into()));
        }
        for &f in self.fractions.iter().chain(std::iter::once(&self.fixed_fraction)) {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::Config(format!("antidote fraction {f} is outside [0, 1)")));
            }
        }
        if self.method.baseline().is_some() && self.targets.len() == 2 && self.method != Method::None {
            return Err(Error::Config(format!("{} optimizes a single metric", self.method)));
        }
        self.train.validate()?;
        self.regularization.validate()?;
        self.antidote_config(0, self.fractions[0])?.validate()
    }

    fn trial_seed(&self, trial: usize) -> u64 {
        self.seed.wrapping_add(trial as u64)
    }

    fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.train.clone()
        }
    }

    fn antidote_config(&self, seed: u64, fraction: f64) -> Result<AntidoteConfig> {
        Ok(AntidoteConfig {
            alpha_frac: fraction,
            metrics: self.targets.clone(),
            normalization: self.normalization,
            seed,
            ..self.antidote.clone()
        })
    }

    fn targets_label(&self) -> String {
        self.targets.iter().map(|k| k.name()).collect::<Vec<_>>().join("+")
    }
}

/// Four scores, `None` where a metric was not evaluated.
pub type Scores = [Option<f64>; 4];

/// One executed (fraction, trial) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: Method,
    pub targets: String,
    pub fraction: f64,
    pub n_filler: usize,
    pub trial: usize,
    pub seed: u64,
    pub antidote_users: usize,
    pub before: Scores,
    pub after: Scores,
    pub rmse_before: Option<f64>,
    pub rmse_after: Option<f64>,
    pub runtime_secs: f64,
    /// Set when the cell failed; scores are then missing.
    pub error: Option<String>,
}

impl ReportRow {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }

    /// `(before − after) / before` for one metric.
    pub fn reduction(&self, kind: MetricKind) -> Option<f64> {
        let (b, a) = (self.before[kind.index()]?, self.after[kind.index()]?);
        Some((b - a) / b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample standard deviation (0 for a single value).
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(MeanStd { mean, std })
    }
}

/// Mean and spread over the successful trials of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: Method,
    pub targets: String,
    pub fraction: f64,
    pub n_filler: usize,
    pub trials: usize,
    pub failed: usize,
    pub before: [Option<MeanStd>; 4],
    pub after: [Option<MeanStd>; 4],
    pub reduction: [Option<MeanStd>; 4],
    pub rmse_before: Option<MeanStd>,
    pub rmse_after: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub rows: Vec<ReportRow>,
    pub aggregates: Vec<Aggregate>,
}

impl ExperimentReport {
    fn new(spec: ExperimentSpec, rows: Vec<ReportRow>) -> Self {
        let aggregates = aggregate(&rows);
        ExperimentReport { spec, rows, aggregates }
    }

    pub fn aggregate_for(&self, fraction: f64, n_filler: usize) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.fraction == fraction && a.n_filler == n_filler)
    }

    pub fn failed_cells(&self) -> usize {
        self.rows.iter().filter(|r| !r.ok()).count()
    }
}

fn aggregate(rows: &[ReportRow]) -> Vec<Aggregate> {
    // group keys in first-appearance order
    let mut keys: Vec<(Method, String, u64, usize)> = Vec::new();
    for r in rows {
        let key = (r.method, r.targets.clone(), r.fraction.to_bits(), r.n_filler);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(method, targets, fbits, n_filler)| {
            let group: Vec<&ReportRow> = rows
                .iter()
                .filter(|r| r.method == method && r.targets == targets && r.fraction.to_bits() == fbits && r.n_filler == n_filler)
                .collect();
            let ok: Vec<&&ReportRow> = group.iter().filter(|r| r.ok()).collect();
            let collect = |f: &dyn Fn(&ReportRow) -> Option<f64>| -> Option<MeanStd> {
                let v: Vec<f64> = ok.iter().filter_map(|r| f(r)).collect();
                MeanStd::of(&v)
            };
            let per_metric = |f: &dyn Fn(&ReportRow, MetricKind) -> Option<f64>| -> [Option<MeanStd>; 4] {
                MetricKind::ALL.map(|k| collect(&|r| f(r, k)))
            };
            Aggregate {
                method,
                targets,
                fraction: f64::from_bits(fbits),
                n_filler,
                trials: ok.len(),
                failed: group.len() - ok.len(),
                before: per_metric(&|r, k| r.before[k.index()]),
                after: per_metric(&|r, k| r.after[k.index()]),
                reduction: per_metric(&|r, k| r.reduction(k)),
                rmse_before: collect(&|r| r.rmse_before),
                rmse_after: collect(&|r| r.rmse_after),
            }
        })
        .collect()
}

fn select(scores: [f64; 4], metrics: &[MetricKind]) -> Scores {
    let mut out = [None; 4];
    for k in metrics {
        out[k.index()] = Some(scores[k.index()]);
    }
    out
}

/// Unmodified model of one trial.
struct TrialBase {
    ds: RatingDataset,
    model: FactorModel,
    scores: Scores,
    rmse: f64,
}

fn trial_base(spec: &ExperimentSpec, seed: u64) -> Result<TrialBase> {
    let ds = spec.source.load(seed)?;
    let model = train(&ds, &spec.train_config(seed), None)?;
    let scores = select(all_scores(&model, &ds, spec.normalization)?, &spec.eval_metrics);
    let rmse = rmse(&model, ds.entries())?;
    Ok(TrialBase { ds, model, scores, rmse })
}

/// Scores of a model retrained from scratch on `ds` plus `users`.
fn retrained(spec: &ExperimentSpec, base: &TrialBase, users: &[AntidoteUser], seed: u64) -> Result<(Scores, f64)> {
    let ds = base.ds.inject_antidote(users)?;
    let model = train(&ds, &spec.train_config(seed), None)?;
    let scores = select(all_scores(&model, &ds, spec.normalization)?, &spec.eval_metrics);
    Ok((scores, rmse(&model, &ds.original_entries())?))
}

/// Antidote users for every fraction of one trial. Sequential and naive
/// generation are prefix-stable, so they run once at the largest fraction.
fn method_users(spec: &ExperimentSpec, base: &TrialBase, seed: u64) -> Vec<Result<Vec<AntidoteUser>>> {
    let n_orig = base.ds.num_original_users();
    let tc = spec.train_config(seed);
    let counts: Vec<usize> = spec
        .fractions
        .iter()
        .map(|&f| spec.antidote_config(seed, f).map(|c| c.num_users_for(n_orig)).unwrap_or(0))
        .collect();
    let max_frac = spec.fractions.iter().cloned().fold(0.0, f64::max);
    let max_count = counts.iter().copied().max().unwrap_or(0);
    let prefixes = |all: Result<Vec<AntidoteUser>>| -> Vec<Result<Vec<AntidoteUser>>> {
        counts
            .iter()
            .map(|&c| match &all {
                Ok(users) => Ok(users[..c].to_vec()),
                Err(e) => Err(Error::Validation(e.to_string())),
            })
            .collect()
    };
    match spec.method {
        Method::None | Method::Regularization => counts.iter().map(|_| Ok(Vec::new())).collect(),
        Method::Antidote => prefixes(
            spec.antidote_config(seed, max_frac)
                .and_then(|cfg| generate_n(&base.ds, &tc, &cfg, max_count, Some(&base.model)))
                .map(|run| run.users),
        ),
        Method::Maximum | Method::Minimum | Method::Random => {
            let kind = spec.method.baseline().unwrap();
            prefixes(spec.antidote_config(seed, max_frac).and_then(|cfg| naive_antidote(kind, &base.ds, &cfg)))
        }
        Method::BatchOptimized => spec
            .fractions
            .iter()
            .map(|&f| {
                let cfg = spec.antidote_config(seed, f)?;
                batch_optimized_antidote(&base.ds, &tc, &cfg, spec.targets[0], Some(&base.model)).map(|r| r.users)
            })
            .collect(),
    }
}

fn run_trial(spec: &ExperimentSpec, trial: usize) -> Vec<ReportRow> {
    let seed = spec.trial_seed(trial);
    let start = Instant::now();
    let blank = |fraction: f64| ReportRow {
        method: spec.method,
        targets: spec.targets_label(),
        fraction,
        n_filler: spec.antidote.n_filler,
        trial,
        seed,
        antidote_users: 0,
        before: [None; 4],
        after: [None; 4],
        rmse_before: None,
        rmse_after: None,
        runtime_secs: 0.0,
        error: None,
    };
    let base = match trial_base(spec, seed) {
        Ok(b) => b,
        Err(e) => {
            warn!("trial {trial}: {e}");
            return spec
                .fractions
                .iter()
                .map(|&f| ReportRow {
                    error: Some(e.to_string()),
                    ..blank(f)
                })
                .collect();
        }
    };

    let regularized = if spec.method == Method::Regularization {
        Some(
            regularized_from(&base.ds, &base.model, spec.targets[0], &spec.regularization).and_then(|(m, _)| {
                let scores = select(all_scores(&m, &base.ds, spec.normalization)?, &spec.eval_metrics);
                Ok((scores, rmse(&m, base.ds.entries())?))
            }),
        )
    } else {
        None
    };
    let users = method_users(spec, &base, seed);
    let shared = start.elapsed().as_secs_f64();

    spec.fractions
        .iter()
        .zip(users)
        .map(|(&fraction, users)| {
            let t = Instant::now();
            let outcome = match (&regularized, users) {
                (Some(Ok(r)), _) => Ok((0, r.clone())),
                (Some(Err(e)), _) => Err(Error::Numerical(e.to_string())),
                (None, Ok(users)) => retrained(spec, &base, &users, seed).map(|r| (users.len(), r)),
                (None, Err(e)) => Err(e),
            };
            let mut row = blank(fraction);
            row.before = base.scores;
            row.rmse_before = Some(base.rmse);
            match outcome {
                Ok((count, (scores, r))) => {
                    row.antidote_users = count;
                    row.after = scores;
                    row.rmse_after = Some(r);
                }
                Err(e) => {
                    warn!("trial {trial}, fraction {fraction}: {e}");
                    row.error = Some(e.to_string());
                }
            }
            row.runtime_secs = shared + t.elapsed().as_secs_f64();
            row
        })
        .collect()
}

/// Runs every (fraction, trial) cell of the spec.
pub fn run(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    info!(
        "{} on {} trials, fractions {:?}",
        spec.method, spec.trials, spec.fractions
    );
    let per_trial: Vec<Vec<ReportRow>> = if spec.parallel {
        (0..spec.trials).into_par_iter().map(|t| run_trial(spec, t)).collect()
    } else {
        (0..spec.trials).map(|t| run_trial(spec, t)).collect()
    };
    // fraction-major order, trials ascending within a fraction
    let mut rows = Vec::with_capacity(spec.trials * spec.fractions.len());
    for j in 0..spec.fractions.len() {
        for t in &per_trial {
            rows.push(t[j].clone());
        }
    }
    Ok(ExperimentReport::new(spec.clone(), rows))
}

/// Runs with one metric pair, deflecting conflicting gradients or not.
pub fn multi_metric(spec: &ExperimentSpec, pair: (MetricKind, MetricKind), deflect: bool) -> Result<ExperimentReport> {
    if pair.0 == pair.1 {
        return Err(Error::Validation(format!("metric pair repeats {}", pair.0)));
    }
    let mut s = spec.clone();
    s.method = Method::Antidote;
    s.targets = vec![pair.0, pair.1];
    s.antidote.deflect = deflect;
    run(&s)
}

/// Target-by-source scores: row `s` optimizes metric `s`, column `t`
/// evaluates metric `t`, both as means over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub fraction: f64,
    pub baseline: [Option<f64>; 4],
    pub scores: [[Option<f64>; 4]; 4],
    pub reports: Vec<ExperimentReport>,
}

pub fn transferability(spec: &ExperimentSpec) -> Result<TransferMatrix> {
    let mut baseline = [None; 4];
    let mut scores = [[None; 4]; 4];
    let mut reports = Vec::with_capacity(4);
    for source in MetricKind::ALL {
        let mut s = spec.clone();
        s.method = Method::Antidote;
        s.targets = vec![source];
        s.eval_metrics = MetricKind::ALL.to_vec();
        s.fractions = vec![spec.fixed_fraction];
        let report = run(&s)?;
        let agg = &report.aggregates[0];
        for target in MetricKind::ALL {
            scores[source.index()][target.index()] = agg.after[target.index()].map(|m| m.mean);
            baseline[target.index()] = agg.before[target.index()].map(|m| m.mean);
        }
        reports.push(report);
    }
    Ok(TransferMatrix {
        fraction: spec.fixed_fraction,
        baseline,
        scores,
        reports,
    })
}

/// Runs the configured method at its fixed fraction for every filler budget.
pub fn filler_sweep(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    if spec.filler_counts.is_empty() {
        return Err(Error::Config("no filler counts to sweep".into()));
    }
    let mut rows = Vec::new();
    for &n in &spec.filler_counts {
        let mut s = spec.clone();
        s.fractions = vec![spec.fixed_fraction];
        s.antidote.n_filler = n;
        rows.extend(run(&s)?.rows);
    }
    Ok(ExperimentReport::new(spec.clone(), rows))
}

// ---------------------------------------------------------------------------
// Output

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn writer(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Per-cell CSV. Runtime is left out so the file is reproducible.
pub fn write_rows_csv(report: &ExperimentReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer(path)?);
    let mut header = vec![
        "method".to_string(),
        "targets".into(),
        "fraction".into(),
        "n_filler".into(),
        "trial".into(),
        "seed".into(),
        "antidote_users".into(),
    ];
    for side in ["before", "after"] {
        for k in MetricKind::ALL {
            header.push(format!("{}_{side}", k.name().replace('-', "_")));
        }
    }
    header.extend(["rmse_before".into(), "rmse_after".into(), "status".into()]);
    w.write_record(&header)?;
    for r in &report.rows {
        let mut rec = vec![
            r.method.to_string(),
            r.targets.clone(),
            r.fraction.to_string(),
            r.n_filler.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            r.antidote_users.to_string(),
        ];
        rec.extend(r.before.iter().chain(&r.after).map(|v| fmt_opt(*v)));
        rec.push(fmt_opt(r.rmse_before));
        rec.push(fmt_opt(r.rmse_after));
        rec.push(match &r.error {
            None => "ok".into(),
            Some(e) => format!("failed: {e}"),
        });
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Mean and standard deviation per configuration.
pub fn write_summary_csv(report: &ExperimentReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer(path)?);
    let mut header = vec![
        "method".to_string(),
        "targets".into(),
        "fraction".into(),
        "n_filler".into(),
        "trials".into(),
        "failed".into(),
    ];
    for side in ["before", "after", "reduction"] {
        for k in MetricKind::ALL {
            let name = k.name().replace('-', "_");
            header.push(format!("{name}_{side}_mean"));
            header.push(format!("{name}_{side}_std"));
        }
    }
    for r in ["rmse_before", "rmse_after"] {
        header.push(format!("{r}_mean"));
        header.push(format!("{r}_std"));
    }
    w.write_record(&header)?;
    for a in &report.aggregates {
        let mut rec = vec![
            a.method.to_string(),
            a.targets.clone(),
            a.fraction.to_string(),
            a.n_filler.to_string(),
            a.trials.to_string(),
            a.failed.to_string(),
        ];
        for m in a.before.iter().chain(&a.after).chain(&a.reduction).chain([&a.rmse_before, &a.rmse_after]) {
            rec.push(fmt_opt(m.map(|m| m.mean)));
            rec.push(fmt_opt(m.map(|m| m.std)));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `<prefix>_rows.csv`, `<prefix>_summary.csv` and `<prefix>.json`
/// into `dir` and returns the three paths.
pub fn write_report(report: &ExperimentReport, dir: &Path, prefix: &str) -> Result<[PathBuf; 3]> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rows = dir.join(format!("{prefix}_rows.csv"));
    let summary = dir.join(format!("{prefix}_summary.csv"));
    let json = dir.join(format!("{prefix}.json"));
    write_rows_csv(report, &rows)?;
    write_summary_csv(report, &summary)?;
    write_json(report, &json)?;
    Ok([rows, summary, json])
}

/// `source,value,absolute,overestimation,non_parity` with a leading
/// baseline row.
pub fn write_transfer_csv(matrix: &TransferMatrix, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer(path)?);
    let mut header = vec!["source".to_string()];
    header.extend(MetricKind::ALL.iter().map(|k| k.name().replace('-', "_")));
    w.write_record(&header)?;
    let mut rec = vec!["none".to_string()];
    rec.extend(matrix.baseline.iter().map(|v| fmt_opt(*v)));
    w.write_record(&rec)?;
    for source in MetricKind::ALL {
        let mut rec = vec![source.name().to_string()];
        rec.extend(matrix.scores[source.index()].iter().map(|v| fmt_opt(*v)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Plot-ready `n_filler,metric,mean,std` series of post-injection scores.
pub fn write_sweep_csv(report: &ExperimentReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer(path)?);
    w.write_record(["n_filler", "metric", "before_mean", "after_mean", "after_std"])?;
    for a in &report.aggregates {
        for k in MetricKind::ALL {
            if let Some(m) = a.after[k.index()] {
                w.write_record([
                    a.n_filler.to_string(),
                    k.name().to_string(),
                    fmt_opt(a.before[k.index()].map(|b| b.mean)),
                    m.mean.to_string(),
                    m.std.to_string(),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Embeddings

/// One user's latent vector as written by [`export_embeddings`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub user_id: String,
    pub antidote: bool,
    pub group: String,
    pub vector: Vec<f64>,
}

/// Writes `user_id,antidote,group,f0..f{d-1}` for original and antidote users.
pub fn export_embeddings(model: &FactorModel, ds: &RatingDataset, path: &Path) -> Result<()> {
    if !model.shape_matches(ds) {
        return Err(Error::Validation("model shape does not match the dataset".into()));
    }
    let mut w = csv::Writer::from_writer(writer(path)?);
    let mut header = vec!["user_id".to_string(), "antidote".into(), "group".into()];
    header.extend((0..model.dim).map(|a| format!("f{a}")));
    w.write_record(&header)?;
    for u in 0..ds.num_users() {
        let group = match ds.group(u) {
            UserGroup::Disadvantaged => "D",
            UserGroup::Advantaged => "A",
            UserGroup::Unassigned => "",
        };
        let mut rec = vec![
            ds.user_id(u).to_string(),
            ds.is_antidote(u).to_string(),
            group.to_string(),
        ];
        // Display prints the shortest string that parses back to the same f64
        rec.extend(model.user_vector(u).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_embeddings(path: &Path) -> Result<Vec<EmbeddingRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = n + 2;
        let parse_err = |message: String| Error::Parse {
            path: path.into(),
            line,
            message,
        };
        if rec.len() < 3 {
            return Err(parse_err(format!("expected at least 3 fields, found {}", rec.len())));
        }
        let antidote = rec[1]
            .parse()
            .map_err(|_| parse_err(format!("antidote flag {:?} is not a boolean", &rec[1])))?;
        let vector = rec
            .iter()
            .skip(3)
            .map(|v| v.parse::<f64>().map_err(|_| parse_err(format!("{v:?} is not a number"))))
            .collect::<Result<_>>()?;
        out.push(EmbeddingRow {
            user_id: rec[0].to_string(),
            antidote,
            group: rec[2].to_string(),
            vector,
        });
    }
    Ok(out)
}

/// Scores grouped by metric name, for logging.
pub fn describe(report: &ExperimentReport) -> BTreeMap<String, Vec<(f64, f64, f64)>> {
    let mut out: BTreeMap<String, Vec<(f64, f64, f64)>> = BTreeMap::new();
    for a in &report.aggregates {
        for k in MetricKind::ALL {
            if let (Some(b), Some(af)) = (a.before[k.index()], a.after[k.index()]) {
                out.entry(k.name().to_string()).or_default().push((a.fraction, b.mean, af.mean));
            }
        }
    }
    out
}
