use std::path::{Path, PathBuf};
use std::process::ExitCode;

use antidote_core::antidote::{generate, write_antidote_csv, write_sidecar, load_antidote_csv, AntidoteConfig, AntidoteRun, StepRule};
use antidote_core::baselines::{batch_optimized_antidote, naive_antidote};
use antidote_core::data::{
    generate_synthetic, write_groups, write_item_groups, write_ratings, RatingDataset, RatingScale, SyntheticConfig,
};
use antidote_core::error::Error;
use antidote_core::factorization::{rmse, train, FactorModel};
use antidote_core::harness::{
    export_embeddings, filler_sweep, multi_metric, run, transferability, write_json, write_report, write_sweep_csv,
    write_transfer_csv, DataSource, ExperimentSpec, Method,
};
use antidote_core::metrics::{evaluate, ItemNormalization, MetricKind};
use clap::{Args, Parser, Subcommand};
use log::info;

#[derive(Parser)]
#[command(name = "antidote", version, about = "Antidote users for fairer matrix-factorization recommenders")]
struct Cli {
    /// Worker threads; 1 runs everything on the calling thread.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// JSON experiment config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as ratings.csv, groups.csv and item_groups.csv.
    Synth {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        users_per_group: Option<usize>,
        #[arg(long)]
        items_per_group: Option<usize>,
        #[arg(long)]
        alpha1: Option<f64>,
        #[arg(long)]
        alpha2: Option<f64>,
        #[arg(long)]
        beta1: Option<f64>,
        #[arg(long)]
        beta2: Option<f64>,
    },
    /// Train a factorization model and save it.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        seed: u64,
        /// Antidote ratings to inject before training.
        #[arg(long)]
        antidote: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a saved model on all unfairness metrics and RMSE.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        /// Antidote ratings the model was trained with.
        #[arg(long)]
        antidote: Option<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        normalization: Option<NormArg>,
        /// Write the scores as JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate antidote users with the optimizer or a baseline.
    Antidote {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        opt: AntidoteArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "antidote")]
        method: Method,
        #[arg(long)]
        out: PathBuf,
        /// Per-user filler sets and PGD traces as JSON.
        #[arg(long)]
        sidecar: Option<PathBuf>,
    },
    /// Full experiment over antidote fractions and trials.
    Run {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long)]
        method: Option<Method>,
        /// Comma-separated antidote fractions.
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
    },
    /// Scores of every metric after optimizing each metric.
    Transfer {
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Scores across filler budgets at the fixed fraction.
    Sweep {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long)]
        method: Option<Method>,
        /// Comma-separated filler counts.
        #[arg(long, value_delimiter = ',')]
        filler_counts: Option<Vec<usize>>,
    },
    /// Write per-user latent vectors of a saved model.
    Embed {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        antidote: Option<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone, Default)]
struct DataArgs {
    /// Ratings CSV (user_id,item_id,rating).
    #[arg(long)]
    ratings: Option<PathBuf>,
    /// Group CSV (user_id,group).
    #[arg(long)]
    groups: Option<PathBuf>,
    #[arg(long)]
    item_groups: Option<PathBuf>,
    /// `binary`, `five-star`, `MIN..MAX` or a comma list of allowed values.
    #[arg(long)]
    scale: Option<String>,
}

#[derive(Args, Clone, Default)]
struct ModelArgs {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    max_sweeps: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Clone, Default)]
struct AntidoteArgs {
    /// Target metric; repeat or comma-separate for a metric pair.
    #[arg(long = "metric", value_delimiter = ',')]
    metrics: Vec<MetricKind>,
    /// Antidote users as a fraction of original users.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    n_filler: Option<usize>,
    #[arg(long)]
    pgd_steps: Option<usize>,
    #[arg(long)]
    pgd_lr: Option<f64>,
    #[arg(long)]
    step_rule: Option<StepRuleArg>,
    /// Plain sum of pair gradients instead of deflection.
    #[arg(long)]
    no_deflect: bool,
    #[arg(long)]
    retrain_sweeps: Option<usize>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum NormArg {
    SkipUndefined,
    AllItems,
}

impl From<NormArg> for ItemNormalization {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::SkipUndefined => ItemNormalization::SkipUndefined,
            NormArg::AllItems => ItemNormalization::AllItems,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum StepRuleArg {
    MaxNorm,
    Raw,
}

#[derive(Args, Clone)]
struct ExperimentArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    opt: AntidoteArgs,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    fixed_fraction: Option<f64>,
    /// Synthetic users per group when no ratings file is given.
    #[arg(long)]
    users_per_group: Option<usize>,
    #[arg(long)]
    items_per_group: Option<usize>,
    #[arg(long)]
    normalization: Option<NormArg>,
    /// Directory for report files.
    #[arg(long)]
    out: PathBuf,
}

fn parse_scale(s: &str) -> Result<RatingScale, Error> {
    let bad = || Error::Config(format!("cannot parse rating scale {s:?}"));
    match s {
        "binary" => return Ok(RatingScale::binary()),
        "five-star" | "5-star" => return Ok(RatingScale::five_star()),
        _ => {}
    }
    if let Some((lo, hi)) = s.split_once("..") {
        let lo = lo.trim().parse().map_err(|_| bad())?;
        let hi = hi.trim().parse().map_err(|_| bad())?;
        return RatingScale::range(lo, hi);
    }
    let allowed: Vec<i32> = s
        .split(',')
        .map(|v| v.trim().parse().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let lo = *allowed.iter().min().ok_or_else(bad)?;
    let hi = *allowed.iter().max().ok_or_else(bad)?;
    RatingScale::new(lo, hi, allowed)
}

fn base_spec(config: Option<&Path>) -> Result<ExperimentSpec, Error> {
    match config {
        Some(p) => ExperimentSpec::from_json_file(p),
        None => Ok(ExperimentSpec::default()),
    }
}

impl DataArgs {
    /// File source if ratings are given, otherwise `fallback`.
    fn source(&self, fallback: DataSource) -> Result<DataSource, Error> {
        let Some(ratings) = &self.ratings else {
            if self.groups.is_some() || self.item_groups.is_some() {
                return Err(Error::Config("--groups needs --ratings".into()));
            }
            return Ok(fallback);
        };
        let groups = self
            .groups
            .clone()
            .ok_or_else(|| Error::Config("--ratings needs --groups".into()))?;
        let scale = match (&self.scale, &fallback) {
            (Some(s), _) => parse_scale(s)?,
            (None, DataSource::Files { scale, .. }) => scale.clone(),
            (None, DataSource::Synthetic(_)) => RatingScale::binary(),
        };
        Ok(DataSource::Files {
            ratings: ratings.clone(),
            groups,
            item_groups: self.item_groups.clone(),
            scale,
        })
    }

    fn load(&self, spec: &ExperimentSpec, seed: u64, antidote: Option<&Path>) -> Result<RatingDataset, Error> {
        let ds = self.source(spec.source.clone())?.load(seed)?;
        match antidote {
            Some(p) => {
                let users = load_antidote_csv(&ds, p)?;
                ds.inject_antidote(&users)
            }
            None => Ok(ds),
        }
    }
}

impl ModelArgs {
    fn apply(&self, spec: &mut ExperimentSpec) {
        let t = &mut spec.train;
        set(&mut t.dim, self.dim);
        set(&mut t.lambda, self.lambda);
        set(&mut t.max_sweeps, self.max_sweeps);
        set(&mut t.tol, self.tol);
    }
}

impl AntidoteArgs {
    fn apply(&self, spec: &mut ExperimentSpec) {
        if !self.metrics.is_empty() {
            spec.targets = self.metrics.clone();
        }
        let a = &mut spec.antidote;
        set(&mut a.alpha_frac, self.alpha);
        set(&mut a.n_filler, self.n_filler);
        set(&mut a.pgd_steps, self.pgd_steps);
        if self.pgd_lr.is_some() {
            a.pgd_lr = self.pgd_lr;
        }
        if let Some(r) = self.step_rule {
            a.step_rule = match r {
                StepRuleArg::MaxNorm => StepRule::MaxNorm,
                StepRuleArg::Raw => StepRule::Raw,
            };
        }
        if self.no_deflect {
            a.deflect = false;
        }
        if self.retrain_sweeps.is_some() {
            a.retrain_sweeps = self.retrain_sweeps;
        }
    }
}

impl ExperimentArgs {
    fn spec(&self, config: Option<&Path>, threads: Option<usize>) -> Result<ExperimentSpec, Error> {
        let mut spec = base_spec(config)?;
        let mut synthetic = match &spec.source {
            DataSource::Synthetic(c) => c.clone(),
            DataSource::Files { .. } => SyntheticConfig::default(),
        };
        set(&mut synthetic.users_per_group, self.users_per_group);
        set(&mut synthetic.items_per_group, self.items_per_group);
        let fallback = match &spec.source {
            DataSource::Files { .. } if self.users_per_group.is_none() && self.items_per_group.is_none() => {
                spec.source.clone()
            }
            _ => DataSource::Synthetic(synthetic),
        };
        spec.source = self.data.source(fallback)?;
        self.model.apply(&mut spec);
        self.opt.apply(&mut spec);
        spec.seed = self.seed;
        set(&mut spec.trials, self.trials);
        set(&mut spec.fixed_fraction, self.fixed_fraction);
        set(&mut spec.normalization, self.normalization.map(Into::into));
        apply_threads(&mut spec, threads);
        Ok(spec)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn apply_threads(spec: &mut ExperimentSpec, threads: Option<usize>) {
    if threads == Some(1) {
        spec.parallel = false;
        spec.train.parallel = false;
    }
}

fn antidote_run(
    method: Method,
    ds: &RatingDataset,
    spec: &ExperimentSpec,
    cfg: &AntidoteConfig,
) -> Result<AntidoteRun, Error> {
    match method {
        Method::Antidote => generate(ds, &spec.train, cfg),
        Method::Maximum | Method::Minimum | Method::Random => Ok(AntidoteRun {
            users: naive_antidote(method.baseline().unwrap(), ds, cfg)?,
            traces: Vec::new(),
        }),
        Method::BatchOptimized => batch_optimized_antidote(ds, &spec.train, cfg, spec.targets[0], None),
        Method::None | Method::Regularization => Err(Error::Config(format!("{method} does not produce antidote users"))),
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Synth {
            seed,
            out,
            users_per_group,
            items_per_group,
            alpha1,
            alpha2,
            beta1,
            beta2,
        } => {
            let mut cfg = match base_spec(config)?.source {
                DataSource::Synthetic(c) => c,
                DataSource::Files { .. } => SyntheticConfig::default(),
            };
            cfg.seed = seed;
            set(&mut cfg.users_per_group, users_per_group);
            set(&mut cfg.items_per_group, items_per_group);
            set(&mut cfg.alpha1, alpha1);
            set(&mut cfg.alpha2, alpha2);
            set(&mut cfg.beta1, beta1);
            set(&mut cfg.beta2, beta2);
            let ds = generate_synthetic(&cfg)?;
            std::fs::create_dir_all(&out).map_err(|e| io_error(&out, e))?;
            write_ratings(&ds, &out.join("ratings.csv"))?;
            write_groups(&ds, &out.join("groups.csv"))?;
            write_item_groups(&ds, &out.join("item_groups.csv"))?;
            info!(
                "{} users, {} items, {} ratings written to {}",
                ds.num_users(),
                ds.num_items(),
                ds.num_entries(),
                out.display()
            );
        }
        Command::Train {
            data,
            model,
            seed,
            antidote,
            out,
        } => {
            let mut spec = base_spec(config)?;
            model.apply(&mut spec);
            apply_threads(&mut spec, cli.threads);
            spec.train.seed = seed;
            let ds = data.load(&spec, seed, antidote.as_deref())?;
            let m = train(&ds, &spec.train, None)?;
            m.save(&out)?;
            println!("rmse {}", rmse(&m, &ds.original_entries())?);
        }
        Command::Evaluate {
            data,
            antidote,
            model,
            normalization,
            out,
        } => {
            let spec = base_spec(config)?;
            let ds = data.load(&spec, spec.seed, antidote.as_deref())?;
            let m = FactorModel::load(&model)?;
            let norm = normalization.map(Into::into).unwrap_or(spec.normalization);
            let reports = MetricKind::ALL
                .iter()
                .map(|&k| evaluate(k, &m, &ds, norm))
                .collect::<Result<Vec<_>, _>>()?;
            let r = rmse(&m, &ds.original_entries())?;
            match out {
                Some(p) => write_json(&serde_json::json!({ "metrics": reports, "rmse": r }), &p)?,
                None => {
                    for rep in &reports {
                        println!("{} {}", rep.metric, rep.score);
                    }
                    println!("rmse {r}");
                }
            }
        }
        Command::Antidote {
            data,
            model,
            opt,
            seed,
            method,
            out,
            sidecar,
        } => {
            let mut spec = base_spec(config)?;
            model.apply(&mut spec);
            opt.apply(&mut spec);
            apply_threads(&mut spec, cli.threads);
            spec.train.seed = seed;
            let ds = data.load(&spec, seed, None)?;
            let cfg = AntidoteConfig {
                metrics: spec.targets.clone(),
                normalization: spec.normalization,
                seed,
                ..spec.antidote.clone()
            };
            cfg.validate_for(&ds)?;
            let result = antidote_run(method, &ds, &spec, &cfg)?;
            write_antidote_csv(&ds, &result.users, &out)?;
            if let Some(p) = sidecar {
                write_sidecar(&cfg, &result, &p)?;
            }
            info!("{} antidote users written to {}", result.users.len(), out.display());
        }
        Command::Run { exp, method, fractions } => {
            let mut spec = exp.spec(config, cli.threads)?;
            set(&mut spec.method, method);
            set(&mut spec.fractions, fractions);
            let report = if spec.method == Method::Antidote && spec.targets.len() == 2 {
                let deflect = spec.antidote.deflect;
                multi_metric(&spec, (spec.targets[0], spec.targets[1]), deflect)?
            } else {
                run(&spec)?
            };
            write_report(&report, &exp.out, "run")?;
            print_failures(report.failed_cells());
        }
        Command::Transfer { exp } => {
            let spec = exp.spec(config, cli.threads)?;
            let matrix = transferability(&spec)?;
            std::fs::create_dir_all(&exp.out).map_err(|e| io_error(&exp.out, e))?;
            write_transfer_csv(&matrix, &exp.out.join("transfer.csv"))?;
            write_json(&matrix, &exp.out.join("transfer.json"))?;
            print_failures(matrix.reports.iter().map(|r| r.failed_cells()).sum());
        }
        Command::Sweep {
            exp,
            method,
            filler_counts,
        } => {
            let mut spec = exp.spec(config, cli.threads)?;
            set(&mut spec.method, method);
            set(&mut spec.filler_counts, filler_counts);
            let report = filler_sweep(&spec)?;
            write_report(&report, &exp.out, "sweep")?;
            write_sweep_csv(&report, &exp.out.join("sweep_series.csv"))?;
            print_failures(report.failed_cells());
        }
        Command::Embed {
            data,
            antidote,
            model,
            out,
        } => {
            let spec = base_spec(config)?;
            let ds = data.load(&spec, spec.seed, antidote.as_deref())?;
            let m = FactorModel::load(&model)?;
            export_embeddings(&m, &ds, &out)?;
        }
    }
    Ok(())
}

fn print_failures(n: usize) {
    if n > 0 {
        eprintln!("warning: {n} experiment cells failed; see the status column");
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
