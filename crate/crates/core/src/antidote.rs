//! Antidote generation: users are added one at a time, each with a relaxed
//! rating vector optimized by projected gradient descent against one
//! unfairness score or a pair of them, then rounded onto its top filler
//! items and committed before the next user is optimized.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::{debug, info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{RatingDataset, RatingScale};
use crate::error::{Error, Result};
use crate::factorization::{train, FactorModel, TrainConfig};
use crate::influence::{prediction_weights, InfluenceContext, RelaxedRatings};
use crate::linalg::{add_outer, add_ridge, add_scaled, dot, norm_sq, Matrix, SpdFactor};
use crate::metrics::{group_item_stats, score_from_stats, ItemNormalization, MetricKind};

/// How a PGD step turns the gradient into a move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    /// `x ← clip(x − lr·g / ‖g‖∞)`: every step moves the steepest
    /// coordinate by exactly `lr`.
    #[default]
    MaxNorm,
    /// `x ← clip(x − lr·g)`.
    Raw,
}

/// Starting point of the relaxed ratings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// Scale midpoint plus seeded uniform noise of ±`init_jitter`·range.
    #[default]
    Jitter,
    Midpoint,
    /// Seeded uniform over the whole box.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AntidoteConfig {
    /// Antidote users as a fraction of the original users.
    pub alpha_frac: f64,
    /// Filler budget n per antidote user.
    pub n_filler: usize,
    pub pgd_steps: usize,
    /// Step size; `None` means 0.02·(r_max − r_min).
    pub pgd_lr: Option<f64>,
    pub step_rule: StepRule,
    /// One target metric, or two for the multi-metric objective.
    pub metrics: Vec<MetricKind>,
    /// Weights a and b of the two metrics.
    pub weight_a: f64,
    pub weight_b: f64,
    /// Deflect conflicting gradients of a metric pair.
    pub deflect: bool,
    pub init: InitMode,
    /// Noise half-width for `InitMode::Jitter`, as a fraction of the range.
    pub init_jitter: f64,
    /// Rank fillers by `|x − midpoint|` instead of `|x|`.
    pub rank_by_midpoint: bool,
    pub normalization: ItemNormalization,
    /// Sweep cap of the warm-started retrain between two users; `None`
    /// keeps the training config's own cap.
    pub retrain_sweeps: Option<usize>,
    pub seed: u64,
}

impl Default for AntidoteConfig {
    fn default() -> Self {
        AntidoteConfig {
            alpha_frac: 0.02,
            n_filler: 200,
            pgd_steps: 50,
            pgd_lr: None,
            step_rule: StepRule::MaxNorm,
            metrics: vec![MetricKind::Value],
            weight_a: 1.0,
            weight_b: 1.0,
            deflect: true,
            init: InitMode::Jitter,
            init_jitter: 0.005,
            rank_by_midpoint: false,
            normalization: ItemNormalization::SkipUndefined,
            retrain_sweeps: Some(20),
            seed: 0,
        }
    }
}

/// What PGD minimizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    Single(MetricKind),
    Pair {
        first: MetricKind,
        second: MetricKind,
        a: f64,
        b: f64,
        deflect: bool,
    },
}

impl Objective {
    pub fn metrics(&self) -> Vec<MetricKind> {
        match *self {
            Objective::Single(k) => vec![k],
            Objective::Pair { first, second, .. } => vec![first, second],
        }
    }
}

impl AntidoteConfig {
    pub fn single(kind: MetricKind) -> Self {
        AntidoteConfig {
            metrics: vec![kind],
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha_frac) {
            return Err(Error::Config(format!("alpha_frac must lie in [0, 1), got {}", self.alpha_frac)));
        }
        if self.n_filler == 0 {
            return Err(Error::Config("n_filler must be at least 1".into()));
        }
        if let Some(lr) = self.pgd_lr {
            if !(lr > 0.0) || !lr.is_finite() {
                return Err(Error::Config(format!("pgd_lr must be positive, got {lr}")));
            }
        }
        if !(self.weight_a > 0.0) || !(self.weight_b > 0.0) {
            return Err(Error::Config(format!(
                "metric weights must be positive, got a={} b={}",
                self.weight_a, self.weight_b
            )));
        }
        if !(0.0..=0.5).contains(&self.init_jitter) {
            return Err(Error::Config(format!("init_jitter must lie in [0, 0.5], got {}", self.init_jitter)));
        }
        self.objective().map(|_| ())
    }

    /// Checks the filler budget against the item count as well.
    pub fn validate_for(&self, ds: &RatingDataset) -> Result<()> {
        self.validate()?;
        if self.n_filler > ds.num_items() {
            return Err(Error::Config(format!(
                "n_filler {} exceeds the {} items",
                self.n_filler,
                ds.num_items()
            )));
        }
        Ok(())
    }

    pub fn objective(&self) -> Result<Objective> {
        match self.metrics.as_slice() {
            [k] => Ok(Objective::Single(*k)),
            [a, b] if a == b => Err(Error::Validation(format!("metric pair repeats {a}"))),
            [a, b] => Ok(Objective::Pair {
                first: *a,
                second: *b,
                a: self.weight_a,
                b: self.weight_b,
                deflect: self.deflect,
            }),
            other => Err(Error::Config(format!(
                "expected one or two target metrics, got {}",
                other.len()
            ))),
        }
    }

    pub fn learning_rate(&self, scale: &RatingScale) -> f64 {
        self.pgd_lr.unwrap_or(0.02 * scale.width())
    }

    /// ⌊α·|U|⌋ for the given number of original users.
    pub fn num_users_for(&self, original_users: usize) -> usize {
        // 0.03 * 800 is 24.000000000000004 in floating point; a small slack
        // keeps the exact products exact without promoting 23.99
        (self.alpha_frac * original_users as f64 + 1e-9).floor() as usize
    }
}

/// One committed antidote user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntidoteUser {
    pub z: usize,
    /// Relaxed ratings the fillers were rounded from, when optimized.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relaxed: Option<RelaxedRatings>,
    /// Ascending item indices.
    pub fillers: Vec<usize>,
    pub ratings: Vec<i32>,
}

impl AntidoteUser {
    pub fn new(z: usize, mut pairs: Vec<(usize, i32)>) -> Self {
        pairs.sort_unstable_by_key(|p| p.0);
        AntidoteUser {
            z,
            relaxed: None,
            fillers: pairs.iter().map(|p| p.0).collect(),
            ratings: pairs.iter().map(|p| p.1).collect(),
        }
    }
}

/// Combines two metric gradients. Aligned gradients (non-negative inner
/// product) are summed with weights; conflicting ones are first projected
/// onto each other's normal plane.
pub fn deflected_gradient(g1: &[f64], g2: &[f64], a: f64, b: f64) -> Result<Vec<f64>> {
    if g1.len() != g2.len() {
        return Err(Error::Validation(format!(
            "gradient lengths differ: {} vs {}",
            g1.len(),
            g2.len()
        )));
    }
    let inner = dot(g1, g2);
    let (n1, n2) = (norm_sq(g1), norm_sq(g2));
    if inner >= 0.0 || n1 == 0.0 || n2 == 0.0 {
        return Ok(g1.iter().zip(g2).map(|(x, y)| a * x + b * y).collect());
    }
    let (c1, c2) = (inner / n2, inner / n1);
    Ok(g1
        .iter()
        .zip(g2)
        .map(|(x, y)| a * (x - c1 * y) + b * (y - c2 * x))
        .collect())
}

/// One projected step on a single vector; `scale_by` is the step
/// normalizer (the max-norm for `StepRule::MaxNorm`, 1 for `Raw`).
pub fn pgd_step(x: &mut [f64], g: &[f64], lr: f64, scale_by: f64, scale: &RatingScale) {
    if scale_by == 0.0 {
        return;
    }
    let f = lr / scale_by;
    for (xi, gi) in x.iter_mut().zip(g) {
        *xi = scale.clamp(*xi - f * gi);
    }
}

/// Starting point of antidote user `z`.
pub fn initial_ratings(cfg: &AntidoteConfig, scale: &RatingScale, num_items: usize, z: usize) -> Vec<f64> {
    let mid = scale.midpoint();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(z as u64);
    match cfg.init {
        InitMode::Midpoint => vec![mid; num_items],
        InitMode::Jitter => {
            let half = cfg.init_jitter * scale.width();
            (0..num_items)
                .map(|_| scale.clamp(mid + half * (2.0 * rng.random::<f64>() - 1.0)))
                .collect()
        }
        InitMode::Uniform => (0..num_items)
            .map(|_| scale.r_min() as f64 + scale.width() * rng.random::<f64>())
            .collect(),
    }
}

/// Result of optimizing one or more relaxed raters.
#[derive(Debug, Clone, PartialEq)]
pub struct PgdOutcome {
    pub xs: Vec<Vec<f64>>,
    /// Objective at the start and after every step.
    pub trace: Vec<f64>,
}

/// `(Q_Fᵀ Q_F + λI)` factored once per rater; Q is frozen during PGD.
struct LatentSolver {
    factor: Option<SpdFactor>,
    gram: Vec<f64>,
    items: Option<Vec<usize>>,
}

impl LatentSolver {
    fn new(model: &FactorModel, items: Option<&[usize]>) -> Self {
        let d = model.dim;
        let mut gram = vec![0.0; d * d];
        match items {
            Some(set) => set.iter().for_each(|&i| add_outer(&mut gram, model.item_vector(i), 1.0)),
            None => model.items.rows_iter().for_each(|q| add_outer(&mut gram, q, 1.0)),
        }
        add_ridge(&mut gram, d, model.lambda);
        LatentSolver {
            factor: SpdFactor::new(&gram, d),
            gram,
            items: items.map(|s| s.to_vec()),
        }
    }

    fn solve(&self, model: &FactorModel, x: &[f64]) -> Vec<f64> {
        let mut rhs = vec![0.0; model.dim];
        match &self.items {
            Some(set) => set.iter().for_each(|&i| add_scaled(&mut rhs, model.item_vector(i), x[i])),
            None => model
                .items
                .rows_iter()
                .zip(x)
                .for_each(|(q, &xi)| add_scaled(&mut rhs, q, xi)),
        }
        match &self.factor {
            Some(f) => f.solve(&rhs),
            None => crate::linalg::spd_solve(&self.gram, &rhs),
        }
    }
}

/// Projected gradient descent over the relaxed ratings of several raters
/// at once, with P and Q frozen and each rater's latent vector re-solved
/// every step. Coordinates outside a rater's filler set never move.
/// Returns the visited iterate with the lowest objective and the objective
/// at every iterate.
pub fn run_pgd(
    ds: &RatingDataset,
    model: &FactorModel,
    cfg: &AntidoteConfig,
    objective: Objective,
    mut xs: Vec<Vec<f64>>,
    fillers: Option<&[Vec<usize>]>,
) -> Result<PgdOutcome> {
    let scale = ds.scale();
    let lr = cfg.learning_rate(scale);
    let m = xs.len();
    if let Some(f) = fillers {
        if f.len() != m {
            return Err(Error::Validation(format!("{} filler sets for {} raters", f.len(), m)));
        }
    }
    let solvers: Vec<LatentSolver> = (0..m)
        .map(|z| LatentSolver::new(model, fillers.map(|f| f[z].as_slice())))
        .collect();
    let mut ctx = InfluenceContext::new(model, ds)?;
    let mut probe = model.clone();
    let mut trace = Vec::with_capacity(cfg.pgd_steps + 1);
    let mut best: (f64, Option<Vec<Vec<f64>>>) = (f64::INFINITY, None);

    for t in 0..=cfg.pgd_steps {
        let latents: Vec<Vec<f64>> = solvers.iter().zip(&xs).map(|(s, x)| s.solve(model, x)).collect();
        ctx.refresh_many(&Matrix::from_rows(model.dim, &latents), fillers)?;
        let views: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        probe.items = ctx.item_vectors(&views)?;
        let stats = group_item_stats(&probe, ds)?;

        let kinds = objective.metrics();
        let mut value = 0.0;
        let mut grads_per_metric = Vec::with_capacity(kinds.len());
        for (j, &kind) in kinds.iter().enumerate() {
            let weight = match objective {
                Objective::Single(_) => 1.0,
                Objective::Pair { a, b, .. } => [a, b][j],
            };
            value += weight * score_from_stats(kind, &stats, cfg.normalization)?;
            if t < cfg.pgd_steps {
                let w = prediction_weights(kind, &stats, cfg.normalization)?;
                grads_per_metric.push((0..m).map(|z| ctx.gradient_from_weights(&w, z)).collect::<Vec<_>>());
            }
        }
        trace.push(value);
        if value < best.0 {
            best = (value, Some(xs.clone()));
        }
        if t == cfg.pgd_steps {
            break;
        }

        let grads: Vec<Vec<f64>> = match objective {
            Objective::Single(_) => grads_per_metric.pop().unwrap(),
            Objective::Pair { a, b, deflect, .. } => (0..m)
                .map(|z| {
                    let (g1, g2) = (&grads_per_metric[0][z], &grads_per_metric[1][z]);
                    if deflect {
                        deflected_gradient(g1, g2, a, b)
                    } else {
                        Ok(g1.iter().zip(g2).map(|(x, y)| a * x + b * y).collect())
                    }
                })
                .collect::<Result<_>>()?,
        };
        let scale_by = match cfg.step_rule {
            StepRule::Raw => 1.0,
            StepRule::MaxNorm => grads
                .iter()
                .flat_map(|g| g.iter())
                .fold(0.0f64, |acc, v| acc.max(v.abs())),
        };
        for (x, g) in xs.iter_mut().zip(&grads) {
            pgd_step(x, g, lr, scale_by, scale);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("relaxed ratings became non-finite at PGD step {t}")));
            }
        }
    }
    Ok(PgdOutcome {
        xs: best.1.unwrap_or(xs),
        trace,
    })
}

/// Optimized relaxed ratings of one new antidote user and the objective
/// trace of its PGD run.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizedUser {
    pub relaxed: RelaxedRatings,
    pub trace: Vec<f64>,
}

/// Runs PGD for antidote user `z` against a model trained on `ds`, which
/// holds the original users plus every previously committed antidote user.
pub fn optimize_user(ds: &RatingDataset, model: &FactorModel, cfg: &AntidoteConfig, z: usize) -> Result<OptimizedUser> {
    cfg.validate()?;
    let x0 = initial_ratings(cfg, ds.scale(), ds.num_items(), z);
    let out = run_pgd(ds, model, cfg, cfg.objective()?, vec![x0], None)?;
    Ok(OptimizedUser {
        relaxed: RelaxedRatings {
            owner: z,
            x: out.xs.into_iter().next().unwrap(),
        },
        trace: out.trace,
    })
}

/// Keeps the `n_filler` coordinates of largest magnitude (ties to the lower
/// item index) and rounds each onto the allowed ratings.
pub fn round_and_select(x: &RelaxedRatings, cfg: &AntidoteConfig, scale: &RatingScale) -> AntidoteUser {
    let center = if cfg.rank_by_midpoint { scale.midpoint() } else { 0.0 };
    let mut order: Vec<usize> = (0..x.x.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = ((x.x[i] - center).abs(), (x.x[j] - center).abs());
        b.total_cmp(&a).then(i.cmp(&j))
    });
    order.truncate(cfg.n_filler.min(x.x.len()));
    let pairs = order.into_iter().map(|i| (i, scale.nearest(x.x[i]))).collect();
    let mut user = AntidoteUser::new(x.owner, pairs);
    user.relaxed = Some(x.clone());
    user
}

/// Committed antidote users and the PGD trace of each.
#[derive(Debug, Clone, PartialEq)]
pub struct AntidoteRun {
    pub users: Vec<AntidoteUser>,
    pub traces: Vec<Vec<f64>>,
}

/// Generates ⌊α·|U|⌋ antidote users sequentially.
pub fn generate(ds: &RatingDataset, train_cfg: &TrainConfig, cfg: &AntidoteConfig) -> Result<AntidoteRun> {
    let count = cfg.num_users_for(ds.num_original_users());
    if count == 0 {
        if cfg.alpha_frac > 0.0 {
            warn!(
                "alpha_frac {} of {} users rounds down to zero antidote users",
                cfg.alpha_frac,
                ds.num_original_users()
            );
        }
        return Ok(AntidoteRun {
            users: Vec::new(),
            traces: Vec::new(),
        });
    }
    generate_n(ds, train_cfg, cfg, count, None)
}

/// Generates `count` antidote users on top of whatever antidote users `ds`
/// already carries. `model`, if given, must be trained on `ds` and saves
/// the first retrain.
pub fn generate_n(
    ds: &RatingDataset,
    train_cfg: &TrainConfig,
    cfg: &AntidoteConfig,
    count: usize,
    model: Option<&FactorModel>,
) -> Result<AntidoteRun> {
    cfg.validate_for(ds)?;
    let mut working = ds.clone();
    let mut model = match model {
        Some(m) => m.clone(),
        None => train(&working, train_cfg, None)?,
    };
    let retrain_cfg = TrainConfig {
        max_sweeps: cfg.retrain_sweeps.unwrap_or(train_cfg.max_sweeps),
        ..train_cfg.clone()
    };
    let first = ds.num_antidote_users();
    let mut run = AntidoteRun {
        users: Vec::with_capacity(count),
        traces: Vec::with_capacity(count),
    };
    for j in 0..count {
        let z = first + j;
        if j > 0 {
            let warm = model.with_antidote_rows(working.num_antidote_users(), train_cfg);
            model = train(&working, &retrain_cfg, Some(&warm))?;
        }
        let opt = optimize_user(&working, &model, cfg, z)?;
        debug!(
            "antidote user {z}: objective {:.6} -> {:.6}",
            opt.trace[0],
            opt.trace[opt.trace.len() - 1]
        );
        let user = round_and_select(&opt.relaxed, cfg, ds.scale());
        working = working.inject_antidote(std::slice::from_ref(&user))?;
        run.users.push(user);
        run.traces.push(opt.trace);
    }
    info!("generated {count} antidote users");
    Ok(run)
}

/// JSON companion of an antidote CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntidoteSidecar {
    pub config: AntidoteConfig,
    pub users: Vec<SidecarUser>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarUser {
    pub z: usize,
    pub fillers: usize,
    pub trace: Vec<f64>,
}

/// Writes `antidote_user,item_id,rating` rows, one per filler.
pub fn write_antidote_csv(ds: &RatingDataset, users: &[AntidoteUser], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["antidote_user", "item_id", "rating"])?;
    for u in users {
        for (&i, &r) in u.fillers.iter().zip(&u.ratings) {
            w.write_record([format!("antidote{}", u.z), ds.item_id(i).to_string(), r.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_sidecar(cfg: &AntidoteConfig, run: &AntidoteRun, path: &Path) -> Result<()> {
    let sidecar = AntidoteSidecar {
        config: cfg.clone(),
        users: run
            .users
            .iter()
            .zip(&run.traces)
            .map(|(u, t)| SidecarUser {
                z: u.z,
                fillers: u.fillers.len(),
                trace: t.clone(),
            })
            .collect(),
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &sidecar)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads an antidote CSV against the dataset's item ids. Users are
/// numbered in first-appearance order.
pub fn load_antidote_csv(ds: &RatingDataset, path: &Path) -> Result<Vec<AntidoteUser>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let item_index: std::collections::HashMap<&str, usize> =
        ds.item_ids().iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["antidote_user", "item_id", "rating"] {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            message: "expected header antidote_user,item_id,rating".into(),
        });
    }
    let mut names: Vec<String> = Vec::new();
    let mut pairs: Vec<Vec<(usize, i32)>> = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let line = n + 2;
        let rec = rec?;
        let parse_err = |message: String| Error::Parse {
            path: path.into(),
            line,
            message,
        };
        if rec.len() != 3 {
            return Err(parse_err(format!("expected 3 fields, found {}", rec.len())));
        }
        let item = *item_index
            .get(&rec[1])
            .ok_or_else(|| parse_err(format!("unknown item id {:?}", &rec[1])))?;
        let rating: i32 = rec[2]
            .parse()
            .map_err(|_| parse_err(format!("rating {:?} is not an integer", &rec[2])))?;
        if !ds.scale().contains(rating) {
            return Err(Error::Validation(format!(
                "{}:{line}: rating {rating} is not on the scale",
                path.display()
            )));
        }
        let slot = match names.iter().position(|u| u == &rec[0]) {
            Some(s) => s,
            None => {
                names.push(rec[0].to_string());
                pairs.push(Vec::new());
                names.len() - 1
            }
        };
        pairs[slot].push((item, rating));
    }
    let first = ds.num_antidote_users();
    Ok(pairs
        .into_iter()
        .enumerate()
        .map(|(j, p)| AntidoteUser::new(first + j, p))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn relaxed(x: &[f64]) -> RelaxedRatings {
        RelaxedRatings { owner: 0, x: x.to_vec() }
    }

    #[test]
    fn deflection_hand_example() {
        let g = deflected_gradient(&[1.0, 0.0], &[-1.0, 1.0], 1.0, 1.0).unwrap();
        assert!((g[0] - 0.5).abs() < 1e-15 && (g[1] - 1.5).abs() < 1e-15, "{g:?}");
    }

    #[test]
    fn deflection_non_conflicting_cases() {
        let g = [0.3, -1.2, 2.0];
        assert_eq!(deflected_gradient(&g, &g, 1.0, 1.0).unwrap(), vec![0.6, -2.4, 4.0]);
        let h = deflected_gradient(&[1.0, 0.0], &[0.0, 2.0], 2.0, 0.5).unwrap();
        assert_eq!(h, vec![2.0, 1.0]);
        let z = deflected_gradient(&[0.0, 0.0], &[-1.0, 1.0], 1.0, 3.0).unwrap();
        assert_eq!(z, vec![-3.0, 3.0]);
        assert!(deflected_gradient(&[1.0], &[1.0, 2.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn constant_gradient_pgd_hits_the_box() {
        let scale = RatingScale::binary();
        let mut x = vec![0.5];
        for _ in 0..20 {
            pgd_step(&mut x, &[1.0], 0.1, 1.0, &scale);
        }
        assert_eq!(x, vec![-1.0]);
        let mut y = vec![0.25];
        pgd_step(&mut y, &[0.0], 0.1, 0.0, &scale);
        assert_eq!(y, vec![0.25]);
    }

    #[test]
    fn round_and_select_examples() {
        let cfg = AntidoteConfig {
            n_filler: 2,
            ..Default::default()
        };
        let u = round_and_select(&relaxed(&[0.9, -0.2, 0.4]), &cfg, &RatingScale::binary());
        assert_eq!(u.fillers, vec![0, 2]);
        assert_eq!(u.ratings, vec![1, 1]);

        let five = RatingScale::five_star();
        let one = AntidoteConfig {
            n_filler: 1,
            ..Default::default()
        };
        assert_eq!(round_and_select(&relaxed(&[3.0]), &one, &five).ratings, vec![3]);
        assert_eq!(round_and_select(&relaxed(&[3.5]), &one, &five).ratings, vec![4]);
    }

    #[test]
    fn ties_go_to_lower_index() {
        let cfg = AntidoteConfig {
            n_filler: 2,
            ..Default::default()
        };
        let u = round_and_select(&relaxed(&[-1.0, 0.5, 1.0, -1.0]), &cfg, &RatingScale::binary());
        assert_eq!(u.fillers, vec![0, 2]);
        assert_eq!(u.ratings, vec![-1, 1]);
    }

    #[test]
    fn midpoint_ranking_flag() {
        let cfg = AntidoteConfig {
            n_filler: 1,
            rank_by_midpoint: true,
            ..Default::default()
        };
        let u = round_and_select(&relaxed(&[1.0, 3.2, 4.0]), &cfg, &RatingScale::five_star());
        assert_eq!(u.fillers, vec![0]);
        assert_eq!(u.ratings, vec![1]);
    }

    #[test]
    fn config_checks() {
        assert!(AntidoteConfig::default().validate().is_ok());
        let bad = AntidoteConfig {
            alpha_frac: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let pair = AntidoteConfig {
            metrics: vec![MetricKind::Value, MetricKind::Value],
            ..Default::default()
        };
        assert!(matches!(pair.validate(), Err(Error::Validation(_))));
        assert_eq!(AntidoteConfig::default().num_users_for(800), 16);
        let three = AntidoteConfig {
            alpha_frac: 0.03,
            ..Default::default()
        };
        assert_eq!(three.num_users_for(800), 24);
        assert!((AntidoteConfig::default().learning_rate(&RatingScale::five_star()) - 0.08).abs() < 1e-15);
    }

    #[test]
    fn initial_ratings_stay_in_box_and_depend_on_user() {
        let cfg = AntidoteConfig::default();
        let s = RatingScale::binary();
        let a = initial_ratings(&cfg, &s, 50, 0);
        let b = initial_ratings(&cfg, &s, 50, 1);
        assert_ne!(a, b);
        assert!(a.iter().all(|v| v.abs() <= 0.01));
        assert_eq!(a, initial_ratings(&cfg, &s, 50, 0));
        let mid = AntidoteConfig {
            init: InitMode::Midpoint,
            ..Default::default()
        };
        assert_eq!(initial_ratings(&mid, &RatingScale::five_star(), 3, 0), vec![3.0; 3]);
    }
}
