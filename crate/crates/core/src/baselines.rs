//! Comparison methods: a fairness-regularized trainer, three naive antidote
//! generators and batch injection of jointly optimized antidote users.

use std::fmt;
use std::str::FromStr;

use log::debug;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::antidote::{initial_ratings, run_pgd, AntidoteConfig, AntidoteRun, AntidoteUser, Objective, PgdOutcome};
use crate::data::{RatingDataset, UserGroup};
use crate::error::{Error, Result};
use crate::factorization::{train, FactorModel, TrainConfig};
use crate::influence::{prediction_weights, RelaxedRatings};
use crate::linalg::{add_scaled, Matrix};
use crate::metrics::{group_item_stats, score_from_stats, ItemNormalization, MetricKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    None,
    Regularization,
    Maximum,
    Minimum,
    Random,
    BatchOptimized,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 6] = [
        BaselineKind::None,
        BaselineKind::Regularization,
        BaselineKind::Maximum,
        BaselineKind::Minimum,
        BaselineKind::Random,
        BaselineKind::BatchOptimized,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::None => "none",
            BaselineKind::Regularization => "regularization",
            BaselineKind::Maximum => "maximum",
            BaselineKind::Minimum => "minimum",
            BaselineKind::Random => "random",
            BaselineKind::BatchOptimized => "batch-optimized",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase().replace('_', "-");
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.name() == s || (s == "batch" && *k == BaselineKind::BatchOptimized))
            .ok_or_else(|| Error::Validation(format!("unknown baseline {s:?}")))
    }
}

const STREAM_FILLERS: u64 = 1 << 48;

/// Uniformly random filler set of antidote user `z`, ascending.
pub fn random_fillers(num_items: usize, n: usize, seed: u64, z: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_FILLERS + z as u64);
    let mut items = index::sample(&mut rng, num_items, n).into_vec();
    items.sort_unstable();
    items
}

fn check_budget(ds: &RatingDataset, cfg: &AntidoteConfig) -> Result<()> {
    cfg.validate()?;
    if cfg.n_filler > ds.num_items() {
        return Err(Error::Validation(format!(
            "filler budget {} exceeds the {} items",
            cfg.n_filler,
            ds.num_items()
        )));
    }
    Ok(())
}

/// Maximum, Minimum or Random antidote users on random filler items.
pub fn naive_antidote(kind: BaselineKind, ds: &RatingDataset, cfg: &AntidoteConfig) -> Result<Vec<AntidoteUser>> {
    check_budget(ds, cfg)?;
    let scale = ds.scale();
    let count = cfg.num_users_for(ds.num_original_users());
    let first = ds.num_antidote_users();
    (first..first + count)
        .map(|z| {
            let fillers = random_fillers(ds.num_items(), cfg.n_filler, cfg.seed, z);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
            rng.set_stream(z as u64);
            let pairs = fillers
                .into_iter()
                .map(|i| {
                    let r = match kind {
                        BaselineKind::Maximum => scale.r_max(),
                        BaselineKind::Minimum => scale.r_min(),
                        BaselineKind::Random => scale.allowed()[rng.random_range(0..scale.allowed().len())],
                        other => {
                            return Err(Error::Validation(format!("{other} is not a naive antidote baseline")));
                        }
                    };
                    Ok((i, r))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(AntidoteUser::new(z, pairs))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularizationConfig {
    /// Weight of the unfairness term.
    pub weight: f64,
    pub step: f64,
    pub epochs: usize,
}

impl Default for RegularizationConfig {
    fn default() -> Self {
        RegularizationConfig {
            weight: 1.0,
            step: 1e-3,
            epochs: 200,
        }
    }
}

impl RegularizationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight >= 0.0) || !self.weight.is_finite() {
            return Err(Error::Config(format!("regularization weight must be non-negative, got {}", self.weight)));
        }
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::Config(format!("regularization step must be positive, got {}", self.step)));
        }
        Ok(())
    }
}

/// Gradient of the factorization objective, plus `metric_scale` times the
/// subgradient of `kind` when given. Returns the gradient model and the
/// objective value at `model`.
fn objective_gradient(
    ds: &RatingDataset,
    model: &FactorModel,
    metric: Option<(MetricKind, f64)>,
) -> Result<(FactorModel, f64)> {
    let d = model.dim;
    let lam = model.lambda;
    let n_orig = ds.num_original_users();
    let mut grad = FactorModel {
        dim: d,
        lambda: lam,
        users: Matrix::zeros(model.users.nrows(), d),
        items: Matrix::zeros(model.items.nrows(), d),
        antidotes: Matrix::zeros(model.antidotes.nrows(), d),
    };
    let mut value = lam * (model.users.frobenius_sq() + model.items.frobenius_sq() + model.antidotes.frobenius_sq());

    let weights = match metric {
        Some((kind, scale)) => {
            let stats = group_item_stats(model, ds)?;
            value += scale * score_from_stats(kind, &stats, ItemNormalization::default())?;
            Some((prediction_weights(kind, &stats, ItemNormalization::default())?, scale))
        }
        None => None,
    };

    for e in ds.entries() {
        let (u, i) = (e.user, e.item);
        let p = model.user_vector(u);
        let q = model.item_vector(i);
        let pred = crate::linalg::dot(p, q);
        let err = pred - e.value as f64;
        value += err * err;
        let mut c = 2.0 * err;
        if let Some((w, scale)) = &weights {
            if u < n_orig {
                c += scale
                    * match ds.group(u) {
                        UserGroup::Disadvantaged => w.d[i],
                        UserGroup::Advantaged => w.a[i],
                        UserGroup::Unassigned => 0.0,
                    };
            }
        }
        if u < n_orig {
            add_scaled(grad.users.row_mut(u), q, c);
        } else {
            add_scaled(grad.antidotes.row_mut(u - n_orig), q, c);
        }
        add_scaled(grad.items.row_mut(i), p, c);
    }
    for (g, m) in [
        (&mut grad.users, &model.users),
        (&mut grad.items, &model.items),
        (&mut grad.antidotes, &model.antidotes),
    ] {
        for (gv, mv) in g.as_mut_slice().iter_mut().zip(m.as_slice()) {
            *gv += 2.0 * lam * mv;
        }
    }
    Ok((grad, value))
}

/// Fixed-step (sub)gradient descent. Returns the iterate with the lowest
/// objective together with the objective at every epoch.
fn descend(
    ds: &RatingDataset,
    start: &FactorModel,
    metric: Option<(MetricKind, f64)>,
    step: f64,
    epochs: usize,
) -> Result<(FactorModel, Vec<f64>)> {
    let mut model = start.clone();
    let mut best = (f64::INFINITY, start.clone());
    let mut trace = Vec::with_capacity(epochs + 1);
    for epoch in 0..=epochs {
        let (grad, value) = objective_gradient(ds, &model, metric)?;
        if !value.is_finite() {
            return Err(Error::Numerical(format!("objective became {value} at epoch {epoch}")));
        }
        trace.push(value);
        if value < best.0 {
            best = (value, model.clone());
        }
        if epoch == epochs {
            break;
        }
        for (m, g) in [
            (&mut model.users, &grad.users),
            (&mut model.items, &grad.items),
            (&mut model.antidotes, &grad.antidotes),
        ] {
            for (mv, gv) in m.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *mv -= step * gv;
            }
        }
    }
    if !best.1.all_finite() {
        return Err(Error::Numerical("subgradient descent diverged".into()));
    }
    Ok((best.1, trace))
}

/// Plain gradient descent on the factorization objective from `start`.
pub fn gradient_descent(ds: &RatingDataset, start: &FactorModel, step: f64, epochs: usize) -> Result<(FactorModel, Vec<f64>)> {
    descend(ds, start, None, step, epochs)
}

/// Factorization with an unfairness penalty: ALS on the plain objective,
/// then subgradient descent on
/// `Σ(r − p·q)² + λ(‖P‖² + ‖Q‖²) + weight·M_kind`.
pub fn regularized_train(
    ds: &RatingDataset,
    train_cfg: &TrainConfig,
    kind: MetricKind,
    reg: &RegularizationConfig,
) -> Result<(FactorModel, Vec<f64>)> {
    let start = train(ds, train_cfg, None)?;
    regularized_from(ds, &start, kind, reg)
}

/// Same as [`regularized_train`] from an explicit starting model.
pub fn regularized_from(
    ds: &RatingDataset,
    start: &FactorModel,
    kind: MetricKind,
    reg: &RegularizationConfig,
) -> Result<(FactorModel, Vec<f64>)> {
    reg.validate()?;
    let scale = reg.weight;
    let (model, trace) = descend(ds, start, Some((kind, scale)), reg.step, reg.epochs)?;
    debug!(
        "regularized training: objective {:.4} -> {:.4}",
        trace[0],
        trace[trace.len() - 1]
    );
    Ok((model, trace))
}

/// Joint PGD over several antidote users restricted to fixed filler sets.
/// Every coordinate starts at the scale midpoint; filler coordinates are
/// then initialized as in sequential generation.
pub fn batch_optimize(
    ds: &RatingDataset,
    model: &FactorModel,
    cfg: &AntidoteConfig,
    kind: MetricKind,
    fillers: &[Vec<usize>],
    first_z: usize,
) -> Result<PgdOutcome> {
    let scale = ds.scale();
    let n = ds.num_items();
    let xs = fillers
        .iter()
        .enumerate()
        .map(|(j, set)| {
            let init = initial_ratings(cfg, scale, n, first_z + j);
            let mut x = vec![scale.midpoint(); n];
            for &i in set {
                x[i] = init[i];
            }
            x
        })
        .collect();
    run_pgd(ds, model, cfg, Objective::Single(kind), xs, Some(fillers))
}

/// All ⌊α·|U|⌋ users injected at once: random filler sets, ratings
/// optimized jointly, then rounded onto the allowed values.
pub fn batch_optimized_antidote(
    ds: &RatingDataset,
    train_cfg: &TrainConfig,
    cfg: &AntidoteConfig,
    kind: MetricKind,
    model: Option<&FactorModel>,
) -> Result<AntidoteRun> {
    check_budget(ds, cfg)?;
    let count = cfg.num_users_for(ds.num_original_users());
    if count == 0 {
        return Ok(AntidoteRun {
            users: Vec::new(),
            traces: Vec::new(),
        });
    }
    let model = match model {
        Some(m) => m.clone(),
        None => train(ds, train_cfg, None)?,
    };
    let first = ds.num_antidote_users();
    let fillers: Vec<Vec<usize>> = (first..first + count)
        .map(|z| random_fillers(ds.num_items(), cfg.n_filler, cfg.seed, z))
        .collect();
    let out = batch_optimize(ds, &model, cfg, kind, &fillers, first)?;
    let scale = ds.scale();
    let users = out
        .xs
        .into_iter()
        .zip(&fillers)
        .enumerate()
        .map(|(j, (x, set))| {
            let pairs = set.iter().map(|&i| (i, scale.nearest(x[i]))).collect();
            let mut u = AntidoteUser::new(first + j, pairs);
            u.relaxed = Some(RelaxedRatings { owner: first + j, x });
            u
        })
        .collect();
    Ok(AntidoteRun {
        users,
        traces: vec![out.trace],
    })
}
