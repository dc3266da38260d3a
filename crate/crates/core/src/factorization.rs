//! Regularized matrix factorization trained by alternating ridge solves.
//!
//! The objective is
//!
//! ```text
//! Σ_{(u,i)∈Ω} (r_ui − p_uᵀq_i)² + λ(‖P‖² + ‖Q‖² + ‖K‖²)
//! ```
//!
//! where `K` holds the latent vectors of injected antidote users. Antidote
//! rows are ordinary users as far as training is concerned; they are only
//! kept in a separate matrix so that reports and metrics can tell them
//! apart.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Rating, RatingDataset};
use crate::error::{Error, Result};
use crate::linalg::{add_outer_lower, add_ridge, add_scaled, dot, mirror_lower, spd_solve, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Latent dimension d.
    pub dim: usize,
    /// Regularization weight λ.
    pub lambda: f64,
    pub max_sweeps: usize,
    /// Stop once the relative objective decrease of a sweep drops below this.
    pub tol: f64,
    pub init_std: f64,
    pub seed: u64,
    /// Solve rows in parallel. Results are identical either way.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 8,
            lambda: 0.1,
            max_sweeps: 100,
            tol: 1e-6,
            init_std: 0.1,
            seed: 0,
            parallel: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("latent dimension must be at least 1".into()));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.init_std >= 0.0) || !self.init_std.is_finite() {
            return Err(Error::Config(format!("init_std must be non-negative, got {}", self.init_std)));
        }
        Ok(())
    }
}

/// Trained latent factors: `users` (P), `items` (Q) and `antidotes` (K).
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub dim: usize,
    pub lambda: f64,
    pub users: Matrix,
    pub items: Matrix,
    pub antidotes: Matrix,
}

const STREAM_USERS: u64 = 0;
const STREAM_ITEMS: u64 = 1 << 40;
const STREAM_ANTIDOTES: u64 = 2 << 40;

fn gaussian_row(seed: u64, stream: u64, dim: usize, std: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    if std == 0.0 {
        return vec![0.0; dim];
    }
    let normal = Normal::new(0.0, std).expect("init_std validated");
    (0..dim).map(|_| normal.sample(&mut rng)).collect()
}

fn gaussian_matrix(seed: u64, base: u64, rows: usize, dim: usize, std: f64) -> Matrix {
    let data = (0..rows)
        .flat_map(|r| gaussian_row(seed, base + r as u64, dim, std))
        .collect();
    Matrix::from_vec(rows, dim, data)
}

impl FactorModel {
    /// Seeded Gaussian initialization. Each row has its own random stream,
    /// so the original users and items get the same values regardless of
    /// how many antidote rows the dataset carries.
    pub fn initialize(ds: &RatingDataset, cfg: &TrainConfig) -> Self {
        let d = cfg.dim;
        FactorModel {
            dim: d,
            lambda: cfg.lambda,
            users: gaussian_matrix(cfg.seed, STREAM_USERS, ds.num_original_users(), d, cfg.init_std),
            items: gaussian_matrix(cfg.seed, STREAM_ITEMS, ds.num_items(), d, cfg.init_std),
            antidotes: gaussian_matrix(cfg.seed, STREAM_ANTIDOTES, ds.num_antidote_users(), d, cfg.init_std),
        }
    }

    /// Copy with extra antidote rows appended, initialized as in
    /// [`FactorModel::initialize`]. Used to warm-start after injection.
    pub fn with_antidote_rows(&self, total: usize, cfg: &TrainConfig) -> Self {
        let mut out = self.clone();
        let have = out.antidotes.nrows();
        for z in have..total {
            let row = gaussian_row(cfg.seed, STREAM_ANTIDOTES + z as u64, self.dim, cfg.init_std);
            out.antidotes.push_row(&row);
        }
        out.antidotes.truncate_rows(total);
        out
    }

    pub fn num_users(&self) -> usize {
        self.users.nrows() + self.antidotes.nrows()
    }

    /// Latent vector of dataset user `u`: a row of P for original users,
    /// of K for antidote users.
    pub fn user_vector(&self, u: usize) -> &[f64] {
        let n = self.users.nrows();
        if u < n {
            self.users.row(u)
        } else {
            self.antidotes.row(u - n)
        }
    }

    pub fn item_vector(&self, i: usize) -> &[f64] {
        self.items.row(i)
    }

    pub fn predict(&self, u: usize, i: usize) -> f64 {
        dot(self.user_vector(u), self.items.row(i))
    }

    pub fn shape_matches(&self, ds: &RatingDataset) -> bool {
        self.users.nrows() == ds.num_original_users()
            && self.antidotes.nrows() == ds.num_antidote_users()
            && self.items.nrows() == ds.num_items()
            && self.users.ncols() == self.dim
            && self.items.ncols() == self.dim
            && self.antidotes.ncols() == self.dim
    }

    /// Squared error over every observed entry plus the ridge penalty.
    pub fn objective(&self, ds: &RatingDataset) -> f64 {
        let sse: f64 = ds
            .entries()
            .iter()
            .map(|e| {
                let err = e.value as f64 - self.predict(e.user, e.item);
                err * err
            })
            .sum();
        sse + self.lambda
            * (self.users.frobenius_sq() + self.items.frobenius_sq() + self.antidotes.frobenius_sq())
    }

    pub fn all_finite(&self) -> bool {
        self.users.all_finite() && self.items.all_finite() && self.antidotes.all_finite()
    }

    /// `‖λp_u − Σ_{i∈I_u}(r_ui − p_uᵀq_i)q_i‖` for a user (original or antidote).
    pub fn user_residual(&self, ds: &RatingDataset, u: usize) -> f64 {
        let p = self.user_vector(u);
        let mut r: Vec<f64> = p.iter().map(|v| self.lambda * v).collect();
        for &(i, rating) in ds.user_ratings(u) {
            let q = self.items.row(i);
            add_scaled(&mut r, q, -(rating - dot(p, q)));
        }
        dot(&r, &r).sqrt()
    }

    /// `‖λq_i − Σ_{u∈U_i}(r_ui − v_uᵀq_i)v_u‖`, antidote raters included.
    pub fn item_residual(&self, ds: &RatingDataset, i: usize) -> f64 {
        let q = self.items.row(i);
        let mut r: Vec<f64> = q.iter().map(|v| self.lambda * v).collect();
        for &(u, rating) in ds.item_ratings(i) {
            let p = self.user_vector(u);
            add_scaled(&mut r, p, -(rating - dot(p, q)));
        }
        dot(&r, &r).sqrt()
    }

    const MAGIC: &'static [u8; 8] = b"AFMODEL1";

    /// Binary checkpoint: magic, `d: u32`, `λ: f64`, then P, Q and K each as
    /// `rows: u64, cols: u64` followed by row-major little-endian f64.
    pub fn save(&self, path: &Path) -> Result<()> {
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        w.write_all(Self::MAGIC).map_err(io)?;
        w.write_all(&(self.dim as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&self.lambda.to_le_bytes()).map_err(io)?;
        for m in [&self.users, &self.items, &self.antidotes] {
            w.write_all(&(m.nrows() as u64).to_le_bytes()).map_err(io)?;
            w.write_all(&(m.ncols() as u64).to_le_bytes()).map_err(io)?;
            for v in m.as_slice() {
                w.write_all(&v.to_le_bytes()).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let io = |e| Error::io(path, e);
        let mut r = BufReader::new(File::open(path).map_err(io)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != Self::MAGIC {
            return Err(Error::Validation(format!("{} is not a model checkpoint", path.display())));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4).map_err(io)?;
        let dim = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8).map_err(io)?;
        let lambda = f64::from_le_bytes(b8);
        let mut mats = Vec::with_capacity(3);
        for _ in 0..3 {
            r.read_exact(&mut b8).map_err(io)?;
            let rows = u64::from_le_bytes(b8) as usize;
            r.read_exact(&mut b8).map_err(io)?;
            let cols = u64::from_le_bytes(b8) as usize;
            if cols != dim {
                return Err(Error::Validation(format!(
                    "checkpoint block has {cols} columns, expected {dim}"
                )));
            }
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                r.read_exact(&mut b8).map_err(io)?;
                data.push(f64::from_le_bytes(b8));
            }
            mats.push(Matrix::from_vec(rows, cols, data));
        }
        let antidotes = mats.pop().unwrap();
        let items = mats.pop().unwrap();
        let users = mats.pop().unwrap();
        Ok(FactorModel {
            dim,
            lambda,
            users,
            items,
            antidotes,
        })
    }
}

/// Ridge solve `(Σ v vᵀ + λI)⁻¹ Σ r v` over `(vector, target)` pairs.
pub(crate) fn ridge_solve<'a>(
    dim: usize,
    lambda: f64,
    rows: impl Iterator<Item = (&'a [f64], f64)>,
) -> Vec<f64> {
    let mut gram = vec![0.0; dim * dim];
    let mut rhs = vec![0.0; dim];
    let mut any = false;
    for (v, target) in rows {
        add_outer_lower(&mut gram, v, 1.0);
        add_scaled(&mut rhs, v, target);
        any = true;
    }
    if !any {
        return vec![0.0; dim];
    }
    mirror_lower(&mut gram, dim);
    add_ridge(&mut gram, dim, lambda);
    spd_solve(&gram, &rhs)
}

/// Latent vector of a user who rates every item `i` with `ratings[i]` and is
/// not part of the dataset. The relaxed antidote user is such a row.
#[derive(Debug, Clone, Copy)]
pub struct RelaxedRater<'a> {
    pub latent: &'a [f64],
    pub ratings: &'a [f64],
}

/// Closed-form item vector with P and K held fixed:
/// `q_i = M_i⁻¹ (Σ_{u∈U_i} r_ui v_u + x_zi k_z)` with
/// `M_i = Σ_{u∈U_i} v_u v_uᵀ + k_z k_zᵀ + λI`.
pub fn solve_item_vector(
    ds: &RatingDataset,
    model: &FactorModel,
    item: usize,
    relaxed: Option<RelaxedRater<'_>>,
) -> Vec<f64> {
    let raters = ds
        .item_ratings(item)
        .iter()
        .map(|&(u, r)| (model.user_vector(u), r));
    match relaxed {
        Some(rr) => ridge_solve(
            model.dim,
            model.lambda,
            raters.chain(std::iter::once((rr.latent, rr.ratings[item]))),
        ),
        None => ridge_solve(model.dim, model.lambda, raters),
    }
}

/// Latent vector of a user with the given `(item, rating)` list and Q fixed.
pub fn solve_user_vector(model: &FactorModel, ratings: impl Iterator<Item = (usize, f64)>) -> Vec<f64> {
    let items = &model.items;
    ridge_solve(
        model.dim,
        model.lambda,
        ratings.map(|(i, r)| (items.row(i), r)),
    )
}

fn update_users(ds: &RatingDataset, model: &mut FactorModel, parallel: bool) {
    let (dim, lambda) = (model.dim, model.lambda);
    let n = model.users.nrows();
    let items = &model.items;
    let solve = |u: usize, row: &mut [f64]| {
        let sol = ridge_solve(
            dim,
            lambda,
            ds.user_ratings(u).iter().map(|&(i, r)| (items.row(i), r)),
        );
        row.copy_from_slice(&sol);
    };
    if parallel {
        model
            .users
            .as_mut_slice()
            .par_chunks_exact_mut(dim)
            .enumerate()
            .for_each(|(u, row)| solve(u, row));
        model
            .antidotes
            .as_mut_slice()
            .par_chunks_exact_mut(dim)
            .enumerate()
            .for_each(|(z, row)| solve(n + z, row));
    } else {
        for (u, row) in model.users.as_mut_slice().chunks_exact_mut(dim).enumerate() {
            solve(u, row);
        }
        for (z, row) in model.antidotes.as_mut_slice().chunks_exact_mut(dim).enumerate() {
            solve(n + z, row);
        }
    }
}

fn update_items(ds: &RatingDataset, model: &mut FactorModel, parallel: bool) {
    let (dim, lambda) = (model.dim, model.lambda);
    let users = &model.users;
    let antidotes = &model.antidotes;
    let n = users.nrows();
    let solve = |i: usize, row: &mut [f64]| {
        let sol = ridge_solve(
            dim,
            lambda,
            ds.item_ratings(i).iter().map(|&(u, r)| {
                let v = if u < n { users.row(u) } else { antidotes.row(u - n) };
                (v, r)
            }),
        );
        row.copy_from_slice(&sol);
    };
    if parallel {
        model
            .items
            .as_mut_slice()
            .par_chunks_exact_mut(dim)
            .enumerate()
            .for_each(|(i, row)| solve(i, row));
    } else {
        for (i, row) in model.items.as_mut_slice().chunks_exact_mut(dim).enumerate() {
            solve(i, row);
        }
    }
}

/// One ALS sweep: all user rows, then all item rows.
pub fn als_sweep(ds: &RatingDataset, model: &mut FactorModel, parallel: bool) {
    update_users(ds, model, parallel);
    update_items(ds, model, parallel);
}

/// Trains the factorization and returns the model plus the objective value
/// before the first sweep and after each sweep.
pub fn train_with_trace(
    ds: &RatingDataset,
    cfg: &TrainConfig,
    warm_start: Option<&FactorModel>,
) -> Result<(FactorModel, Vec<f64>)> {
    cfg.validate()?;
    let mut model = match warm_start {
        Some(m) => {
            if !m.shape_matches(ds) || m.dim != cfg.dim {
                return Err(Error::Validation(format!(
                    "warm-start model shape ({}+{} users, {} items, d={}) does not match dataset ({}+{} users, {} items, d={})",
                    m.users.nrows(),
                    m.antidotes.nrows(),
                    m.items.nrows(),
                    m.dim,
                    ds.num_original_users(),
                    ds.num_antidote_users(),
                    ds.num_items(),
                    cfg.dim
                )));
            }
            let mut m = m.clone();
            m.lambda = cfg.lambda;
            m
        }
        None => FactorModel::initialize(ds, cfg),
    };

    let mut trace = vec![model.objective(ds)];
    for sweep in 0..cfg.max_sweeps {
        als_sweep(ds, &mut model, cfg.parallel);
        let f = model.objective(ds);
        if !f.is_finite() {
            return Err(Error::Numerical(format!("objective became {f} in sweep {sweep}")));
        }
        let prev = *trace.last().unwrap();
        trace.push(f);
        if prev <= 0.0 || (prev - f) / prev < cfg.tol {
            break;
        }
    }
    debug!(
        "trained {} sweeps, objective {:.6} -> {:.6}",
        trace.len() - 1,
        trace[0],
        trace[trace.len() - 1]
    );
    Ok((model, trace))
}

pub fn train(
    ds: &RatingDataset,
    cfg: &TrainConfig,
    warm_start: Option<&FactorModel>,
) -> Result<FactorModel> {
    train_with_trace(ds, cfg, warm_start).map(|(m, _)| m)
}

pub fn predict(model: &FactorModel, u: usize, i: usize) -> f64 {
    model.predict(u, i)
}

/// Root mean squared error over the given entries.
pub fn rmse(model: &FactorModel, entries: &[Rating]) -> Result<f64> {
    if entries.is_empty() {
        return Err(Error::Validation("RMSE over an empty entry set".into()));
    }
    let sse: f64 = entries
        .iter()
        .map(|e| {
            let err = e.value as f64 - model.predict(e.user, e.item);
            err * err
        })
        .sum();
    Ok((sse / entries.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{RatingScale, UserGroup};

    fn single_entry() -> RatingDataset {
        let scale = RatingScale::range(-3, 3).unwrap();
        RatingDataset::new(
            1,
            1,
            vec![Rating { user: 0, item: 0, value: 2 }],
            vec![UserGroup::Advantaged],
            scale,
        )
        .unwrap()
    }

    #[test]
    fn single_entry_reaches_scalar_fixed_point() {
        let ds = single_entry();
        let cfg = TrainConfig {
            dim: 1,
            lambda: 0.1,
            max_sweeps: 10_000,
            tol: 1e-15,
            seed: 3,
            ..Default::default()
        };
        let m = train(&ds, &cfg, None).unwrap();
        let p = m.users.row(0)[0];
        let q = m.items.row(0)[0];
        assert!((0.1 * p - (2.0 - p * q) * q).abs() < 1e-6, "p={p} q={q}");
        assert!((0.1 * q - (2.0 - p * q) * p).abs() < 1e-6, "p={p} q={q}");
        // non-trivial solution: |p|=|q|, pq = 2 - λ
        assert!((p * q - 1.9).abs() < 1e-5);
    }

    #[test]
    fn no_entries_collapses_to_zero() {
        let ds = RatingDataset::new(
            2,
            3,
            vec![],
            vec![UserGroup::Advantaged, UserGroup::Disadvantaged],
            RatingScale::binary(),
        )
        .unwrap();
        let m = train(&ds, &TrainConfig::default(), None).unwrap();
        assert!(m.users.as_slice().iter().all(|&v| v == 0.0));
        assert!(m.items.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(m.objective(&ds), 0.0);
    }

    #[test]
    fn rejects_bad_config() {
        let ds = single_entry();
        let bad_dim = TrainConfig { dim: 0, ..Default::default() };
        assert!(matches!(train(&ds, &bad_dim, None), Err(Error::Config(_))));
        let bad_lambda = TrainConfig { lambda: 0.0, ..Default::default() };
        assert!(matches!(train(&ds, &bad_lambda, None), Err(Error::Config(_))));
    }

    #[test]
    fn item_solve_scalar_formula() {
        // one rater p = 1, r = 2, λ = 1  =>  q = 2 / (1 + 1)
        let ds = RatingDataset::new(
            1,
            2,
            vec![Rating { user: 0, item: 0, value: 2 }],
            vec![UserGroup::Advantaged],
            RatingScale::range(1, 5).unwrap(),
        )
        .unwrap();
        let model = FactorModel {
            dim: 1,
            lambda: 1.0,
            users: Matrix::from_vec(1, 1, vec![1.0]),
            items: Matrix::zeros(2, 1),
            antidotes: Matrix::zeros(0, 1),
        };
        assert!((solve_item_vector(&ds, &model, 0, None)[0] - 1.0).abs() < 1e-15);
        assert_eq!(solve_item_vector(&ds, &model, 1, None), vec![0.0]);
        let zero_k = [0.0];
        let xs = [5.0, 5.0];
        let with_zero = solve_item_vector(
            &ds,
            &model,
            0,
            Some(RelaxedRater { latent: &zero_k, ratings: &xs }),
        );
        assert_eq!(with_zero, solve_item_vector(&ds, &model, 0, None));
    }

    #[test]
    fn predict_is_dot_product() {
        let model = FactorModel {
            dim: 2,
            lambda: 0.1,
            users: Matrix::from_vec(1, 2, vec![1.0, 2.0]),
            items: Matrix::from_vec(1, 2, vec![3.0, -1.0]),
            antidotes: Matrix::zeros(0, 2),
        };
        assert_eq!(predict(&model, 0, 0), 1.0);
    }

    #[test]
    fn rmse_hand_values() {
        let model = FactorModel {
            dim: 1,
            lambda: 0.1,
            users: Matrix::from_vec(2, 1, vec![1.0, 1.0]),
            items: Matrix::from_vec(1, 1, vec![0.0]),
            antidotes: Matrix::zeros(0, 1),
        };
        let entries = [
            Rating { user: 0, item: 0, value: 1 },
            Rating { user: 1, item: 0, value: -1 },
        ];
        assert_eq!(rmse(&model, &entries).unwrap(), 1.0);
        assert!(rmse(&model, &[]).is_err());
        let perfect = [Rating { user: 0, item: 0, value: 0 }];
        assert_eq!(rmse(&model, &perfect).unwrap(), 0.0);
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let ds = single_entry();
        let cfg = TrainConfig { dim: 3, ..Default::default() };
        let m = train(&ds, &cfg, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        m.save(&path).unwrap();
        let back = FactorModel::load(&path).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn antidote_rows_do_not_shift_original_init() {
        let ds = single_entry();
        let cfg = TrainConfig { dim: 4, ..Default::default() };
        let base = FactorModel::initialize(&ds, &cfg);
        let extended = base.with_antidote_rows(2, &cfg);
        assert_eq!(base.users, extended.users);
        assert_eq!(base.items, extended.items);
        assert_eq!(extended.antidotes.nrows(), 2);
    }
}
