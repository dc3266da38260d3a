//! Derivatives of the unfairness scores with respect to the relaxed ratings
//! of antidote users, holding every user factor fixed.
//!
//! A relaxed rater `z` with latent vector `k_z` who rates item `i` with
//! `x_zi` enters that item's ridge system. Differentiating its stationarity
//! condition gives
//!
//! ```text
//! ∂q_i/∂x_zi = M_i⁻¹ k_z,    M_i = Σ_{u∈U_i} p_u p_uᵀ + Σ_z k_z k_zᵀ + λI
//! ```
//!
//! with `∂q_i/∂x_zj = 0` for `j ≠ i` and `∂p_u/∂x_z = 0`. `U_i` includes
//! antidote users that were already committed to the dataset.

use serde::{Deserialize, Serialize};

use crate::data::{RatingDataset, UserGroup};
use crate::error::{Error, Result};
use crate::factorization::FactorModel;
use crate::linalg::{add_outer, add_ridge, add_scaled, dot, spd_solve, Matrix, SpdFactor};
use crate::metrics::{group_item_stats, score_from_stats, GroupItemStats, ItemNormalization, MetricKind};

/// Continuous ratings of one antidote user over every item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxedRatings {
    pub owner: usize,
    pub x: Vec<f64>,
}

/// Gradient of a single prediction: one nonzero coordinate at `index`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseGradient {
    pub len: usize,
    pub index: usize,
    pub value: f64,
}

impl SparseGradient {
    pub fn to_dense(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.len];
        g[self.index] = self.value;
        g
    }
}

/// `sign` with `sign(0) = 0`.
#[inline]
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
fn step(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        0.0
    }
}

struct ItemSystem {
    gram: Vec<f64>,
    factor: Option<SpdFactor>,
}

impl ItemSystem {
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        match &self.factor {
            Some(f) => f.solve(rhs),
            None => spd_solve(&self.gram, rhs),
        }
    }
}

/// Frozen factors and per-item systems for a set of relaxed raters.
///
/// Built from a trained model; [`InfluenceContext::refresh`] installs the
/// current relaxed latent vectors and caches `M_i⁻¹ k_z` for every item.
pub struct InfluenceContext {
    dim: usize,
    lambda: f64,
    num_items: usize,
    users: Matrix,
    base_gram: Vec<f64>,
    base_rhs: Vec<f64>,
    sum_p_d: Vec<f64>,
    sum_p_a: Vec<f64>,
    relaxed: Matrix,
    raters: Vec<Vec<usize>>,
    systems: Vec<ItemSystem>,
    dq: Vec<Vec<f64>>,
}

impl InfluenceContext {
    pub fn new(model: &FactorModel, ds: &RatingDataset) -> Result<Self> {
        if !model.shape_matches(ds) {
            return Err(Error::Validation(
                "model shape does not match the dataset it is differentiated on".into(),
            ));
        }
        let d = model.dim;
        let n_items = ds.num_items();
        let n_orig = ds.num_original_users();
        let rows: Vec<Vec<f64>> = (0..ds.num_users()).map(|u| model.user_vector(u).to_vec()).collect();
        let users = Matrix::from_rows(d, &rows);

        let mut base_gram = vec![0.0; n_items * d * d];
        let mut base_rhs = vec![0.0; n_items * d];
        let mut sum_p_d = vec![0.0; n_items * d];
        let mut sum_p_a = vec![0.0; n_items * d];
        for i in 0..n_items {
            let gram = &mut base_gram[i * d * d..(i + 1) * d * d];
            let rhs = &mut base_rhs[i * d..(i + 1) * d];
            for &(u, r) in ds.item_ratings(i) {
                let p = users.row(u);
                add_outer(gram, p, 1.0);
                add_scaled(rhs, p, r);
                if u < n_orig {
                    match ds.group(u) {
                        UserGroup::Disadvantaged => add_scaled(&mut sum_p_d[i * d..(i + 1) * d], p, 1.0),
                        UserGroup::Advantaged => add_scaled(&mut sum_p_a[i * d..(i + 1) * d], p, 1.0),
                        UserGroup::Unassigned => {}
                    }
                }
            }
            add_ridge(gram, d, model.lambda);
        }

        let mut ctx = InfluenceContext {
            dim: d,
            lambda: model.lambda,
            num_items: n_items,
            users,
            base_gram,
            base_rhs,
            sum_p_d,
            sum_p_a,
            relaxed: Matrix::zeros(0, d),
            raters: vec![Vec::new(); n_items],
            systems: Vec::new(),
            dq: vec![Vec::new(); n_items],
        };
        ctx.install();
        Ok(ctx)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_relaxed(&self) -> usize {
        self.relaxed.nrows()
    }

    /// Latent vector of relaxed rater `z`.
    pub fn latent(&self, z: usize) -> &[f64] {
        self.relaxed.row(z)
    }

    /// Installs a single relaxed rater who rates every item.
    pub fn refresh(&mut self, k: &[f64]) -> Result<()> {
        let latents = Matrix::from_rows(self.dim, &[k.to_vec()]);
        self.refresh_many(&latents, None)
    }

    /// Installs several relaxed raters. `fillers[z]` lists the items rater
    /// `z` rates; `None` means every rater rates every item.
    pub fn refresh_many(&mut self, latents: &Matrix, fillers: Option<&[Vec<usize>]>) -> Result<()> {
        if latents.ncols() != self.dim {
            return Err(Error::Validation(format!(
                "relaxed latent vectors have dimension {}, expected {}",
                latents.ncols(),
                self.dim
            )));
        }
        let mut raters = vec![Vec::new(); self.num_items];
        match fillers {
            None => {
                for r in raters.iter_mut() {
                    r.extend(0..latents.nrows());
                }
            }
            Some(sets) => {
                if sets.len() != latents.nrows() {
                    return Err(Error::Validation(format!(
                        "{} filler sets for {} relaxed raters",
                        sets.len(),
                        latents.nrows()
                    )));
                }
                for (z, set) in sets.iter().enumerate() {
                    for &i in set {
                        if i >= self.num_items {
                            return Err(Error::Validation(format!("filler item {i} out of range")));
                        }
                        raters[i].push(z);
                    }
                }
                for r in raters.iter_mut() {
                    r.sort_unstable();
                    r.dedup();
                }
            }
        }
        self.relaxed = latents.clone();
        self.raters = raters;
        self.install();
        Ok(())
    }

    fn install(&mut self) {
        let d = self.dim;
        let mut systems = Vec::with_capacity(self.num_items);
        let mut dq = Vec::with_capacity(self.num_items);
        for i in 0..self.num_items {
            let mut gram = self.base_gram[i * d * d..(i + 1) * d * d].to_vec();
            for &z in &self.raters[i] {
                add_outer(&mut gram, self.relaxed.row(z), 1.0);
            }
            let factor = SpdFactor::new(&gram, d);
            let sys = ItemSystem { gram, factor };
            let mut col = Vec::with_capacity(self.raters[i].len() * d);
            for &z in &self.raters[i] {
                col.extend(sys.solve(self.relaxed.row(z)));
            }
            systems.push(sys);
            dq.push(col);
        }
        self.systems = systems;
        self.dq = dq;
    }

    fn slot(&self, i: usize, z: usize) -> Option<usize> {
        self.raters[i].binary_search(&z).ok()
    }

    /// `∂q_i/∂x_zi`; zero when `z` does not rate `i`.
    pub fn dq_dx(&self, i: usize, z: usize) -> Vec<f64> {
        let d = self.dim;
        match self.slot(i, z) {
            Some(s) => self.dq[i][s * d..(s + 1) * d].to_vec(),
            None => vec![0.0; d],
        }
    }

    /// Gradient of `r̂_ui` with respect to `x_z`.
    pub fn drhat_dx(&self, u: usize, i: usize, z: usize) -> SparseGradient {
        SparseGradient {
            len: self.num_items,
            index: i,
            value: dot(self.users.row(u), &self.dq_dx(i, z)),
        }
    }

    /// Item vectors re-solved with the relaxed raters rating `xs[z][i]`,
    /// every other factor held fixed.
    pub fn item_vectors(&self, xs: &[&[f64]]) -> Result<Matrix> {
        if xs.len() != self.relaxed.nrows() {
            return Err(Error::Validation(format!(
                "{} rating vectors for {} relaxed raters",
                xs.len(),
                self.relaxed.nrows()
            )));
        }
        if let Some(x) = xs.iter().find(|x| x.len() != self.num_items) {
            return Err(Error::Validation(format!(
                "relaxed rating vector has length {}, expected {}",
                x.len(),
                self.num_items
            )));
        }
        let d = self.dim;
        let mut q = Matrix::zeros(self.num_items, d);
        for i in 0..self.num_items {
            let mut rhs = self.base_rhs[i * d..(i + 1) * d].to_vec();
            for &z in &self.raters[i] {
                add_scaled(&mut rhs, self.relaxed.row(z), xs[z][i]);
            }
            q.row_mut(i).copy_from_slice(&self.systems[i].solve(&rhs));
        }
        Ok(q)
    }

    /// Gradient of the score behind `weights` with respect to `x_z`.
    pub fn gradient_from_weights(&self, weights: &PredictionWeights, z: usize) -> Vec<f64> {
        let d = self.dim;
        (0..self.num_items)
            .map(|i| {
                let Some(s) = self.slot(i, z) else { return 0.0 };
                let (wd, wa) = (weights.d[i], weights.a[i]);
                if wd == 0.0 && wa == 0.0 {
                    return 0.0;
                }
                let dq = &self.dq[i][s * d..(s + 1) * d];
                let pd = &self.sum_p_d[i * d..(i + 1) * d];
                let pa = &self.sum_p_a[i * d..(i + 1) * d];
                wd * dot(pd, dq) + wa * dot(pa, dq)
            })
            .collect()
    }
}

/// `∂M/∂r̂_ui` for the observed original entries. The derivative only
/// depends on the item and the rater's group, so it is stored per item:
/// `d[i]` for every `u ∈ D_i`, `a[i]` for every `u ∈ A_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionWeights {
    pub d: Vec<f64>,
    pub a: Vec<f64>,
}

pub fn prediction_weights(
    kind: MetricKind,
    stats: &GroupItemStats,
    norm: ItemNormalization,
) -> Result<PredictionWeights> {
    // surfaces the same "undefined" errors as the score itself
    score_from_stats(kind, stats, norm)?;
    let n = stats.num_items();
    let mut w = PredictionWeights {
        d: vec![0.0; n],
        a: vec![0.0; n],
    };
    if kind == MetricKind::NonParity {
        let s = sign(stats.mean_pred_over_d - stats.mean_pred_over_a);
        let (c5, c6) = (stats.c5 as f64, stats.c6 as f64);
        for i in 0..n {
            if stats.defined_d(i) {
                w.d[i] = s / c5;
            }
            if stats.defined_a(i) {
                w.a[i] = -s / c6;
            }
        }
        return Ok(w);
    }
    let divisor = stats.item_divisor(kind, norm)? as f64;
    for i in (0..n).filter(|&i| stats.is_valid(i)) {
        let (ed, ea) = (stats.error_d(i), stats.error_a(i));
        // derivative of the item term with respect to the two group mean predictions
        let (gd, ga) = match kind {
            MetricKind::Value => {
                let s = sign(ed - ea);
                (s, -s)
            }
            MetricKind::Absolute => {
                let s = sign(ed.abs() - ea.abs());
                (s * sign(ed), -s * sign(ea))
            }
            MetricKind::Overestimation => {
                let s = sign(ed.max(0.0) - ea.max(0.0));
                (s * step(ed), -s * step(ea))
            }
            MetricKind::NonParity => unreachable!(),
        };
        w.d[i] = gd / (divisor * stats.count_d[i] as f64);
        w.a[i] = ga / (divisor * stats.count_a[i] as f64);
    }
    Ok(w)
}

/// `∇_{x_z}` of the score, evaluated at the item vectors held by `model`.
pub fn unfairness_gradient(
    kind: MetricKind,
    ctx: &InfluenceContext,
    model: &FactorModel,
    ds: &RatingDataset,
    z: usize,
) -> Result<Vec<f64>> {
    unfairness_gradient_with(kind, ctx, model, ds, z, ItemNormalization::default())
}

pub fn unfairness_gradient_with(
    kind: MetricKind,
    ctx: &InfluenceContext,
    model: &FactorModel,
    ds: &RatingDataset,
    z: usize,
    norm: ItemNormalization,
) -> Result<Vec<f64>> {
    if z >= ctx.num_relaxed() {
        return Err(Error::Validation(format!(
            "relaxed rater {z} does not exist ({} installed)",
            ctx.num_relaxed()
        )));
    }
    let stats = group_item_stats(model, ds)?;
    let w = prediction_weights(kind, &stats, norm)?;
    Ok(ctx.gradient_from_weights(&w, z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Rating, RatingScale};
    use crate::factorization::{solve_item_vector, RelaxedRater};

    fn scalar_model(p: &[f64], items: usize) -> FactorModel {
        FactorModel {
            dim: 1,
            lambda: 1.0,
            users: Matrix::from_vec(p.len(), 1, p.to_vec()),
            items: Matrix::from_vec(items, 1, vec![0.5; items]),
            antidotes: Matrix::zeros(0, 1),
        }
    }

    fn dataset(users: usize, items: usize, entries: &[(usize, usize, i32)], groups: Vec<UserGroup>) -> RatingDataset {
        let entries = entries
            .iter()
            .map(|&(user, item, value)| Rating { user, item, value })
            .collect();
        RatingDataset::new(users, items, entries, groups, RatingScale::five_star()).unwrap()
    }

    #[test]
    fn dq_scalar_cases() {
        let ds = dataset(
            2,
            2,
            &[(0, 1, 3), (1, 1, 4)],
            vec![UserGroup::Disadvantaged, UserGroup::Advantaged],
        );
        let model = scalar_model(&[1.0, 0.0], 2);
        let mut ctx = InfluenceContext::new(&model, &ds).unwrap();
        ctx.refresh(&[0.0]).unwrap();
        assert_eq!(ctx.dq_dx(0, 0), vec![0.0]);
        ctx.refresh(&[1.0]).unwrap();
        // no raters: 1 / (1 + 1)
        assert!((ctx.dq_dx(0, 0)[0] - 0.5).abs() < 1e-15);
        // one rater with p = 1 (the other has p = 0): 1 / (1 + 1 + 1)
        assert!((ctx.dq_dx(1, 0)[0] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn drhat_is_single_coordinate_product() {
        let ds = dataset(
            2,
            3,
            &[(0, 1, 3), (1, 2, 4)],
            vec![UserGroup::Disadvantaged, UserGroup::Advantaged],
        );
        let model = scalar_model(&[2.0, 0.0], 3);
        let mut ctx = InfluenceContext::new(&model, &ds).unwrap();
        ctx.refresh(&[1.0]).unwrap();
        let g = ctx.drhat_dx(0, 0, 0);
        assert_eq!(g.index, 0);
        assert!((g.value - 1.0).abs() < 1e-15);
        assert_eq!(g.to_dense().iter().filter(|v| **v != 0.0).count(), 1);
        assert_eq!(ctx.drhat_dx(1, 2, 0).value, 0.0);
    }

    #[test]
    fn zero_user_factors_give_zero_gradient() {
        let ds = dataset(
            2,
            2,
            &[(0, 0, 3), (1, 0, 4), (0, 1, 1), (1, 1, 5)],
            vec![UserGroup::Disadvantaged, UserGroup::Advantaged],
        );
        let model = scalar_model(&[0.0, 0.0], 2);
        let mut ctx = InfluenceContext::new(&model, &ds).unwrap();
        ctx.refresh(&[0.7]).unwrap();
        for kind in MetricKind::ALL {
            let g = unfairness_gradient(kind, &ctx, &model, &ds, 0).unwrap();
            assert!(g.iter().all(|v| *v == 0.0), "{kind}: {g:?}");
        }
    }

    #[test]
    fn overestimation_gradient_vanishes_when_both_groups_underestimate() {
        let ds = dataset(
            2,
            2,
            &[(0, 0, 5), (1, 0, 4), (0, 1, 5), (1, 1, 5)],
            vec![UserGroup::Disadvantaged, UserGroup::Advantaged],
        );
        // predictions 1·0.5 and 2·0.5 sit far below every rating
        let model = scalar_model(&[1.0, 2.0], 2);
        let mut ctx = InfluenceContext::new(&model, &ds).unwrap();
        ctx.refresh(&[1.0]).unwrap();
        let g = unfairness_gradient(MetricKind::Overestimation, &ctx, &model, &ds, 0).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
        let g = unfairness_gradient(MetricKind::Value, &ctx, &model, &ds, 0).unwrap();
        assert!(g.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn dq_matches_item_solve_derivative_under_scaling() {
        let ds = dataset(
            3,
            2,
            &[(0, 0, 2), (1, 0, 4), (2, 1, 1)],
            vec![UserGroup::Disadvantaged, UserGroup::Advantaged, UserGroup::Advantaged],
        );
        let model = FactorModel {
            dim: 2,
            lambda: 0.3,
            users: Matrix::from_rows(2, &[vec![0.4, -0.2], vec![0.1, 0.9], vec![-0.5, 0.3]]),
            items: Matrix::zeros(2, 2),
            antidotes: Matrix::zeros(0, 2),
        };
        let mut ctx = InfluenceContext::new(&model, &ds).unwrap();
        for c in [0.5, 1.0, 3.0] {
            let k = [0.6 * c, -0.8 * c];
            ctx.refresh(&k).unwrap();
            let h = 1e-6;
            for item in 0..2 {
                let at = |v: f64| {
                    let x = [v, v];
                    solve_item_vector(&ds, &model, item, Some(RelaxedRater { latent: &k, ratings: &x }))
                };
                let (hi, lo) = (at(1.0 + h), at(1.0 - h));
                let dq = ctx.dq_dx(item, 0);
                for a in 0..2 {
                    let fd = (hi[a] - lo[a]) / (2.0 * h);
                    assert!((fd - dq[a]).abs() < 1e-8, "c={c} item={item}: {fd} vs {}", dq[a]);
                }
            }
        }
    }

    #[test]
    fn restricted_raters_leave_other_items_alone() {
        let ds = dataset(
            2,
            3,
            &[(0, 0, 2), (1, 0, 4), (0, 1, 1), (1, 2, 5)],
            vec![UserGroup::Disadvantaged, UserGroup::Advantaged],
        );
        let model = scalar_model(&[1.0, 0.5], 3);
        let mut ctx = InfluenceContext::new(&model, &ds).unwrap();
        let latents = Matrix::from_rows(1, &[vec![1.0], vec![2.0]]);
        ctx.refresh_many(&latents, Some(&[vec![0], vec![0, 2]])).unwrap();
        assert_eq!(ctx.dq_dx(1, 0), vec![0.0]);
        assert_eq!(ctx.dq_dx(2, 0), vec![0.0]);
        assert!(ctx.dq_dx(2, 1)[0] > 0.0);
        // item 0 sees both relaxed raters: 1 / (1 + 0.25 + 1 + 4 + 1)
        assert!((ctx.dq_dx(0, 0)[0] - 1.0 / 7.25).abs() < 1e-15);
        let g = unfairness_gradient(MetricKind::NonParity, &ctx, &model, &ds, 0).unwrap();
        assert_eq!(g[1], 0.0);
        assert_eq!(g[2], 0.0);
    }

    #[test]
    fn sign_of_zero_is_zero() {
        assert_eq!(sign(0.0), 0.0);
        assert_eq!(sign(-0.0), 0.0);
        assert_eq!(sign(-2.0), -1.0);
    }
}
