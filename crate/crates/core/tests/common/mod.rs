//! Independent reference implementations shared by the integration tests.
//!
//! Nothing here goes through `metrics::GroupItemStats` or the influence
//! caches: scores are recomputed from the raw rating triples, and gradients
//! by central differences of per-item ridge re-solves.

#![allow(dead_code)]

use antidote_core::data::{Rating, RatingDataset, RatingScale, UserGroup};
use antidote_core::factorization::{solve_item_vector, FactorModel, RelaxedRater};
use antidote_core::linalg::Matrix;
use antidote_core::metrics::MetricKind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn pred(model: &FactorModel, u: usize, i: usize) -> f64 {
    let p = model.user_vector(u);
    let q = model.item_vector(i);
    let mut s = 0.0;
    for a in 0..p.len() {
        s += p[a] * q[a];
    }
    s
}

/// Per-item signed group errors, or `None` for an item missing a group.
pub fn brute_item_errors(ds: &RatingDataset, model: &FactorModel) -> Vec<Option<(f64, f64)>> {
    let n = ds.num_original_users();
    (0..ds.num_items())
        .map(|i| {
            let (mut sd, mut nd, mut sa, mut na) = (0.0, 0usize, 0.0, 0usize);
            for e in ds.entries().iter().filter(|e| e.item == i && e.user < n) {
                let err = pred(model, e.user, i) - e.value as f64;
                match ds.group(e.user) {
                    UserGroup::Disadvantaged => {
                        sd += err;
                        nd += 1;
                    }
                    UserGroup::Advantaged => {
                        sa += err;
                        na += 1;
                    }
                    UserGroup::Unassigned => {}
                }
            }
            (nd > 0 && na > 0).then(|| (sd / nd as f64, sa / na as f64))
        })
        .collect()
}

pub fn brute_parity_means(ds: &RatingDataset, model: &FactorModel) -> (f64, f64) {
    let n = ds.num_original_users();
    let (mut sd, mut nd, mut sa, mut na) = (0.0, 0usize, 0.0, 0usize);
    for e in ds.entries().iter().filter(|e| e.user < n) {
        let p = pred(model, e.user, e.item);
        match ds.group(e.user) {
            UserGroup::Disadvantaged => {
                sd += p;
                nd += 1;
            }
            UserGroup::Advantaged => {
                sa += p;
                na += 1;
            }
            UserGroup::Unassigned => {}
        }
    }
    (sd / nd as f64, sa / na as f64)
}

/// All four scores in `MetricKind::ALL` order, skipping one-sided items.
pub fn brute_scores(ds: &RatingDataset, model: &FactorModel) -> [f64; 4] {
    let errs: Vec<(f64, f64)> = brute_item_errors(ds, model).into_iter().flatten().collect();
    let m = errs.len() as f64;
    let mut val = 0.0;
    let mut abs = 0.0;
    let mut over = 0.0;
    for &(ed, ea) in &errs {
        val += (ed - ea).abs();
        abs += (ed.abs() - ea.abs()).abs();
        let od = if ed > 0.0 { ed } else { 0.0 };
        let oa = if ea > 0.0 { ea } else { 0.0 };
        over += (od - oa).abs();
    }
    let (pd, pa) = brute_parity_means(ds, model);
    [val / m, abs / m, over / m, (pd - pa).abs()]
}

pub fn brute_score(kind: MetricKind, ds: &RatingDataset, model: &FactorModel) -> f64 {
    brute_scores(ds, model)[kind.index()]
}

/// Smallest magnitude among the arguments of `sign` and `max(0, ·)` that
/// the given score passes through at this point.
pub fn kink_distance(kind: MetricKind, ds: &RatingDataset, model: &FactorModel) -> f64 {
    let mut dist = f64::INFINITY;
    if kind == MetricKind::NonParity {
        let (pd, pa) = brute_parity_means(ds, model);
        return (pd - pa).abs();
    }
    for (ed, ea) in brute_item_errors(ds, model).into_iter().flatten() {
        let d = match kind {
            MetricKind::Value => (ed - ea).abs(),
            MetricKind::Absolute => ed.abs().min(ea.abs()).min((ed.abs() - ea.abs()).abs()),
            MetricKind::Overestimation => {
                let mut d = ed.abs().min(ea.abs());
                if ed > 0.0 || ea > 0.0 {
                    d = d.min((ed.max(0.0) - ea.max(0.0)).abs());
                }
                d
            }
            MetricKind::NonParity => unreachable!(),
        };
        dist = dist.min(d);
    }
    dist
}

/// Model whose item vectors are re-solved with a relaxed rater `(k, x)`.
pub fn oracle_model(ds: &RatingDataset, model: &FactorModel, k: &[f64], x: &[f64]) -> FactorModel {
    let rows: Vec<Vec<f64>> = (0..ds.num_items())
        .map(|i| solve_item_vector(ds, model, i, Some(RelaxedRater { latent: k, ratings: x })))
        .collect();
    let mut out = model.clone();
    out.items = Matrix::from_rows(model.dim, &rows);
    out
}

/// Central differences of the score under the frozen-P oracle.
pub fn fd_gradient(kind: MetricKind, ds: &RatingDataset, model: &FactorModel, k: &[f64], x: &[f64], h: f64) -> Vec<f64> {
    let base = oracle_model(ds, model, k, x);
    (0..x.len())
        .map(|i| {
            let at = |v: f64| {
                let mut xs = x.to_vec();
                xs[i] = v;
                let mut m = base.clone();
                let q = solve_item_vector(ds, model, i, Some(RelaxedRater { latent: k, ratings: &xs }));
                m.items.row_mut(i).copy_from_slice(&q);
                brute_score(kind, ds, &m)
            };
            (at(x[i] + h) - at(x[i] - h)) / (2.0 * h)
        })
        .collect()
}

pub struct Instance {
    pub ds: RatingDataset,
    pub model: FactorModel,
}

/// Random dataset on the scale -2..2 with both groups present and random
/// latent factors, so predictions fall on both sides of the ratings.
/// Items may lack one group; users may have no ratings.
pub fn random_instance(seed: u64, users: usize, items: usize, dim: usize, density: f64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = RatingScale::range(-2, 2).unwrap();
    let mut groups: Vec<UserGroup> = (0..users)
        .map(|_| {
            if rng.random_bool(0.5) {
                UserGroup::Disadvantaged
            } else {
                UserGroup::Advantaged
            }
        })
        .collect();
    groups[0] = UserGroup::Disadvantaged;
    groups[1] = UserGroup::Advantaged;
    let mut entries = Vec::new();
    for u in 0..users {
        for i in 0..items {
            if rng.random_bool(density) || (u < 2 && i == 0) {
                entries.push(Rating {
                    user: u,
                    item: i,
                    value: rng.random_range(-2..=2),
                });
            }
        }
    }
    let ds = RatingDataset::new(users, items, entries, groups, scale).unwrap();
    let mut normal = |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let model = FactorModel {
        dim,
        lambda: 0.1 + 0.9 * (seed % 7) as f64 / 7.0,
        users: Matrix::from_vec(users, dim, normal(users * dim)),
        items: Matrix::from_vec(items, dim, normal(items * dim)),
        antidotes: Matrix::zeros(0, dim),
    };
    Instance { ds, model }
}

pub fn random_vector(seed: u64, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Max-norm relative error, with an absolute floor for a zero reference.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
