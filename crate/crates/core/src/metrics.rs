//! Group unfairness scores of a trained factorization.
//!
//! All four scores compare the disadvantaged group `D` with the advantaged
//! group `A`. Per-item means run over the observed raters of the item in
//! each group (`D_i`, `A_i`); antidote users never enter a mean.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{RatingDataset, UserGroup};
use crate::error::{Error, Result};
use crate::factorization::FactorModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    Value,
    Absolute,
    Overestimation,
    NonParity,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [
        MetricKind::Value,
        MetricKind::Absolute,
        MetricKind::Overestimation,
        MetricKind::NonParity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Value => "value",
            MetricKind::Absolute => "absolute",
            MetricKind::Overestimation => "overestimation",
            MetricKind::NonParity => "non-parity",
        }
    }

    /// Value, absolute and overestimation average a per-item term;
    /// non-parity compares global means.
    pub fn is_per_item(self) -> bool {
        !matches!(self, MetricKind::NonParity)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "value" | "val" => Ok(MetricKind::Value),
            "absolute" | "abs" => Ok(MetricKind::Absolute),
            "overestimation" | "over" => Ok(MetricKind::Overestimation),
            "non-parity" | "nonparity" | "parity" | "par" => Ok(MetricKind::NonParity),
            other => Err(Error::Validation(format!("unknown metric {other:?}"))),
        }
    }
}

/// How per-item scores treat items that lack raters from one group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ItemNormalization {
    /// Skip such items and average over the remaining ones.
    #[default]
    SkipUndefined,
    /// Count such items as zero and divide by the total item count.
    AllItems,
}

/// Per-item and global group means shared by the scores and their gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupItemStats {
    pub mean_pred_d: Vec<f64>,
    pub mean_pred_a: Vec<f64>,
    pub mean_true_d: Vec<f64>,
    pub mean_true_a: Vec<f64>,
    /// `|D_i|` and `|A_i|`; an item's group mean is defined when its count is positive.
    pub count_d: Vec<usize>,
    pub count_a: Vec<usize>,
    pub mean_pred_over_d: f64,
    pub mean_pred_over_a: f64,
    /// Number of ratings given by disadvantaged / advantaged users.
    pub c5: usize,
    pub c6: usize,
}

impl GroupItemStats {
    pub fn num_items(&self) -> usize {
        self.count_d.len()
    }

    pub fn defined_d(&self, i: usize) -> bool {
        self.count_d[i] > 0
    }

    pub fn defined_a(&self, i: usize) -> bool {
        self.count_a[i] > 0
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.defined_d(i) && self.defined_a(i)
    }

    pub fn valid_items(&self) -> usize {
        (0..self.num_items()).filter(|&i| self.is_valid(i)).count()
    }

    /// Signed prediction error of the disadvantaged raters of item `i`.
    pub fn error_d(&self, i: usize) -> f64 {
        self.mean_pred_d[i] - self.mean_true_d[i]
    }

    pub fn error_a(&self, i: usize) -> f64 {
        self.mean_pred_a[i] - self.mean_true_a[i]
    }

    /// Divisor for per-item scores under the given normalization.
    pub fn item_divisor(&self, kind: MetricKind, norm: ItemNormalization) -> Result<usize> {
        let valid = self.valid_items();
        if valid == 0 {
            return Err(Error::Validation(format!(
                "{kind} unfairness is undefined: no item is rated by both groups"
            )));
        }
        Ok(match norm {
            ItemNormalization::SkipUndefined => valid,
            ItemNormalization::AllItems => self.num_items(),
        })
    }
}

/// Per-item unfairness term from the two groups' signed errors.
pub fn item_term(kind: MetricKind, err_d: f64, err_a: f64) -> f64 {
    match kind {
        MetricKind::Value => (err_d - err_a).abs(),
        MetricKind::Absolute => (err_d.abs() - err_a.abs()).abs(),
        MetricKind::Overestimation => (err_d.max(0.0) - err_a.max(0.0)).abs(),
        MetricKind::NonParity => panic!("non-parity has no per-item term"),
    }
}

fn check_groups(ds: &RatingDataset) -> Result<()> {
    let d = ds.count_group(UserGroup::Disadvantaged);
    let a = ds.count_group(UserGroup::Advantaged);
    if d == 0 || a == 0 {
        return Err(Error::Validation(format!(
            "unfairness needs both groups, found {d} disadvantaged and {a} advantaged users"
        )));
    }
    Ok(())
}

pub fn group_item_stats(model: &FactorModel, ds: &RatingDataset) -> Result<GroupItemStats> {
    check_groups(ds)?;
    let n_items = ds.num_items();
    let n_orig = ds.num_original_users();
    let mut s = GroupItemStats {
        mean_pred_d: vec![0.0; n_items],
        mean_pred_a: vec![0.0; n_items],
        mean_true_d: vec![0.0; n_items],
        mean_true_a: vec![0.0; n_items],
        count_d: vec![0; n_items],
        count_a: vec![0; n_items],
        mean_pred_over_d: 0.0,
        mean_pred_over_a: 0.0,
        c5: 0,
        c6: 0,
    };
    let mut total_d = 0.0;
    let mut total_a = 0.0;
    for i in 0..n_items {
        let q = model.item_vector(i);
        let (mut pd, mut pa, mut td, mut ta) = (0.0, 0.0, 0.0, 0.0);
        for &(u, r) in ds.item_ratings(i) {
            if u >= n_orig {
                continue;
            }
            let pred = crate::linalg::dot(model.user_vector(u), q);
            match ds.group(u) {
                UserGroup::Disadvantaged => {
                    pd += pred;
                    td += r;
                    s.count_d[i] += 1;
                }
                UserGroup::Advantaged => {
                    pa += pred;
                    ta += r;
                    s.count_a[i] += 1;
                }
                UserGroup::Unassigned => {}
            }
        }
        total_d += pd;
        total_a += pa;
        if s.count_d[i] > 0 {
            let n = s.count_d[i] as f64;
            s.mean_pred_d[i] = pd / n;
            s.mean_true_d[i] = td / n;
        }
        if s.count_a[i] > 0 {
            let n = s.count_a[i] as f64;
            s.mean_pred_a[i] = pa / n;
            s.mean_true_a[i] = ta / n;
        }
    }
    s.c5 = s.count_d.iter().sum();
    s.c6 = s.count_a.iter().sum();
    if s.c5 > 0 {
        s.mean_pred_over_d = total_d / s.c5 as f64;
    }
    if s.c6 > 0 {
        s.mean_pred_over_a = total_a / s.c6 as f64;
    }
    Ok(s)
}

/// Score of one metric from precomputed group statistics.
pub fn score_from_stats(kind: MetricKind, stats: &GroupItemStats, norm: ItemNormalization) -> Result<f64> {
    if kind == MetricKind::NonParity {
        if stats.c5 == 0 || stats.c6 == 0 {
            return Err(Error::Validation(
                "non-parity unfairness is undefined: a group has no ratings".into(),
            ));
        }
        return Ok((stats.mean_pred_over_d - stats.mean_pred_over_a).abs());
    }
    let divisor = stats.item_divisor(kind, norm)?;
    let total: f64 = (0..stats.num_items())
        .filter(|&i| stats.is_valid(i))
        .map(|i| item_term(kind, stats.error_d(i), stats.error_a(i)))
        .sum();
    Ok(total / divisor as f64)
}

pub fn unfairness_with(
    kind: MetricKind,
    model: &FactorModel,
    ds: &RatingDataset,
    norm: ItemNormalization,
) -> Result<f64> {
    let stats = group_item_stats(model, ds)?;
    score_from_stats(kind, &stats, norm)
}

/// Unfairness score with the default item normalization.
pub fn unfairness(kind: MetricKind, model: &FactorModel, ds: &RatingDataset) -> Result<f64> {
    unfairness_with(kind, model, ds, ItemNormalization::default())
}

/// All four scores, in [`MetricKind::ALL`] order.
pub fn all_scores(model: &FactorModel, ds: &RatingDataset, norm: ItemNormalization) -> Result<[f64; 4]> {
    let stats = group_item_stats(model, ds)?;
    let mut out = [0.0; 4];
    for kind in MetricKind::ALL {
        out[kind.index()] = score_from_stats(kind, &stats, norm)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: MetricKind,
    pub score: f64,
    pub valid_items: usize,
    pub skipped_items: usize,
}

pub fn evaluate(
    kind: MetricKind,
    model: &FactorModel,
    ds: &RatingDataset,
    norm: ItemNormalization,
) -> Result<MetricReport> {
    let stats = group_item_stats(model, ds)?;
    let score = score_from_stats(kind, &stats, norm)?;
    let valid = stats.valid_items();
    if kind.is_per_item() && valid < stats.num_items() {
        log::info!(
            "{kind}: {} of {} items lack raters from one group and were skipped",
            stats.num_items() - valid,
            stats.num_items()
        );
    }
    Ok(MetricReport {
        metric: kind,
        score,
        valid_items: valid,
        skipped_items: stats.num_items() - valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Rating, RatingScale};
    use crate::linalg::Matrix;

    /// D = {u0: r̂=2, r=1}, A = {u1: r̂=4, r=5}, one item, d=1.
    fn hand_instance() -> (FactorModel, RatingDataset) {
        let ds = RatingDataset::new(
            2,
            1,
            vec![
                Rating { user: 0, item: 0, value: 1 },
                Rating { user: 1, item: 0, value: 5 },
            ],
            vec![UserGroup::Disadvantaged, UserGroup::Advantaged],
            RatingScale::five_star(),
        )
        .unwrap();
        let model = FactorModel {
            dim: 1,
            lambda: 0.1,
            users: Matrix::from_vec(2, 1, vec![2.0, 4.0]),
            items: Matrix::from_vec(1, 1, vec![1.0]),
            antidotes: Matrix::zeros(0, 1),
        };
        (model, ds)
    }

    #[test]
    fn hand_instance_stats() {
        let (m, ds) = hand_instance();
        let s = group_item_stats(&m, &ds).unwrap();
        assert_eq!(
            (s.mean_pred_d[0], s.mean_pred_a[0], s.mean_true_d[0], s.mean_true_a[0]),
            (2.0, 4.0, 1.0, 5.0)
        );
        assert_eq!((s.c5, s.c6), (1, 1));
    }

    #[test]
    fn hand_instance_scores() {
        let (m, ds) = hand_instance();
        assert_eq!(unfairness(MetricKind::Value, &m, &ds).unwrap(), 2.0);
        assert_eq!(unfairness(MetricKind::Absolute, &m, &ds).unwrap(), 0.0);
        assert_eq!(unfairness(MetricKind::Overestimation, &m, &ds).unwrap(), 1.0);
        assert_eq!(unfairness(MetricKind::NonParity, &m, &ds).unwrap(), 2.0);
    }

    #[test]
    fn one_sided_item_is_skipped() {
        // item 1 is rated only by the advantaged user
        let ds = RatingDataset::new(
            2,
            2,
            vec![
                Rating { user: 0, item: 0, value: 1 },
                Rating { user: 1, item: 0, value: 5 },
                Rating { user: 1, item: 1, value: 1 },
            ],
            vec![UserGroup::Disadvantaged, UserGroup::Advantaged],
            RatingScale::five_star(),
        )
        .unwrap();
        let m = FactorModel {
            dim: 1,
            lambda: 0.1,
            users: Matrix::from_vec(2, 1, vec![2.0, 4.0]),
            items: Matrix::from_vec(2, 1, vec![1.0, 1.0]),
            antidotes: Matrix::zeros(0, 1),
        };
        let s = group_item_stats(&m, &ds).unwrap();
        assert!(!s.defined_d(1));
        assert!(s.defined_a(1));
        let r = evaluate(MetricKind::Value, &m, &ds, ItemNormalization::SkipUndefined).unwrap();
        assert_eq!((r.score, r.valid_items, r.skipped_items), (2.0, 1, 1));
        let all = unfairness_with(MetricKind::Value, &m, &ds, ItemNormalization::AllItems).unwrap();
        assert_eq!(all, 1.0);
    }

    #[test]
    fn missing_group_is_an_error() {
        let (m, ds) = hand_instance();
        let ds = ds.with_groups(vec![UserGroup::Disadvantaged; 2]).unwrap();
        assert!(unfairness(MetricKind::Value, &m, &ds).is_err());
    }

    #[test]
    fn parses_names() {
        for k in MetricKind::ALL {
            assert_eq!(k.name().parse::<MetricKind>().unwrap(), k);
        }
        assert!("fairness".parse::<MetricKind>().is_err());
        assert_eq!(serde_json::to_string(&MetricKind::NonParity).unwrap(), "\"non-parity\"");
    }

    #[test]
    fn report_serializes_expected_keys() {
        let (m, ds) = hand_instance();
        let r = evaluate(MetricKind::Overestimation, &m, &ds, ItemNormalization::default()).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["metric"], "overestimation");
        assert_eq!(v["score"], 1.0);
        assert_eq!(v["valid_items"], 1);
        assert_eq!(v["skipped_items"], 0);
    }
}
