//! Rating datasets: the sparse rating matrix with user group labels, CSV
//! ingestion, the synthetic block-model generator and antidote injection.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::antidote::AntidoteUser;
use crate::error::{Error, Result};

/// The integer rating scale and the values a rating may take.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ScaleRepr", into = "ScaleRepr")]
pub struct RatingScale {
    r_min: i32,
    r_max: i32,
    allowed: Vec<i32>,
}

#[derive(Serialize, Deserialize)]
struct ScaleRepr {
    r_min: i32,
    r_max: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    allowed: Option<Vec<i32>>,
}

impl TryFrom<ScaleRepr> for RatingScale {
    type Error = Error;

    fn try_from(r: ScaleRepr) -> Result<Self> {
        match r.allowed {
            Some(allowed) => RatingScale::new(r.r_min, r.r_max, allowed),
            None => RatingScale::range(r.r_min, r.r_max),
        }
    }
}

impl From<RatingScale> for ScaleRepr {
    fn from(s: RatingScale) -> Self {
        ScaleRepr {
            r_min: s.r_min,
            r_max: s.r_max,
            allowed: Some(s.allowed),
        }
    }
}

impl RatingScale {
    pub fn new(r_min: i32, r_max: i32, mut allowed: Vec<i32>) -> Result<Self> {
        if r_min >= r_max {
            return Err(Error::Validation(format!(
                "rating scale needs r_min < r_max, got {r_min}..{r_max}"
            )));
        }
        allowed.sort_unstable();
        allowed.dedup();
        if allowed.is_empty() {
            return Err(Error::Validation("rating scale has no allowed values".into()));
        }
        if allowed[0] < r_min || allowed[allowed.len() - 1] > r_max {
            return Err(Error::Validation(format!(
                "allowed ratings {allowed:?} fall outside {r_min}..{r_max}"
            )));
        }
        Ok(RatingScale {
            r_min,
            r_max,
            allowed,
        })
    }

    /// Every integer from `r_min` to `r_max` inclusive.
    pub fn range(r_min: i32, r_max: i32) -> Result<Self> {
        if r_min >= r_max {
            return Err(Error::Validation(format!(
                "rating scale needs r_min < r_max, got {r_min}..{r_max}"
            )));
        }
        RatingScale::new(r_min, r_max, (r_min..=r_max).collect())
    }

    /// Like/dislike scale {-1, 1} used by the synthetic generator.
    pub fn binary() -> Self {
        RatingScale {
            r_min: -1,
            r_max: 1,
            allowed: vec![-1, 1],
        }
    }

    pub fn five_star() -> Self {
        RatingScale {
            r_min: 1,
            r_max: 5,
            allowed: vec![1, 2, 3, 4, 5],
        }
    }

    pub fn r_min(&self) -> i32 {
        self.r_min
    }

    pub fn r_max(&self) -> i32 {
        self.r_max
    }

    pub fn allowed(&self) -> &[i32] {
        &self.allowed
    }

    pub fn contains(&self, v: i32) -> bool {
        self.allowed.binary_search(&v).is_ok()
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.r_min as f64 + self.r_max as f64)
    }

    pub fn width(&self) -> f64 {
        (self.r_max - self.r_min) as f64
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.r_min as f64, self.r_max as f64)
    }

    /// Nearest allowed value; exact midpoints between two allowed values
    /// go to the larger one.
    pub fn nearest(&self, x: f64) -> i32 {
        let mut best = self.allowed[0];
        let mut best_dist = (x - best as f64).abs();
        for &v in &self.allowed[1..] {
            let dist = (x - v as f64).abs();
            // allowed is ascending, so `<=` resolves ties upward
            if dist <= best_dist {
                best = v;
                best_dist = dist;
            }
        }
        best
    }
}

/// Which side of the fairness comparison a user belongs to.
///
/// `Unassigned` is used for antidote users and for original users whose
/// label has not been loaded yet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UserGroup {
    Disadvantaged,
    Advantaged,
    Unassigned,
}

impl UserGroup {
    pub fn swapped(self) -> Self {
        match self {
            UserGroup::Disadvantaged => UserGroup::Advantaged,
            UserGroup::Advantaged => UserGroup::Disadvantaged,
            UserGroup::Unassigned => UserGroup::Unassigned,
        }
    }
}

/// One observed rating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rating {
    pub user: usize,
    pub item: usize,
    pub value: i32,
}

/// Sparse user-item ratings with group labels.
///
/// Users `0..num_original_users()` are the real population; any users
/// after that are injected antidote rows (group `Unassigned`).
#[derive(Debug, Clone, PartialEq)]
pub struct RatingDataset {
    num_items: usize,
    num_original_users: usize,
    entries: Vec<Rating>,
    groups: Vec<UserGroup>,
    scale: RatingScale,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    item_groups: Option<Vec<String>>,
    by_user: Vec<Vec<(usize, f64)>>,
    by_item: Vec<Vec<(usize, f64)>>,
}

impl RatingDataset {
    /// Builds a dataset of original users, validating every entry.
    pub fn new(
        num_users: usize,
        num_items: usize,
        entries: Vec<Rating>,
        groups: Vec<UserGroup>,
        scale: RatingScale,
    ) -> Result<Self> {
        let user_ids = (0..num_users).map(|u| format!("u{u}")).collect();
        let item_ids = (0..num_items).map(|i| format!("i{i}")).collect();
        Self::with_ids(user_ids, item_ids, entries, groups, scale)
    }

    pub fn with_ids(
        user_ids: Vec<String>,
        item_ids: Vec<String>,
        entries: Vec<Rating>,
        groups: Vec<UserGroup>,
        scale: RatingScale,
    ) -> Result<Self> {
        let num_users = user_ids.len();
        if groups.len() != num_users {
            return Err(Error::Validation(format!(
                "{} group labels for {} users",
                groups.len(),
                num_users
            )));
        }
        Self::build(num_users, user_ids, item_ids, entries, groups, scale, None)
    }

    fn build(
        num_original_users: usize,
        user_ids: Vec<String>,
        item_ids: Vec<String>,
        entries: Vec<Rating>,
        groups: Vec<UserGroup>,
        scale: RatingScale,
        item_groups: Option<Vec<String>>,
    ) -> Result<Self> {
        let num_users = user_ids.len();
        let num_items = item_ids.len();
        let mut by_user: Vec<Vec<(usize, f64)>> = vec![Vec::new(); num_users];
        let mut by_item: Vec<Vec<(usize, f64)>> = vec![Vec::new(); num_items];
        for e in &entries {
            if e.user >= num_users || e.item >= num_items {
                return Err(Error::Validation(format!(
                    "rating ({}, {}) out of range for {}x{} matrix",
                    e.user, e.item, num_users, num_items
                )));
            }
            if !scale.contains(e.value) {
                return Err(Error::Validation(format!(
                    "rating {} for ({}, {}) is not in the scale {:?}",
                    e.value,
                    user_ids[e.user],
                    item_ids[e.item],
                    scale.allowed()
                )));
            }
            by_user[e.user].push((e.item, e.value as f64));
            by_item[e.item].push((e.user, e.value as f64));
        }
        for (u, row) in by_user.iter_mut().enumerate() {
            row.sort_by_key(|&(i, _)| i);
            if let Some(w) = row.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::Validation(format!(
                    "duplicate rating for user {} item {}",
                    user_ids[u], item_ids[w[0].0]
                )));
            }
        }
        for col in by_item.iter_mut() {
            col.sort_by_key(|&(u, _)| u);
        }
        Ok(RatingDataset {
            num_items,
            num_original_users,
            entries,
            groups,
            scale,
            user_ids,
            item_ids,
            item_groups,
            by_user,
            by_item,
        })
    }

    pub fn empty(scale: RatingScale) -> Self {
        RatingDataset {
            num_items: 0,
            num_original_users: 0,
            entries: Vec::new(),
            groups: Vec::new(),
            scale,
            user_ids: Vec::new(),
            item_ids: Vec::new(),
            item_groups: None,
            by_user: Vec::new(),
            by_item: Vec::new(),
        }
    }

    /// Total users, original plus antidote.
    pub fn num_users(&self) -> usize {
        self.groups.len()
    }

    pub fn num_original_users(&self) -> usize {
        self.num_original_users
    }

    pub fn num_antidote_users(&self) -> usize {
        self.num_users() - self.num_original_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_entries(&self) -> usize {
        self.entries.len()
    }

    pub fn is_antidote(&self, user: usize) -> bool {
        user >= self.num_original_users
    }

    pub fn entries(&self) -> &[Rating] {
        &self.entries
    }

    /// Ratings given by original users only.
    pub fn original_entries(&self) -> Vec<Rating> {
        self.entries
            .iter()
            .copied()
            .filter(|e| e.user < self.num_original_users)
            .collect()
    }

    /// `(item, rating)` pairs for a user, sorted by item.
    pub fn user_ratings(&self, user: usize) -> &[(usize, f64)] {
        &self.by_user[user]
    }

    /// `(user, rating)` pairs for an item, sorted by user.
    pub fn item_ratings(&self, item: usize) -> &[(usize, f64)] {
        &self.by_item[item]
    }

    pub fn group(&self, user: usize) -> UserGroup {
        self.groups[user]
    }

    pub fn groups(&self) -> &[UserGroup] {
        &self.groups
    }

    pub fn count_group(&self, g: UserGroup) -> usize {
        self.groups[..self.num_original_users]
            .iter()
            .filter(|&&x| x == g)
            .count()
    }

    pub fn scale(&self) -> &RatingScale {
        &self.scale
    }

    pub fn user_id(&self, user: usize) -> &str {
        &self.user_ids[user]
    }

    pub fn item_id(&self, item: usize) -> &str {
        &self.item_ids[item]
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn item_groups(&self) -> Option<&[String]> {
        self.item_groups.as_deref()
    }

    /// Replaces the group labels of the original users.
    pub fn with_groups(mut self, groups: Vec<UserGroup>) -> Result<Self> {
        if groups.len() != self.num_original_users {
            return Err(Error::Validation(format!(
                "{} group labels for {} original users",
                groups.len(),
                self.num_original_users
            )));
        }
        self.groups[..self.num_original_users].copy_from_slice(&groups);
        Ok(self)
    }

    pub fn with_item_groups(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.num_items {
            return Err(Error::Validation(format!(
                "{} item labels for {} items",
                labels.len(),
                self.num_items
            )));
        }
        self.item_groups = Some(labels);
        Ok(self)
    }

    /// Exchanges the advantaged and disadvantaged labels.
    pub fn with_swapped_groups(mut self) -> Self {
        for g in &mut self.groups {
            *g = g.swapped();
        }
        self
    }

    /// Appends antidote users as new rows with group `Unassigned`.
    /// Existing entries are left untouched.
    pub fn inject_antidote(&self, users: &[AntidoteUser]) -> Result<Self> {
        if users.is_empty() {
            return Ok(self.clone());
        }
        let mut entries = self.entries.clone();
        let mut user_ids = self.user_ids.clone();
        let mut groups = self.groups.clone();
        for au in users {
            if au.fillers.len() != au.ratings.len() {
                return Err(Error::Validation(format!(
                    "antidote user {} has {} fillers but {} ratings",
                    au.z,
                    au.fillers.len(),
                    au.ratings.len()
                )));
            }
            let user = user_ids.len();
            for (&item, &value) in au.fillers.iter().zip(&au.ratings) {
                if item >= self.num_items {
                    return Err(Error::Validation(format!(
                        "antidote filler item {item} out of range ({} items)",
                        self.num_items
                    )));
                }
                entries.push(Rating { user, item, value });
            }
            user_ids.push(format!("antidote{}", user - self.num_original_users));
            groups.push(UserGroup::Unassigned);
        }
        Self::build(
            self.num_original_users,
            user_ids,
            self.item_ids.clone(),
            entries,
            groups,
            self.scale.clone(),
            self.item_groups.clone(),
        )
    }

    /// Drops every antidote row, recovering the original dataset.
    pub fn without_antidote(&self) -> Self {
        let n = self.num_original_users;
        let mut out = self.clone();
        out.entries.retain(|e| e.user < n);
        out.groups.truncate(n);
        out.user_ids.truncate(n);
        out.by_user.truncate(n);
        for col in &mut out.by_item {
            col.retain(|&(u, _)| u < n);
        }
        out
    }
}

// ---------------------------------------------------------------------------
// CSV ingestion

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    let mut s = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|e| Error::io(path, e))?;
    Ok(s)
}

fn check_header(path: &Path, header: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(parse_err(
            path,
            1,
            format!("expected header {:?}, found {:?}", expected.join(","), got.join(",")),
        ));
    }
    Ok(())
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes())
}

/// Reads a `user_id,item_id,rating` file. Users and items are indexed in
/// order of first appearance; group labels start out `Unassigned`.
pub fn load_ratings(path: &Path, scale: RatingScale) -> Result<RatingDataset> {
    let text = read_to_string(path)?;
    if text.trim().is_empty() {
        return Ok(RatingDataset::empty(scale));
    }
    let mut rdr = csv_reader(&text);
    check_header(path, rdr.headers()?, &["user_id", "item_id", "rating"])?;

    let mut user_index: HashMap<String, usize> = HashMap::new();
    let mut item_index: HashMap<String, usize> = HashMap::new();
    let mut user_ids = Vec::new();
    let mut item_ids = Vec::new();
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != 3 {
            return Err(parse_err(path, line, format!("expected 3 fields, found {}", rec.len())));
        }
        let uid = rec[0].trim();
        let iid = rec[1].trim();
        if uid.is_empty() || iid.is_empty() {
            return Err(parse_err(path, line, "empty user or item id"));
        }
        let value: i32 = rec[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line, format!("rating {:?} is not an integer", &rec[2])))?;
        if !scale.contains(value) {
            return Err(Error::Validation(format!(
                "{}:{line}: rating {value} is not in the scale {:?}",
                path.display(),
                scale.allowed()
            )));
        }
        let user = *user_index.entry(uid.to_string()).or_insert_with(|| {
            user_ids.push(uid.to_string());
            user_ids.len() - 1
        });
        let item = *item_index.entry(iid.to_string()).or_insert_with(|| {
            item_ids.push(iid.to_string());
            item_ids.len() - 1
        });
        if !seen.insert((user, item)) {
            return Err(Error::Validation(format!(
                "{}:{line}: duplicate rating for user {uid} item {iid}",
                path.display()
            )));
        }
        entries.push(Rating { user, item, value });
    }
    let groups = vec![UserGroup::Unassigned; user_ids.len()];
    RatingDataset::with_ids(user_ids, item_ids, entries, groups, scale)
}

/// Attaches `user_id,group` labels (`A` advantaged, `D` disadvantaged).
pub fn load_groups(path: &Path, ds: RatingDataset) -> Result<RatingDataset> {
    let text = read_to_string(path)?;
    let mut labels: HashMap<String, UserGroup> = HashMap::new();
    if !text.trim().is_empty() {
        let mut rdr = csv_reader(&text);
        check_header(path, rdr.headers()?, &["user_id", "group"])?;
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            if rec.len() != 2 {
                return Err(parse_err(path, line, format!("expected 2 fields, found {}", rec.len())));
            }
            let g = match rec[1].trim() {
                "A" => UserGroup::Advantaged,
                "D" => UserGroup::Disadvantaged,
                other => {
                    return Err(parse_err(path, line, format!("unknown group label {other:?}")))
                }
            };
            let uid = rec[0].trim().to_string();
            if labels.insert(uid.clone(), g).is_some() {
                return Err(parse_err(path, line, format!("user {uid} labeled twice")));
            }
        }
    }
    let mut missing = Vec::new();
    let mut groups = Vec::with_capacity(ds.num_original_users());
    for uid in &ds.user_ids()[..ds.num_original_users()] {
        match labels.get(uid) {
            Some(&g) => groups.push(g),
            None => missing.push(uid.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Validation(format!(
            "group file {} is missing users: {}",
            path.display(),
            missing.join(", ")
        )));
    }
    ds.with_groups(groups)
}

/// Attaches free-form `item_id,group` labels.
pub fn load_item_groups(path: &Path, ds: RatingDataset) -> Result<RatingDataset> {
    let text = read_to_string(path)?;
    let mut labels: HashMap<String, String> = HashMap::new();
    if !text.trim().is_empty() {
        let mut rdr = csv_reader(&text);
        check_header(path, rdr.headers()?, &["item_id", "group"])?;
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            if rec.len() != 2 {
                return Err(parse_err(path, line, format!("expected 2 fields, found {}", rec.len())));
            }
            labels.insert(rec[0].trim().to_string(), rec[1].trim().to_string());
        }
    }
    let mut missing = Vec::new();
    let mut out = Vec::with_capacity(ds.num_items());
    for iid in ds.item_ids() {
        match labels.get(iid) {
            Some(g) => out.push(g.clone()),
            None => missing.push(iid.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Validation(format!(
            "item group file {} is missing items: {}",
            path.display(),
            missing.join(", ")
        )));
    }
    ds.with_item_groups(out)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes every rating (original and antidote) as `user_id,item_id,rating`.
pub fn write_ratings(ds: &RatingDataset, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "user_id,item_id,rating").map_err(io)?;
    for e in ds.entries() {
        writeln!(w, "{},{},{}", ds.user_id(e.user), ds.item_id(e.item), e.value).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes `user_id,group` for labeled original users.
pub fn write_groups(ds: &RatingDataset, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "user_id,group").map_err(io)?;
    for u in 0..ds.num_original_users() {
        let label = match ds.group(u) {
            UserGroup::Advantaged => "A",
            UserGroup::Disadvantaged => "D",
            UserGroup::Unassigned => continue,
        };
        writeln!(w, "{},{}", ds.user_id(u), label).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_item_groups(ds: &RatingDataset, path: &Path) -> Result<()> {
    let labels = ds
        .item_groups()
        .ok_or_else(|| Error::Validation("dataset has no item groups".into()))?;
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "item_id,group").map_err(io)?;
    for (i, g) in labels.iter().enumerate() {
        writeln!(w, "{},{}", ds.item_id(i), g).map_err(io)?;
    }
    w.flush().map_err(io)
}

// ---------------------------------------------------------------------------
// Synthetic block model

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

/// Two user groups (male, female) by two item groups (STEM, non-STEM).
///
/// `alpha1` is the like probability on the diagonal blocks (male-STEM and
/// female-non-STEM), `alpha2` on the off-diagonal ones; `beta1`/`beta2` are
/// the matching observation probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub users_per_group: usize,
    pub items_per_group: usize,
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    /// Which gender is labeled advantaged.
    pub advantaged: Gender,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            users_per_group: 400,
            items_per_group: 300,
            alpha1: 0.4,
            alpha2: 0.4,
            beta1: 0.2,
            beta2: 0.1,
            seed: 0,
            advantaged: Gender::Male,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.users_per_group == 0 || self.items_per_group == 0 {
            return Err(Error::Config("synthetic group sizes must be at least 1".into()));
        }
        for (name, p) in [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is not a probability")));
            }
        }
        Ok(())
    }

    /// Expected number of observed ratings.
    pub fn expected_entries(&self) -> f64 {
        let u = self.users_per_group as f64;
        let i = self.items_per_group as f64;
        2.0 * u * i * (self.beta1 + self.beta2)
    }
}

/// Samples the synthetic dataset. Users `0..n` are male and `n..2n` female;
/// items `0..m` are STEM and `m..2m` non-STEM.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<RatingDataset> {
    cfg.validate()?;
    let n = cfg.users_per_group;
    let m = cfg.items_per_group;
    let rows: Vec<Vec<Rating>> = (0..2 * n)
        .into_par_iter()
        .map(|user| {
            let male = user < n;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(user as u64);
            let mut row = Vec::new();
            for item in 0..2 * m {
                let stem = item < m;
                let (alpha, beta) = if male == stem {
                    (cfg.alpha1, cfg.beta1)
                } else {
                    (cfg.alpha2, cfg.beta2)
                };
                // two f64 draws consume exactly four 32-bit words
                rng.set_word_pos(item as u128 * 4);
                let observe: f64 = rng.random();
                let like: f64 = rng.random();
                if observe < beta {
                    let value = if like < alpha { 1 } else { -1 };
                    row.push(Rating { user, item, value });
                }
            }
            row
        })
        .collect();
    let entries: Vec<Rating> = rows.into_iter().flatten().collect();

    let user_ids = (0..2 * n)
        .map(|u| if u < n { format!("m{u}") } else { format!("f{}", u - n) })
        .collect();
    let item_ids = (0..2 * m)
        .map(|i| if i < m { format!("stem{i}") } else { format!("nonstem{}", i - m) })
        .collect();
    let groups = (0..2 * n)
        .map(|u| {
            let gender = if u < n { Gender::Male } else { Gender::Female };
            if gender == cfg.advantaged {
                UserGroup::Advantaged
            } else {
                UserGroup::Disadvantaged
            }
        })
        .collect();
    let item_groups = (0..2 * m)
        .map(|i| if i < m { "STEM".to_string() } else { "NonSTEM".to_string() })
        .collect();
    RatingDataset::with_ids(user_ids, item_ids, entries, groups, RatingScale::binary())?
        .with_item_groups(item_groups)
}
