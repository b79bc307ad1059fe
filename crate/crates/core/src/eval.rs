//! Scoring NLI predictions on a marked-attribute test set.
//!
//! Prediction files hold one record per line: `id N E C`, separated by tabs,
//! commas or spaces. A first line whose probability fields are not numeric
//! is taken as a header.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::testgen::{SetKind, TestSet};
use crate::Gender;

/// `(N, E, C)`
pub type Probs = [f64; 3];

pub const IDEAL: Probs = [1.0, 0.0, 0.0];

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub id: String,
    pub probs: Probs,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct PredictionStats {
    pub records: usize,
    /// Largest `|N + E + C - 1|` before renormalisation.
    pub max_deviation: f64,
}

/// Reads predictions, renormalising each row to sum to one.
pub fn read_predictions<R: BufRead>(reader: R, name: &str) -> Result<(Vec<PredictionRecord>, PredictionStats)> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let mut stats = PredictionStats::default();
    let mut first = true;
    for (k, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(name, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == '\t' || c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        let is_first = std::mem::replace(&mut first, false);
        if fields.len() != 4 {
            return Err(Error::parse(name, k + 1, format!("expected 4 fields, found {}", fields.len())));
        }
        let nums: std::result::Result<Vec<f64>, _> = fields[1..].iter().map(|f| f.parse::<f64>()).collect();
        let nums = match nums {
            Ok(n) => n,
            Err(_) if is_first => continue,
            Err(e) => return Err(Error::parse(name, k + 1, format!("non-numeric probability: {e}"))),
        };
        if nums.iter().any(|&p| !p.is_finite() || p < -1e-9) {
            return Err(Error::parse(name, k + 1, "probabilities must be finite and non-negative"));
        }
        let sum: f64 = nums.iter().sum();
        if sum <= 0.0 {
            return Err(Error::parse(name, k + 1, "probabilities sum to zero"));
        }
        stats.max_deviation = stats.max_deviation.max((sum - 1.0).abs());
        let id = fields[0].to_owned();
        if !seen.insert(id.clone()) {
            return Err(Error::parse(name, k + 1, format!("duplicate id '{id}'")));
        }
        out.push(PredictionRecord {
            id,
            probs: [nums[0].max(0.0) / sum, nums[1].max(0.0) / sum, nums[2].max(0.0) / sum],
        });
    }
    stats.records = out.len();
    if stats.max_deviation > 1e-4 {
        warn!("{name}: rows deviate from the simplex by up to {:.3e}; renormalised", stats.max_deviation);
    } else {
        info!("{name}: max simplex deviation {:.3e}", stats.max_deviation);
    }
    Ok((out, stats))
}

pub fn load_predictions(path: &Path) -> Result<(Vec<PredictionRecord>, PredictionStats)> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_predictions(BufReader::new(f), &path.display().to_string())
}

/// A prediction joined to its test-set metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub probs: Probs,
    pub group: Gender,
    pub attribute_word: String,
    pub word_category: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub kind: Option<SetKind>,
    pub records: Vec<Scored>,
    /// Test-set ids with no prediction.
    pub missing: Vec<String>,
    /// Prediction ids not in the test set.
    pub extra: Vec<String>,
}

impl PredictionSet {
    pub fn from_records(records: Vec<Scored>) -> Self {
        PredictionSet {
            kind: None,
            records,
            missing: Vec::new(),
            extra: Vec::new(),
        }
    }

    /// Joins predictions to a test set by id, in test-set order.
    pub fn join(test: &TestSet, preds: Vec<PredictionRecord>) -> Result<Self> {
        let mut by_id: HashMap<String, Probs> = preds.into_iter().map(|r| (r.id, r.probs)).collect();
        let mut records = Vec::with_capacity(test.len());
        let mut missing = Vec::new();
        for p in &test.pairs {
            match by_id.remove(&p.id) {
                Some(probs) => records.push(Scored {
                    probs,
                    group: p.group,
                    attribute_word: p.attribute_word.clone(),
                    word_category: p.word_category.clone(),
                }),
                None => missing.push(p.id.clone()),
            }
        }
        let mut extra: Vec<String> = by_id.into_keys().collect();
        extra.sort();
        if !missing.is_empty() {
            warn!("{} test pairs have no prediction", missing.len());
        }
        if !extra.is_empty() {
            warn!("{} predictions do not match any test pair", extra.len());
        }
        if records.is_empty() {
            return Err(Error::Empty("no prediction matches the test set".into()));
        }
        Ok(PredictionSet {
            kind: Some(test.kind),
            records,
            missing,
            extra,
        })
    }

    pub fn select<'a>(&'a self, sel: &'a Selector) -> impl Iterator<Item = &'a Scored> + 'a {
        self.records.iter().filter(move |r| sel.matches(r))
    }
}

/// Record filter; unset fields match anything.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Selector {
    pub group: Option<Gender>,
    pub word: Option<String>,
    pub category: Option<String>,
}

impl Selector {
    pub fn group(g: Gender) -> Self {
        Selector {
            group: Some(g),
            ..Selector::default()
        }
    }

    pub fn word(w: impl Into<String>) -> Self {
        Selector {
            word: Some(w.into()),
            ..Selector::default()
        }
    }

    pub fn in_category(mut self, c: impl Into<String>) -> Self {
        self.category = Some(c.into());
        self
    }

    pub fn matches(&self, r: &Scored) -> bool {
        self.group.is_none_or(|g| g == r.group)
            && self.word.as_deref().is_none_or(|w| w == r.attribute_word)
            && self.category.as_deref().is_none_or(|c| c == r.word_category)
    }
}

pub fn euclidean(a: &Probs, b: &Probs) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn mean_of<'a>(it: impl Iterator<Item = &'a Probs>) -> Option<(Probs, usize)> {
    let mut s = [0.0; 3];
    let mut n = 0;
    for p in it {
        for k in 0..3 {
            s[k] += p[k];
        }
        n += 1;
    }
    (n > 0).then(|| ([s[0] / n as f64, s[1] / n as f64, s[2] / n as f64], n))
}

/// Mean distance of each record from `(1, 0, 0)`.
pub fn marked_attribute_error_of<'a>(probs: impl Iterator<Item = &'a Probs>) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0;
    for p in probs {
        total += euclidean(&IDEAL, p);
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty("no records".into()));
    }
    Ok(total / n as f64)
}

pub fn marked_attribute_error(preds: &PredictionSet) -> Result<f64> {
    marked_attribute_error_of(preds.records.iter().map(|r| &r.probs))
}

/// Euclidean distance between two mean probability vectors.
pub fn mean_distance(a: &Probs, b: &Probs) -> f64 {
    euclidean(a, b)
}

/// Distance between the mean probability vectors of two record groups.
pub fn group_distance(preds: &PredictionSet, a: &Selector, b: &Selector) -> Result<f64> {
    let (ma, _) = mean_of(preds.select(a).map(|r| &r.probs)).ok_or_else(|| Error::Empty("first group is empty".into()))?;
    let (mb, _) = mean_of(preds.select(b).map(|r| &r.probs)).ok_or_else(|| Error::Empty("second group is empty".into()))?;
    Ok(mean_distance(&ma, &mb))
}

/// `|sum_a p - sum_b p| / (2 (n_a + n_b))`, the distance formula taken
/// literally on group sums. With equal group sizes it is a quarter of
/// [`group_distance`].
pub fn group_distance_literal(preds: &PredictionSet, a: &Selector, b: &Selector) -> Result<f64> {
    let mut diff = [0.0; 3];
    let mut n = 0usize;
    let (mut na, mut nb) = (0, 0);
    for r in preds.select(a) {
        (0..3).for_each(|k| diff[k] += r.probs[k]);
        na += 1;
    }
    for r in preds.select(b) {
        (0..3).for_each(|k| diff[k] -= r.probs[k]);
        nb += 1;
    }
    if na == 0 || nb == 0 {
        return Err(Error::Empty("empty group".into()));
    }
    n += na + nb;
    Ok(euclidean(&diff, &[0.0; 3]) / (2.0 * n as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    Group,
    AttributeWord,
    WordCategory,
}

impl std::str::FromStr for GroupBy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "group" => Ok(GroupBy::Group),
            "word" | "attribute_word" => Ok(GroupBy::AttributeWord),
            "category" | "word_category" => Ok(GroupBy::WordCategory),
            _ => Err(Error::InvalidArgument(format!("unknown grouping '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupMean {
    pub key: String,
    pub mean: Probs,
    pub count: usize,
}

/// Componentwise means per key, in order of first appearance.
pub fn group_means(preds: &PredictionSet, by: GroupBy) -> Vec<GroupMean> {
    let mut order: Vec<String> = Vec::new();
    let mut acc: HashMap<String, (Probs, usize)> = HashMap::new();
    for r in &preds.records {
        let key = match by {
            GroupBy::Group => r.group.as_str().to_owned(),
            GroupBy::AttributeWord => r.attribute_word.clone(),
            GroupBy::WordCategory => r.word_category.clone(),
        };
        let e = acc.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            ([0.0; 3], 0)
        });
        (0..3).for_each(|k| e.0[k] += r.probs[k]);
        e.1 += 1;
    }
    order
        .into_iter()
        .map(|key| {
            let (s, n) = acc[&key];
            GroupMean {
                key,
                mean: [s[0] / n as f64, s[1] / n as f64, s[2] / n as f64],
                count: n,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PermutationResult {
    pub distance: f64,
    pub significance: f64,
    pub exceeded: usize,
    pub n_samples: usize,
    pub seed: u64,
}

/// Per-word probability sums and record counts.
fn word_sums(preds: &PredictionSet) -> HashMap<&str, (Probs, usize)> {
    let mut m: HashMap<&str, (Probs, usize)> = HashMap::new();
    for r in &preds.records {
        let e = m.entry(r.attribute_word.as_str()).or_insert(([0.0; 3], 0));
        (0..3).for_each(|k| e.0[k] += r.probs[k]);
        e.1 += 1;
    }
    m
}

fn split_distance(sums: &[(Probs, usize)], in_a: impl Fn(usize) -> bool) -> f64 {
    let mut a = ([0.0; 3], 0usize);
    let mut b = ([0.0; 3], 0usize);
    for (i, (s, n)) in sums.iter().enumerate() {
        let t = if in_a(i) { &mut a } else { &mut b };
        (0..3).for_each(|k| t.0[k] += s[k]);
        t.1 += n;
    }
    let ma = a.0.map(|x| x / a.1 as f64);
    let mb = b.0.map(|x| x / b.1 as f64);
    mean_distance(&ma, &mb)
}

/// Share of random re-partitions of the attribute words whose group
/// distance strictly exceeds that of the given partition.
///
/// Random partitions keep the two group sizes. Sample `i` shuffles with
/// stream `i` of a ChaCha8 generator seeded by `seed`, so results do not
/// depend on the number of worker threads.
pub fn permutation_test(
    preds: &PredictionSet,
    partition: &[(String, Gender)],
    n_samples: usize,
    seed: u64,
) -> Result<PermutationResult> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be positive".into()));
    }
    let sums = word_sums(preds);
    let mut words: Vec<(Probs, usize)> = Vec::new();
    let mut labels: Vec<Gender> = Vec::new();
    let mut absent = 0;
    for (w, g) in partition {
        match sums.get(w.as_str()) {
            Some(&s) => {
                words.push(s);
                labels.push(*g);
            }
            None => absent += 1,
        }
    }
    if absent > 0 {
        warn!("permutation test: {absent} partition words have no records");
    }
    let n_a = labels.iter().filter(|&&g| g == Gender::Male).count();
    if words.len() < 2 || n_a == 0 || n_a == words.len() {
        return Err(Error::Insufficient(
            "permutation test needs at least one scored word in each group".into(),
        ));
    }
    let d = split_distance(&words, |i| labels[i] == Gender::Male);
    let exceeded: usize = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut perm: Vec<usize> = (0..words.len()).collect();
            perm.shuffle(&mut rng);
            let mut in_a = vec![false; words.len()];
            perm[..n_a].iter().for_each(|&j| in_a[j] = true);
            usize::from(split_distance(&words, |j| in_a[j]) > d)
        })
        .sum();
    Ok(PermutationResult {
        distance: d,
        significance: exceeded as f64 / n_samples as f64,
        exceeded,
        n_samples,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryReport {
    pub category: String,
    pub records: usize,
    pub error: f64,
    pub male: Option<GroupMean>,
    pub female: Option<GroupMean>,
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub set_kind: Option<SetKind>,
    pub records: usize,
    pub missing: usize,
    pub extra: usize,
    pub max_deviation: f64,
    /// Pooled over every record.
    pub error: f64,
    pub distance: Option<f64>,
    /// Literal sum form of the distance, when requested.
    pub distance_literal: Option<f64>,
    pub group_means: Vec<GroupMean>,
    pub categories: Vec<CategoryReport>,
    pub permutation: Option<PermutationResult>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    /// Number of random partitions; 0 skips the permutation test.
    pub permutations: usize,
    pub seed: u64,
    pub literal_distance: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            permutations: 10_000,
            seed: 0,
            literal_distance: false,
        }
    }
}

pub fn evaluate(preds: &PredictionSet, stats: &PredictionStats, opts: &EvalOptions) -> Result<EvalReport> {
    let m = Selector::group(Gender::Male);
    let f = Selector::group(Gender::Female);
    let distance = group_distance(preds, &m, &f).ok();
    let distance_literal = if opts.literal_distance {
        group_distance_literal(preds, &m, &f).ok()
    } else {
        None
    };
    let mut categories = Vec::new();
    for cat in group_means(preds, GroupBy::WordCategory) {
        let sel = Selector::default().in_category(cat.key.clone());
        let of_group = |g: Gender| {
            let s = Selector::group(g).in_category(cat.key.clone());
            mean_of(preds.select(&s).map(|r| &r.probs)).map(|(mean, count)| GroupMean {
                key: g.as_str().to_owned(),
                mean,
                count,
            })
        };
        let male = of_group(Gender::Male);
        let female = of_group(Gender::Female);
        let distance = match (&male, &female) {
            (Some(a), Some(b)) => Some(mean_distance(&a.mean, &b.mean)),
            _ => None,
        };
        categories.push(CategoryReport {
            error: marked_attribute_error_of(preds.select(&sel).map(|r| &r.probs))?,
            records: cat.count,
            category: cat.key,
            male,
            female,
            distance,
        });
    }
    let permutation = if opts.permutations > 0 {
        let mut partition: Vec<(String, Gender)> = Vec::new();
        let mut seen = HashSet::new();
        for r in &preds.records {
            if seen.insert(r.attribute_word.as_str()) {
                partition.push((r.attribute_word.clone(), r.group));
            }
        }
        match permutation_test(preds, &partition, opts.permutations, opts.seed) {
            Ok(p) => Some(p),
            Err(e) => {
                warn!("permutation test skipped: {e}");
                None
            }
        }
    } else {
        None
    };
    Ok(EvalReport {
        set_kind: preds.kind,
        records: preds.records.len(),
        missing: preds.missing.len(),
        extra: preds.extra.len(),
        max_deviation: stats.max_deviation,
        error: marked_attribute_error(preds)?,
        distance,
        distance_literal,
        group_means: group_means(preds, GroupBy::Group),
        categories,
        permutation,
    })
}
