//! Embedding quality benchmarks: word similarity and 3CosAdd analogies.
//!
//! Lookups fall back to the lowercase form of a word, and rows with any
//! word missing from the embedding are skipped rather than scored wrong.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::linalg::{self, cosine, dot};
use crate::stats::spearman;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimilarityDataset {
    pub pairs: Vec<(String, String, f64)>,
}

impl SimilarityDataset {
    /// `word1 word2 score` lines, separated by tabs, commas or spaces. A
    /// first line with a non-numeric score is treated as a header; repeated
    /// pairs keep their first score.
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut seen = HashSet::new();
        let mut first = true;
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let is_first = std::mem::replace(&mut first, false);
            let f: Vec<&str> = line
                .split(|c: char| c == '\t' || c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            if f.len() < 3 {
                return Err(Error::parse(name, k + 1, "expected word1 word2 score"));
            }
            let score = match f[2].parse::<f64>() {
                Ok(s) if s.is_finite() => s,
                _ if is_first => continue,
                _ => return Err(Error::parse(name, k + 1, format!("bad score '{}'", f[2]))),
            };
            if seen.insert((f[0].to_owned(), f[1].to_owned())) {
                pairs.push((f[0].to_owned(), f[1].to_owned(), score));
            } else {
                warn!("{name}:{}: repeated pair {} {} ignored", k + 1, f[0], f[1]);
            }
        }
        Ok(SimilarityDataset { pairs })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SimilarityDataset::parse(&path.display().to_string(), &text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimilarityScore {
    /// Spearman correlation times 100.
    pub score: f64,
    pub covered: usize,
    pub total: usize,
}

pub fn word_similarity<T: Scalar>(emb: &Embedding<T>, ds: &SimilarityDataset) -> Result<SimilarityScore> {
    if ds.pairs.is_empty() {
        return Err(Error::Empty("similarity dataset".into()));
    }
    let mut human = Vec::new();
    let mut model = Vec::new();
    for (a, b, s) in &ds.pairs {
        if let (Some(x), Some(y)) = (emb.get(a), emb.get(b)) {
            human.push(*s);
            model.push(cosine(x, y).to_f64_lossy());
        }
    }
    if human.is_empty() {
        return Err(Error::Empty("no similarity pair covered by the embedding".into()));
    }
    let rho = spearman(&human, &model)
        .ok_or_else(|| Error::Insufficient("rank correlation undefined for the covered pairs".into()))?;
    Ok(SimilarityScore {
        score: 100.0 * rho,
        covered: human.len(),
        total: ds.pairs.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AnalogyKind {
    Semantic,
    Syntactic,
}

impl AnalogyKind {
    /// Sections named `gram...` are syntactic.
    pub fn of_section(section: &str) -> Self {
        if section.starts_with("gram") {
            AnalogyKind::Syntactic
        } else {
            AnalogyKind::Semantic
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalogyRow {
    /// `a : b :: c : d`
    pub words: [String; 4],
    pub section: String,
    pub kind: AnalogyKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AnalogyDataset {
    pub rows: Vec<AnalogyRow>,
}

fn four_words(name: &str, line_no: usize, line: &str) -> Result<[String; 4]> {
    let w: Vec<String> = line.split_whitespace().map(str::to_owned).collect();
    let n = w.len();
    w.try_into()
        .map_err(|_| Error::parse(name, line_no, format!("expected 4 words, found {n}")))
}

impl AnalogyDataset {
    /// Google format: `: section` headers followed by `a b c d` rows.
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        let mut section = String::from("default");
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(s) = line.strip_prefix(':') {
                section = s.trim().to_owned();
                continue;
            }
            rows.push(AnalogyRow {
                words: four_words(name, k + 1, line)?,
                kind: AnalogyKind::of_section(&section),
                section: section.clone(),
            });
        }
        Ok(AnalogyDataset { rows })
    }

    /// MSR layout: `a b c d` per line with no section headers. Every row is
    /// syntactic and lands in section `gram-msr`.
    pub fn parse_msr(name: &str, text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            rows.push(AnalogyRow {
                words: four_words(name, k + 1, line)?,
                section: "gram-msr".into(),
                kind: AnalogyKind::Syntactic,
            });
        }
        Ok(AnalogyDataset { rows })
    }

    pub fn to_google_text(&self) -> String {
        let mut out = String::new();
        let mut current: Option<&str> = None;
        for r in &self.rows {
            if current != Some(r.section.as_str()) {
                let _ = writeln!(out, ": {}", r.section);
                current = Some(&r.section);
            }
            let _ = writeln!(out, "{}", r.words.join(" "));
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        AnalogyDataset::parse(&path.display().to_string(), &text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Tally {
    pub correct: usize,
    pub scored: usize,
}

impl Tally {
    pub fn percent(&self) -> Option<f64> {
        (self.scored > 0).then(|| 100.0 * self.correct as f64 / self.scored as f64)
    }

    fn add(&mut self, ok: bool) {
        self.scored += 1;
        self.correct += usize::from(ok);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalogyScore {
    /// Percentage of covered rows answered correctly.
    pub total: f64,
    pub by_section: BTreeMap<String, Tally>,
    pub by_kind: BTreeMap<AnalogyKind, Tally>,
    pub covered: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AnalogyOptions {
    /// Only the first `n` embedding rows are candidates; rows using other
    /// words are skipped.
    pub max_vocab: Option<usize>,
}

/// 3CosAdd answer index for `a : b :: c : ?` over unit rows `0..limit`,
/// excluding the three query rows. Ties go to the lower index.
pub fn three_cos_add<T: Scalar>(unit: &Embedding<T>, limit: usize, a: usize, b: usize, c: usize) -> Option<usize> {
    let mut target = unit.row(b).to_vec();
    linalg::axpy(-T::one(), unit.row(a), &mut target);
    linalg::axpy(T::one(), unit.row(c), &mut target);
    let mut best: Option<(usize, T)> = None;
    for j in 0..limit {
        if j == a || j == b || j == c {
            continue;
        }
        // Rows are unit length, so the dot product ranks like the cosine.
        let s = dot(unit.row(j), &target);
        if best.is_none_or(|(_, m)| s > m) {
            best = Some((j, s));
        }
    }
    best.map(|(j, _)| j)
}

pub fn analogy_accuracy<T: Scalar>(emb: &Embedding<T>, ds: &AnalogyDataset, opts: &AnalogyOptions) -> Result<AnalogyScore> {
    if ds.rows.is_empty() {
        return Err(Error::Empty("analogy dataset".into()));
    }
    let limit = opts.max_vocab.unwrap_or(emb.len()).min(emb.len());
    let unit = emb.map_rows(|_, r| linalg::normalized(r).unwrap_or_else(|| vec![T::zero(); r.len()]));
    let outcomes: Vec<Option<bool>> = ds
        .rows
        .par_iter()
        .map(|row| {
            let idx: Vec<usize> = row
                .words
                .iter()
                .map(|w| emb.index_of(w).filter(|&i| i < limit))
                .collect::<Option<Vec<_>>>()?;
            three_cos_add(&unit, limit, idx[0], idx[1], idx[2]).map(|ans| ans == idx[3])
        })
        .collect();
    let mut by_section: BTreeMap<String, Tally> = BTreeMap::new();
    let mut by_kind: BTreeMap<AnalogyKind, Tally> = BTreeMap::new();
    let mut all = Tally::default();
    let mut skipped = 0;
    for (row, out) in ds.rows.iter().zip(outcomes) {
        match out {
            Some(ok) => {
                all.add(ok);
                by_section.entry(row.section.clone()).or_default().add(ok);
                by_kind.entry(row.kind).or_default().add(ok);
            }
            None => skipped += 1,
        }
    }
    if all.scored == 0 {
        return Err(Error::Empty("no analogy row covered by the embedding".into()));
    }
    if skipped > 0 {
        warn!("analogy: skipped {skipped} rows with out-of-vocabulary words");
    }
    Ok(AnalogyScore {
        total: all.percent().expect("non-empty"),
        by_section,
        by_kind,
        covered: all.scored,
        skipped,
    })
}
