use std::fmt::Write as _;
use std::path::Path;

use crate::embedding::{Embedding, WordList};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::subspace::UnitVector;
use crate::{Gender, Scalar};

/// Words with a binary gender label each.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWordSet {
    words: WordList,
    labels: Vec<Gender>,
}

impl LabeledWordSet {
    pub fn new(words: WordList, labels: Vec<Gender>) -> Result<Self> {
        if words.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} words but {} labels",
                words.len(),
                labels.len()
            )));
        }
        Ok(LabeledWordSet { words, labels })
    }

    /// Builds a set from `(word, label)` pairs. Repeated words are rejected.
    pub fn from_pairs<S: Into<String>>(name: &str, pairs: impl IntoIterator<Item = (S, Gender)>) -> Result<Self> {
        let (words, labels): (Vec<String>, Vec<Gender>) = pairs.into_iter().map(|(w, g)| (w.into(), g)).unzip();
        let n = words.len();
        let list = WordList::new(name, words);
        if list.len() != n {
            return Err(Error::InvalidArgument(format!("labelled set {name} repeats a word")));
        }
        LabeledWordSet::new(list, labels)
    }

    pub fn words(&self) -> &WordList {
        &self.words
    }

    pub fn labels(&self) -> &[Gender] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn count(&self, g: Gender) -> usize {
        self.labels.iter().filter(|&&l| l == g).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Gender)> {
        self.words.words().iter().map(String::as_str).zip(self.labels.iter().copied())
    }

    /// `word<TAB>M|F` lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (w, g) in self.iter() {
            let _ = writeln!(out, "{w}\t{g}");
        }
        out
    }

    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let word = parts.next().unwrap_or_default().trim();
            let label = parts
                .next()
                .ok_or_else(|| Error::parse(name, k + 1, "expected word<TAB>label"))?;
            let g: Gender = label.parse().map_err(|e: Error| Error::parse(name, k + 1, e.to_string()))?;
            pairs.push((word.to_owned(), g));
        }
        LabeledWordSet::from_pairs(name, pairs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        LabeledWordSet::parse(&path.display().to_string(), &text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

/// The `n_per_class` vocabulary words leaning furthest towards each end of `g`.
///
/// Words are ranked by cosine with `g`. The top `n_per_class` are labelled
/// female (`g` points from masculine to feminine); the bottom `n_per_class`
/// of the remaining words are labelled male. Each class is ordered from the
/// strongest projection down; ties keep vocabulary order. Female words come
/// first in the result. Zero vectors and words absent from `orig` are ignored.
pub fn most_biased_words<T: Scalar>(
    orig: &Embedding<T>,
    g: &UnitVector<T>,
    n_per_class: usize,
    vocab: &WordList,
) -> Result<LabeledWordSet> {
    if orig.dim() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            found: orig.dim(),
        });
    }
    if n_per_class == 0 {
        return Err(Error::InvalidArgument("n_per_class must be positive".into()));
    }
    let mut scored: Vec<(usize, T)> = Vec::with_capacity(vocab.len());
    for (pos, w) in vocab.words().iter().enumerate() {
        if let Some(row) = orig.get(w) {
            let n = norm(row);
            if n > T::zero() {
                scored.push((pos, dot(row, g.as_slice()) / n));
            }
        }
    }
    if scored.len() < 2 * n_per_class {
        return Err(Error::Insufficient(format!(
            "{} usable words, need {} for {n_per_class} per class",
            scored.len(),
            2 * n_per_class
        )));
    }
    // Stable sorts: equal projections stay in vocabulary order.
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    let female: Vec<usize> = scored[..n_per_class].iter().map(|&(p, _)| p).collect();
    let mut rest = scored[n_per_class..].to_vec();
    rest.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    let male: Vec<usize> = rest[..n_per_class].iter().map(|&(p, _)| p).collect();

    let words = vocab.words();
    let pairs = female
        .iter()
        .map(|&p| (words[p].clone(), Gender::Female))
        .chain(male.iter().map(|&p| (words[p].clone(), Gender::Male)));
    LabeledWordSet::from_pairs("most-biased", pairs)
}
