//! SemBias analogy selection.
//!
//! Native file format: one tuple per line, four tab-separated `a:b`
//! candidate pairs followed by a fifth field of comma-separated tags, e.g.
//!
//! ```text
//! king:queen<TAB>doctor:nurse<TAB>cup:plate<TAB>dog:cat<TAB>def,stereo,other,other
//! ```
//!
//! Each pair is ordered (masculine-analogue, feminine-analogue).

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use log::warn;

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::linalg::{cosine, sub};
use crate::subspace::DEGENERATE_NORM;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    Definitional,
    Stereotypical,
    Other,
}

impl Tag {
    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Definitional => "def",
            Tag::Stereotypical => "stereo",
            Tag::Other => "other",
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "def" | "definition" | "definitional" => Ok(Tag::Definitional),
            "stereo" | "stereotype" | "stereotypical" => Ok(Tag::Stereotypical),
            "other" | "none" => Ok(Tag::Other),
            t => Err(Error::InvalidArgument(format!("unknown SemBias tag '{t}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemBiasTuple {
    pub pairs: [(String, String); 4],
    pub tags: [Tag; 4],
}

fn parse_pair(s: &str) -> Option<(String, String)> {
    let (a, b) = s.trim().split_once(':')?;
    if a.is_empty() || b.is_empty() {
        return None;
    }
    Some((a.to_owned(), b.to_owned()))
}

fn to_four<X: Clone>(v: Vec<X>) -> Option<[X; 4]> {
    v.try_into().ok()
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SemBiasDataset {
    pub tuples: Vec<SemBiasTuple>,
}

impl SemBiasDataset {
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let mut tuples = Vec::new();
        for (k, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 {
                return Err(Error::parse(name, k + 1, format!("expected 5 tab-separated fields, found {}", fields.len())));
            }
            let pairs = fields[..4]
                .iter()
                .map(|f| parse_pair(f).ok_or_else(|| Error::parse(name, k + 1, format!("bad pair '{f}'"))))
                .collect::<Result<Vec<_>>>()?;
            let tags = fields[4]
                .split(',')
                .map(|t| t.parse::<Tag>().map_err(|e| Error::parse(name, k + 1, e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            let tags = to_four(tags).ok_or_else(|| Error::parse(name, k + 1, "expected 4 tags"))?;
            tuples.push(SemBiasTuple {
                pairs: to_four(pairs).expect("four fields"),
                tags,
            });
        }
        Ok(SemBiasDataset { tuples })
    }

    /// Reads the published release layout: four whitespace-separated `a:b`
    /// pairs per line, in the order definitional, stereotypical, other, other.
    pub fn parse_release(name: &str, text: &str) -> Result<Self> {
        let tags = [Tag::Definitional, Tag::Stereotypical, Tag::Other, Tag::Other];
        let mut tuples = Vec::new();
        for (k, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let pairs = line
                .split_whitespace()
                .map(|f| parse_pair(f).ok_or_else(|| Error::parse(name, k + 1, format!("bad pair '{f}'"))))
                .collect::<Result<Vec<_>>>()?;
            let n = pairs.len();
            let pairs = to_four(pairs).ok_or_else(|| Error::parse(name, k + 1, format!("expected 4 pairs, found {n}")))?;
            tuples.push(SemBiasTuple { pairs, tags });
        }
        Ok(SemBiasDataset { tuples })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.tuples {
            for (a, b) in &t.pairs {
                let _ = write!(out, "{a}:{b}\t");
            }
            let tags: Vec<&str> = t.tags.iter().map(|t| t.as_str()).collect();
            let _ = writeln!(out, "{}", tags.join(","));
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SemBiasDataset::parse(&path.display().to_string(), &text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemBiasScore {
    pub definitional: f64,
    pub stereotypical: f64,
    pub other: f64,
    pub used: usize,
    pub dropped: usize,
    /// Tuples whose best cosine was shared by more than one candidate.
    pub ties: usize,
    /// Index (0..4) of the selected pair for every retained tuple.
    pub selections: Vec<usize>,
}

/// Index of the candidate pair best aligned with `emb[masc] - emb[fem]`,
/// and whether the maximum was tied. `None` when a word is missing.
pub fn select_pair<T: Scalar>(emb: &Embedding<T>, tuple: &SemBiasTuple, dir: &[T]) -> Option<(usize, bool)> {
    let mut best: Option<(usize, T)> = None;
    let mut tied = false;
    for (i, (a, b)) in tuple.pairs.iter().enumerate() {
        let s = cosine(dir, &sub(emb.get(a)?, emb.get(b)?));
        match best {
            Some((_, m)) if s < m => {}
            Some((_, m)) if s == m => tied = true,
            _ => {
                best = Some((i, s));
                tied = false;
            }
        }
    }
    best.map(|(i, _)| (i, tied))
}

/// Proportion of tuples whose selected pair is definitional, stereotypical
/// or other. Tuples with a missing word are dropped.
pub fn sembias<T: Scalar>(emb: &Embedding<T>, data: &SemBiasDataset, fem: &str, masc: &str) -> Result<SemBiasScore> {
    let f = emb.get(fem).ok_or_else(|| Error::MissingWord(fem.to_owned()))?;
    let m = emb.get(masc).ok_or_else(|| Error::MissingWord(masc.to_owned()))?;
    let dir = sub(m, f);
    let n = crate::linalg::norm(&dir).to_f64_lossy();
    if n <= DEGENERATE_NORM {
        return Err(Error::DegenerateDirection {
            fem: fem.to_owned(),
            masc: masc.to_owned(),
            norm: n,
        });
    }
    let mut counts = [0usize; 3];
    let mut dropped = 0;
    let mut ties = 0;
    let mut selections = Vec::with_capacity(data.len());
    for t in &data.tuples {
        match select_pair(emb, t, &dir) {
            Some((i, tied)) => {
                ties += usize::from(tied);
                selections.push(i);
                let slot = match t.tags[i] {
                    Tag::Definitional => 0,
                    Tag::Stereotypical => 1,
                    Tag::Other => 2,
                };
                counts[slot] += 1;
            }
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        warn!("sembias: dropped {dropped} tuples with missing words");
    }
    let used = selections.len();
    if used == 0 {
        return Err(Error::Empty("no SemBias tuple fully covered by the embedding".into()));
    }
    let p = |c: usize| c as f64 / used as f64;
    Ok(SemBiasScore {
        definitional: p(counts[0]),
        stereotypical: p(counts[1]),
        other: p(counts[2]),
        used,
        dropped,
        ties,
        selections,
    })
}
