//! Static word embeddings and word lists in plain text form.
//!
//! Embedding files hold one record per line, `word c1 c2 ... cD`, separated
//! by spaces. Word lists hold one word per line; blank lines and lines
//! starting with `#` are ignored.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::Scalar;

/// An ordered list of unique words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordList {
    pub name: String,
    words: Vec<String>,
}

impl WordList {
    /// Builds a list, dropping repeated words (first occurrence wins).
    pub fn new<S: Into<String>>(name: impl Into<String>, words: impl IntoIterator<Item = S>) -> Self {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        let mut dropped = 0usize;
        for w in words {
            let w = w.into();
            if seen.insert(w.clone()) {
                out.push(w);
            } else {
                dropped += 1;
            }
        }
        let name = name.into();
        if dropped > 0 {
            warn!("word list {name}: dropped {dropped} duplicate entries");
        }
        WordList { name, words: out }
    }

    pub fn parse(name: impl Into<String>, text: &str) -> Self {
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_owned);
        WordList::new(name, words)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(WordList::parse(name, &text))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = String::new();
        for w in &self.words {
            text.push_str(w);
            text.push('\n');
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.iter().any(|w| w == word)
    }

    pub fn to_set(&self) -> HashSet<&str> {
        self.words.iter().map(String::as_str).collect()
    }
}

/// Vocabulary-indexed dense matrix of word vectors. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T> {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<T>,
    dim: usize,
}

impl<T: Scalar> Embedding<T> {
    /// Builds an embedding from parallel word and row lists.
    pub fn from_rows(vocab: Vec<String>, rows: Vec<Vec<T>>) -> Result<Self> {
        if vocab.len() != rows.len() {
            return Err(Error::DimensionMismatch {
                expected: vocab.len(),
                found: rows.len(),
            });
        }
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(dim * rows.len());
        for row in &rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_flat(vocab, data, dim)
    }

    /// Builds an embedding from a row-major buffer of `vocab.len() * dim` values.
    pub fn from_flat(vocab: Vec<String>, data: Vec<T>, dim: usize) -> Result<Self> {
        if data.len() != vocab.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: vocab.len() * dim,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite component in row for '{}'",
                vocab[pos / dim.max(1)]
            )));
        }
        let mut index = HashMap::with_capacity(vocab.len());
        for (i, w) in vocab.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate word '{w}'")));
            }
        }
        Ok(Embedding {
            vocab,
            index,
            data,
            dim,
        })
    }

    pub fn empty(dim: usize) -> Self {
        Embedding {
            vocab: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn word(&self, idx: usize) -> &str {
        &self.vocab[idx]
    }

    pub fn row(&self, idx: usize) -> &[T] {
        &self.data[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        // chunks_exact(0) panics, so handle dim 0 by hand
        let dim = self.dim.max(1);
        self.data.chunks_exact(dim).take(if self.dim == 0 { 0 } else { self.len() })
    }

    pub fn as_flat(&self) -> &[T] {
        &self.data
    }

    /// Exact-match lookup.
    pub fn index_exact(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Exact-match lookup, falling back to the lowercased word on a miss.
    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index_exact(word).or_else(|| {
            let lower = word.to_lowercase();
            if lower != word {
                self.index_exact(&lower)
            } else {
                None
            }
        })
    }

    pub fn get(&self, word: &str) -> Option<&[T]> {
        self.index_of(word).map(|i| self.row(i))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index_of(word).is_some()
    }

    /// Row indices of the list's words present here, in list order, plus the
    /// number of words that were missing.
    pub fn lookup_all(&self, list: &WordList) -> (Vec<usize>, usize) {
        let mut found = Vec::with_capacity(list.len());
        let mut missing = 0;
        for w in list.words() {
            match self.index_of(w) {
                Some(i) => found.push(i),
                None => missing += 1,
            }
        }
        (found, missing)
    }

    /// Applies `f` to every row, producing a new embedding over the same vocabulary.
    pub fn map_rows<F>(&self, mut f: F) -> Self
    where
        F: FnMut(usize, &[T]) -> Vec<T>,
    {
        let mut data = Vec::with_capacity(self.data.len());
        for i in 0..self.len() {
            let row = f(i, self.row(i));
            assert_eq!(row.len(), self.dim, "map_rows must preserve the dimension");
            data.extend(row);
        }
        Embedding {
            vocab: self.vocab.clone(),
            index: self.index.clone(),
            data,
            dim: self.dim,
        }
    }

    /// Sub-embedding over the given row indices, in that order.
    pub fn select(&self, rows: &[usize]) -> Self {
        let vocab: Vec<String> = rows.iter().map(|&i| self.vocab[i].clone()).collect();
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        Self::from_flat(vocab, data, self.dim).expect("selection of a valid embedding is valid")
    }

    /// Converts every component to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Embedding<U> {
        Embedding {
            vocab: self.vocab.clone(),
            index: self.index.clone(),
            data: self.data.iter().map(|&x| U::lit(x.to_f64_lossy())).collect(),
            dim: self.dim,
        }
    }
}

/// Options for [`read_embeddings`].
#[derive(Debug, Clone, Default)]
pub struct LoadOptions<'a> {
    pub vocab_filter: Option<&'a WordList>,
    /// Accept a file with no records, yielding an empty embedding.
    pub allow_empty: bool,
}

/// Counts gathered while loading.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub lines: usize,
    pub duplicates: usize,
    pub skipped_header: bool,
}

/// Loads a text embedding file, keeping only `vocab_filter` words when given.
pub fn load_embeddings<T: Scalar>(path: impl AsRef<Path>, vocab_filter: Option<&WordList>) -> Result<Embedding<T>> {
    let opts = LoadOptions {
        vocab_filter,
        allow_empty: false,
    };
    load_embeddings_with(path, &opts).map(|(e, _)| e)
}

pub fn load_embeddings_with<T: Scalar>(path: impl AsRef<Path>, opts: &LoadOptions<'_>) -> Result<(Embedding<T>, LoadStats)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(BufReader::new(file), &path.display().to_string(), opts)
}

/// Parses embedding text from any reader. `source_name` labels errors.
///
/// A leading `count dim` line (word2vec text header) is skipped.
pub fn read_embeddings<T: Scalar, R: BufRead>(
    reader: R,
    source_name: &str,
    opts: &LoadOptions<'_>,
) -> Result<(Embedding<T>, LoadStats)> {
    let filter = opts.vocab_filter.map(WordList::to_set);
    let mut stats = LoadStats::default();
    let mut vocab = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut data: Vec<T> = Vec::new();
    let mut dim: Option<usize> = None;

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::parse(source_name, lineno, e.to_string()))?;
        stats.lines += 1;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() {
            continue;
        }
        let mut tokens = trimmed.split(' ').filter(|t| !t.is_empty());
        let word = tokens.next().expect("non-empty line has a token");
        let fields: Vec<&str> = tokens.collect();

        if lineno == 1 && fields.len() == 1 && is_uint(word) && is_uint(fields[0]) {
            stats.skipped_header = true;
            continue;
        }
        if fields.is_empty() {
            return Err(Error::parse(source_name, lineno, format!("word '{word}' has no vector components")));
        }
        match dim {
            None => dim = Some(fields.len()),
            Some(d) if d != fields.len() => {
                return Err(Error::parse(
                    source_name,
                    lineno,
                    format!("expected {d} components, found {}", fields.len()),
                ))
            }
            _ => {}
        }
        if let Some(f) = &filter {
            if !f.contains(word) {
                continue;
            }
        }
        if seen.contains(word) {
            stats.duplicates += 1;
            continue;
        }
        for tok in &fields {
            let x: f64 = tok
                .parse()
                .map_err(|_| Error::parse(source_name, lineno, format!("non-numeric component '{tok}'")))?;
            if !x.is_finite() {
                return Err(Error::parse(source_name, lineno, format!("non-finite component '{tok}'")));
            }
            data.push(T::lit(x));
        }
        seen.insert(word.to_owned());
        vocab.push(word.to_owned());
    }

    if stats.duplicates > 0 {
        warn!("{source_name}: {} duplicate words ignored (first occurrence kept)", stats.duplicates);
    }
    let dim = match dim {
        Some(d) => d,
        None if opts.allow_empty => return Ok((Embedding::empty(0), stats)),
        None => return Err(Error::Empty(format!("{source_name} contains no embedding records"))),
    };
    Ok((Embedding::from_flat(vocab, data, dim)?, stats))
}

fn is_uint(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

/// Writes `emb` in text form. Values are written in shortest round-trip form.
pub fn save_embeddings<T: Scalar>(emb: &Embedding<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_embeddings(emb, &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_embeddings<T: Scalar, W: Write>(emb: &Embedding<T>, out: &mut W) -> std::io::Result<()> {
    let mut buf = String::new();
    for i in 0..emb.len() {
        buf.clear();
        buf.push_str(emb.word(i));
        for &x in emb.row(i) {
            buf.push(' ');
            push_number(&mut buf, x);
        }
        buf.push('\n');
        out.write_all(buf.as_bytes())?;
    }
    Ok(())
}

/// Formats a component: plain decimal for ordinary magnitudes, exponent form
/// otherwise. Both are Rust's shortest round-trip representation.
pub(crate) fn push_number<T: Scalar>(buf: &mut String, x: T) {
    use std::fmt::Write as _;
    let a = x.abs();
    if a == T::zero() || (a >= T::lit(1e-4) && a < T::lit(1e7)) {
        let _ = write!(buf, "{x}");
    } else {
        let _ = write!(buf, "{x:e}");
    }
}

/// True for tokens kept in a target vocabulary: letters only, optionally
/// joined by internal hyphens or apostrophes (`well-known`, `o'clock`).
pub fn is_plain_word(token: &str) -> bool {
    let chars: Vec<char> = token.chars().collect();
    let last = chars.len().saturating_sub(1);
    chars.iter().any(|c| c.is_alphabetic())
        && chars.iter().enumerate().all(|(i, &c)| {
            c.is_alphabetic() || ((c == '-' || c == '\'') && i > 0 && i < last && chars[i - 1].is_alphabetic())
        })
}

/// Frequency-ranked target vocabulary shared by two embeddings.
///
/// Takes each embedding's first `top_k` words (file order is frequency
/// order), intersects them, drops tokens failing [`is_plain_word`] and the
/// `gendered` words. Order follows `emb_a`.
pub fn build_target_vocab<A: Scalar, B: Scalar>(
    emb_a: &Embedding<A>,
    emb_b: &Embedding<B>,
    gendered: &WordList,
    top_k: usize,
) -> WordList {
    let clamp = |n: usize, which: &str| {
        if top_k > n {
            warn!("top_k={top_k} exceeds {which} vocabulary size {n}; clamped");
            n
        } else {
            top_k
        }
    };
    let ka = clamp(emb_a.len(), "first");
    let kb = clamp(emb_b.len(), "second");
    let b_top: HashSet<&str> = emb_b.vocab()[..kb].iter().map(String::as_str).collect();
    let excluded = gendered.to_set();
    let words = emb_a.vocab()[..ka]
        .iter()
        .filter(|w| b_top.contains(w.as_str()))
        .filter(|w| is_plain_word(w))
        .filter(|w| !excluded.contains(w.as_str()))
        .cloned();
    WordList::new("target_vocab", words)
}
