//! Soft and hard projections out of a gender subspace.
//!
//! Every method computes `w - sum_i c_i <g_i, w> g_i` for some coefficient
//! vector `c`: the subspace weights themselves (soft projection), all ones
//! (multi-dimensional hard debias) or the weights reassigned by a
//! permutation. Inputs are never modified.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::embedding::{Embedding, WordList};
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot};
use crate::subspace::{GenderSubspace, UnitVector};
use crate::Scalar;

/// Largest subspace dimension accepted by [`enumerate_permutations`].
pub const MAX_PERMUTATION_DIM: usize = 8;

/// Reassignment of subspace weights to basis vectors.
///
/// Written 1-based: position `i` of `"1243"` names the weight applied to
/// basis vector `g_i`, so `"1243"` applies `a_4` to `g_3` and `a_3` to `g_4`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    /// From zero-based indices.
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        let n = indices.len();
        let mut seen = vec![false; n];
        for &i in &indices {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidPermutation(format!("{indices:?} is not a permutation of 0..{n}")));
            }
        }
        if n == 0 {
            return Err(Error::InvalidPermutation("empty permutation".into()));
        }
        Ok(Permutation(indices))
    }

    pub fn identity(d: usize) -> Self {
        Permutation((0..d).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &p)| i == p)
    }

    /// Zero-based index of the weight applied to basis vector `i`.
    pub fn source(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &i in &self.0 {
            write!(f, "{}", i + 1)?;
        }
        Ok(())
    }
}

impl FromStr for Permutation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let indices = s
            .trim()
            .chars()
            .map(|c| match c.to_digit(10) {
                Some(d) if d >= 1 => Ok(d as usize - 1),
                _ => Err(Error::InvalidPermutation(format!("'{s}': expected digits 1-9"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Permutation::new(indices)
    }
}

/// All `d!` orderings of `1..=d` in lexicographic order; the identity comes first.
pub fn enumerate_permutations(d: usize) -> Result<Vec<Permutation>> {
    if d == 0 {
        return Err(Error::InvalidArgument("permutation size must be at least 1".into()));
    }
    if d > MAX_PERMUTATION_DIM {
        return Err(Error::InvalidArgument(format!(
            "refusing to enumerate {d}! permutations (limit d <= {MAX_PERMUTATION_DIM})"
        )));
    }
    let mut current: Vec<usize> = (0..d).collect();
    let mut out = vec![Permutation(current.clone())];
    while next_permutation(&mut current) {
        out.push(Permutation(current.clone()));
    }
    Ok(out)
}

/// Non-identity permutations of `1..=d`.
pub fn alternative_permutations(d: usize) -> Result<Vec<Permutation>> {
    Ok(enumerate_permutations(d)?.into_iter().skip(1).collect())
}

fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = v.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let j = v.iter().rposition(|&x| x > v[i]).expect("pivot has a successor");
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Soft projection with the subspace's own weights.
    Misp,
    /// Full projection (all weights one).
    Mhd,
    /// Soft projection with permuted weights.
    MispPermuted,
    /// Single-direction projection of a target set.
    Neutralize,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "misp" => Ok(Method::Misp),
            "mhd" => Ok(Method::Mhd),
            "misp_permuted" | "misp-permuted" | "permuted" => Ok(Method::MispPermuted),
            "neutralize" => Ok(Method::Neutralize),
            _ => Err(Error::InvalidArgument(format!("unknown debias method '{s}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DebiasSpec {
    pub method: Method,
    pub permutation: Option<Permutation>,
    /// Words copied through unchanged.
    pub exclude: Option<WordList>,
}

impl DebiasSpec {
    pub fn misp() -> Self {
        DebiasSpec {
            method: Method::Misp,
            permutation: None,
            exclude: None,
        }
    }

    pub fn mhd() -> Self {
        DebiasSpec {
            method: Method::Mhd,
            permutation: None,
            exclude: None,
        }
    }

    pub fn permuted(permutation: Permutation) -> Self {
        DebiasSpec {
            method: Method::MispPermuted,
            permutation: Some(permutation),
            exclude: None,
        }
    }

    pub fn with_exclude(mut self, exclude: WordList) -> Self {
        self.exclude = Some(exclude);
        self
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        match (self.method, &self.permutation) {
            (Method::MispPermuted, None) => Err(Error::InvalidPermutation("misp_permuted requires a permutation".into())),
            (Method::MispPermuted, Some(p)) if p.len() != d => Err(Error::InvalidPermutation(format!(
                "permutation {p} has length {} but the subspace has {d} directions",
                p.len()
            ))),
            (Method::MispPermuted, Some(_)) => Ok(()),
            (_, Some(_)) => Err(Error::InvalidPermutation("a permutation is only valid with misp_permuted".into())),
            (_, None) => Ok(()),
        }
    }

    /// Projection coefficient for each basis vector.
    pub fn coefficients<T: Scalar>(&self, sub: &GenderSubspace<T>) -> Result<Vec<T>> {
        self.validate(sub.d())?;
        let a = sub.weights();
        match self.method {
            Method::Misp => Ok(a.to_vec()),
            Method::Mhd => Ok(vec![T::one(); a.len()]),
            Method::MispPermuted => {
                let p = self.permutation.as_ref().expect("validated");
                Ok((0..a.len()).map(|i| a[p.source(i)]).collect())
            }
            Method::Neutralize => Err(Error::InvalidArgument(
                "neutralize projects along a single direction; use debias::neutralize".into(),
            )),
        }
    }
}

/// `w - sum_i c_i <g_i, w> g_i` for a single vector.
pub fn project_out<T: Scalar>(w: &[T], basis: &[Vec<T>], coeffs: &[T]) -> Vec<T> {
    let mut out = w.to_vec();
    for (g, &c) in basis.iter().zip(coeffs) {
        let p = dot(g, w);
        axpy(-(c * p), g, &mut out);
    }
    out
}

/// Soft projection (and its hard / permuted variants) applied to every word
/// not in `spec.exclude`.
pub fn misp<T: Scalar>(emb: &Embedding<T>, sub: &GenderSubspace<T>, spec: &DebiasSpec) -> Result<Embedding<T>> {
    if emb.dim() != sub.dim() {
        return Err(Error::DimensionMismatch {
            expected: sub.dim(),
            found: emb.dim(),
        });
    }
    let coeffs = spec.coefficients(sub)?;
    let keep = excluded_rows(emb, spec.exclude.as_ref());
    Ok(transform_rows(emb, |i, w| {
        if keep.contains(&i) {
            w.to_vec()
        } else {
            project_out(w, sub.basis(), &coeffs)
        }
    }))
}

/// Removes the component along `g` from each target word; other rows are copied.
pub fn neutralize<T: Scalar>(emb: &Embedding<T>, g: &UnitVector<T>, targets: &WordList) -> Result<Embedding<T>> {
    if emb.dim() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            found: emb.dim(),
        });
    }
    let (rows, missing) = emb.lookup_all(targets);
    if missing > 0 {
        log::warn!("neutralize: {missing} target words not in the embedding");
    }
    let targets: HashSet<usize> = rows.into_iter().collect();
    let basis = [g.as_slice().to_vec()];
    let one = [T::one()];
    Ok(transform_rows(emb, |i, w| {
        if targets.contains(&i) {
            project_out(w, &basis, &one)
        } else {
            w.to_vec()
        }
    }))
}

fn excluded_rows<T: Scalar>(emb: &Embedding<T>, exclude: Option<&WordList>) -> HashSet<usize> {
    // Exact matches only: excluding "He" must not also freeze "he".
    exclude
        .map(|list| list.words().iter().filter_map(|w| emb.index_exact(w)).collect())
        .unwrap_or_default()
}

fn transform_rows<T, F>(emb: &Embedding<T>, f: F) -> Embedding<T>
where
    T: Scalar,
    F: Fn(usize, &[T]) -> Vec<T> + Sync,
{
    let rows: Vec<Vec<T>> = (0..emb.len()).into_par_iter().map(|i| f(i, emb.row(i))).collect();
    let data: Vec<T> = rows.into_iter().flatten().collect();
    Embedding::from_flat(emb.vocab().to_vec(), data, emb.dim()).expect("row transform preserves shape")
}
