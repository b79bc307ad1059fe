//! Indirect bias between word pairs and the gender-based illicit proximity
//! estimate (GIPE).

use std::cmp::Ordering;

use log::warn;
use rayon::prelude::*;

use crate::embedding::{Embedding, WordList};
use crate::error::{Error, Result};
use crate::linalg::{self, dot, norm};
use crate::subspace::UnitVector;
use crate::Scalar;

/// Why an indirect bias value is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Skip {
    ZeroVector,
    ZeroInnerProduct,
    ZeroPerpendicular,
}

/// Share of the similarity of `w` and `v` that is due to their components
/// along `g`:
///
/// `beta = (<w,v> - <w_p,v_p> / (|w_p| |v_p|)) / <w,v>`
///
/// where `w_p = w - <w,g> g`. `w` and `v` are normalised first.
pub fn indirect_bias<T: Scalar>(w: &[T], v: &[T], g: &[T]) -> std::result::Result<T, Skip> {
    let w = linalg::normalized(w).ok_or(Skip::ZeroVector)?;
    let v = linalg::normalized(v).ok_or(Skip::ZeroVector)?;
    unit_indirect_bias(&w, &v, g)
}

fn unit_indirect_bias<T: Scalar>(w: &[T], v: &[T], g: &[T]) -> std::result::Result<T, Skip> {
    let tiny = T::lit(4.0) * T::epsilon();
    let wv = dot(w, v);
    if wv.abs() <= tiny {
        return Err(Skip::ZeroInnerProduct);
    }
    let mut wp = w.to_vec();
    linalg::axpy(-dot(w, g), g, &mut wp);
    let mut vp = v.to_vec();
    linalg::axpy(-dot(v, g), g, &mut vp);
    let nw = norm(&wp);
    let nv = norm(&vp);
    if nw <= tiny || nv <= tiny {
        return Err(Skip::ZeroPerpendicular);
    }
    Ok((wv - dot(&wp, &vp) / (nw * nv)) / wv)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GipeConfig {
    pub theta: f64,
    pub n_neighbors: usize,
    pub vocab: WordList,
}

impl GipeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::InvalidArgument(format!("theta {} outside (0,1)", self.theta)));
        }
        if self.n_neighbors == 0 {
            return Err(Error::InvalidArgument("n_neighbors must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GipeScore {
    pub value: f64,
    pub words: usize,
    pub missing: usize,
    /// Neighbour pairs whose indirect bias was undefined; they count as
    /// below threshold.
    pub skipped_pairs: usize,
}

/// Indices of the `n` rows most cosine-similar to row `i` (excluding `i`),
/// most similar first; ties go to the lower index. Rows must be unit length.
pub fn nearest_neighbors<T: Scalar>(unit: &Embedding<T>, i: usize, n: usize) -> Vec<usize> {
    let q = unit.row(i);
    let mut cand: Vec<(usize, T)> = (0..unit.len()).filter(|&j| j != i).map(|j| (j, dot(q, unit.row(j)))).collect();
    let cmp = |a: &(usize, T), b: &(usize, T)| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0));
    let n = n.min(cand.len());
    if n < cand.len() {
        cand.select_nth_unstable_by(n, cmp);
        cand.truncate(n);
    }
    cand.sort_by(cmp);
    cand.into_iter().map(|(j, _)| j).collect()
}

/// Mean over the vocabulary of the fraction of each word's nearest
/// neighbours whose indirect bias with it is at least `theta`.
///
/// Neighbours are found by exact cosine search within the vocabulary.
/// Vocabulary words absent from `emb` are dropped with a warning; zero
/// vectors are kept and never count as biased.
pub fn gipe<T: Scalar>(emb: &Embedding<T>, cfg: &GipeConfig, g: &UnitVector<T>) -> Result<GipeScore> {
    cfg.validate()?;
    if emb.dim() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            found: emb.dim(),
        });
    }
    let (idx, missing) = emb.lookup_all(&cfg.vocab);
    if missing > 0 {
        warn!("gipe: {missing} vocabulary words missing from the embedding were dropped");
    }
    if idx.len() < cfg.n_neighbors + 1 {
        return Err(Error::Insufficient(format!(
            "{} vocabulary words for {} neighbours",
            idx.len(),
            cfg.n_neighbors
        )));
    }
    let unit = emb.select(&idx).map_rows(|_, r| linalg::normalized(r).unwrap_or_else(|| vec![T::zero(); r.len()]));
    let theta = T::lit(cfg.theta);
    let per_word: Vec<(usize, usize)> = (0..unit.len())
        .into_par_iter()
        .map(|i| {
            let w = unit.row(i);
            let mut hits = 0;
            let mut skipped = 0;
            for j in nearest_neighbors(&unit, i, cfg.n_neighbors) {
                match unit_indirect_bias(w, unit.row(j), g.as_slice()) {
                    Ok(beta) if beta >= theta => hits += 1,
                    Ok(_) => {}
                    Err(_) => skipped += 1,
                }
            }
            (hits, skipped)
        })
        .collect();
    let n = cfg.n_neighbors as f64;
    // Sequential sum in vocabulary order keeps the result thread-count independent.
    let total: f64 = per_word.iter().map(|&(h, _)| h as f64 / n).sum();
    let skipped_pairs = per_word.iter().map(|&(_, s)| s).sum();
    Ok(GipeScore {
        value: total / unit.len() as f64,
        words: unit.len(),
        missing,
        skipped_pairs,
    })
}
