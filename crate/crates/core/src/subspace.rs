//! Gender subspaces and the direct-bias measures built on them.
//!
//! A [`GenderSubspace`] is spanned by the leading principal directions of
//! female-minus-male name difference vectors. Each basis vector carries the
//! share of variance it explains; the information-weighted direct bias of a
//! word is `sum_i a_i <g_i, w>`.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::warn;
use rayon::prelude::*;

use crate::embedding::{push_number, Embedding, WordList};
use crate::error::{Error, Result};
use crate::linalg::{self, dot, norm};
use crate::Scalar;

/// Unit-length vector.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector<T>(Vec<T>);

impl<T: Scalar> UnitVector<T> {
    /// Normalises `v`; `None` for the zero vector.
    pub fn new(v: &[T]) -> Option<Self> {
        linalg::normalized(v).map(UnitVector)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

/// Norm below which two words are treated as coinciding.
pub const DEGENERATE_NORM: f64 = 1e-10;

/// Normalised `emb[fem] - emb[masc]`.
pub fn gender_direction<T: Scalar>(emb: &Embedding<T>, fem: &str, masc: &str) -> Result<UnitVector<T>> {
    let f = emb.get(fem).ok_or_else(|| Error::MissingWord(fem.to_owned()))?;
    let m = emb.get(masc).ok_or_else(|| Error::MissingWord(masc.to_owned()))?;
    let diff = linalg::sub(f, m);
    let n = norm(&diff);
    if n.to_f64_lossy() <= DEGENERATE_NORM {
        return Err(Error::DegenerateDirection {
            fem: fem.to_owned(),
            masc: masc.to_owned(),
            norm: n.to_f64_lossy(),
        });
    }
    Ok(UnitVector(diff.into_iter().map(|x| x / n).collect()))
}

/// All pairwise `f_j - m_k` difference vectors, `j` outer and `k` inner.
#[derive(Debug, Clone)]
pub struct DifferenceMatrix<T> {
    data: Vec<T>,
    rows: usize,
    dim: usize,
    pub female_used: usize,
    pub male_used: usize,
    pub female_missing: usize,
    pub male_missing: usize,
}

impl<T: Scalar> DifferenceMatrix<T> {
    /// Wraps an explicit row-major matrix.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        Ok(DifferenceMatrix {
            data: rows.concat(),
            rows: rows.len(),
            dim,
            female_used: 0,
            male_used: 0,
            female_missing: 0,
            male_missing: 0,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Column means, i.e. the mean difference vector.
    pub fn mean(&self) -> Vec<T> {
        let mut mean = vec![T::zero(); self.dim];
        for i in 0..self.rows {
            linalg::axpy(T::one(), self.row(i), &mut mean);
        }
        let n = T::from_usize_lossy(self.rows.max(1));
        mean.iter_mut().for_each(|x| *x /= n);
        mean
    }
}

pub fn pairwise_differences<T: Scalar>(
    female: &WordList,
    male: &WordList,
    emb: &Embedding<T>,
) -> Result<DifferenceMatrix<T>> {
    let (f_idx, f_missing) = emb.lookup_all(female);
    let (m_idx, m_missing) = emb.lookup_all(male);
    if f_missing + m_missing > 0 {
        warn!(
            "pairwise differences: {f_missing} of {} female and {m_missing} of {} male words missing",
            female.len(),
            male.len()
        );
    }
    if f_idx.is_empty() || m_idx.is_empty() {
        return Err(Error::Empty(format!(
            "name lists after lookup: {} female, {} male",
            f_idx.len(),
            m_idx.len()
        )));
    }
    let dim = emb.dim();
    let mut data = Vec::with_capacity(f_idx.len() * m_idx.len() * dim);
    for &fj in &f_idx {
        let f = emb.row(fj);
        for &mk in &m_idx {
            data.extend(f.iter().zip(emb.row(mk)).map(|(&a, &b)| a - b));
        }
    }
    Ok(DifferenceMatrix {
        data,
        rows: f_idx.len() * m_idx.len(),
        dim,
        female_used: f_idx.len(),
        male_used: m_idx.len(),
        female_missing: f_missing,
        male_missing: m_missing,
    })
}

/// Orthonormal basis with per-direction information weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GenderSubspace<T> {
    basis: Vec<Vec<T>>,
    weights: Vec<T>,
    total_variance: T,
}

impl<T: Scalar> GenderSubspace<T> {
    /// Validates and assembles a subspace.
    ///
    /// Basis vectors must be orthonormal and weights non-increasing,
    /// non-negative and summing to at most one.
    pub fn new(basis: Vec<Vec<T>>, weights: Vec<T>, total_variance: T) -> Result<Self> {
        if basis.is_empty() {
            return Err(Error::InvalidArgument("subspace needs at least one basis vector".into()));
        }
        if basis.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                found: weights.len(),
            });
        }
        let dim = basis[0].len();
        if let Some(b) = basis.iter().find(|b| b.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: b.len(),
            });
        }
        let tol = orthonormal_tolerance::<T>();
        for i in 0..basis.len() {
            for j in i..basis.len() {
                let ip = dot(&basis[i], &basis[j]).to_f64_lossy();
                let want = if i == j { 1.0 } else { 0.0 };
                if (ip - want).abs() > tol {
                    return Err(Error::InvalidArgument(format!(
                        "basis not orthonormal: <g{}, g{}> = {ip}",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        let w: Vec<f64> = weights.iter().map(|x| x.to_f64_lossy()).collect();
        if w.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidArgument("weights must be non-negative".into()));
        }
        if w.windows(2).any(|p| p[1] > p[0]) {
            return Err(Error::InvalidArgument("weights must be non-increasing".into()));
        }
        if w.iter().sum::<f64>() > 1.0 + 1e-8 {
            return Err(Error::InvalidArgument("weights sum to more than one".into()));
        }
        Ok(GenderSubspace {
            basis,
            weights,
            total_variance,
        })
    }

    /// Number of basis vectors.
    pub fn d(&self) -> usize {
        self.basis.len()
    }

    /// Embedding dimension.
    pub fn dim(&self) -> usize {
        self.basis[0].len()
    }

    pub fn basis(&self) -> &[Vec<T>] {
        &self.basis
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn total_variance(&self) -> T {
        self.total_variance
    }

    /// Serialises as a header line `d d_emb total_variance`, a weights line,
    /// then `d` basis rows in embedding text format (`g1 ...`).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{} {} ", self.d(), self.dim());
        push_number(&mut s, self.total_variance);
        s.push('\n');
        for (i, &a) in self.weights.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            push_number(&mut s, a);
        }
        s.push('\n');
        for (i, g) in self.basis.iter().enumerate() {
            let _ = write!(s, "g{}", i + 1);
            for &x in g {
                s.push(' ');
                push_number(&mut s, x);
            }
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), &path.display().to_string())
    }

    pub fn read<R: BufRead>(reader: R, source_name: &str) -> Result<Self> {
        let mut lines = reader
            .lines()
            .enumerate()
            .map(|(i, l)| l.map(|l| (i + 1, l)))
            .filter(|r| r.as_ref().map_or(true, |(_, l)| !l.trim().is_empty() && !l.starts_with('#')));
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some(Ok(x)) => Ok(x),
                Some(Err(e)) => Err(Error::parse(source_name, 0, e.to_string())),
                None => Err(Error::parse(source_name, 0, format!("missing {what}"))),
            }
        };
        let num = |lineno: usize, tok: &str| -> Result<f64> {
            tok.parse::<f64>()
                .map_err(|_| Error::parse(source_name, lineno, format!("bad number '{tok}'")))
        };

        let (ln, header) = next("header")?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 3 {
            return Err(Error::parse(source_name, ln, "header must be 'd d_emb total_variance'"));
        }
        let d: usize = h[0].parse().map_err(|_| Error::parse(source_name, ln, "bad d"))?;
        let dim: usize = h[1].parse().map_err(|_| Error::parse(source_name, ln, "bad d_emb"))?;
        let total = T::lit(num(ln, h[2])?);

        let (ln, wline) = next("weights")?;
        let weights = wline
            .split_whitespace()
            .map(|t| num(ln, t).map(T::lit))
            .collect::<Result<Vec<T>>>()?;
        if weights.len() != d {
            return Err(Error::parse(source_name, ln, format!("expected {d} weights, found {}", weights.len())));
        }
        let mut basis = Vec::with_capacity(d);
        for i in 0..d {
            let (ln, row) = next(&format!("basis row {}", i + 1))?;
            let vals = row
                .split_whitespace()
                .skip(1)
                .map(|t| num(ln, t).map(T::lit))
                .collect::<Result<Vec<T>>>()?;
            if vals.len() != dim {
                return Err(Error::parse(source_name, ln, format!("expected {dim} components, found {}", vals.len())));
            }
            basis.push(vals);
        }
        GenderSubspace::new(basis, weights, total)
    }
}

fn orthonormal_tolerance<T: Scalar>() -> f64 {
    (1e3 * T::epsilon().to_f64_lossy()).max(1e-8)
}

/// Relative singular-value floor for the numerical rank test.
fn rank_tolerance<T: Scalar>() -> f64 {
    (100.0 * T::epsilon().to_f64_lossy()).max(1e-10)
}

/// Leading `d` principal directions of the (optionally centred) difference
/// matrix, weighted by their share of the total variance.
///
/// Each direction is oriented to have a non-negative inner product with the
/// mean difference vector, so signed scores do not depend on the SVD's sign
/// choices.
pub fn principal_subspace<T: Scalar>(diffs: &DifferenceMatrix<T>, d: usize, center: bool) -> Result<GenderSubspace<T>> {
    if d == 0 {
        return Err(Error::InvalidArgument("subspace dimension must be at least 1".into()));
    }
    let rows = diffs.rows();
    let dim = diffs.dim();
    let mean = diffs.mean();
    let mut data = diffs.data.clone();
    if center {
        for row in data.chunks_exact_mut(dim.max(1)) {
            for (x, &m) in row.iter_mut().zip(&mean) {
                *x -= m;
            }
        }
    }
    if data.iter().all(|&x| x == T::zero()) {
        return Err(Error::ZeroMatrix);
    }
    let svd = linalg::right_svd(&data, rows, dim);
    let s_max = svd.singular_values[0].to_f64_lossy();
    let floor = rank_tolerance::<T>() * s_max;
    let rank = svd
        .singular_values
        .iter()
        .take_while(|s| s.to_f64_lossy() > floor)
        .count();
    if d > rank {
        return Err(Error::RankDeficient { requested: d, rank });
    }

    let denom = T::from_usize_lossy(rows.saturating_sub(1).max(1));
    let variances: Vec<T> = svd.singular_values.iter().map(|&s| s * s / denom).collect();
    let total: T = variances.iter().copied().sum();

    let mut basis = Vec::with_capacity(d);
    let mut weights = Vec::with_capacity(d);
    for i in 0..d {
        let mut g = svd.vectors[i].clone();
        // Re-normalise away the last ulp of drift from the rotations.
        let n = norm(&g);
        g.iter_mut().for_each(|x| *x /= n);
        if dot(&g, &mean) < T::zero() {
            g.iter_mut().for_each(|x| *x = -*x);
        }
        basis.push(g);
        weights.push(variances[i] / total);
    }
    GenderSubspace::new(basis, weights, total)
}

/// Information-weighted direct bias of one vector: `sum_i a_i <g_i, w>`.
///
/// Signed; no absolute value is taken.
pub fn midb_word<T: Scalar>(w: &[T], sub: &GenderSubspace<T>) -> Result<T> {
    if w.len() != sub.dim() {
        return Err(Error::DimensionMismatch {
            expected: sub.dim(),
            found: w.len(),
        });
    }
    Ok(sub
        .basis
        .iter()
        .zip(&sub.weights)
        .fold(T::zero(), |acc, (g, &a)| acc + a * dot(g, w)))
}

/// Mean of a per-word score over the part of a vocabulary found in an embedding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VocabAverage<T> {
    pub value: T,
    pub used: usize,
    pub missing: usize,
    pub skipped: usize,
}

fn ordered_mean<T: Scalar>(values: &[T]) -> T {
    // Sequential sum so the result does not depend on the thread count.
    values.iter().copied().sum::<T>() / T::from_usize_lossy(values.len())
}

pub fn midb_average<T: Scalar>(emb: &Embedding<T>, vocab: &WordList, sub: &GenderSubspace<T>) -> Result<VocabAverage<T>> {
    if emb.dim() != sub.dim() {
        return Err(Error::DimensionMismatch {
            expected: sub.dim(),
            found: emb.dim(),
        });
    }
    let (idx, missing) = emb.lookup_all(vocab);
    if idx.is_empty() {
        return Err(Error::Empty("no vocabulary word present in the embedding".into()));
    }
    let values: Vec<T> = idx
        .par_iter()
        .map(|&i| midb_word(emb.row(i), sub).expect("dimension checked"))
        .collect();
    Ok(VocabAverage {
        value: ordered_mean(&values),
        used: idx.len(),
        missing,
        skipped: 0,
    })
}

/// Mean absolute cosine between vocabulary words and a gender direction.
pub fn direct_bias<T: Scalar>(emb: &Embedding<T>, vocab: &WordList, g: &UnitVector<T>) -> Result<VocabAverage<T>> {
    if emb.dim() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            found: emb.dim(),
        });
    }
    let (idx, missing) = emb.lookup_all(vocab);
    let values: Vec<Option<T>> = idx
        .par_iter()
        .map(|&i| {
            let w = emb.row(i);
            let n = norm(w);
            if n > T::zero() {
                Some((dot(w, g.as_slice()) / n).abs())
            } else {
                None
            }
        })
        .collect();
    let skipped = values.iter().filter(|v| v.is_none()).count();
    if skipped > 0 {
        warn!("direct bias: skipped {skipped} zero-norm words");
    }
    let kept: Vec<T> = values.into_iter().flatten().collect();
    if kept.is_empty() {
        return Err(Error::Empty("no usable vocabulary word for direct bias".into()));
    }
    Ok(VocabAverage {
        value: ordered_mean(&kept),
        used: kept.len(),
        missing,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(words: &[(&str, Vec<f64>)]) -> Embedding<f64> {
        Embedding::from_rows(
            words.iter().map(|(w, _)| w.to_string()).collect(),
            words.iter().map(|(_, v)| v.clone()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn direction_examples() {
        let e = emb(&[("she", vec![2.0, 0.0]), ("he", vec![0.0, 0.0]), ("f", vec![1.0, 1.0]), ("m", vec![0.0, 1.0])]);
        assert_eq!(gender_direction(&e, "she", "he").unwrap().as_slice(), &[1.0, 0.0]);
        assert_eq!(gender_direction(&e, "f", "m").unwrap().as_slice(), &[1.0, 0.0]);
        assert!(matches!(gender_direction(&e, "she", "nope"), Err(Error::MissingWord(_))));
    }

    #[test]
    fn identical_pair_is_degenerate() {
        let e = emb(&[("she", vec![0.3, 0.4]), ("he", vec![0.3, 0.4])]);
        assert!(matches!(gender_direction(&e, "she", "he"), Err(Error::DegenerateDirection { .. })));
    }

    #[test]
    fn difference_rows_in_pair_order() {
        let e = emb(&[("a", vec![1.0, 2.0]), ("b", vec![3.0, -1.0]), ("c", vec![0.5, 0.5])]);
        let d = pairwise_differences(&WordList::new("f", ["a", "b"]), &WordList::new("m", ["c"]), &e).unwrap();
        assert_eq!(d.rows(), 2);
        assert_eq!(d.row(0), &[0.5, 1.5]);
        assert_eq!(d.row(1), &[2.5, -1.5]);

        let single = pairwise_differences(&WordList::new("f", ["b"]), &WordList::new("m", ["a"]), &e).unwrap();
        assert_eq!(single.rows(), 1);
        assert_eq!(single.row(0), &[2.0, -3.0]);
    }

    #[test]
    fn missing_names_dropped_and_counted() {
        let e = emb(&[("a", vec![1.0]), ("c", vec![0.0])]);
        let d = pairwise_differences(&WordList::new("f", ["a", "zz"]), &WordList::new("m", ["c"]), &e).unwrap();
        assert_eq!(d.female_missing, 1);
        assert_eq!(d.rows(), 1);
        let none = pairwise_differences(&WordList::new("f", ["zz"]), &WordList::new("m", ["c"]), &e);
        assert!(matches!(none, Err(Error::Empty(_))));
    }

    #[test]
    fn two_point_pca() {
        let d = DifferenceMatrix::<f64>::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        let sub = principal_subspace(&d, 1, true).unwrap();
        assert!((sub.basis()[0][0].abs() - 1.0).abs() < 1e-12);
        assert!(sub.basis()[0][1].abs() < 1e-12);
        assert!((sub.weights()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_rows_center_to_zero() {
        let d = DifferenceMatrix::<f64>::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert!(matches!(principal_subspace(&d, 1, true), Err(Error::ZeroMatrix)));
        // Without centring the constant direction is the whole story.
        let sub = principal_subspace(&d, 1, false).unwrap();
        assert!((sub.weights()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_check() {
        let d = DifferenceMatrix::<f64>::from_rows(&[vec![1.0, 0.0, 0.0], vec![2.0, 0.0, 0.0], vec![-3.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(principal_subspace(&d, 2, true), Err(Error::RankDeficient { requested: 2, rank: 1 })));
    }

    #[test]
    fn basis_oriented_towards_mean_difference() {
        let d = DifferenceMatrix::<f64>::from_rows(&[vec![3.0, 0.1], vec![1.0, -0.1], vec![2.0, 0.3]]).unwrap();
        let sub = principal_subspace(&d, 1, false).unwrap();
        assert!(dot(&sub.basis()[0], &d.mean()) >= 0.0);
    }

    #[test]
    fn midb_examples() {
        let sub = GenderSubspace::<f64>::new(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], vec![0.5, 0.25], 1.0).unwrap();
        assert_eq!(midb_word(&[0.0, 0.0, 7.0], &sub).unwrap(), 0.0);
        assert_eq!(midb_word(&[1.0, 0.0, 0.0], &sub).unwrap(), 0.5);
        assert!((midb_word(&[2.0, -1.0, 0.0], &sub).unwrap() - 0.75).abs() < 1e-15);
        assert!(matches!(midb_word(&[1.0, 0.0], &sub), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn midb_average_is_mean() {
        let sub = GenderSubspace::new(vec![vec![1.0, 0.0]], vec![1.0], 1.0).unwrap();
        let e = emb(&[("x", vec![0.1, 5.0]), ("y", vec![-0.3, 1.0]), ("z", vec![9.0, 9.0])]);
        let avg = midb_average(&e, &WordList::new("v", ["x", "y", "missing"]), &sub).unwrap();
        assert!((avg.value + 0.1).abs() < 1e-15);
        assert_eq!(avg.used, 2);
        assert_eq!(avg.missing, 1);
        let ortho = emb(&[("p", vec![0.0, 1.0]), ("q", vec![0.0, -2.0])]);
        assert_eq!(midb_average(&ortho, &WordList::new("v", ["p", "q"]), &sub).unwrap().value, 0.0);
        assert!(midb_average(&ortho, &WordList::new("v", ["nope"]), &sub).is_err());
    }

    #[test]
    fn direct_bias_examples() {
        let g = UnitVector::new(&[1.0, 0.0]).unwrap();
        let e = emb(&[("p", vec![0.0, 1.0]), ("q", vec![0.0, -2.0]), ("r", vec![-3.0, 0.0]), ("z", vec![0.0, 0.0])]);
        assert_eq!(direct_bias(&e, &WordList::new("v", ["p", "q"]), &g).unwrap().value, 0.0);
        assert_eq!(direct_bias(&e, &WordList::new("v", ["r"]), &g).unwrap().value, 1.0);
        let with_zero = direct_bias(&e, &WordList::new("v", ["r", "z"]), &g).unwrap();
        assert_eq!(with_zero.skipped, 1);
        assert_eq!(with_zero.value, 1.0);
    }

    #[test]
    fn subspace_text_round_trip() {
        let s = 0.5f64.sqrt();
        let sub = GenderSubspace::new(vec![vec![s, s, 0.0], vec![s, -s, 0.0]], vec![0.6, 0.3], 2.5).unwrap();
        let back = GenderSubspace::<f64>::read(std::io::Cursor::new(sub.to_text()), "mem").unwrap();
        assert_eq!(back, sub);
    }

    #[test]
    fn invalid_subspaces_rejected() {
        assert!(GenderSubspace::new(vec![vec![1.0, 0.0]], vec![1.5], 1.0).is_err());
        assert!(GenderSubspace::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.2, 0.3], 1.0).is_err());
        assert!(GenderSubspace::new(vec![vec![1.0, 0.0], vec![1.0, 0.0]], vec![0.5, 0.3], 1.0).is_err());
        assert!(GenderSubspace::new(vec![vec![2.0, 0.0]], vec![0.5], 1.0).is_err());
    }
}
