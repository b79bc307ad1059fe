//! Shared helpers and brute-force reference implementations for the
//! integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use embias::embedding::{Embedding, WordList};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn words(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// `n` standard-normal rows named `w0..w{n-1}`.
pub fn gaussian_embedding(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Embedding<f64> {
    let rows = (0..n).map(|_| gaussian_vec(rng, dim)).collect();
    Embedding::from_rows(words("w", n), rows).unwrap()
}

pub fn with_words(emb: &Embedding<f64>, extra: &[(&str, Vec<f64>)]) -> Embedding<f64> {
    let mut vocab = emb.vocab().to_vec();
    let mut rows: Vec<Vec<f64>> = emb.rows().map(|r| r.to_vec()).collect();
    for (w, v) in extra {
        vocab.push((*w).to_owned());
        rows.push(v.clone());
    }
    Embedding::from_rows(vocab, rows).unwrap()
}

pub fn all_words(emb: &Embedding<f64>) -> WordList {
    WordList::new("all", emb.vocab().iter().cloned())
}

/// Haar-distributed orthogonal matrix from QR of a Gaussian matrix.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = a.qr();
    let (q, r) = (qr.q(), qr.r());
    let signs = DMatrix::from_diagonal(&r.diagonal().map(|x: f64| if x < 0.0 { -1.0 } else { 1.0 }));
    q * signs
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Header plus rows of a tab-separated fixture.
pub fn read_tsv(name: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(fixture(name)).unwrap();
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().unwrap().split('\t').map(str::to_owned).collect();
    let rows = lines.map(|l| l.split('\t').map(str::to_owned).collect()).collect();
    (header, rows)
}

/// Asymptotic one-sample Kolmogorov-Smirnov p-value against U(0,1).
pub fn ks_uniform_pvalue(samples: &[f64]) -> f64 {
    let mut x = samples.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in x.iter().enumerate() {
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((hi - v).abs()).max((v - lo).abs());
    }
    let sn = n.sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    let mut p = 0.0;
    for j in 1..=100 {
        let j = j as f64;
        p += 2.0 * (-1f64).powf(j - 1.0) * (-2.0 * j * j * lambda * lambda).exp();
    }
    p.clamp(0.0, 1.0)
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn dotp(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    dotp(a, b) / (dotp(a, a).sqrt() * dotp(b, b).sqrt())
}

/// Top-`d` eigenvectors (columns) and variance shares of the sample
/// covariance of `rows`, from a symmetric eigendecomposition.
pub fn pca_oracle(rows: &[Vec<f64>], d: usize, center: bool) -> (DMatrix<f64>, Vec<f64>) {
    let n = rows.len();
    let dim = rows[0].len();
    let mut x = DMatrix::from_fn(n, dim, |i, j| rows[i][j]);
    if center {
        for j in 0..dim {
            let m = x.column(j).mean();
            x.column_mut(j).add_scalar_mut(-m);
        }
    }
    let cov = x.transpose() * &x / ((n - 1).max(1) as f64);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let vecs = DMatrix::from_fn(dim, d, |i, k| eig.eigenvectors[(i, order[k])]);
    let shares = order[..d].iter().map(|&k| eig.eigenvalues[k] / total).collect();
    (vecs, shares)
}

/// Largest principal angle (radians) between the column spans of `a` and `b`.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let m = a.transpose() * b;
    let s = m.svd(false, false).singular_values;
    let smin = s.iter().cloned().fold(f64::INFINITY, f64::min).min(1.0);
    // acos is ill-conditioned near 1; use the sine of the angle instead.
    let proj = b - a * (a.transpose() * b);
    let sin = proj.svd(false, false).singular_values.max();
    smin.acos().min(sin.min(1.0).asin())
}

/// Fraction-of-biased-neighbours average computed by sorting every
/// neighbour list in full and using `1 - cos(w_p, v_p) / cos(w, v)`.
pub fn gipe_oracle(emb: &Embedding<f64>, vocab: &[String], g: &[f64], theta: f64, k: usize) -> f64 {
    let rows: Vec<Vec<f64>> = vocab.iter().filter_map(|w| emb.get(w)).map(unit).collect();
    let perp = |v: &[f64]| -> Vec<f64> {
        let p = dotp(v, g);
        v.iter().zip(g).map(|(x, gi)| x - p * gi).collect()
    };
    let mut total = 0.0;
    for (i, w) in rows.iter().enumerate() {
        let mut others: Vec<(usize, f64)> = rows.iter().enumerate().filter(|(j, _)| *j != i).map(|(j, v)| (j, cos(w, v))).collect();
        others.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let mut hits = 0;
        for &(j, c) in others.iter().take(k) {
            let beta = 1.0 - cos(&perp(w), &perp(&rows[j])) / c;
            if beta >= theta {
                hits += 1;
            }
        }
        total += hits as f64 / k as f64;
    }
    total / rows.len() as f64
}

/// Index of the pair `(a, b)` maximising `cos(m - f, a - b)`; first wins ties.
pub fn sembias_oracle(emb: &Embedding<f64>, pairs: &[(String, String)], f: &str, m: &str) -> usize {
    let dir: Vec<f64> = emb.get(m).unwrap().iter().zip(emb.get(f).unwrap()).map(|(x, y)| x - y).collect();
    let scores: Vec<f64> = pairs
        .iter()
        .map(|(a, b)| {
            let d: Vec<f64> = emb.get(a).unwrap().iter().zip(emb.get(b).unwrap()).map(|(x, y)| x - y).collect();
            cos(&dir, &d)
        })
        .collect();
    let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    scores.iter().position(|&s| s == best).unwrap()
}

/// `argmax_x cos(x, b - a + c)` over all rows except the query rows.
pub fn three_cos_add_oracle(emb: &Embedding<f64>, a: usize, b: usize, c: usize) -> usize {
    let u: Vec<Vec<f64>> = emb.rows().map(unit).collect();
    let t: Vec<f64> = (0..emb.dim()).map(|k| u[b][k] - u[a][k] + u[c][k]).collect();
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for (j, row) in u.iter().enumerate() {
        if [a, b, c].contains(&j) {
            continue;
        }
        let s = cos(row, &t);
        if s > best.1 {
            best = (j, s);
        }
    }
    best.0
}
