//! k-means clustering bias and the v-measure.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::LabeledWordSet;
use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::{Gender, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions {
            restarts: 10,
            max_iter: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub iterations: usize,
    /// Some cluster ended up with no points.
    pub degenerate: bool,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.gen_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], k: usize, max_iter: usize, rng: &mut ChaCha8Rng) -> KMeans {
    let dim = points[0].len();
    let mut centroids = plus_plus_init(points, k, rng);
    let mut assignments = vec![usize::MAX; points.len()];
    let mut iterations = 0;
    let mut degenerate = false;
    while iterations < max_iter {
        iterations += 1;
        let mut changed = false;
        for (a, p) in assignments.iter_mut().zip(points) {
            let (j, _) = nearest(p, &centroids);
            if *a != j {
                *a = j;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assignments.iter().zip(points) {
            counts[a] += 1;
            for (s, &x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        degenerate = counts.contains(&0);
        for ((c, s), &n) in centroids.iter_mut().zip(sums).zip(&counts) {
            if n > 0 {
                *c = s.into_iter().map(|x| x / n as f64).collect();
            }
        }
    }
    let mut counts = vec![0usize; k];
    for &a in &assignments {
        counts[a] += 1;
    }
    degenerate |= counts.contains(&0);
    let inertia = points.iter().zip(&assignments).map(|(p, &a)| sq_dist(p, &centroids[a])).sum();
    KMeans {
        assignments,
        centroids,
        inertia,
        iterations,
        degenerate,
    }
}

/// Lloyd's algorithm with k-means++ seeding, keeping the lowest-inertia run.
///
/// Restart `r` draws from stream `r` of a ChaCha8 generator seeded with
/// `seed`, so the result does not depend on thread scheduling. Runs that end
/// with an empty cluster are discarded; if every run does, the best of them
/// is returned with `degenerate` set.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, opts: &KMeansOptions) -> Result<KMeans> {
    if k == 0 || opts.restarts == 0 || opts.max_iter == 0 {
        return Err(Error::InvalidArgument("k, restarts and max_iter must be positive".into()));
    }
    if points.len() < k {
        return Err(Error::Insufficient(format!("{} points for {k} clusters", points.len())));
    }
    let runs: Vec<KMeans> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            lloyd(points, k, opts.max_iter, &mut rng)
        })
        .collect();
    let pick = |allow_degenerate: bool| {
        runs.iter()
            .filter(|r| allow_degenerate || !r.degenerate)
            .fold(None::<&KMeans>, |best, r| match best {
                Some(b) if b.inertia <= r.inertia => Some(b),
                _ => Some(r),
            })
    };
    match pick(false) {
        Some(best) => Ok(best.clone()),
        None => {
            warn!("k-means: every restart left an empty cluster");
            Ok(pick(true).expect("at least one restart").clone())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VMeasure {
    pub homogeneity: f64,
    pub completeness: f64,
    pub v_measure: f64,
}

fn entropy(counts: impl Iterator<Item = usize>, total: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum()
}

/// Homogeneity, completeness and their harmonic mean for a clustering
/// `pred` of items with classes `truth`.
pub fn v_measure(truth: &[usize], pred: &[usize]) -> VMeasure {
    assert_eq!(truth.len(), pred.len());
    let n = truth.len() as f64;
    let nc = truth.iter().max().map_or(0, |m| m + 1);
    let nk = pred.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0usize; nk]; nc];
    for (&c, &k) in truth.iter().zip(pred) {
        table[c][k] += 1;
    }
    let class_counts: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let cluster_counts: Vec<usize> = (0..nk).map(|k| table.iter().map(|r| r[k]).sum()).collect();
    let h_c = entropy(class_counts.iter().copied(), n);
    let h_k = entropy(cluster_counts.iter().copied(), n);
    let mut h_c_given_k = 0.0;
    let mut h_k_given_c = 0.0;
    for (c, row) in table.iter().enumerate() {
        for (k, &n_ck) in row.iter().enumerate() {
            if n_ck == 0 {
                continue;
            }
            let joint = n_ck as f64 / n;
            h_c_given_k -= joint * (n_ck as f64 / cluster_counts[k] as f64).ln();
            h_k_given_c -= joint * (n_ck as f64 / class_counts[c] as f64).ln();
        }
    }
    let homogeneity = if h_c == 0.0 { 1.0 } else { 1.0 - h_c_given_k / h_c };
    let completeness = if h_k == 0.0 { 1.0 } else { 1.0 - h_k_given_c / h_k };
    let v_measure = if homogeneity + completeness == 0.0 {
        0.0
    } else {
        2.0 * homogeneity * completeness / (homogeneity + completeness)
    };
    VMeasure {
        homogeneity,
        completeness,
        v_measure,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClusterOptions {
    pub kmeans: KMeansOptions,
    /// Cluster unit-normalised vectors instead of raw ones.
    pub normalize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterScore {
    pub accuracy: f64,
    pub v_measure: f64,
    pub homogeneity: f64,
    pub completeness: f64,
    pub used: usize,
    pub missing: usize,
}

pub(crate) fn label_index(g: Gender) -> usize {
    match g {
        Gender::Female => 0,
        Gender::Male => 1,
    }
}

/// Collects the labelled words present in `emb` as `f64` rows.
pub(crate) fn gather<T: Scalar>(emb: &Embedding<T>, set: &LabeledWordSet, normalize: bool) -> (Vec<Vec<f64>>, Vec<usize>, usize) {
    let mut xs = Vec::with_capacity(set.len());
    let mut ys = Vec::with_capacity(set.len());
    let mut missing = 0;
    for (w, g) in set.iter() {
        match emb.get(w) {
            Some(row) => {
                let mut x: Vec<f64> = row.iter().map(|v| v.to_f64_lossy()).collect();
                if normalize {
                    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if n > 0.0 {
                        x.iter_mut().for_each(|v| *v /= n);
                    }
                }
                xs.push(x);
                ys.push(label_index(g));
            }
            None => missing += 1,
        }
    }
    if missing > 0 {
        warn!("{missing} labelled words missing from the embedding were dropped");
    }
    (xs, ys, missing)
}

/// How well k-means (k = 2) on `deb` recovers the labels of `wordset`.
///
/// Accuracy is the better of the two ways to match clusters to labels.
pub fn clustering_bias<T: Scalar>(
    deb: &Embedding<T>,
    wordset: &LabeledWordSet,
    k: usize,
    seed: u64,
    opts: &ClusterOptions,
) -> Result<ClusterScore> {
    if k != 2 {
        return Err(Error::InvalidArgument(format!("clustering bias needs k = 2, got {k}")));
    }
    let (xs, ys, missing) = gather(deb, wordset, opts.normalize);
    if xs.len() < 2 {
        return Err(Error::Insufficient("fewer than 2 labelled words in the embedding".into()));
    }
    let km = kmeans(&xs, k, seed, &opts.kmeans)?;
    let agree = ys.iter().zip(&km.assignments).filter(|(y, a)| y == a).count();
    let n = ys.len();
    let accuracy = agree.max(n - agree) as f64 / n as f64;
    let vm = v_measure(&ys, &km.assignments);
    Ok(ClusterScore {
        accuracy,
        v_measure: vm.v_measure,
        homogeneity: vm.homogeneity,
        completeness: vm.completeness,
        used: n,
        missing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn v_measure_perfect_and_swapped() {
        let t = [0, 0, 1, 1];
        assert_eq!(v_measure(&t, &[0, 0, 1, 1]).v_measure, 1.0);
        assert_eq!(v_measure(&t, &[1, 1, 0, 0]).v_measure, 1.0);
    }

    #[test]
    fn v_measure_single_cluster_is_zero() {
        let vm = v_measure(&[0, 1, 0, 1], &[0, 0, 0, 0]);
        assert_eq!(vm.homogeneity, 0.0);
        assert_eq!(vm.completeness, 1.0);
        assert_eq!(vm.v_measure, 0.0);
    }

    #[test]
    fn v_measure_known_value() {
        // truth [0,0,1,1], pred [0,0,0,1]: H(C)=ln2, H(C|K) = 3/4 * H(1/3,2/3).
        let vm = v_measure(&[0, 0, 1, 1], &[0, 0, 0, 1]);
        let h23 = -(1.0 / 3.0f64) * (1.0 / 3.0f64).ln() - (2.0 / 3.0f64) * (2.0 / 3.0f64).ln();
        let h = 1.0 - 0.75 * h23 / 2f64.ln();
        assert!((vm.homogeneity - h).abs() < 1e-12);
    }

    #[test]
    fn separated_blobs() {
        let mut pts = Vec::new();
        for i in 0..20 {
            let j = i as f64 * 0.01;
            pts.push(vec![10.0 + j, -j]);
            pts.push(vec![-10.0 - j, j]);
        }
        let km = kmeans(&pts, 2, 7, &KMeansOptions::default()).unwrap();
        let truth: Vec<usize> = (0..40).map(|i| i % 2).collect();
        assert_eq!(v_measure(&truth, &km.assignments).v_measure, 1.0);
        assert!(!km.degenerate);
    }

    #[test]
    fn identical_points_degenerate() {
        let pts = vec![vec![1.0, 1.0]; 6];
        let km = kmeans(&pts, 2, 1, &KMeansOptions::default()).unwrap();
        assert!(km.degenerate);
        let truth = [0, 1, 0, 1, 0, 1];
        assert_eq!(v_measure(&truth, &km.assignments).v_measure, 0.0);
    }

    #[test]
    fn kmeans_is_deterministic() {
        let pts: Vec<Vec<f64>> = (0..50).map(|i| vec![((i * 7) % 13) as f64, ((i * 5) % 11) as f64]).collect();
        let a = kmeans(&pts, 2, 42, &KMeansOptions::default()).unwrap();
        let b = kmeans(&pts, 2, 42, &KMeansOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}
