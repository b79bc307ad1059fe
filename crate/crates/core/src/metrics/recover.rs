//! Recoverability bias: how accurately a classifier trained on a small
//! labelled sample predicts the gender label of held-out words.

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cluster::gather;
use super::LabeledWordSet;
use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classifier {
    Logistic,
    Mlp,
}

impl FromStr for Classifier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" | "lr" | "LR" => Ok(Classifier::Logistic),
            "mlp" | "MLP" => Ok(Classifier::Mlp),
            _ => Err(Error::InvalidArgument(format!("unknown classifier '{s}'"))),
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticOptions {
    pub lambda: f64,
    pub max_epochs: usize,
    pub tol: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        LogisticOptions {
            lambda: 1e-4,
            max_epochs: 5000,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Logistic {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub epochs: usize,
    pub grad_norm: f64,
}

/// Mean cross-entropy plus `lambda/2 |w|^2` (bias unpenalised), and its
/// gradient with respect to `w` and `b`. Labels are 0 or 1.
pub fn logistic_loss_grad(w: &[f64], b: f64, xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> (f64, Vec<f64>, f64) {
    let n = xs.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z = x.iter().zip(w).map(|(a, c)| a * c).sum::<f64>() + b;
        loss += softplus(z) - y * z;
        let r = sigmoid(z) - y;
        gb += r;
        for (g, &xi) in gw.iter_mut().zip(x) {
            *g += r * xi;
        }
    }
    let reg: f64 = w.iter().map(|v| v * v).sum();
    let loss = loss / n + 0.5 * lambda * reg;
    for (g, &wi) in gw.iter_mut().zip(w) {
        *g = *g / n + lambda * wi;
    }
    (loss, gw, gb / n)
}

/// Full-batch gradient descent with step `1/L`, where `L` bounds the
/// curvature of the loss: `(max |x|^2 + 1)/4 + lambda`.
pub fn fit_logistic(xs: &[Vec<f64>], ys: &[f64], opts: &LogisticOptions) -> Logistic {
    let dim = xs.first().map_or(0, Vec::len);
    let max_sq = xs.iter().map(|x| x.iter().map(|v| v * v).sum::<f64>()).fold(0.0, f64::max);
    let step = 1.0 / ((max_sq + 1.0) / 4.0 + opts.lambda);
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut epochs = 0;
    let mut grad_norm = f64::INFINITY;
    while epochs < opts.max_epochs {
        let (_, gw, gb) = logistic_loss_grad(&w, b, xs, ys, opts.lambda);
        grad_norm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
        if grad_norm < opts.tol {
            break;
        }
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= step * g;
        }
        b -= step * gb;
        epochs += 1;
    }
    Logistic {
        weights: w,
        bias: b,
        epochs,
        grad_norm,
    }
}

impl Logistic {
    pub fn predict(&self, x: &[f64]) -> usize {
        let z = x.iter().zip(&self.weights).map(|(a, c)| a * c).sum::<f64>() + self.bias;
        usize::from(z >= 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpOptions {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for MlpOptions {
    fn default() -> Self {
        MlpOptions {
            hidden: 32,
            epochs: 200,
            learning_rate: 0.01,
        }
    }
}

/// One hidden ReLU layer and a sigmoid output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    w1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
}

impl Mlp {
    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        self.w1
            .iter()
            .zip(&self.b1)
            .map(|(row, &b)| (row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b).max(0.0))
            .collect()
    }

    fn logit(&self, h: &[f64]) -> f64 {
        h.iter().zip(&self.w2).map(|(a, c)| a * c).sum::<f64>() + self.b2
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        usize::from(self.logit(&self.hidden(x)) >= 0.0)
    }
}

/// Per-sample SGD on binary cross-entropy, reshuffling every epoch.
/// Weights start He-uniform (hidden) and Glorot-uniform (output).
pub fn fit_mlp(xs: &[Vec<f64>], ys: &[f64], opts: &MlpOptions, seed: u64) -> Mlp {
    let dim = xs.first().map_or(0, Vec::len);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r1 = (6.0 / dim.max(1) as f64).sqrt();
    let r2 = (6.0 / (opts.hidden + 1) as f64).sqrt();
    let mut net = Mlp {
        w1: (0..opts.hidden).map(|_| (0..dim).map(|_| rng.gen_range(-r1..r1)).collect()).collect(),
        b1: vec![0.0; opts.hidden],
        w2: (0..opts.hidden).map(|_| rng.gen_range(-r2..r2)).collect(),
        b2: 0.0,
    };
    let lr = opts.learning_rate;
    let mut order: Vec<usize> = (0..xs.len()).collect();
    for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let x = &xs[i];
            let h = net.hidden(x);
            let r = sigmoid(net.logit(&h)) - ys[i];
            for j in 0..opts.hidden {
                if h[j] > 0.0 {
                    let delta = r * net.w2[j];
                    for (w, &xi) in net.w1[j].iter_mut().zip(x) {
                        *w -= lr * delta * xi;
                    }
                    net.b1[j] -= lr * delta;
                }
                net.w2[j] -= lr * r * h[j];
            }
            net.b2 -= lr * r;
        }
    }
    net
}

/// Per-class shuffled split; each class contributes `round(train_frac * n_c)`
/// training items and at least one item to each side.
pub fn stratified_split(labels: &[usize], train_frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidArgument(format!("train fraction {train_frac} outside (0,1)")));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in 0..classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if idx.is_empty() {
            continue;
        }
        idx.shuffle(&mut rng);
        let n_train = (train_frac * idx.len() as f64).round() as usize;
        if n_train == 0 || n_train == idx.len() {
            return Err(Error::Insufficient(format!(
                "class {c} with {} items cannot be split at fraction {train_frac}",
                idx.len()
            )));
        }
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    Ok((train, test))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoverOptions {
    pub train_frac: f64,
    pub classifier: Classifier,
    pub seed: u64,
    /// Train on unit-normalised vectors.
    pub normalize: bool,
    pub logistic: LogisticOptions,
    pub mlp: MlpOptions,
}

impl Default for RecoverOptions {
    fn default() -> Self {
        RecoverOptions {
            train_frac: 0.2,
            classifier: Classifier::Logistic,
            seed: 0,
            normalize: false,
            logistic: LogisticOptions::default(),
            mlp: MlpOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoverScore {
    pub accuracy: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub missing: usize,
}

/// Classifies raw feature rows; split, train, and score on the held-out part.
pub fn recoverability_xy(xs: &[Vec<f64>], ys: &[usize], opts: &RecoverOptions) -> Result<RecoverScore> {
    let classes = ys.iter().collect::<std::collections::BTreeSet<_>>().len();
    if classes != 2 {
        return Err(Error::Insufficient(format!("need two classes, found {classes}")));
    }
    let (train, test) = stratified_split(ys, opts.train_frac, opts.seed)?;
    let tx: Vec<Vec<f64>> = train.iter().map(|&i| xs[i].clone()).collect();
    let ty: Vec<f64> = train.iter().map(|&i| ys[i] as f64).collect();
    let predict: Box<dyn Fn(&[f64]) -> usize> = match opts.classifier {
        Classifier::Logistic => {
            let m = fit_logistic(&tx, &ty, &opts.logistic);
            Box::new(move |x| m.predict(x))
        }
        Classifier::Mlp => {
            let m = fit_mlp(&tx, &ty, &opts.mlp, opts.seed);
            Box::new(move |x| m.predict(x))
        }
    };
    let correct = test.iter().filter(|&&i| predict(&xs[i]) == ys[i]).count();
    Ok(RecoverScore {
        accuracy: correct as f64 / test.len() as f64,
        n_train: train.len(),
        n_test: test.len(),
        missing: 0,
    })
}

pub fn recoverability<T: Scalar>(deb: &Embedding<T>, wordset: &LabeledWordSet, opts: &RecoverOptions) -> Result<RecoverScore> {
    let (xs, ys, missing) = gather(deb, wordset, opts.normalize);
    let mut score = recoverability_xy(&xs, &ys, opts)?;
    score.missing = missing;
    Ok(score)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_matches_naive() {
        for z in [-30.0, -1.0, 0.0, 2.5, 30.0f64] {
            assert!((softplus(z) - (1.0 + z.exp()).ln()).abs() < 1e-12);
        }
        assert!(softplus(1000.0).is_finite());
    }

    #[test]
    fn split_is_stratified() {
        let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let (tr, te) = stratified_split(&labels, 0.2, 3).unwrap();
        assert_eq!(tr.len(), 20);
        assert_eq!(te.len(), 80);
        assert_eq!(tr.iter().filter(|&&i| labels[i] == 0).count(), 10);
    }

    #[test]
    fn degenerate_split() {
        assert!(stratified_split(&[0, 1], 0.2, 0).is_err());
        assert!(stratified_split(&[0, 1, 0, 1], 1.0, 0).is_err());
    }

    #[test]
    fn logistic_learns_threshold() {
        let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 10.0 - 2.0]).collect();
        let ys: Vec<f64> = (0..40).map(|i| if i >= 20 { 1.0 } else { 0.0 }).collect();
        let m = fit_logistic(&xs, &ys, &LogisticOptions::default());
        let acc = xs.iter().zip(&ys).filter(|(x, &y)| m.predict(x) as f64 == y).count();
        assert_eq!(acc, 40);
    }

    #[test]
    fn mlp_learns_xor_like_split() {
        // Classes separated by |x|: not linearly separable.
        let xs: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64 / 10.0 - 3.0]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| if x[0].abs() > 1.5 { 1.0 } else { 0.0 }).collect();
        let opts = MlpOptions {
            epochs: 400,
            ..MlpOptions::default()
        };
        let m = fit_mlp(&xs, &ys, &opts, 5);
        let acc = xs.iter().zip(&ys).filter(|(x, &y)| m.predict(x) as f64 == y).count();
        assert!(acc >= 54, "accuracy {acc}/60");
    }
}
