mod common;

use embias::eval::{self, PredictionSet, Probs, Scored, Selector};
use embias::metrics::recover::{fit_logistic, logistic_loss_grad, LogisticOptions};
use embias::metrics::{self, Classifier, ClusterOptions, LabeledWordSet, RecoverOptions};
use embias::stats::{pearson, spearman};
use embias::Gender;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn random_probs(rng: &mut impl Rng) -> Probs {
    let v: [f64; 3] = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
    let s: f64 = v.iter().sum();
    v.map(|x| x / s)
}

fn scored(word: &str, group: Gender, probs: Probs) -> Scored {
    Scored { probs, group, attribute_word: word.to_owned(), word_category: "noun".to_owned() }
}

/// Two Gaussian blobs `gap` apart along the first axis.
fn blobs(seed: u64, n_per: usize, dim: usize, gap: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = common::rng(seed);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for label in 0..2 {
        for _ in 0..n_per {
            let mut v = common::gaussian_vec(&mut rng, dim);
            v[0] += if label == 0 { -gap / 2.0 } else { gap / 2.0 };
            xs.push(v);
            ys.push(label);
        }
    }
    (xs, ys)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn logistic_gradient_matches_finite_differences(seed in any::<u64>(), dim in 1usize..6, n in 2usize..30) {
        let mut rng = common::rng(seed);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| common::gaussian_vec(&mut rng, dim)).collect();
        let ys: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..2u8))).collect();
        let w = common::gaussian_vec(&mut rng, dim);
        let b: f64 = rng.gen_range(-1.0..1.0);
        let lambda = 1e-2;
        let (_, gw, gb) = logistic_loss_grad(&w, b, &xs, &ys, lambda);
        let h = 1e-6;
        let rel = |num: f64, ana: f64| (num - ana).abs() / ana.abs().max(1e-3);
        for k in 0..dim {
            let mut wp = w.clone();
            wp[k] += h;
            let mut wm = w.clone();
            wm[k] -= h;
            let num = (logistic_loss_grad(&wp, b, &xs, &ys, lambda).0 - logistic_loss_grad(&wm, b, &xs, &ys, lambda).0) / (2.0 * h);
            prop_assert!(rel(num, gw[k]) < 1e-5, "d/dw{k}: {num} vs {}", gw[k]);
        }
        let num = (logistic_loss_grad(&w, b + h, &xs, &ys, lambda).0 - logistic_loss_grad(&w, b - h, &xs, &ys, lambda).0) / (2.0 * h);
        prop_assert!(rel(num, gb) < 1e-5);
    }

    #[test]
    fn v_measure_is_bounded_and_symmetric(labels in prop::collection::vec((0usize..3, 0usize..4), 1..60)) {
        let (t, p): (Vec<usize>, Vec<usize>) = labels.into_iter().unzip();
        let a = metrics::v_measure(&t, &p);
        let b = metrics::v_measure(&p, &t);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&a.v_measure));
        prop_assert!((a.v_measure - b.v_measure).abs() < 1e-12);
        prop_assert!((a.homogeneity - b.completeness).abs() < 1e-12);
    }

    #[test]
    fn cluster_accuracy_is_at_least_half(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let emb = common::gaussian_embedding(&mut rng, 30, 4);
        let pairs: Vec<(String, Gender)> = emb.vocab().iter().enumerate()
            .map(|(i, w)| (w.clone(), if i % 2 == 0 { Gender::Female } else { Gender::Male }))
            .collect();
        let set = LabeledWordSet::from_pairs("s", pairs).unwrap();
        let s = metrics::clustering_bias(&emb, &set, 2, seed, &ClusterOptions::default()).unwrap();
        prop_assert!(s.accuracy >= 0.5 && s.accuracy <= 1.0);
    }

    #[test]
    fn pearson_is_symmetric_and_affine_invariant(
        xy in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..40),
        a in 0.1f64..10.0, b in -50.0f64..50.0,
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
        if let (Some(r1), Some(r2)) = (pearson(&x, &y), pearson(&y, &x)) {
            prop_assert!((r1 - r2).abs() < 1e-12);
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r1));
            let xs: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let r3 = pearson(&xs, &y).unwrap();
            prop_assert!((r1 - r3).abs() < 1e-9);
            let neg: Vec<f64> = x.iter().map(|v| -a * v + b).collect();
            prop_assert!((r1 + pearson(&neg, &y).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn spearman_ignores_monotone_transforms(xy in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..40)) {
        let (x, y): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
        if let Some(r) = spearman(&x, &y) {
            let tx: Vec<f64> = x.iter().map(|v| v.exp() + v * v * v).collect();
            prop_assert!((r - spearman(&tx, &y).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn marked_attribute_error_is_bounded(seed in any::<u64>(), n in 1usize..50) {
        let mut rng = common::rng(seed);
        let recs: Vec<Scored> = (0..n).map(|i| scored(&format!("w{i}"), Gender::Male, random_probs(&mut rng))).collect();
        let e = eval::marked_attribute_error(&PredictionSet::from_records(recs)).unwrap();
        prop_assert!((0.0..=2f64.sqrt() + 1e-12).contains(&e));
    }

    #[test]
    fn group_distance_is_symmetric(seed in any::<u64>(), n in 1usize..20) {
        let mut rng = common::rng(seed);
        let mut recs = Vec::new();
        for i in 0..n {
            recs.push(scored(&format!("m{i}"), Gender::Male, random_probs(&mut rng)));
            recs.push(scored(&format!("f{i}"), Gender::Female, random_probs(&mut rng)));
        }
        let p = PredictionSet::from_records(recs);
        let (m, f) = (Selector::group(Gender::Male), Selector::group(Gender::Female));
        let d1 = eval::group_distance(&p, &m, &f).unwrap();
        let d2 = eval::group_distance(&p, &f, &m).unwrap();
        prop_assert_eq!(d1, d2);
        prop_assert!(d1 >= 0.0 && d1 <= 2f64.sqrt() + 1e-12);
        let lit = eval::group_distance_literal(&p, &m, &f).unwrap();
        prop_assert!((lit - d1 / 4.0).abs() < 1e-12);
    }
}

#[test]
fn separable_data_is_recovered() {
    let (xs, ys) = blobs(1, 500, 10, 12.0);
    for classifier in [Classifier::Logistic, Classifier::Mlp] {
        let opts = RecoverOptions { classifier, ..RecoverOptions::default() };
        let s = metrics::recover::recoverability_xy(&xs, &ys, &opts).unwrap();
        assert!(s.accuracy >= 0.99, "{classifier:?}: {}", s.accuracy);
        assert_eq!((s.n_train, s.n_test), (200, 800));
    }
}

#[test]
fn permuted_labels_are_not_recovered() {
    let (xs, mut ys) = blobs(2, 1000, 10, 12.0);
    ys.shuffle(&mut common::rng(3));
    let s = metrics::recover::recoverability_xy(&xs, &ys, &RecoverOptions::default()).unwrap();
    assert!((s.accuracy - 0.5).abs() <= 0.05, "{}", s.accuracy);
}

#[test]
fn logistic_fit_reaches_stationarity() {
    let (xs, ys) = blobs(4, 100, 3, 1.0);
    let y: Vec<f64> = ys.iter().map(|&v| v as f64).collect();
    let opts = LogisticOptions::default();
    let m = fit_logistic(&xs, &y, &opts);
    let (_, gw, gb) = logistic_loss_grad(&m.weights, m.bias, &xs, &y, opts.lambda);
    let g = (gw.iter().map(|v| v * v).sum::<f64>() + gb * gb).sqrt();
    assert!(g < 1e-6, "gradient norm {g}");
}

#[test]
fn v_measure_extremes() {
    let truth = [0, 0, 0, 1, 1, 1];
    assert_eq!(metrics::v_measure(&truth, &[1, 1, 1, 0, 0, 0]).v_measure, 1.0);
    assert_eq!(metrics::v_measure(&truth, &[0; 6]).v_measure, 0.0);
}

/// Under exchangeable labels the significance should be close to uniform.
#[test]
fn permutation_significance_is_uniform_under_null() {
    let sims = 200;
    let mut sig = Vec::with_capacity(sims);
    for s in 0..sims as u64 {
        let mut rng = common::rng(10_000 + s);
        let mut recs = Vec::new();
        let mut partition = Vec::new();
        for w in 0..20 {
            let g = if w < 10 { Gender::Male } else { Gender::Female };
            let word = format!("w{w}");
            for _ in 0..5 {
                recs.push(scored(&word, g, random_probs(&mut rng)));
            }
            partition.push((word, g));
        }
        let r = eval::permutation_test(&PredictionSet::from_records(recs), &partition, 500, s).unwrap();
        sig.push(r.significance);
    }
    let p = common::ks_uniform_pvalue(&sig);
    assert!(p > 0.01, "KS p-value {p}");
}

#[test]
fn permutation_test_detects_a_real_gap() {
    let mut rng = common::rng(5);
    let mut recs = Vec::new();
    let mut partition = Vec::new();
    for w in 0..16 {
        let g = if w < 8 { Gender::Male } else { Gender::Female };
        let word = format!("w{w}");
        for _ in 0..10 {
            let mut p = random_probs(&mut rng);
            if g == Gender::Female {
                p = [p[0] + 2.0, p[1], p[2]];
                let s: f64 = p.iter().sum();
                p = p.map(|x| x / s);
            }
            recs.push(scored(&word, g, p));
        }
        partition.push((word, g));
    }
    let r = eval::permutation_test(&PredictionSet::from_records(recs), &partition, 2000, 0).unwrap();
    assert!(r.significance < 0.01, "{}", r.significance);
}
