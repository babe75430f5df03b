mod common;

use common::*;
use gaitscope::classifiers::{
    gnb_fit, knn_fit, logreg_fit, svm_fit, Classifier, KernelSpec, LogRegConfig, NaiveBayesConfig, SvmConfig,
};
use gaitscope::GaitLabel;
use ndarray::Array2;
use rand::Rng;

fn blobs(seed: u64, n: usize, d: usize, gap: f64) -> (Array2<f64>, Vec<GaitLabel>) {
    let mut r = rng(seed);
    let labels: Vec<GaitLabel> = (0..n).map(|i| label_of(i % 2 == 1)).collect();
    let x = Array2::from_shape_fn((n, d), |(i, _)| {
        let shift = if labels[i] == GaitLabel::Abnormal { gap } else { -gap };
        shift + r.random_range(-1.0..1.0)
    });
    (x, labels)
}

#[test]
fn naive_bayes_matches_direct_density_product() {
    for seed in 0..20 {
        let (x, y) = blobs(seed, 30, 4, 0.5);
        let model = gnb_fit(x.view(), &y, &NaiveBayesConfig::default()).unwrap();
        let mut r = rng(seed + 100);
        let queries = random_matrix(&mut r, 10, 4);
        let probs = model.predict_proba(queries.view()).unwrap();
        for (qi, q) in queries.rows().into_iter().enumerate() {
            // prior times the product of per-feature normal densities, in linear space
            let joint: Vec<f64> = GaitLabel::ALL
                .iter()
                .map(|&class| {
                    let rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
                    let prior = rows.len() as f64 / y.len() as f64;
                    (0..4).fold(prior, |acc, j| {
                        let vals: Vec<f64> = rows.iter().map(|&i| x[[i, j]]).collect();
                        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
                        let density =
                            (-(q[j] - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
                        acc * density
                    })
                })
                .collect();
            let total = joint[0] + joint[1];
            for c in 0..2 {
                assert!(
                    (probs[[qi, c]] - joint[c] / total).abs() < 1e-9,
                    "seed {seed} query {qi}"
                );
            }
        }
    }
}

#[test]
fn naive_bayes_floors_constant_features() {
    let mut x = Array2::zeros((6, 2));
    for i in 0..6 {
        x[[i, 0]] = i as f64;
    }
    let y: Vec<GaitLabel> = (0..6).map(|i| label_of(i >= 3)).collect();
    let model = gnb_fit(x.view(), &y, &NaiveBayesConfig::default()).unwrap();
    assert!(model.variances.iter().all(|&v| v > 0.0));
    let p = model.predict_proba(x.view()).unwrap();
    assert!(p.iter().all(|v| v.is_finite()));
}

#[test]
fn knn_matches_exhaustive_scan_with_duplicates() {
    // repeated points force distance ties, which both sides break by index
    let mut r = rng(8);
    let base = random_matrix(&mut r, 15, 3);
    let x = ndarray::concatenate(ndarray::Axis(0), &[base.view(), base.view()]).unwrap();
    let y: Vec<GaitLabel> = (0..30).map(|i| label_of((i * 7) % 3 == 0)).collect();
    for k in [1, 3, 5, 7] {
        let model = knn_fit(x.view(), &y, k).unwrap();
        let got = model.predict(x.view()).unwrap();
        for (row, label) in x.rows().into_iter().zip(&got) {
            assert_eq!(*label, knn_oracle(x.view(), &y, row.as_slice().unwrap(), k));
        }
    }
}

#[test]
fn svm_dual_objective_matches_oracle() {
    for seed in 0..10 {
        let (x, labels) = blobs(seed, 20, 2, 0.6);
        let y: Vec<f64> = labels
            .iter()
            .map(|l| if *l == GaitLabel::Abnormal { 1.0 } else { -1.0 })
            .collect();
        let config = SvmConfig {
            kernel: KernelSpec::Rbf { gamma: Some(0.7) },
            tol: 1e-6,
            seed,
            ..Default::default()
        };
        let model = svm_fit(x.view(), &labels, &config).unwrap();
        let (alpha, _) = svm_dual_oracle(x.view(), &y, &model.kernel, config.c);
        let oracle_objective = alpha.iter().sum::<f64>()
            - 0.5
                * (0..20)
                    .flat_map(|i| (0..20).map(move |j| (i, j)))
                    .map(|(i, j)| alpha[i] * alpha[j] * y[i] * y[j] * model.kernel.eval(x.row(i), x.row(j)))
                    .sum::<f64>();
        let ours = model.dual_objective();
        assert!(
            (ours - oracle_objective).abs() < 1e-5 * (1.0 + oracle_objective.abs()),
            "seed {seed}: {ours} vs {oracle_objective}"
        );
        let full = model.full_alphas(20);
        let balance: f64 = full.iter().zip(&y).map(|(a, t)| a * t).sum();
        assert!(balance.abs() < 1e-9);
        assert!(full.iter().all(|&a| (0.0..=config.c).contains(&a)));
    }
}

#[test]
fn logistic_regression_separates_blobs_with_monotone_loss() {
    let (x, y) = blobs(3, 60, 5, 1.5);
    let model = logreg_fit(x.view(), &y, &LogRegConfig::default()).unwrap();
    assert_eq!(model.predict(x.view()).unwrap(), y);
    assert!(model.loss_history.windows(2).all(|w| w[1] <= w[0]));
    let p = model.predict_proba(x.view()).unwrap();
    assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn single_class_training_is_rejected() {
    let x = Array2::from_shape_fn((6, 2), |(i, j)| (i + j) as f64);
    let y = vec![GaitLabel::Normal; 6];
    assert!(gnb_fit(x.view(), &y, &NaiveBayesConfig::default()).is_err());
    assert!(svm_fit(x.view(), &y, &SvmConfig::default()).is_err());
}
