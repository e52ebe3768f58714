//! Analytic gradients against central finite differences, and the skew
//! formula against an independent reimplementation.

use fed_model::{gradient, partition_hfl, skewed_sizes, Dataset, Labels, ModelSpec};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn random_dataset(rng: &mut ChaCha8Rng, d: usize, classes: Option<usize>) -> Dataset {
    let n = rng.gen_range(2..=8);
    let features: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let labels = match classes {
        Some(c) => Labels::Classes((0..n).map(|_| rng.gen_range(0..c)).collect()),
        None => Labels::Values((0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()),
    };
    let class_names = classes
        .map(|c| (0..c).map(|i| i.to_string()).collect())
        .unwrap_or_default();
    Dataset::from_parts(d, features, labels, vec![], class_names).unwrap()
}

/// Central finite differences of the mean loss, h = 1e-5.
fn numeric_gradient(spec: &ModelSpec, params: &fed_model::ModelParams, data: &Dataset) -> Vec<f64> {
    let h = 1e-5;
    let flat = params.flatten();
    let mut grad = Vec::with_capacity(flat.len());
    for i in 0..flat.len() {
        let mut plus = flat.clone();
        plus[i] += h;
        let mut minus = flat.clone();
        minus[i] -= h;
        let loss_plus = spec.loss(&params.unflatten(&plus).unwrap(), data).unwrap();
        let loss_minus = spec.loss(&params.unflatten(&minus).unwrap(), data).unwrap();
        grad.push((loss_plus - loss_minus) / (2.0 * h));
    }
    grad
}

fn check_spec(spec: ModelSpec, classes: Option<usize>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for draw in 0..25 {
        let data = random_dataset(&mut rng, spec.input_dim(), classes);
        let params = spec.init_params(rng.gen());
        let analytic = gradient(&spec, &params, &data).unwrap().flatten();
        let numeric = numeric_gradient(&spec, &params, &data);
        for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1.0);
            assert!(
                rel <= 1e-4,
                "{spec:?} draw {draw} component {i}: analytic {a} vs numeric {n} (rel {rel})"
            );
        }
    }
}

#[test]
fn linear_regression_gradient_matches_finite_differences() {
    check_spec(ModelSpec::LinearRegression { d: 4 }, None, 100);
}

#[test]
fn logistic_regression_gradient_matches_finite_differences() {
    check_spec(
        ModelSpec::LogisticRegression { d: 3, classes: 4 },
        Some(4),
        200,
    );
}

#[test]
fn mlp_gradient_matches_finite_differences() {
    check_spec(
        ModelSpec::Mlp {
            d: 3,
            hidden: 5,
            classes: 3,
        },
        Some(3),
        300,
    );
}

#[test]
fn skew_formula_matches_independent_reimplementation() {
    // the documented decay, written differently: cumulative fractions
    fn oracle(n: usize, learners: usize, skew: f64) -> Vec<usize> {
        let ratio = 1.0 - skew;
        let mut weights = Vec::new();
        let mut w = 1.0;
        for _ in 0..learners {
            weights.push(w);
            w *= ratio;
        }
        let total: f64 = weights.iter().sum();
        let mut sizes: Vec<usize> = Vec::new();
        for weight in &weights {
            sizes.push((n as f64 * weight / total) as usize);
        }
        let used: usize = sizes.iter().sum();
        sizes[0] += n - used;
        sizes
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let n = rng.gen_range(1..2000);
        let learners = rng.gen_range(1..=10.min(n));
        let skew = rng.gen_range(0.0..=1.0);
        assert_eq!(
            skewed_sizes(n, learners, skew),
            oracle(n, learners, skew),
            "n={n} learners={learners} skew={skew}"
        );
    }
}

#[test]
fn partitions_preserve_the_row_multiset() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let data = random_dataset(&mut rng, 3, Some(2));
    let shards = partition_hfl(&data, 2, 0.4, 7, false).unwrap();
    let mut original: Vec<String> = (0..data.n())
        .map(|i| format!("{:?}|{}", data.row(i), data.label_f64(i)))
        .collect();
    let mut scattered: Vec<String> = shards
        .iter()
        .flat_map(|s| (0..s.n()).map(|i| format!("{:?}|{}", s.row(i), s.label_f64(i))))
        .collect();
    original.sort();
    scattered.sort();
    assert_eq!(original, scattered);
}
