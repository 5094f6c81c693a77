mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safety_pool::learners::logistic::{objective_and_gradient, LinearDesign, SparseRow};
use safety_pool::learners::tree::Node;
use safety_pool::learners::*;
use safety_pool::records::{category_counts, AccidentRecord, AttributeVector};
use safety_pool::weighting::{compute_class_weights, ClassWeights};
use safety_pool::Error;

fn weights_for(records: &[AccidentRecord]) -> ClassWeights {
    compute_class_weights(&category_counts(records, OUTCOME)).unwrap()
}

fn refs(records: &[AccidentRecord]) -> Vec<&AccidentRecord> {
    records.iter().collect()
}

fn one_of_each() -> Vec<LearnerSpec> {
    vec![
        LearnerSpec::RandomForest(RandomForestSpec { ntree: 100, mtry: 10, nodesize: 1 }),
        LearnerSpec::Boosting(BoostingSpec { ntrees: 200, ..BoostingSpec::new(3, 0.1, 1.0, 1.0, 1.0) }),
        LearnerSpec::LinearSvm(LinearSvmSpec { c: 1.0 }),
        LearnerSpec::Logistic(LogisticSpec::default()),
    ]
}

fn fit_on(spec: &LearnerSpec, records: &[AccidentRecord], seed: u64) -> TrainedModel {
    fit(spec, &refs(records), OUTCOME, &weights_for(records), seed).unwrap()
}

#[test]
fn separable_fixture_is_learned_by_every_family() {
    let data = separable_binary(200, 10, 1);
    // Oracle: the generating rule itself labels every point correctly.
    assert!(data.iter().all(|r| (r.label(OUTCOME) == Some("B")) == r.attributes.get(0)));
    for spec in one_of_each() {
        let m = fit_on(&spec, &data, 3);
        let pred = m.predict_labels(&data).unwrap();
        assert_eq!(macro_f1(&truth(&data), &pred), 1.0, "{}", spec.describe());
    }
}

#[test]
fn svm_matches_generating_rule() {
    let data = separable_binary(200, 10, 2);
    let m = fit_on(&LearnerSpec::LinearSvm(LinearSvmSpec { c: 1.0 }), &data, 0);
    for r in &data {
        let expected = if r.attributes.get(0) { "B" } else { "A" };
        assert_eq!(m.predict_label(&r.attributes).unwrap(), expected);
    }
    assert!(matches!(m.predict_distribution(&data[0].attributes), Err(Error::LabelOnlyModel)));
    assert_eq!(m.kind(), OutputKind::LabelOnly);
}

#[test]
fn single_category_is_rejected() {
    let data: Vec<_> = (0..10).map(|i| record(i, vec![i % 2 == 0; 3], "A")).collect();
    for spec in one_of_each() {
        let r = fit(&spec, &refs(&data), OUTCOME, &ClassWeights::uniform(["A"]), 0);
        assert!(matches!(r, Err(Error::SingleCategory)));
    }
    let r = fit(&one_of_each()[0], &[], OUTCOME, &ClassWeights::default(), 0);
    assert!(matches!(r, Err(Error::EmptyTrainingSet)));
}

#[test]
fn forest_respects_nodesize() {
    let data = separable_binary(60, 10, 4);
    let spec = RandomForestSpec { ntree: 100, mtry: 5, nodesize: 50 };
    let m = fit_on(&LearnerSpec::RandomForest(spec), &data, 5);
    let FittedParams::RandomForest(forest) = &m.params else { panic!() };
    assert_eq!(forest.trees.len(), 100);
    for tree in &forest.trees {
        let leaves: Vec<_> = tree.leaves().collect();
        assert!(leaves.len() <= 60usize.div_ceil(50));
        assert!(leaves.iter().all(|l| l.samples >= 50));
        assert_eq!(leaves.iter().map(|l| l.samples).sum::<u32>(), 60);
    }
}

#[test]
fn forest_leaves_respect_nodesize_when_deep() {
    let data = noisy_binary(400, 12, 6);
    for nodesize in [1, 5, 25] {
        let spec = RandomForestSpec { ntree: 20, mtry: 4, nodesize };
        let m = fit_on(&LearnerSpec::RandomForest(spec), &data, 1);
        let FittedParams::RandomForest(forest) = &m.params else { panic!() };
        for tree in &forest.trees {
            assert!(tree.leaves().all(|l| l.samples as usize >= nodesize));
            assert_eq!(tree.leaves().map(|l| l.samples).sum::<u32>(), 400);
            for node in tree.nodes() {
                if let Node::Leaf(l) = node {
                    assert!((l.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn single_tree_pure_leaf_is_certain() {
    let data = separable_binary(100, 6, 7);
    let m = fit_on(&LearnerSpec::RandomForest(RandomForestSpec { ntree: 1, mtry: 6, nodesize: 1 }), &data, 2);
    for r in &data {
        let p = m.predict_proba(&r.attributes).unwrap();
        assert_eq!(p.iter().copied().fold(0.0, f64::max), 1.0);
    }
}

#[test]
fn zero_learning_rate_gives_weighted_prior() {
    let data = random_dataset(90, 6, 3, 8);
    let w = weights_for(&data);
    let spec = BoostingSpec { ntrees: 5, ..BoostingSpec::new(3, 0.0, 1.0, 1.0, 1.0) };
    let m = fit(&LearnerSpec::Boosting(spec), &refs(&data), OUTCOME, &w, 0).unwrap();
    // Closed form: weighted share of each class.
    let counts = category_counts(&data, OUTCOME);
    let mass: Vec<f64> = m.categories.iter().map(|c| counts.get(c) as f64 * w.get(c).unwrap()).collect();
    let total: f64 = mass.iter().sum();
    for r in data.iter().take(20) {
        let p = m.predict_proba(&r.attributes).unwrap();
        for (pi, mi) in p.iter().zip(&mass) {
            assert!((pi - mi / total).abs() < 1e-12);
        }
    }
    // Inverse-frequency weights equalize class mass.
    assert!(mass.iter().all(|x| (x - mass[0]).abs() < 1e-9));
}

#[test]
fn boosting_loss_decreases_monotonically() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.random_range(2..=4);
        let data = random_dataset(rng.random_range(30..80), 8, k, seed + 100);
        let spec = BoostingSpec {
            ntrees: 40,
            ..BoostingSpec::new(rng.random_range(1..=4), 0.1, 1.0, 1.0, [0.5, 1.0][seed as usize % 2])
        };
        let loss = boosting_loss_trace(&spec, &refs(&data), OUTCOME, &weights_for(&data), seed).unwrap();
        assert_eq!(loss.len(), 41);
        for w in loss.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "seed {seed}: {} -> {}", w[0], w[1]);
        }
        assert!(loss[40] < loss[0]);
    }
}

#[test]
fn logistic_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (nf, k, n) = (4, 3, 12);
    let rows: Vec<SparseRow> = (0..n)
        .map(|_| SparseRow::dense(&(0..nf).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>()))
        .collect();
    let labels = (0..n).map(|i| (i % k) as u32).collect();
    let weights = (0..n).map(|_| rng.random_range(0.5..3.0)).collect();
    let design = LinearDesign::new(nf, k, rows, labels, weights).unwrap();
    let c = 0.7;
    for _ in 0..10 {
        let x: Vec<f64> = (0..design.n_params()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut g = vec![0.0; x.len()];
        objective_and_gradient(&design, c, &x, &mut g);
        let mut scratch = vec![0.0; x.len()];
        for j in 0..x.len() {
            let h = 1e-5;
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[j] += h;
            xm[j] -= h;
            let fd = (objective_and_gradient(&design, c, &xp, &mut scratch)
                - objective_and_gradient(&design, c, &xm, &mut scratch))
                / (2.0 * h);
            let rel = (fd - g[j]).abs() / g[j].abs().max(1.0);
            assert!(rel < 1e-5, "component {j}: fd {fd} vs {}", g[j]);
        }
    }
}

#[test]
fn predictions_are_deterministic() {
    let data = noisy_binary(150, 8, 12);
    let probe = noisy_binary(40, 8, 13);
    for spec in one_of_each() {
        let a = fit_on(&spec, &data, 21);
        let b = fit_on(&spec, &data, 21);
        assert_eq!(a, b);
        assert_eq!(a.predict_labels(&probe).unwrap(), b.predict_labels(&probe).unwrap());
    }
}

#[test]
fn doubling_weights_keeps_labels() {
    let data = random_dataset(120, 8, 3, 14);
    let probe = random_dataset(50, 8, 3, 15);
    let w = weights_for(&data);
    let w2 = w.scaled(2.0);
    let pairs = vec![
        (
            LearnerSpec::RandomForest(RandomForestSpec { ntree: 50, mtry: 3, nodesize: 2 }),
            LearnerSpec::RandomForest(RandomForestSpec { ntree: 50, mtry: 3, nodesize: 2 }),
        ),
        (
            LearnerSpec::Boosting(BoostingSpec { ntrees: 50, ..BoostingSpec::new(3, 0.1, 1.0, 0.7, 0.5) }),
            // Same problem at doubled scale: Hessian thresholds and lambda double too.
            LearnerSpec::Boosting(BoostingSpec {
                ntrees: 50,
                reg_lambda: 2.0,
                ..BoostingSpec::new(3, 0.1, 2.0, 0.7, 0.5)
            }),
        ),
        (LearnerSpec::LinearSvm(LinearSvmSpec { c: 0.5 }), LearnerSpec::LinearSvm(LinearSvmSpec { c: 0.25 })),
        (LearnerSpec::Logistic(LogisticSpec { c: 0.2 }), LearnerSpec::Logistic(LogisticSpec { c: 0.1 })),
    ];
    for (base, doubled) in pairs {
        let a = fit(&base, &refs(&data), OUTCOME, &w, 3).unwrap();
        let b = fit(&doubled, &refs(&data), OUTCOME, &w2, 3).unwrap();
        assert_eq!(a.predict_labels(&probe).unwrap(), b.predict_labels(&probe).unwrap(), "{}", base.describe());
    }
}

#[test]
fn more_trees_reduce_forest_variance() {
    let data = noisy_binary(200, 10, 16);
    let probe = noisy_binary(30, 10, 17);
    let variance = |ntree: usize| {
        let spec = LearnerSpec::RandomForest(RandomForestSpec { ntree, mtry: 3, nodesize: 5 });
        let preds: Vec<Vec<Vec<f64>>> = (0..5)
            .map(|seed| {
                let m = fit_on(&spec, &data, seed);
                probe.iter().map(|r| m.predict_proba(&r.attributes).unwrap()).collect()
            })
            .collect();
        let mut total = 0.0;
        let mut count = 0.0;
        for i in 0..probe.len() {
            for c in 0..2 {
                let xs: Vec<f64> = preds.iter().map(|p| p[i][c]).collect();
                let mean = xs.iter().sum::<f64>() / xs.len() as f64;
                total += xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
                count += 1.0;
            }
        }
        total / count
    };
    assert!(variance(1600) < variance(100));
}

#[test]
fn distributions_are_normalized() {
    let data = random_dataset(100, 8, 4, 18);
    let probe = random_dataset(30, 8, 4, 19);
    for spec in one_of_each().into_iter().filter(|s| s.output_kind() == OutputKind::Probabilistic) {
        let m = fit_on(&spec, &data, 0);
        for r in &probe {
            let f = m.predict_distribution(&r.attributes).unwrap();
            assert_eq!(f.categories, m.categories);
            assert!(f.probs.iter().all(|&p| p >= 0.0));
            assert!((f.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn wrong_width_is_rejected() {
    let data = separable_binary(50, 5, 20);
    let m = fit_on(&one_of_each()[3], &data, 0);
    let x = AttributeVector::new(vec![false; 4]);
    assert!(matches!(m.predict_label(&x), Err(Error::FeatureMismatch { expected: 5, got: 4 })));
}

#[test]
fn persisted_models_predict_identically() {
    let data = random_dataset(120, 8, 3, 22);
    let probe = random_dataset(40, 8, 3, 23);
    let dir = tempfile::tempdir().unwrap();
    for spec in one_of_each() {
        let m = fit_on(&spec, &data, 9);
        let path = dir.path().join(format!("{}.json", spec.family()));
        save_model(&path, &m).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, m);
        for r in &probe {
            assert_eq!(back.predict_index(&r.attributes).unwrap(), m.predict_index(&r.attributes).unwrap());
            if m.is_probabilistic() {
                let (a, b) = (m.predict_proba(&r.attributes).unwrap(), back.predict_proba(&r.attributes).unwrap());
                assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
        }
    }
}
