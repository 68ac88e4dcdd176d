use betaforge::feature_pipeline::{
    augment_zero_variance, bundled_digits, DatasetVariant, LabeledDataset,
};
use betaforge::forest::{
    class_weights, cosine_from_distance, diagnostics_variety, prediction_correlation, train,
    ClassWeight, ForestConfig, Node, Tree,
};
use proptest::prelude::*;

fn dataset(rows: Vec<(Vec<f64>, u8)>) -> LabeledDataset {
    let width = rows[0].0.len();
    let (features, labels): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    LabeledDataset::new(
        (0..width).map(|j| format!("f{j}")).collect(),
        features,
        labels,
        DatasetVariant::Delta,
        ["0".into(), "1".into()],
    )
    .unwrap()
}

fn rows_strategy() -> impl Strategy<Value = Vec<(Vec<f64>, u8)>> {
    (1usize..5).prop_flat_map(|width| {
        prop::collection::vec((prop::collection::vec(-5.0f64..5.0, width), 0u8..2), 8..40)
            .prop_filter("both classes", |rows| {
                rows.iter().any(|r| r.1 == 0) && rows.iter().any(|r| r.1 == 1)
            })
    })
}

/// Every split threshold lies in `[min, max)` of the training values that
/// reach that node.
fn thresholds_inside(tree: &Tree, ds: &LabeledDataset) -> bool {
    let mut stack = vec![(0usize, (0..ds.n_rows()).collect::<Vec<_>>())];
    while let Some((i, rows)) = stack.pop() {
        if let Node::Split {
            feature,
            threshold,
            left,
            right,
        } = tree.nodes[i]
        {
            let vals: Vec<f64> = rows.iter().map(|&r| ds.features[r][feature]).collect();
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !(lo <= threshold && threshold < hi) {
                return false;
            }
            let (l, r): (Vec<usize>, Vec<usize>) = rows
                .into_iter()
                .partition(|&r| ds.features[r][feature] <= threshold);
            stack.push((left, l));
            stack.push((right, r));
        }
    }
    true
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn training_invariants(rows in rows_strategy(), seed in any::<u64>(), m in 1usize..5) {
        let ds = dataset(rows);
        let cfg = ForestConfig {
            n_estimators: 6,
            max_features: m.min(ds.width()),
            seed,
            ..Default::default()
        };
        let (model, diag) = train(&ds, &cfg).unwrap();
        prop_assert_eq!(&train(&ds, &cfg).unwrap().0, &model);
        prop_assert_eq!(model.trees.len(), 6);
        prop_assert!(diag.usage_vectors.iter().all(|u| u.len() == ds.width()));
        for tree in &model.trees {
            prop_assert!(thresholds_inside(tree, &ds));
            for node in &tree.nodes {
                if let Node::Leaf { proba } = node {
                    prop_assert!((proba[0] + proba[1] - 1.0).abs() < 1e-12);
                }
            }
        }
        let pairs = (6 * 5 / 2) as f64;
        prop_assert!((diag.variety_mean - diag.variety_sum / pairs).abs() < 1e-12);
        if let Some(rho) = diag.avg_cosine_correlation {
            prop_assert!((-1.0..=1.0).contains(&rho));
        }
    }

    #[test]
    fn balanced_weights_sum(labels in prop::collection::vec(0u8..2, 2..200)) {
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let w = class_weights(&labels, ClassWeight::Balanced).unwrap();
        let ones = labels.iter().filter(|&&y| y == 1).count() as f64;
        let zeros = labels.len() as f64 - ones;
        prop_assert!((w[0] * zeros + w[1] * ones - labels.len() as f64).abs() < 1e-9);
    }

    #[test]
    fn cosine_identity(vs in prop::collection::vec(prop::collection::vec(0u32..20, 5), 2..6)) {
        let unit: Vec<Vec<f64>> = vs
            .iter()
            .filter_map(|v| {
                let n = v.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
                (n > 0.0).then(|| v.iter().map(|&x| f64::from(x) / n).collect())
            })
            .collect();
        for i in 0..unit.len() {
            for j in i + 1..unit.len() {
                let dot: f64 = unit[i].iter().zip(&unit[j]).map(|(a, b)| a * b).sum();
                prop_assert!((cosine_from_distance(&unit[i], &unit[j]) - dot).abs() < 1e-12);
            }
        }
        let summary = diagnostics_variety(&vs).unwrap();
        prop_assert_eq!(summary.zero_usage_trees, vs.len() - unit.len());
    }
}

#[test]
fn zero_variance_columns_change_draws_not_usage() {
    let digits = bundled_digits(6, 42).unwrap();
    let base = digits.pair_dataset(3, 8).unwrap();
    let reg = augment_zero_variance(&base, 20, 1.0);
    let cfg = ForestConfig {
        max_features: 6,
        ..Default::default()
    };
    let (_, plain) = train(&base, &cfg).unwrap();
    let (_, diluted) = train(&reg, &cfg).unwrap();
    assert!(diluted.aggregate_usage[6..].iter().all(|&c| c == 0));
    assert_ne!(plain.aggregate_usage[..], diluted.aggregate_usage[..6]);
    let other_fill = train(&augment_zero_variance(&base, 20, 7.3), &cfg).unwrap();
    assert_eq!(other_fill.1, diluted);
}

#[test]
fn thread_count_does_not_matter() {
    let digits = bundled_digits(8, 7).unwrap();
    let ds = augment_zero_variance(&digits.pair_dataset(1, 7).unwrap(), 5, 1.0);
    let cfg = ForestConfig {
        n_estimators: 40,
        max_features: 3,
        ..Default::default()
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| train(&ds, &cfg).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    let json = serde_json::to_string(&one.0).unwrap();
    assert_eq!(json, serde_json::to_string(&run(3).0).unwrap());
}

#[test]
fn regularization_deepens_and_diversifies_trees() {
    let digits = bundled_digits(6, 42).unwrap();
    let base = digits.pair_dataset(4, 9).unwrap();
    let reg = augment_zero_variance(&base, 20, 1.0);
    let cfg = ForestConfig {
        max_features: 6,
        ..Default::default()
    };
    let (m0, d0) = train(&base, &cfg).unwrap();
    let (m1, d1) = train(&reg, &cfg).unwrap();
    assert!(d1.mean_depth > d0.mean_depth);
    assert!(d1.variety_mean > d0.variety_mean);
    let s0 = prediction_correlation(&m0, &base.features);
    let s1 = prediction_correlation(&m1, &reg.features);
    for s in [s0, s1] {
        assert!((-1.0..=1.0).contains(&s.correlation.unwrap()));
        assert!(s.variance_factor.unwrap().is_finite() && s.tree_variance >= 0.0);
    }
}
