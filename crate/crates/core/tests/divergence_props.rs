use betaforge::divergence::{compare, feature_divergence_table, kde_fit, Bandwidth, DEFAULT_GRID};
use betaforge::feature_pipeline::{
    build_alpha_beta, build_basic, synth_generate, ImputationPolicy, SynthConfig, Window,
    ALPHA_BETA_FEATURES,
};
use betaforge::scaled_beta::{sample, ScaledBetaParams};
use proptest::prelude::*;

fn alpha_only_config() -> SynthConfig {
    toml::from_str(
        r#"
seed = 5
noise = 0.0

[[artist]]
label = "flat"
events = 60
support_min = [20.0, 100.0]
support_span = [50.0, 200.0]
shape = { kind = "alpha_beta", alpha = [1.5, 2.5], beta = [6.0, 8.0] }

[[artist]]
label = "peaked"
events = 60
support_min = [20.0, 100.0]
support_span = [50.0, 200.0]
shape = { kind = "alpha_beta", alpha = [4.0, 5.0], beta = [6.0, 8.0] }
"#,
    )
    .unwrap()
}

#[test]
fn alpha_prior_ranks_alpha_first() {
    let synth = synth_generate(&alpha_only_config()).unwrap();
    let basic = build_basic(&synth.corpus, ("flat", "peaked"), Window::Full).unwrap();
    let ab = build_alpha_beta(&basic, ImputationPolicy::Sentinel);
    assert!(ab.imputed.is_empty());
    let table = feature_divergence_table(&ab.dataset, DEFAULT_GRID, Bandwidth::Silverman).unwrap();
    let names: Vec<&str> = table.rows.iter().map(|r| r.feature.as_str()).collect();
    assert_eq!(names, ALPHA_BETA_FEATURES);
    for metric in ["hellinger", "js_nats"] {
        assert_eq!(
            table.rankings[metric][0], "alpha",
            "{metric}: {:?}",
            table.rankings[metric]
        );
    }
}

#[test]
fn identical_artists_have_zero_distance() {
    let synth = synth_generate(&alpha_only_config()).unwrap();
    let basic = build_basic(&synth.corpus, ("flat", "peaked"), Window::Full).unwrap();
    let mut ds = build_alpha_beta(&basic, ImputationPolicy::Sentinel).dataset;
    let flat: Vec<Vec<f64>> = ds
        .features
        .iter()
        .zip(&ds.labels)
        .filter(|(_, &y)| y == 0)
        .map(|(x, _)| x.clone())
        .collect();
    ds.labels = vec![0; flat.len()];
    ds.labels.extend(vec![1; flat.len()]);
    ds.features = [flat.clone(), flat].concat();
    let table = feature_divergence_table(&ds, 256, Bandwidth::Silverman).unwrap();
    for row in &table.rows {
        let r = &row.report;
        assert!(
            r.hellinger < 1e-7 && r.js_nats < 1e-12 && r.tv < 1e-12,
            "{}",
            row.feature
        );
    }
}

#[test]
fn kde_of_beta_draws_keeps_the_mean() {
    let p = ScaledBetaParams::unit(2.0, 4.0).unwrap();
    let xs = sample(&p, 100_000, 3);
    let d = kde_fit(&xs, DEFAULT_GRID, Bandwidth::Silverman).unwrap();
    assert!((d.mass() - 1.0).abs() < 1e-9);
    assert!((d.mean() - 1.0 / 3.0).abs() < 0.01, "{}", d.mean());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn metric_ranges_and_symmetry(
        a in prop::collection::vec(-5.0f64..5.0, 3..40),
        b in prop::collection::vec(-5.0f64..5.0, 3..40),
    ) {
        let spread = |v: &[f64]| v.iter().any(|&x| (x - v[0]).abs() > 1e-3);
        prop_assume!(spread(&a) && spread(&b));
        let da = kde_fit(&a, 128, Bandwidth::Silverman).unwrap();
        let db = kde_fit(&b, 128, Bandwidth::Silverman).unwrap();
        let ab = compare(&da, &db).unwrap();
        let ba = compare(&db, &da).unwrap();
        prop_assert!((ab.hellinger - ba.hellinger).abs() < 1e-12);
        prop_assert!((ab.js_nats - ba.js_nats).abs() < 1e-12);
        prop_assert!((ab.tv - ba.tv).abs() < 1e-12);
        prop_assert!((ab.kl_forward - ba.kl_reverse).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab.hellinger));
        prop_assert!((0.0..=1.0).contains(&ab.tv));
        prop_assert!((0.0..=std::f64::consts::LN_2).contains(&ab.js_nats));
        prop_assert!(ab.kl_forward >= 0.0 && ab.kl_reverse >= 0.0);
        prop_assert!(ab.js_nats >= ab.tv * ab.tv / 2.0 - 1e-12);
        prop_assert_eq!(ab.theorem3_holds, ab.js_nats <= ab.theorem3_rhs);
    }
}
