use betaforge::experiments::{
    digits_pairs, emit_report, pair_seeds, run_pairs, sign_test, stratified_split, sweep_m,
    synthetic_ticket_pairs, Arm, ExperimentConfig, ExperimentReport, ReportFormat, SynthBenchmark,
    TicketComparison, Verdict, REPORT_SCHEMA,
};
use betaforge::feature_pipeline::bundled_digits;
use betaforge::forest::ForestConfig;
use proptest::prelude::*;

fn small_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        forest: ForestConfig {
            n_estimators: 12,
            max_features: 3,
            seed,
            ..Default::default()
        },
        train_ratio: 0.8,
    }
}

fn digits_report(seed: u64) -> ExperimentReport {
    let digits = bundled_digits(5, 11).unwrap();
    let pairs = digits_pairs(&digits, 8, 1.0, false).unwrap();
    let pairs = &pairs[..6];
    let config = small_config(seed);
    let outcomes = run_pairs(pairs, &config).unwrap();
    let sweep = sweep_m(pairs, &[1, 2, 9], &config).unwrap();
    assert_eq!(sweep.skipped, vec![9]);
    ExperimentReport::new(
        serde_json::to_value(&config).unwrap(),
        seed,
        pairs,
        outcomes,
        Some(sweep),
    )
}

#[test]
fn report_matches_schema_and_csv_rows() {
    let report = digits_report(42);
    let schema: serde_json::Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    let compiled = jsonschema::JSONSchema::compile(&schema).unwrap();
    let instance = serde_json::to_value(&report).unwrap();
    if let Err(errors) = compiled.validate(&instance) {
        let msgs: Vec<String> = errors
            .map(|e| format!("{e} at {}", e.instance_path))
            .collect();
        panic!("schema violations: {msgs:?}");
    }
    assert_eq!(report.sweep.len(), 4);
    assert_eq!(report.diagnostics.len(), 2);
    assert_eq!(report.aggregate(Arm::B).unwrap().feature_names.len(), 13);

    let dir = tempfile::tempdir().unwrap();
    emit_report(&report, ReportFormat::Csv, dir.path()).unwrap();
    let mut reader = csv::Reader::from_path(dir.path().join("outcomes.csv")).unwrap();
    assert_eq!(reader.records().count(), report.outcomes.len());
    for name in [
        "sweep_accuracy",
        "usage_hist",
        "depth_dist",
        "variety_dist",
        "outcome_bars",
    ] {
        assert!(dir.path().join(format!("{name}.csv")).exists(), "{name}");
    }
}

#[test]
fn reports_are_byte_identical() {
    let a = digits_report(7).to_json().unwrap();
    let b = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| digits_report(7).to_json().unwrap());
    assert_eq!(a, b);
    assert_ne!(a, digits_report(8).to_json().unwrap());
}

#[test]
fn outcomes_follow_pairs_and_seeds() {
    let report = digits_report(42);
    for (i, (o, s)) in report.outcomes.iter().zip(&report.seeds.pairs).enumerate() {
        assert_eq!(o.pair, s.pair);
        let seeds = pair_seeds(42, i);
        assert_eq!((s.split, s.forest), (seeds.split, seeds.forest));
        assert_eq!(
            o.verdict,
            Verdict::from_accuracies(o.accuracy_a, o.accuracy_b)
        );
        assert_eq!(o.arm_a.accuracy, o.accuracy_a);
    }
    let n = report.outcomes.len() as u64;
    let st = report.sign_test.as_ref();
    if let Some(st) = st {
        assert_eq!(st.n_better + st.n_worse + st.n_tie, n);
    }
}

#[test]
fn ticket_pairs_share_rows_across_arms() {
    let bench = SynthBenchmark {
        pairs: 3,
        events_per_artist: 15,
        ..Default::default()
    };
    let pairs = synthetic_ticket_pairs(&bench, TicketComparison::BasicVsAlphaBeta).unwrap();
    assert_eq!(pairs.len(), 3);
    for p in &pairs {
        assert_eq!(p.arm_a.labels, p.arm_b.labels);
        assert_eq!(p.arm_a.width(), 4);
        assert_eq!(p.arm_b.width(), 6);
        for (a, b) in p.arm_a.features.iter().zip(&p.arm_b.features) {
            assert_eq!(a[..], b[..4]);
        }
    }
    let zv = synthetic_ticket_pairs(
        &bench,
        TicketComparison::ZeroVariance { n_zv: 4, fill: 0.0 },
    )
    .unwrap();
    assert!(zv
        .iter()
        .all(|p| p.arm_a.width() == 6 && p.arm_b.width() == 10));
}

#[test]
fn sign_test_table_values() {
    assert!((sign_test(52, 14, 0).unwrap().z - 4.5544).abs() < 1e-4);
    assert!((sign_test(1084, 675, 0).unwrap().z - 9.7281).abs() < 1e-4);
    // continuity-corrected; the uncorrected value is 20.126
    assert!((sign_test(4488, 2773, 0).unwrap().z - 20.1147).abs() < 1e-4);
    assert!(sign_test(0, 0, 5).is_err());
}

proptest! {
    #[test]
    fn split_is_a_stratified_partition(
        labels in prop::collection::vec(0u8..2, 4..120),
        ratio in 0.2f64..0.8,
        seed in any::<u64>(),
    ) {
        let counts = [0u8, 1].map(|c| labels.iter().filter(|&&y| y == c).count());
        match stratified_split(&labels, ratio, seed) {
            Ok(split) => {
                let mut all = [split.train.clone(), split.test.clone()].concat();
                all.sort_unstable();
                prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
                for c in [0u8, 1] {
                    let k = split.train.iter().filter(|&&i| labels[i] == c).count();
                    prop_assert_eq!(k, (ratio * counts[c as usize] as f64).round() as usize);
                }
                prop_assert_eq!(stratified_split(&labels, ratio, seed).unwrap(), split);
            }
            Err(_) => {
                let too_small = |n: usize| {
                    let k = (ratio * n as f64).round() as usize;
                    k == 0 || k >= n
                };
                prop_assert!(counts.into_iter().any(too_small));
            }
        }
    }

    #[test]
    fn sign_test_z_formula(b in 0u64..5000, w in 0u64..5000, t in 0u64..100) {
        prop_assume!(b + w > 0);
        let r = sign_test(b, w, t).unwrap();
        let n = (b + w) as f64;
        prop_assert!((r.z - (b as f64 - 0.5 - n / 2.0) / (n / 4.0).sqrt()).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&r.p_one_sided));
    }
}
