//! Paired two-arm classification runs, sign tests, `m` sweeps and reports.
//!
//! Every pair is trained twice on the same stratified split with the same
//! forest seed; only the feature columns differ between the arms. Pair `i`
//! draws its split seed and forest seed from the experiment master seed via
//! [`pair_seeds`], so pairs can run in any order.

mod report;
mod sources;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feature_pipeline::{LabeledDataset, PipelineError};
use crate::forest::{self, ForestConfig, ForestDiagnostics, ForestError};
use crate::seed::derive_seed;

pub use report::{
    emit_report, write_plot_data, ArmAggregate, ExperimentReport, PairSeedRecord, ReportFormat,
    SeedRecord, REPORT_SCHEMA, REPORT_SCHEMA_VERSION,
};
pub use sources::{
    digits_pairs, synthetic_ticket_config, synthetic_ticket_pairs, ticket_pairs, SynthBenchmark,
    TicketComparison,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("train ratio {0} must lie strictly between 0 and 1")]
    Ratio(f64),
    #[error("class {class} has {rows} rows, too few for a train/test split at this ratio")]
    ClassTooSmall { class: u8, rows: usize },
    #[error("arms are misaligned: {0}")]
    Misaligned(String),
    #[error("sign test needs at least one non-tied pair")]
    NoDecisivePairs,
    #[error("no pairs to run")]
    Empty,
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("serializing report: {0}")]
    Serialize(#[from] serde_json::Error),
}

impl ExperimentError {
    pub fn is_io(&self) -> bool {
        match self {
            Self::Io { .. } => true,
            Self::Pipeline(p) => p.is_io(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// `forest.seed` is the experiment master seed; each pair trains with a
    /// seed derived from it.
    pub forest: ForestConfig,
    pub train_ratio: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            forest: ForestConfig::default(),
            train_ratio: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSeeds {
    pub split: u64,
    pub forest: u64,
}

pub fn pair_seeds(master: u64, index: usize) -> PairSeeds {
    PairSeeds {
        split: derive_seed(master, 2 * index as u64),
        forest: derive_seed(master, 2 * index as u64 + 1),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per class, shuffles row indices and keeps `round(ratio * N_c)` for
/// training. Both sides must keep at least one row of each class.
pub fn stratified_split(
    labels: &[u8],
    ratio: f64,
    seed: u64,
) -> Result<SplitIndices, ExperimentError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(ExperimentError::Ratio(ratio));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [0u8, 1] {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let n = rows.len();
        let k = (ratio * n as f64).round() as usize;
        if k == 0 || k >= n {
            return Err(ExperimentError::ClassTooSmall { class, rows: n });
        }
        rows.shuffle(&mut rng);
        train.extend_from_slice(&rows[..k]);
        test.extend_from_slice(&rows[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test })
}

pub fn split_train_test(
    ds: &LabeledDataset,
    ratio: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset), ExperimentError> {
    let idx = stratified_split(&ds.labels, ratio, seed)?;
    Ok((ds.select_rows(&idx.train), ds.select_rows(&idx.test)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Better,
    Worse,
    Tie,
}

impl Verdict {
    pub fn from_accuracies(a: f64, b: f64) -> Self {
        if b > a {
            Self::Better
        } else if b < a {
            Self::Worse
        } else {
            Self::Tie
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Better => "better",
            Self::Worse => "worse",
            Self::Tie => "tie",
        }
    }
}

/// Compact per-arm forest diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub accuracy: f64,
    pub mean_depth: f64,
    pub median_depth: f64,
    pub mean_splits: f64,
    pub variety_sum: f64,
    pub variety_mean: f64,
    pub avg_cosine_correlation: Option<f64>,
    pub zero_usage_trees: usize,
    pub aggregate_usage: Vec<u64>,
}

impl ArmSummary {
    fn new(accuracy: f64, d: &ForestDiagnostics) -> Self {
        Self {
            accuracy,
            mean_depth: d.mean_depth,
            median_depth: d.median_depth,
            mean_splits: d.mean_splits(),
            variety_sum: d.variety_sum,
            variety_mean: d.variety_mean,
            avg_cosine_correlation: d.avg_cosine_correlation,
            zero_usage_trees: d.zero_usage_trees,
            aggregate_usage: d.aggregate_usage.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseOutcome {
    /// Class names for labels 0 and 1.
    pub pair: [String; 2],
    pub accuracy_a: f64,
    pub accuracy_b: f64,
    /// Arm B relative to arm A.
    pub verdict: Verdict,
    pub n_train: usize,
    pub n_test: usize,
    pub arm_a: ArmSummary,
    pub arm_b: ArmSummary,
}

/// Two feature views of the same labelled rows.
#[derive(Debug, Clone)]
pub struct PairSpec {
    pub arm_a: LabeledDataset,
    pub arm_b: LabeledDataset,
}

impl PairSpec {
    pub fn new(arm_a: LabeledDataset, arm_b: LabeledDataset) -> Result<Self, ExperimentError> {
        if arm_a.n_rows() != arm_b.n_rows() {
            return Err(ExperimentError::Misaligned(format!(
                "{} rows vs {} rows",
                arm_a.n_rows(),
                arm_b.n_rows()
            )));
        }
        if arm_a.labels != arm_b.labels {
            return Err(ExperimentError::Misaligned("label sequences differ".into()));
        }
        Ok(Self { arm_a, arm_b })
    }

    pub fn name(&self) -> [String; 2] {
        self.arm_a.class_names.clone()
    }
}

fn train_arm(
    ds: &LabeledDataset,
    split: &SplitIndices,
    config: &ForestConfig,
) -> Result<ArmSummary, ExperimentError> {
    let train = ds.select_rows(&split.train);
    let test = ds.select_rows(&split.test);
    let (model, diag) = forest::train(&train, config)?;
    Ok(ArmSummary::new(model.accuracy(&test)?, &diag))
}

pub fn run_pairwise(
    pair: &PairSpec,
    config: &ExperimentConfig,
    seeds: PairSeeds,
) -> Result<PairwiseOutcome, ExperimentError> {
    let pair = PairSpec::new(pair.arm_a.clone(), pair.arm_b.clone())?;
    let split = stratified_split(&pair.arm_a.labels, config.train_ratio, seeds.split)?;
    let forest = ForestConfig {
        seed: seeds.forest,
        ..config.forest.clone()
    };
    let arm_a = train_arm(&pair.arm_a, &split, &forest)?;
    let arm_b = train_arm(&pair.arm_b, &split, &forest)?;
    Ok(PairwiseOutcome {
        pair: pair.name(),
        accuracy_a: arm_a.accuracy,
        accuracy_b: arm_b.accuracy,
        verdict: Verdict::from_accuracies(arm_a.accuracy, arm_b.accuracy),
        n_train: split.train.len(),
        n_test: split.test.len(),
        arm_a,
        arm_b,
    })
}

/// Runs every pair in parallel; outcome `i` belongs to `pairs[i]`.
pub fn run_pairs(
    pairs: &[PairSpec],
    config: &ExperimentConfig,
) -> Result<Vec<PairwiseOutcome>, ExperimentError> {
    if pairs.is_empty() {
        return Err(ExperimentError::Empty);
    }
    pairs
        .par_iter()
        .enumerate()
        .map(|(i, p)| run_pairwise(p, config, pair_seeds(config.forest.seed, i)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignTestReport {
    pub n_better: u64,
    pub n_worse: u64,
    pub n_tie: u64,
    pub n_decisive: u64,
    pub mu: f64,
    pub sigma: f64,
    /// `(n_better - 0.5 - mu) / sigma`.
    pub z: f64,
    /// Upper normal tail of `z`.
    pub p_one_sided: f64,
}

pub fn sign_test(
    n_better: u64,
    n_worse: u64,
    n_tie: u64,
) -> Result<SignTestReport, ExperimentError> {
    let n = n_better + n_worse;
    if n == 0 {
        return Err(ExperimentError::NoDecisivePairs);
    }
    let mu = n as f64 / 2.0;
    let sigma = (n as f64 / 4.0).sqrt();
    let z = (n_better as f64 - 0.5 - mu) / sigma;
    Ok(SignTestReport {
        n_better,
        n_worse,
        n_tie,
        n_decisive: n,
        mu,
        sigma,
        z,
        p_one_sided: 0.5 * statrs::function::erf::erfc(z / std::f64::consts::SQRT_2),
    })
}

/// `(better, worse, tie)` counts.
pub fn tally(outcomes: &[PairwiseOutcome]) -> (u64, u64, u64) {
    outcomes
        .iter()
        .fold((0, 0, 0), |(b, w, t), o| match o.verdict {
            Verdict::Better => (b + 1, w, t),
            Verdict::Worse => (b, w + 1, t),
            Verdict::Tie => (b, w, t + 1),
        })
}

pub fn sign_test_outcomes(outcomes: &[PairwiseOutcome]) -> Option<SignTestReport> {
    let (b, w, t) = tally(outcomes);
    sign_test(b, w, t).ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    A,
    B,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::A => "a",
            Self::B => "b",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: usize,
    pub arm: Arm,
    pub pairs: usize,
    pub mean_accuracy: f64,
    pub mean_depth: f64,
    pub mean_variety: f64,
    pub mean_cosine: Option<f64>,
    pub aggregate_usage: Vec<u64>,
    /// Arm B vs arm A at this `m`; repeated on both arms' rows.
    pub sign_test: Option<SignTestReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Requested values larger than the narrower arm.
    pub skipped: Vec<usize>,
}

impl SweepResult {
    /// Highest mean accuracy over `m` for one arm.
    pub fn best_accuracy(&self, arm: Arm) -> Option<(usize, f64)> {
        self.rows
            .iter()
            .filter(|r| r.arm == arm)
            .map(|r| (r.m, r.mean_accuracy))
            .max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn mean_option(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| mean(v.into_iter()))
}

fn sum_usage<'a>(usages: impl Iterator<Item = &'a Vec<u64>>) -> Vec<u64> {
    let mut acc: Vec<u64> = Vec::new();
    for u in usages {
        if acc.len() < u.len() {
            acc.resize(u.len(), 0);
        }
        for (a, &c) in acc.iter_mut().zip(u) {
            *a += c;
        }
    }
    acc
}

pub(crate) fn arm_view(o: &PairwiseOutcome, arm: Arm) -> &ArmSummary {
    match arm {
        Arm::A => &o.arm_a,
        Arm::B => &o.arm_b,
    }
}

/// Runs every pair at each `m` and averages per arm.
pub fn sweep_m(
    pairs: &[PairSpec],
    m_values: &[usize],
    config: &ExperimentConfig,
) -> Result<SweepResult, ExperimentError> {
    if pairs.is_empty() {
        return Err(ExperimentError::Empty);
    }
    let width = pairs
        .iter()
        .map(|p| p.arm_a.width().min(p.arm_b.width()))
        .min()
        .unwrap_or(0);
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for &m in m_values {
        if m == 0 || m > width {
            skipped.push(m);
            continue;
        }
        let cfg = ExperimentConfig {
            forest: ForestConfig {
                max_features: m,
                ..config.forest.clone()
            },
            ..config.clone()
        };
        let outcomes = run_pairs(pairs, &cfg)?;
        let sign = sign_test_outcomes(&outcomes);
        for arm in [Arm::A, Arm::B] {
            let view = || outcomes.iter().map(|o| arm_view(o, arm));
            rows.push(SweepRow {
                m,
                arm,
                pairs: outcomes.len(),
                mean_accuracy: mean(view().map(|s| s.accuracy)),
                mean_depth: mean(view().map(|s| s.mean_depth)),
                mean_variety: mean(view().map(|s| s.variety_mean)),
                mean_cosine: mean_option(view().map(|s| s.avg_cosine_correlation)),
                aggregate_usage: sum_usage(view().map(|s| &s.aggregate_usage)),
                sign_test: sign.clone(),
            });
        }
    }
    Ok(SweepResult { rows, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature_pipeline::{augment_zero_variance, DatasetVariant};

    fn dataset(n0: usize, n1: usize) -> LabeledDataset {
        let features: Vec<Vec<f64>> = (0..n0 + n1)
            .map(|i| vec![i as f64 + if i >= n0 { 100.0 } else { 0.0 }, (i % 7) as f64])
            .collect();
        let labels = (0..n0 + n1).map(|i| u8::from(i >= n0)).collect();
        LabeledDataset::new(
            vec!["x".into(), "y".into()],
            features,
            labels,
            DatasetVariant::Delta,
            ["p".into(), "q".into()],
        )
        .unwrap()
    }

    #[test]
    fn stratified_arithmetic() {
        let ds = dataset(10, 10);
        let (train, test) = split_train_test(&ds, 0.8, 3).unwrap();
        assert_eq!(train.class_counts(), [8, 8]);
        assert_eq!(test.class_counts(), [2, 2]);
        assert_eq!(
            stratified_split(&ds.labels, 0.8, 3).unwrap(),
            stratified_split(&ds.labels, 0.8, 3).unwrap()
        );
        assert!(matches!(
            split_train_test(&dataset(3, 10), 0.99, 1),
            Err(ExperimentError::ClassTooSmall { class: 0, rows: 3 })
        ));
        assert!(matches!(
            split_train_test(&ds, 1.0, 1),
            Err(ExperimentError::Ratio(_))
        ));
    }

    #[test]
    fn sign_test_examples() {
        let r = sign_test(4488, 2773, 0).unwrap();
        assert_eq!(r.mu, 3630.5);
        assert!((r.sigma - 42.6057).abs() < 1e-4);
        assert!((r.z - 20.114_655_514_784_4).abs() < 1e-9);
        assert!(r.p_one_sided < 1e-89);
        assert!((sign_test(52, 14, 0).unwrap().z - 4.5544).abs() < 1e-4);
        assert!((sign_test(1084, 675, 0).unwrap().z - 9.7281).abs() < 1e-4);
        let null = sign_test(30, 30, 2).unwrap();
        assert!(null.z < 0.0 && null.p_one_sided > 0.5);
        assert!(matches!(
            sign_test(0, 0, 5),
            Err(ExperimentError::NoDecisivePairs)
        ));
    }

    #[test]
    fn identical_arms_tie() {
        let ds = dataset(30, 30);
        let pair = PairSpec::new(ds.clone(), ds).unwrap();
        let cfg = ExperimentConfig {
            forest: ForestConfig {
                n_estimators: 10,
                max_features: 1,
                ..Default::default()
            },
            ..Default::default()
        };
        let o = run_pairwise(&pair, &cfg, pair_seeds(1, 0)).unwrap();
        assert_eq!(o.verdict, Verdict::Tie);
        assert_eq!(o.arm_a, o.arm_b);
        assert_eq!((o.n_train, o.n_test), (48, 12));
    }

    #[test]
    fn misaligned_arms_are_rejected() {
        assert!(matches!(
            PairSpec::new(dataset(5, 5), dataset(5, 6)),
            Err(ExperimentError::Misaligned(_))
        ));
    }

    #[test]
    fn sweep_shape() {
        let ds = dataset(25, 25);
        let pairs = vec![PairSpec::new(ds.clone(), augment_zero_variance(&ds, 3, 1.0)).unwrap()];
        let cfg = ExperimentConfig {
            forest: ForestConfig {
                n_estimators: 5,
                ..Default::default()
            },
            ..Default::default()
        };
        let s = sweep_m(&pairs, &[1, 2, 3], &cfg).unwrap();
        assert_eq!(s.rows.len(), 4);
        assert_eq!(s.skipped, vec![3]);
        let single = run_pairs(
            &pairs,
            &ExperimentConfig {
                forest: ForestConfig {
                    max_features: 2,
                    ..cfg.forest.clone()
                },
                ..cfg.clone()
            },
        )
        .unwrap();
        let row = s.rows.iter().find(|r| r.m == 2 && r.arm == Arm::B).unwrap();
        assert_eq!(row.mean_accuracy, single[0].accuracy_b);
    }
}
