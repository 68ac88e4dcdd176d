//! Event ingestion, window aggregation, and the labeled dataset variants
//! shared by every experiment.

mod digits;
mod events;
mod synth;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scaled_beta::{self, EstimationError, SummaryStats};

pub use digits::{
    bundled_digits, digit_pairs, load_digits, parse_digits, select_columns, DigitsSubset,
    BUNDLED_DIGITS, DIGITS_PIXELS,
};
pub use events::{
    aggregate_window, load_event_csv, write_event_csv, EventCorpus, EventSeries, EventSnapshot,
    RejectedRow, Window, SNAPSHOT_HEADER,
};
pub use synth::{
    load_synth_config, synth_generate, ArtistProfile, ShapePrior, SynthConfig, SynthCorpus,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Schema {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("window selects no snapshots for event {0}")]
    EmptyWindow(String),
    #[error("artist {0:?} has no usable events")]
    MissingArtist(String),
    #[error("dataset must contain both labels")]
    SingleClass,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("column subset of {requested} exceeds the {available} available columns")]
    SubsetTooLarge { requested: usize, available: usize },
}

impl PipelineError {
    pub fn is_io(&self) -> bool {
        matches!(self, PipelineError::Io { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetVariant {
    Basic,
    AlphaBeta,
    AlphaBetaReg,
    Delta,
    DeltaReg,
}

impl DatasetVariant {
    /// The variant produced by appending zero-variance columns.
    pub fn regularized(self) -> Self {
        match self {
            DatasetVariant::AlphaBeta | DatasetVariant::AlphaBetaReg => {
                DatasetVariant::AlphaBetaReg
            }
            DatasetVariant::Delta | DatasetVariant::DeltaReg => DatasetVariant::DeltaReg,
            DatasetVariant::Basic => DatasetVariant::Basic,
        }
    }
}

impl fmt::Display for DatasetVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            DatasetVariant::Basic => "basic",
            DatasetVariant::AlphaBeta => "alpha_beta",
            DatasetVariant::AlphaBetaReg => "alpha_beta_reg",
            DatasetVariant::Delta => "delta",
            DatasetVariant::DeltaReg => "delta_reg",
        };
        f.write_str(name)
    }
}

/// Row-major binary classification dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub feature_names: Vec<String>,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub variant: DatasetVariant,
    pub n_informative: usize,
    pub n_zero_variance: usize,
    /// Source names for labels 0 and 1.
    pub class_names: [String; 2],
}

impl LabeledDataset {
    pub fn new(
        feature_names: Vec<String>,
        features: Vec<Vec<f64>>,
        labels: Vec<u8>,
        variant: DatasetVariant,
        class_names: [String; 2],
    ) -> Result<Self, PipelineError> {
        let width = feature_names.len();
        if features.len() != labels.len() {
            return Err(PipelineError::Config(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        if let Some(bad) = features.iter().position(|r| r.len() != width) {
            return Err(PipelineError::Config(format!(
                "row {bad} has width {} (expected {width})",
                features[bad].len()
            )));
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(PipelineError::Config("labels must be 0 or 1".into()));
        }
        if !(labels.contains(&0) && labels.contains(&1)) {
            return Err(PipelineError::SingleClass);
        }
        Ok(Self {
            feature_names,
            features,
            labels,
            variant,
            n_informative: width,
            n_zero_variance: 0,
            class_names,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn width(&self) -> usize {
        self.feature_names.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.features.iter().map(|r| r[j]).collect()
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let ones = self.labels.iter().filter(|&&y| y == 1).count();
        [self.labels.len() - ones, ones]
    }

    /// Rows picked by index, in the given order. Labels need not stay mixed.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            feature_names: self.feature_names.clone(),
            features: rows.iter().map(|&i| self.features[i].clone()).collect(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            variant: self.variant,
            n_informative: self.n_informative,
            n_zero_variance: self.n_zero_variance,
            class_names: self.class_names.clone(),
        }
    }

    /// Writes `feature..., label` rows with a header.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<(), PipelineError> {
        let io = |source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut writer = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
        let mut header = self.feature_names.clone();
        header.push("label".into());
        writer.write_record(&header).map_err(|e| io(e.into()))?;
        for (row, y) in self.features.iter().zip(&self.labels) {
            let mut record: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            record.push(y.to_string());
            writer.write_record(&record).map_err(|e| io(e.into()))?;
        }
        writer.flush().map_err(io)
    }
}

pub const BASIC_FEATURES: [&str; 4] = ["mean", "median", "max", "min"];
pub const ALPHA_BETA_FEATURES: [&str; 6] = ["mean", "median", "max", "min", "alpha", "beta"];

/// What to do with rows whose shape estimate fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputationPolicy {
    /// Append `(0, 0)` and keep the row, so paired arms stay aligned.
    #[default]
    Sentinel,
    /// Remove the row; callers align other arms with `source_rows`.
    Drop,
}

impl std::str::FromStr for ImputationPolicy {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sentinel" => Ok(Self::Sentinel),
            "drop" => Ok(Self::Drop),
            other => Err(PipelineError::Config(format!(
                "unknown imputation policy {other:?} (expected sentinel or drop)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BasicBuild {
    pub dataset: LabeledDataset,
    pub stats: Vec<SummaryStats>,
    pub event_ids: Vec<String>,
    /// Events left out because their aggregated stats were degenerate.
    pub dropped: Vec<(String, EstimationError)>,
}

#[derive(Debug, Clone)]
pub struct AlphaBetaBuild {
    pub dataset: LabeledDataset,
    /// Index into the basic dataset for each output row.
    pub source_rows: Vec<usize>,
    /// Basic-dataset rows whose estimate failed, with the reason.
    pub imputed: Vec<(usize, EstimationError)>,
}

/// One row per event of the two artists: `[mean, median, max, min]`,
/// label 0 for `pair.0` and 1 for `pair.1`.
pub fn build_basic(
    corpus: &EventCorpus,
    pair: (&str, &str),
    window: Window,
) -> Result<BasicBuild, PipelineError> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut stats = Vec::new();
    let mut event_ids = Vec::new();
    let mut dropped = Vec::new();
    for (label, artist) in [(0u8, pair.0), (1u8, pair.1)] {
        let mut kept = 0usize;
        for series in corpus.by_artist(artist) {
            let summary = aggregate_window(series, window)?;
            if let Err(e) = summary.validate() {
                dropped.push((series.event_id.clone(), e));
                continue;
            }
            features.push(vec![
                summary.mean_price,
                summary.median_price,
                summary.max_price,
                summary.min_price,
            ]);
            labels.push(label);
            stats.push(summary);
            event_ids.push(series.event_id.clone());
            kept += 1;
        }
        if kept == 0 {
            return Err(PipelineError::MissingArtist(artist.to_string()));
        }
    }
    let dataset = LabeledDataset::new(
        BASIC_FEATURES.iter().map(|s| s.to_string()).collect(),
        features,
        labels,
        DatasetVariant::Basic,
        [pair.0.to_string(), pair.1.to_string()],
    )?;
    Ok(BasicBuild {
        dataset,
        stats,
        event_ids,
        dropped,
    })
}

/// Appends the recovered `(α, β)` to each basic row.
pub fn build_alpha_beta(basic: &BasicBuild, policy: ImputationPolicy) -> AlphaBetaBuild {
    let mut features = Vec::with_capacity(basic.stats.len());
    let mut labels = Vec::with_capacity(basic.stats.len());
    let mut source_rows = Vec::with_capacity(basic.stats.len());
    let mut imputed = Vec::new();
    for (i, stats) in basic.stats.iter().enumerate() {
        let shape = match scaled_beta::estimate(stats) {
            Ok(p) => Some((p.alpha(), p.beta())),
            Err(e) => {
                imputed.push((i, e));
                match policy {
                    ImputationPolicy::Sentinel => Some((0.0, 0.0)),
                    ImputationPolicy::Drop => None,
                }
            }
        };
        if let Some((alpha, beta)) = shape {
            let mut row = basic.dataset.features[i].clone();
            row.extend([alpha, beta]);
            features.push(row);
            labels.push(basic.dataset.labels[i]);
            source_rows.push(i);
        }
    }
    let dataset = LabeledDataset {
        feature_names: ALPHA_BETA_FEATURES.iter().map(|s| s.to_string()).collect(),
        features,
        labels,
        variant: DatasetVariant::AlphaBeta,
        n_informative: ALPHA_BETA_FEATURES.len(),
        n_zero_variance: 0,
        class_names: basic.dataset.class_names.clone(),
    };
    AlphaBetaBuild {
        dataset,
        source_rows,
        imputed,
    }
}

/// Appends `n_zv` columns holding the constant `fill`.
pub fn augment_zero_variance(ds: &LabeledDataset, n_zv: usize, fill: f64) -> LabeledDataset {
    if n_zv == 0 {
        return ds.clone();
    }
    let mut out = ds.clone();
    let start = ds.n_zero_variance;
    out.feature_names
        .extend((start..start + n_zv).map(|k| format!("zv_{k}")));
    for row in &mut out.features {
        row.extend(std::iter::repeat_n(fill, n_zv));
    }
    out.n_zero_variance += n_zv;
    out.variant = ds.variant.regularized();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn snapshot(artist: &str, event: &str, day: u32, stats: [f64; 4]) -> EventSnapshot {
        EventSnapshot {
            artist: artist.into(),
            event_id: event.into(),
            snapshot_date: NaiveDate::from_ymd_opt(2024, 3, day).unwrap(),
            mean_price: stats[0],
            median_price: stats[1],
            low_price: stats[2],
            high_price: stats[3],
            listing_count: 10,
        }
    }

    fn corpus() -> EventCorpus {
        let rows = vec![
            snapshot("a", "a1", 1, [1.0 / 3.0, 0.3125, 0.0, 1.0]),
            snapshot("a", "a2", 1, [60.0, 55.0, 40.0, 100.0]),
            snapshot("b", "b1", 1, [0.5, 0.5, 0.0, 1.0]),
            snapshot("b", "b2", 1, [80.0, 70.0, 50.0, 150.0]),
        ];
        EventCorpus::from_snapshots(rows)
    }

    #[test]
    fn basic_layout() {
        let build = build_basic(&corpus(), ("a", "b"), Window::Full).unwrap();
        assert_eq!(build.dataset.n_rows(), 4);
        assert_eq!(build.dataset.width(), 4);
        assert_eq!(
            build.dataset.feature_names,
            ["mean", "median", "max", "min"]
        );
        assert_eq!(build.dataset.labels, [0, 0, 1, 1]);
        assert_eq!(build.dataset.features[1], [60.0, 55.0, 100.0, 40.0]);
    }

    #[test]
    fn missing_artist_is_an_error() {
        let err = build_basic(&corpus(), ("a", "nobody"), Window::Full).unwrap_err();
        assert!(matches!(err, PipelineError::MissingArtist(name) if name == "nobody"));
    }

    #[test]
    fn alpha_beta_appends_and_imputes() {
        let basic = build_basic(&corpus(), ("a", "b"), Window::Full).unwrap();
        let ab = build_alpha_beta(&basic, ImputationPolicy::Sentinel);
        assert_eq!(ab.dataset.n_rows(), basic.dataset.n_rows());
        assert_eq!(ab.dataset.width(), 6);
        let first = &ab.dataset.features[0];
        assert!((first[4] - 2.0).abs() < 1e-9 && (first[5] - 4.0).abs() < 1e-9);
        // the symmetric event gets the sentinel
        assert_eq!(&ab.dataset.features[2][4..], &[0.0, 0.0]);
        assert_eq!(
            ab.imputed,
            vec![(2, EstimationError::SymmetricUnderdetermined)]
        );
        assert_eq!(ab.dataset.labels, basic.dataset.labels);

        let dropped = build_alpha_beta(&basic, ImputationPolicy::Drop);
        assert_eq!(dropped.dataset.n_rows(), 3);
        assert_eq!(dropped.source_rows, [0, 1, 3]);
    }

    #[test]
    fn zero_variance_augmentation() {
        let basic = build_basic(&corpus(), ("a", "b"), Window::Full).unwrap();
        let ab = build_alpha_beta(&basic, ImputationPolicy::Sentinel).dataset;
        assert_eq!(augment_zero_variance(&ab, 0, 1.0), ab);
        let reg = augment_zero_variance(&ab, 20, 1.0);
        assert_eq!(reg.width(), 26);
        assert_eq!(reg.n_zero_variance, 20);
        assert_eq!(reg.n_informative, 6);
        assert_eq!(reg.variant, DatasetVariant::AlphaBetaReg);
        for j in 6..26 {
            let col = reg.column(j);
            assert!(col.iter().all(|&v| v == 1.0));
        }
        assert_eq!(reg.labels, ab.labels);
    }
}
