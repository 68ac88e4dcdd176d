//! UCI optical digits (8×8 pixel counts in 0..=16, class 0..=9).

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DatasetVariant, LabeledDataset, PipelineError};

pub const DIGITS_PIXELS: usize = 64;

/// The 1797-row optdigits test set shipped with the crate.
pub const BUNDLED_DIGITS: &str = include_str!("../../data/optdigits.csv");

/// Digits restricted to a seeded subset of pixel columns.
#[derive(Debug, Clone)]
pub struct DigitsSubset {
    /// Original pixel indices kept, ascending.
    pub columns: Vec<usize>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl DigitsSubset {
    pub fn classes(&self) -> Vec<u8> {
        let mut classes = self.labels.clone();
        classes.sort_unstable();
        classes.dedup();
        classes
    }

    /// Rows of digits `a` (label 0) and `b` (label 1) in file order.
    pub fn pair_dataset(&self, a: u8, b: u8) -> Result<LabeledDataset, PipelineError> {
        if a == b {
            return Err(PipelineError::Config(format!(
                "digit pair ({a}, {b}) is not a pair"
            )));
        }
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (row, &digit) in self.rows.iter().zip(&self.labels) {
            if digit == a || digit == b {
                features.push(row.clone());
                labels.push(u8::from(digit == b));
            }
        }
        LabeledDataset::new(
            self.columns.iter().map(|c| format!("px_{c}")).collect(),
            features,
            labels,
            DatasetVariant::Delta,
            [a.to_string(), b.to_string()],
        )
    }
}

/// `subset_size` distinct columns out of `total`, drawn uniformly for `seed`
/// and returned in ascending order.
pub fn select_columns(
    total: usize,
    subset_size: usize,
    seed: u64,
) -> Result<Vec<usize>, PipelineError> {
    if subset_size > total {
        return Err(PipelineError::SubsetTooLarge {
            requested: subset_size,
            available: total,
        });
    }
    if subset_size == 0 {
        return Err(PipelineError::Config(
            "column subset must be non-empty".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols = rand::seq::index::sample(&mut rng, total, subset_size).into_vec();
    cols.sort_unstable();
    Ok(cols)
}

/// Unordered pairs `(a, b)` with `a < b`, or both orders when `ordered`.
pub fn digit_pairs(classes: &[u8], ordered: bool) -> Vec<(u8, u8)> {
    let mut pairs = Vec::new();
    for (i, &a) in classes.iter().enumerate() {
        for (j, &b) in classes.iter().enumerate() {
            if i < j || (ordered && i > j) {
                pairs.push((a, b));
            }
        }
    }
    if ordered {
        pairs.sort_unstable();
    }
    pairs
}

/// Loads `64 pixels + label` lines; a non-numeric first line is treated as a
/// header.
pub fn load_digits(
    path: &Path,
    subset_size: usize,
    subset_seed: u64,
) -> Result<DigitsSubset, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_digits(&text, path, subset_size, subset_seed)
}

/// [`load_digits`] over the bundled copy.
pub fn bundled_digits(subset_size: usize, subset_seed: u64) -> Result<DigitsSubset, PipelineError> {
    parse_digits(
        BUNDLED_DIGITS,
        Path::new("<bundled optdigits>"),
        subset_size,
        subset_seed,
    )
}

/// Parses digits text; `path` only labels errors.
pub fn parse_digits(
    text: &str,
    path: &Path,
    subset_size: usize,
    subset_seed: u64,
) -> Result<DigitsSubset, PipelineError> {
    let columns = select_columns(DIGITS_PIXELS, subset_size, subset_seed)?;
    let schema = |line: usize, message: String| PipelineError::Schema {
        path: path.to_path_buf(),
        line: line as u64,
        message,
    };
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let parsed: Result<Vec<u8>, _> = raw.split(',').map(|v| v.trim().parse::<u8>()).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if idx == 0 => continue,
            Err(_) => return Err(schema(line_no, "non-integer field".into())),
        };
        if values.len() != DIGITS_PIXELS + 1 {
            return Err(schema(
                line_no,
                format!(
                    "expected {} fields, found {}",
                    DIGITS_PIXELS + 1,
                    values.len()
                ),
            ));
        }
        let (pixels, label) = values.split_at(DIGITS_PIXELS);
        if pixels.iter().any(|&p| p > 16) {
            return Err(schema(line_no, "pixel value outside 0..=16".into()));
        }
        if label[0] > 9 {
            return Err(schema(
                line_no,
                format!("class label {} outside 0..=9", label[0]),
            ));
        }
        rows.push(columns.iter().map(|&c| f64::from(pixels[c])).collect());
        labels.push(label[0]);
    }
    Ok(DigitsSubset {
        columns,
        rows,
        labels,
    })
}
