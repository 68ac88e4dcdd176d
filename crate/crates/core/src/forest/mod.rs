//! Deterministic binary random forest with per-tree usage instrumentation.
//!
//! Trees are grown on bootstrap samples with Gini splitting over `m`
//! uniformly drawn candidate features per node. Besides predictions the
//! trainer reports, per tree, how often each feature was split on and how
//! deep the tree grew; the diagnostics module turns those into variety and
//! correlation summaries.

mod diagnostics;
mod tree;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feature_pipeline::LabeledDataset;
use crate::seed::derive_seed;

pub use diagnostics::{
    cosine_from_distance, diagnostics_variety, prediction_correlation, ForestDiagnostics,
    PredictionSpread, VarietySummary,
};
pub use tree::{best_split, gini, Node, SplitCandidate, TrainingView, Tree};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ForestError {
    #[error("class weight totals are both zero")]
    EmptyNode,
    #[error("training data must contain both classes")]
    SingleClass,
    #[error("invalid forest configuration: {0}")]
    Config(String),
    #[error("feature vector has width {got}, model expects {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("variety needs at least two trees, got {0}")]
    TooFewTrees(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeight {
    /// `w_c = N / (2 N_c)` from the full training set.
    #[default]
    Balanced,
    None,
}

/// Behaviour when none of the `m` drawn candidates admits a positive-gain
/// split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoValidSplitPolicy {
    /// Keep drawing from the rest of the node's feature permutation until a
    /// valid split appears or features run out.
    #[default]
    ExtendUntilValid,
    /// Make the node a leaf.
    Leaf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_estimators: usize,
    pub max_features: usize,
    pub max_depth: usize,
    pub class_weight: ClassWeight,
    pub seed: u64,
    pub no_valid_split_policy: NoValidSplitPolicy,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            max_features: 2,
            max_depth: 100,
            class_weight: ClassWeight::Balanced,
            seed: 42,
            no_valid_split_policy: NoValidSplitPolicy::ExtendUntilValid,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self, n_features: usize) -> Result<(), ForestError> {
        if self.n_estimators == 0 {
            return Err(ForestError::Config(
                "n_estimators must be at least 1".into(),
            ));
        }
        if self.max_depth == 0 {
            return Err(ForestError::Config("max_depth must be at least 1".into()));
        }
        if self.max_features == 0 || self.max_features > n_features {
            return Err(ForestError::Config(format!(
                "max_features {} outside 1..={n_features}",
                self.max_features
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub config: ForestConfig,
    pub feature_names: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: u8,
    pub proba: [f64; 2],
}

/// Versioned container for a serialized model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub schema_version: u32,
    pub model: ForestModel,
    pub diagnostics: ForestDiagnostics,
}

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// `N / (2 N_c)` per class, or ones.
pub fn class_weights(labels: &[u8], mode: ClassWeight) -> Result<[f64; 2], ForestError> {
    let ones = labels.iter().filter(|&&y| y == 1).count();
    let zeros = labels.len() - ones;
    if ones == 0 || zeros == 0 {
        return Err(ForestError::SingleClass);
    }
    Ok(match mode {
        ClassWeight::None => [1.0, 1.0],
        ClassWeight::Balanced => {
            let n = labels.len() as f64;
            [n / (2.0 * zeros as f64), n / (2.0 * ones as f64)]
        }
    })
}

/// Trains `B` trees in parallel; tree `b` uses `derive_seed(seed, b)` for
/// both its bootstrap and its candidate draws.
pub fn train(
    ds: &LabeledDataset,
    config: &ForestConfig,
) -> Result<(ForestModel, ForestDiagnostics), ForestError> {
    config.validate(ds.width())?;
    let weights = class_weights(&ds.labels, config.class_weight)?;
    let columns: Vec<Vec<f64>> = (0..ds.width()).map(|j| ds.column(j)).collect();
    let view = TrainingView::new(&columns, &ds.labels);
    let trees: Vec<Tree> = (0..config.n_estimators)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, b as u64));
            tree::grow(&view, weights, config, &mut rng)
        })
        .collect();
    let model = ForestModel {
        trees,
        config: config.clone(),
        feature_names: ds.feature_names.clone(),
    };
    let diagnostics = ForestDiagnostics::from_trees(&model.trees, ds.width());
    Ok((model, diagnostics))
}

impl ForestModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Soft vote: mean of the trees' leaf class distributions; ties go to 0.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction, ForestError> {
        if x.len() != self.n_features() {
            return Err(ForestError::WidthMismatch {
                expected: self.n_features(),
                got: x.len(),
            });
        }
        let mut proba = [0.0, 0.0];
        for t in &self.trees {
            let p = t.predict_proba(x);
            proba[0] += p[0];
            proba[1] += p[1];
        }
        let b = self.trees.len() as f64;
        proba[0] /= b;
        proba[1] /= b;
        let label = u8::from(proba[1] > proba[0]);
        Ok(Prediction { label, proba })
    }

    /// Unweighted fraction of rows predicted correctly.
    pub fn accuracy(&self, ds: &LabeledDataset) -> Result<f64, ForestError> {
        if ds.n_rows() == 0 {
            return Ok(0.0);
        }
        let mut correct = 0usize;
        for (x, &y) in ds.features.iter().zip(&ds.labels) {
            if self.predict(x)?.label == y {
                correct += 1;
            }
        }
        Ok(correct as f64 / ds.n_rows() as f64)
    }
}

pub fn predict(model: &ForestModel, x: &[f64]) -> Result<Prediction, ForestError> {
    model.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature_pipeline::{augment_zero_variance, DatasetVariant};

    pub(crate) fn toy(n: usize, seed: u64) -> LabeledDataset {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let y = (i % 3 == 0) as u8;
            let signal: f64 = rng.gen::<f64>() + f64::from(y) * 0.8;
            features.push(vec![
                signal,
                rng.gen(),
                rng.gen::<f64>() * 0.5 + f64::from(y) * 0.2,
            ]);
            labels.push(y);
        }
        LabeledDataset::new(
            vec!["a".into(), "b".into(), "c".into()],
            features,
            labels,
            DatasetVariant::Delta,
            ["0".into(), "1".into()],
        )
        .unwrap()
    }

    #[test]
    fn balanced_weights_sum_to_n() {
        let labels = [0u8, 0, 0, 1, 0, 1, 0];
        let w = class_weights(&labels, ClassWeight::Balanced).unwrap();
        assert!((w[0] * 5.0 + w[1] * 2.0 - 7.0).abs() < 1e-12);
        assert_eq!(
            class_weights(&[1, 1], ClassWeight::Balanced),
            Err(ForestError::SingleClass)
        );
    }

    #[test]
    fn deterministic_training() {
        let ds = toy(120, 1);
        let cfg = ForestConfig {
            n_estimators: 20,
            ..Default::default()
        };
        let a = train(&ds, &cfg).unwrap();
        let b = train(&ds, &cfg).unwrap();
        assert_eq!(a, b);
        let other = ForestConfig { seed: 7, ..cfg };
        assert_ne!(train(&ds, &other).unwrap().0, a.0);
    }

    #[test]
    fn single_binary_feature_gives_stumps() {
        let features: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![f64::from(i % 2), f64::from((i * 7 % 5) as u8), 3.0])
            .collect();
        let labels: Vec<u8> = (0..40).map(|i| (i % 2) as u8).collect();
        let ds = LabeledDataset::new(
            vec!["bit".into(), "noise".into(), "const".into()],
            features,
            labels,
            DatasetVariant::Delta,
            ["0".into(), "1".into()],
        )
        .unwrap();
        let cfg = ForestConfig {
            n_estimators: 15,
            max_features: 3,
            ..Default::default()
        };
        let (model, diag) = train(&ds, &cfg).unwrap();
        assert!(diag.depths.iter().all(|&d| d == 1));
        assert!(diag.usage_vectors.iter().all(|u| u == &vec![1, 0, 0]));
        assert_eq!(model.accuracy(&ds).unwrap(), 1.0);
    }

    #[test]
    fn constant_fill_value_is_irrelevant() {
        let ds = toy(90, 3);
        let cfg = ForestConfig {
            n_estimators: 10,
            max_features: 4,
            ..Default::default()
        };
        let one = train(&augment_zero_variance(&ds, 8, 1.0), &cfg).unwrap();
        let other = train(&augment_zero_variance(&ds, 8, 7.3), &cfg).unwrap();
        assert_eq!(one.0.trees, other.0.trees);
        assert_eq!(one.1, other.1);
        // constant columns never split
        assert!(one.1.aggregate_usage[3..].iter().all(|&c| c == 0));
    }

    #[test]
    fn prediction_rules() {
        let ds = toy(60, 5);
        let cfg = ForestConfig {
            n_estimators: 1,
            ..Default::default()
        };
        let (model, _) = train(&ds, &cfg).unwrap();
        let x = &ds.features[0];
        assert_eq!(
            model.predict(x).unwrap().proba,
            model.trees[0].predict_proba(x)
        );
        assert_eq!(
            model.predict(&[1.0]),
            Err(ForestError::WidthMismatch {
                expected: 3,
                got: 1
            })
        );

        let tie = ForestModel {
            trees: vec![Tree::leaf([1.0, 0.0]), Tree::leaf([0.0, 1.0])],
            config: cfg.clone(),
            feature_names: vec!["x".into()],
        };
        let p = tie.predict(&[0.0]).unwrap();
        assert_eq!(p.label, 0);
        let unanimous = ForestModel {
            trees: vec![Tree::leaf([0.0, 1.0]); 3],
            config: cfg,
            feature_names: vec!["x".into()],
        };
        assert_eq!(
            unanimous.predict(&[0.0]).unwrap(),
            Prediction {
                label: 1,
                proba: [0.0, 1.0]
            }
        );
    }

    #[test]
    fn config_validation() {
        let cfg = ForestConfig {
            max_features: 4,
            ..Default::default()
        };
        assert!(cfg.validate(3).is_err());
        assert!(cfg.validate(4).is_ok());
        assert!(ForestConfig {
            n_estimators: 0,
            ..Default::default()
        }
        .validate(3)
        .is_err());
    }

    #[test]
    fn leaf_policy_never_grows_deeper() {
        let ds = augment_zero_variance(&toy(150, 9), 20, 1.0);
        let base = ForestConfig {
            n_estimators: 20,
            max_features: 2,
            ..Default::default()
        };
        let leaf = ForestConfig {
            no_valid_split_policy: NoValidSplitPolicy::Leaf,
            ..base.clone()
        };
        let (_, extended) = train(&ds, &base).unwrap();
        let (_, truncated) = train(&ds, &leaf).unwrap();
        assert!(truncated.mean_depth < extended.mean_depth);
    }
}
