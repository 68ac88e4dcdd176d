use serde::{Deserialize, Serialize};

use super::{ForestError, ForestModel, Tree};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarietySummary {
    /// Sum over tree pairs of the Euclidean distance between raw usage vectors.
    pub variety_sum: f64,
    /// `variety_sum / (B(B-1)/2)`.
    pub variety_mean: f64,
    /// Mean pairwise cosine over trees with at least one split; `None` when
    /// fewer than two such trees exist.
    pub avg_cosine_correlation: Option<f64>,
    pub zero_usage_trees: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestDiagnostics {
    pub usage_vectors: Vec<Vec<u32>>,
    pub depths: Vec<usize>,
    pub split_counts: Vec<usize>,
    pub mean_depth: f64,
    pub median_depth: f64,
    pub variety_sum: f64,
    pub variety_mean: f64,
    pub avg_cosine_correlation: Option<f64>,
    pub zero_usage_trees: usize,
    pub aggregate_usage: Vec<u64>,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn distance(a: &[u32], b: &[u32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn unit(v: &[u32]) -> Option<Vec<f64>> {
    let norm = v.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
    (norm > 0.0).then(|| v.iter().map(|&x| f64::from(x) / norm).collect())
}

/// `1 - ||u - v||^2 / 2`, equal to the cosine for unit vectors.
pub fn cosine_from_distance(u: &[f64], v: &[f64]) -> f64 {
    1.0 - 0.5 * u.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
}

pub fn diagnostics_variety(usage_vectors: &[Vec<u32>]) -> Result<VarietySummary, ForestError> {
    let b = usage_vectors.len();
    if b < 2 {
        return Err(ForestError::TooFewTrees(b));
    }
    let mut variety_sum = 0.0;
    for i in 0..b {
        for j in i + 1..b {
            variety_sum += distance(&usage_vectors[i], &usage_vectors[j]);
        }
    }
    let units: Vec<Vec<f64>> = usage_vectors.iter().filter_map(|v| unit(v)).collect();
    let k = units.len();
    let avg_cosine_correlation = (k >= 2).then(|| {
        let mut total = 0.0;
        for i in 0..k {
            for j in i + 1..k {
                total += units[i]
                    .iter()
                    .zip(&units[j])
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            }
        }
        (total / (k * (k - 1) / 2) as f64).clamp(-1.0, 1.0)
    });
    Ok(VarietySummary {
        variety_sum,
        variety_mean: variety_sum / (b * (b - 1) / 2) as f64,
        avg_cosine_correlation,
        zero_usage_trees: b - k,
    })
}

impl ForestDiagnostics {
    pub fn from_trees(trees: &[Tree], n_features: usize) -> Self {
        let usage_vectors: Vec<Vec<u32>> = trees.iter().map(|t| t.usage(n_features)).collect();
        let depths: Vec<usize> = trees.iter().map(Tree::depth).collect();
        let split_counts = trees.iter().map(Tree::split_count).collect();
        let mut sorted: Vec<f64> = depths.iter().map(|&d| d as f64).collect();
        sorted.sort_by(f64::total_cmp);
        let mean_depth = sorted.iter().sum::<f64>() / sorted.len().max(1) as f64;
        let mut aggregate_usage = vec![0u64; n_features];
        for u in &usage_vectors {
            for (acc, &c) in aggregate_usage.iter_mut().zip(u) {
                *acc += u64::from(c);
            }
        }
        let variety = diagnostics_variety(&usage_vectors).unwrap_or(VarietySummary {
            variety_sum: 0.0,
            variety_mean: 0.0,
            avg_cosine_correlation: None,
            zero_usage_trees: usage_vectors
                .iter()
                .filter(|u| u.iter().all(|&c| c == 0))
                .count(),
        });
        Self {
            usage_vectors,
            depths,
            split_counts,
            mean_depth,
            median_depth: median(&sorted),
            variety_sum: variety.variety_sum,
            variety_mean: variety.variety_mean,
            avg_cosine_correlation: variety.avg_cosine_correlation,
            zero_usage_trees: variety.zero_usage_trees,
            aggregate_usage,
        }
    }

    pub fn mean_splits(&self) -> f64 {
        self.split_counts.iter().sum::<usize>() as f64 / self.split_counts.len().max(1) as f64
    }
}

/// Spread of per-tree class-1 probabilities over a set of inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSpread {
    /// Across-tree variance of `h_b(x)`, averaged over inputs.
    pub tree_variance: f64,
    /// Mean pairwise Pearson correlation of tree outputs across inputs;
    /// trees with constant output are skipped.
    pub correlation: Option<f64>,
    /// `correlation * tree_variance / B`.
    pub variance_factor: Option<f64>,
}

pub fn prediction_correlation(model: &ForestModel, inputs: &[Vec<f64>]) -> PredictionSpread {
    let b = model.trees.len();
    let outputs: Vec<Vec<f64>> = model
        .trees
        .iter()
        .map(|t| inputs.iter().map(|x| t.predict_proba(x)[1]).collect())
        .collect();
    let n = inputs.len();
    let mut tree_variance = 0.0;
    if n > 0 && b > 1 {
        for x in 0..n {
            let mean = outputs.iter().map(|o| o[x]).sum::<f64>() / b as f64;
            tree_variance += outputs.iter().map(|o| (o[x] - mean).powi(2)).sum::<f64>() / b as f64;
        }
        tree_variance /= n as f64;
    }
    let centred: Vec<Vec<f64>> = outputs
        .iter()
        .filter_map(|o| {
            let mean = o.iter().sum::<f64>() / n.max(1) as f64;
            let c: Vec<f64> = o.iter().map(|v| v - mean).collect();
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            (norm > 1e-12).then(|| c.iter().map(|v| v / norm).collect())
        })
        .collect();
    let k = centred.len();
    let correlation = (k >= 2).then(|| {
        let mut total = 0.0;
        for i in 0..k {
            for j in i + 1..k {
                total += centred[i]
                    .iter()
                    .zip(&centred[j])
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            }
        }
        total / (k * (k - 1) / 2) as f64
    });
    PredictionSpread {
        tree_variance,
        correlation,
        variance_factor: correlation.map(|r| r * tree_variance / b as f64),
    }
}
