use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ForestConfig, ForestError, NoValidSplitPolicy};

/// Gains at or below this are treated as "no valid split".
pub const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        proba: [f64; 2],
    },
}

/// Arena-allocated tree; node 0 is the root. Rows with `x[feature] <=
/// threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Column-major training data.
#[derive(Debug, Clone, Copy)]
pub struct TrainingView<'a> {
    columns: &'a [Vec<f64>],
    labels: &'a [u8],
}

impl<'a> TrainingView<'a> {
    pub fn new(columns: &'a [Vec<f64>], labels: &'a [u8]) -> Self {
        debug_assert!(columns.iter().all(|c| c.len() == labels.len()));
        Self { columns, labels }
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }
}

/// `2p(1-p)` with `p = w0 / (w0 + w1)`.
pub fn gini(totals: [f64; 2]) -> Result<f64, ForestError> {
    let w = totals[0] + totals[1];
    if w <= 0.0 {
        return Err(ForestError::EmptyNode);
    }
    Ok(gini_raw(totals[0], w))
}

fn gini_raw(w0: f64, w: f64) -> f64 {
    let p = w0 / w;
    2.0 * p * (1.0 - p)
}

fn class_totals(view: &TrainingView, rows: &[usize], weights: &[f64]) -> [f64; 2] {
    let mut t = [0.0, 0.0];
    for &r in rows {
        t[usize::from(view.labels[r])] += weights[r];
    }
    t
}

/// Midpoint that stays strictly below `hi` under rounding.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid < hi {
        mid
    } else {
        lo
    }
}

fn better(a: &SplitCandidate, b: &SplitCandidate) -> bool {
    a.gain > b.gain
        || (a.gain == b.gain
            && (a.feature < b.feature || (a.feature == b.feature && a.threshold < b.threshold)))
}

/// Best threshold for one feature, or `None` when the feature is constant on
/// `rows` or no threshold exceeds `MIN_GAIN`.
fn feature_split(
    view: &TrainingView,
    rows: &[usize],
    weights: &[f64],
    totals: [f64; 2],
    feature: usize,
    scratch: &mut Vec<(f64, f64, u8)>,
) -> Option<SplitCandidate> {
    let col = &view.columns[feature];
    scratch.clear();
    scratch.extend(rows.iter().map(|&r| (col[r], weights[r], view.labels[r])));
    scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
    let w = totals[0] + totals[1];
    let parent = gini_raw(totals[0], w);
    let mut left = [0.0, 0.0];
    let mut best: Option<SplitCandidate> = None;
    for i in 0..scratch.len() - 1 {
        let (v, wi, y) = scratch[i];
        left[usize::from(y)] += wi;
        let next = scratch[i + 1].0;
        if next <= v {
            continue;
        }
        let wl = left[0] + left[1];
        let wr = w - wl;
        if wl <= 0.0 || wr <= 0.0 {
            continue;
        }
        let gl = gini_raw(left[0], wl);
        let gr = gini_raw(totals[0] - left[0], wr);
        let gain = parent - (wl * gl + wr * gr) / w;
        // strict comparison keeps the lowest threshold among equal gains
        if gain > MIN_GAIN && best.is_none_or(|b| gain > b.gain) {
            best = Some(SplitCandidate {
                feature,
                threshold: midpoint(v, next),
                gain,
            });
        }
    }
    best
}

/// Best split over `candidates`; ties go to the lower feature index, then the
/// lower threshold.
pub fn best_split(
    view: &TrainingView,
    rows: &[usize],
    weights: &[f64],
    candidates: &[usize],
) -> Option<SplitCandidate> {
    if rows.len() < 2 {
        return None;
    }
    let totals = class_totals(view, rows, weights);
    if totals[0] + totals[1] <= 0.0 {
        return None;
    }
    let mut scratch = Vec::with_capacity(rows.len());
    let mut best: Option<SplitCandidate> = None;
    for &f in candidates {
        if let Some(c) = feature_split(view, rows, weights, totals, f, &mut scratch) {
            if best.is_none_or(|b| better(&c, &b)) {
                best = Some(c);
            }
        }
    }
    best
}

struct Grower<'a, 'r> {
    view: &'a TrainingView<'a>,
    weights: Vec<f64>,
    config: &'a ForestConfig,
    rng: &'r mut ChaCha8Rng,
    nodes: Vec<Node>,
    perm: Vec<usize>,
    scratch: Vec<(f64, f64, u8)>,
}

impl Grower<'_, '_> {
    fn leaf(totals: [f64; 2]) -> Node {
        let w = totals[0] + totals[1];
        Node::Leaf {
            proba: [totals[0] / w, totals[1] / w],
        }
    }

    /// Draws candidates lazily from a fresh Fisher-Yates permutation.
    fn choose(&mut self, rows: &[usize], totals: [f64; 2]) -> Option<SplitCandidate> {
        let p = self.perm.len();
        for (i, slot) in self.perm.iter_mut().enumerate() {
            *slot = i;
        }
        let mut best: Option<SplitCandidate> = None;
        for k in 0..p {
            if k >= self.config.max_features {
                let extend =
                    self.config.no_valid_split_policy == NoValidSplitPolicy::ExtendUntilValid;
                if best.is_some() || !extend {
                    break;
                }
            }
            let j = self.rng.gen_range(k..p);
            self.perm.swap(k, j);
            let f = self.perm[k];
            if let Some(c) =
                feature_split(self.view, rows, &self.weights, totals, f, &mut self.scratch)
            {
                if best.is_none_or(|b| better(&c, &b)) {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let totals = class_totals(self.view, &rows, &self.weights);
        self.nodes.push(Self::leaf(totals));
        let pure = totals[0] <= 0.0 || totals[1] <= 0.0;
        if pure || depth >= self.config.max_depth || rows.len() < 2 {
            return id;
        }
        let Some(split) = self.choose(&rows, totals) else {
            return id;
        };
        let col = &self.view.columns[split.feature];
        let (l, r): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| col[i] <= split.threshold);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

/// Bootstraps `N` rows (kept as per-row multiplicities) and grows one tree.
pub(super) fn grow(
    view: &TrainingView,
    class_weight: [f64; 2],
    config: &ForestConfig,
    rng: &mut ChaCha8Rng,
) -> Tree {
    let n = view.n_rows();
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.gen_range(0..n)] += 1;
    }
    let weights: Vec<f64> = counts
        .iter()
        .zip(view.labels)
        .map(|(&c, &y)| f64::from(c) * class_weight[usize::from(y)])
        .collect();
    let rows: Vec<usize> = (0..n).filter(|&i| counts[i] > 0).collect();
    let mut g = Grower {
        view,
        weights,
        config,
        rng,
        nodes: Vec::new(),
        perm: vec![0; view.n_features()],
        scratch: Vec::with_capacity(n),
    };
    g.build(rows, 0);
    Tree { nodes: g.nodes }
}

impl Tree {
    pub fn leaf(proba: [f64; 2]) -> Self {
        Self {
            nodes: vec![Node::Leaf { proba }],
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> [f64; 2] {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { proba } => return proba,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    /// Longest root-to-leaf path in edges; a lone leaf has depth 0.
    pub fn depth(&self) -> usize {
        let mut max = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, d)) = stack.pop() {
            match self.nodes[i] {
                Node::Leaf { .. } => max = max.max(d),
                Node::Split { left, right, .. } => {
                    stack.push((left, d + 1));
                    stack.push((right, d + 1));
                }
            }
        }
        max
    }

    /// Split count per feature.
    pub fn usage(&self, n_features: usize) -> Vec<u32> {
        let mut u = vec![0; n_features];
        for node in &self.nodes {
            if let Node::Split { feature, .. } = node {
                u[*feature] += 1;
            }
        }
        u
    }

    pub fn split_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Split { .. }))
            .count()
    }
}
