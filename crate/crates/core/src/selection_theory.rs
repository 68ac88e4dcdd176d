//! Probability that a feature wins a split under the proportional-to-score
//! model, and how appended zero-score features dilute it.
//!
//! A node draws `m` of `n_eff = n + n_zv` features uniformly without
//! replacement; conditioned on the subset `S`, feature `j` wins with
//! probability `r_j / sum_{k in S} r_k`. Subsets made only of zero-score
//! features pick a member uniformly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::derive_seed;

/// Largest `n_eff` accepted by exact enumeration.
pub const ENUMERATION_BOUND: usize = 25;
const MC_BLOCK: u64 = 1 << 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectionError {
    #[error("invalid score profile: {0}")]
    InvalidProfile(String),
    #[error("exact enumeration supports at most {ENUMERATION_BOUND} features, got {0}")]
    EnumerationBound(usize),
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("dilution needs a > b > 0 and m >= 2 (a = {a}, b = {b}, m = {m})")]
    Dilution { a: f64, b: f64, m: usize },
    #[error("target {target} outside (0, {max}]")]
    TargetOutOfRange { target: f64, max: f64 },
    #[error("invalid argument: {0}")]
    Argument(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreProfile {
    pub scores: Vec<f64>,
    pub m: usize,
    #[serde(default)]
    pub n_zv: usize,
}

impl ScoreProfile {
    pub fn new(scores: Vec<f64>, m: usize, n_zv: usize) -> Result<Self, SelectionError> {
        let p = Self { scores, m, n_zv };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SelectionError> {
        let bad = |msg: String| Err(SelectionError::InvalidProfile(msg));
        if self.scores.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return bad("scores must be finite and non-negative".into());
        }
        if !self.scores.iter().any(|&r| r > 0.0) {
            return bad("at least one score must be positive".into());
        }
        if self.m == 0 || self.m > self.n_eff() {
            return bad(format!("m = {} outside 1..={}", self.m, self.n_eff()));
        }
        Ok(())
    }

    pub fn n_eff(&self) -> usize {
        self.scores.len() + self.n_zv
    }

    /// Scores followed by `n_zv` zeros.
    pub fn full_scores(&self) -> Vec<f64> {
        let mut s = self.scores.clone();
        s.resize(self.n_eff(), 0.0);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub probs: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub trials: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub profile: ScoreProfile,
    pub exact: Option<Vec<f64>>,
    pub approx: Vec<f64>,
    pub monte_carlo: Option<MonteCarloEstimate>,
}

/// Averages the conditional win probabilities over all `C(n_eff, m)` subsets.
pub fn exact_selection_probs(profile: &ScoreProfile) -> Result<Vec<f64>, SelectionError> {
    profile.validate()?;
    let n = profile.n_eff();
    if n > ENUMERATION_BOUND {
        return Err(SelectionError::EnumerationBound(n));
    }
    let r = profile.full_scores();
    let m = profile.m;
    let mut acc = vec![0.0; n];
    let mut idx: Vec<usize> = (0..m).collect();
    let mut subsets = 0u64;
    loop {
        subsets += 1;
        let total: f64 = idx.iter().map(|&i| r[i]).sum();
        if total > 0.0 {
            for &i in &idx {
                acc[i] += r[i] / total;
            }
        } else {
            for &i in &idx {
                acc[i] += 1.0 / m as f64;
            }
        }
        // next combination in lexicographic order
        let Some(pos) = (0..m).rev().find(|&k| idx[k] < n - m + k) else {
            break;
        };
        idx[pos] += 1;
        for k in pos + 1..m {
            idx[k] = idx[k - 1] + 1;
        }
    }
    Ok(acc.into_iter().map(|a| a / subsets as f64).collect())
}

/// `(m / n_eff) * r_j / (r_j + (m - 1) * r_bar)` with `r_bar` averaged over all
/// `n_eff` features.
pub fn approx_selection_probs(profile: &ScoreProfile) -> Result<Vec<f64>, SelectionError> {
    profile.validate()?;
    let n = profile.n_eff() as f64;
    let m = profile.m as f64;
    let r = profile.full_scores();
    let r_bar = r.iter().sum::<f64>() / n;
    Ok(r.iter()
        .map(|&rj| (m / n) * rj / (rj + (m - 1.0) * r_bar))
        .collect())
}

fn mc_block(r: &[f64], m: usize, trials: u64, seed: u64) -> Vec<u64> {
    let n = r.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut wins = vec![0u64; n];
    for _ in 0..trials {
        let subset = rand::seq::index::sample(&mut rng, n, m);
        let total: f64 = subset.iter().map(|i| r[i]).sum();
        let winner = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut chosen = None;
            for i in subset.iter() {
                if r[i] > 0.0 {
                    chosen = Some(i);
                    if u < r[i] {
                        break;
                    }
                    u -= r[i];
                }
            }
            chosen.expect("positive total has a positive member")
        } else {
            subset.index(rng.gen_range(0..m))
        };
        wins[winner] += 1;
    }
    wins
}

/// Simulates the selection model in blocks of 65536 trials, each seeded by
/// `derive_seed(seed, block)`, so output does not depend on thread count.
pub fn monte_carlo_selection(
    profile: &ScoreProfile,
    trials: u64,
    seed: u64,
) -> Result<MonteCarloEstimate, SelectionError> {
    profile.validate()?;
    if trials == 0 {
        return Err(SelectionError::NoTrials);
    }
    let r = profile.full_scores();
    let blocks = trials.div_ceil(MC_BLOCK);
    let counts: Vec<Vec<u64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let size = MC_BLOCK.min(trials - b * MC_BLOCK);
            mc_block(&r, profile.m, size, derive_seed(seed, b))
        })
        .collect();
    let mut wins = vec![0u64; r.len()];
    for c in counts {
        for (w, x) in wins.iter_mut().zip(c) {
            *w += x;
        }
    }
    let t = trials as f64;
    let probs: Vec<f64> = wins.iter().map(|&w| w as f64 / t).collect();
    let std_errors = probs.iter().map(|p| (p * (1.0 - p) / t).sqrt()).collect();
    Ok(MonteCarloEstimate {
        probs,
        std_errors,
        trials,
    })
}

/// Exact (when within the enumeration bound), approximate and optionally
/// simulated probabilities for one profile.
pub fn selection_report(
    profile: &ScoreProfile,
    trials: Option<u64>,
    seed: u64,
) -> Result<SelectionReport, SelectionError> {
    let exact = match exact_selection_probs(profile) {
        Ok(p) => Some(p),
        Err(SelectionError::EnumerationBound(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(SelectionReport {
        profile: profile.clone(),
        exact,
        approx: approx_selection_probs(profile)?,
        monte_carlo: trials
            .map(|t| monte_carlo_selection(profile, t, seed))
            .transpose()?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilutionReport {
    pub a: f64,
    pub b: f64,
    pub m: usize,
    pub r_bar: f64,
    pub n: usize,
    pub n_zv: usize,
    pub k: f64,
    pub k_t: f64,
    pub odds_before: f64,
    pub odds_after: f64,
}

/// `R(K) = (a/b)(b + K)/(a + K)`.
pub fn odds_ratio(a: f64, b: f64, k: f64) -> f64 {
    (a / b) * (b + k) / (a + k)
}

/// Odds of a stronger feature (`a`) over a weaker one (`b`) before and after
/// appending `n_zv` zero-score features.
pub fn dilution_odds(
    a: f64,
    b: f64,
    m: usize,
    r_bar: f64,
    n: usize,
    n_zv: usize,
) -> Result<DilutionReport, SelectionError> {
    if !(b > 0.0 && a > b && a.is_finite()) || m < 2 {
        return Err(SelectionError::Dilution { a, b, m });
    }
    if !(r_bar.is_finite() && r_bar > 0.0) || n == 0 {
        return Err(SelectionError::Argument(
            "r_bar must be positive and n at least 1".into(),
        ));
    }
    let k = (m - 1) as f64 * r_bar;
    let k_t = (m - 1) as f64 * n as f64 * r_bar / (n + n_zv) as f64;
    Ok(DilutionReport {
        a,
        b,
        m,
        r_bar,
        n,
        n_zv,
        k,
        k_t,
        odds_before: odds_ratio(a, b, k),
        odds_after: odds_ratio(a, b, k_t),
    })
}

/// Dilution reports for `n_zv = 0..=max_n_zv`.
pub fn odds_curve(
    a: f64,
    b: f64,
    m: usize,
    r_bar: f64,
    n: usize,
    max_n_zv: usize,
) -> Result<Vec<DilutionReport>, SelectionError> {
    (0..=max_n_zv)
        .map(|z| dilution_odds(a, b, m, r_bar, n, z))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanCandidate {
    pub n_zv: usize,
    pub gamma: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub target: f64,
    pub m: usize,
    pub n: usize,
    pub n_zv: usize,
    pub achieved: f64,
    pub error: f64,
    pub candidates: Vec<PlanCandidate>,
}

fn gamma(m: usize, n: usize, n_zv: usize) -> f64 {
    m as f64 / (n + n_zv) as f64
}

/// Integer `n_zv` bringing `m / (n + n_zv)` closest to `target`.
pub fn plan_n_zv(target: f64, m: usize, n: usize) -> Result<PlanResult, SelectionError> {
    if m == 0 || n == 0 || m > n {
        return Err(SelectionError::Argument(format!(
            "need 1 <= m <= n, got m = {m}, n = {n}"
        )));
    }
    let max = m as f64 / n as f64;
    if !(target > 0.0 && target <= max) {
        return Err(SelectionError::TargetOutOfRange { target, max });
    }
    let x = (m as f64 / target - n as f64).max(0.0);
    let mut options = vec![x.floor() as usize, x.ceil() as usize];
    options.dedup();
    let candidates: Vec<PlanCandidate> = options
        .into_iter()
        .map(|z| {
            let g = gamma(m, n, z);
            PlanCandidate {
                n_zv: z,
                gamma: g,
                error: (g - target).abs(),
            }
        })
        .collect();
    let best = candidates
        .iter()
        .min_by(|p, q| p.error.total_cmp(&q.error).then(p.n_zv.cmp(&q.n_zv)))
        .expect("at least one candidate")
        .clone();
    Ok(PlanResult {
        target,
        m,
        n,
        n_zv: best.n_zv,
        achieved: best.gamma,
        error: best.error,
        candidates,
    })
}

/// `(n_zv, m / (n + n_zv))` for `n_zv = 0..=max_n_zv`.
pub fn gamma_lattice(m: usize, n: usize, max_n_zv: usize) -> Vec<(usize, f64)> {
    (0..=max_n_zv).map(|z| (z, gamma(m, n, z))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateCountEstimate {
    pub trees: f64,
    pub splits_per_tree: f64,
    pub m: usize,
    pub n: usize,
    pub expected_count: f64,
}

/// `B * L * m / n`: expected appearances of one feature in candidate sets.
pub fn expected_candidate_count(
    trees: f64,
    splits_per_tree: f64,
    m: usize,
    n: usize,
) -> Result<CandidateCountEstimate, SelectionError> {
    if n == 0 || !(trees >= 0.0) || !(splits_per_tree >= 0.0) {
        return Err(SelectionError::Argument(
            "tree count and split count must be non-negative, n positive".into(),
        ));
    }
    Ok(CandidateCountEstimate {
        trees,
        splits_per_tree,
        m,
        n,
        expected_count: trees * splits_per_tree * m as f64 / n as f64,
    })
}
