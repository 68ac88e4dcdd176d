//! Synthetic ticket-price corpus with known scaled-Beta ground truth.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{EventCorpus, EventSnapshot, PipelineError};
use crate::scaled_beta::{self, ScaledBetaParams};

const MAX_REDRAWS: usize = 1000;

/// Prior over the shape of one artist's price distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapePrior {
    /// Independent uniform ranges for α and β.
    AlphaBeta { alpha: (f64, f64), beta: (f64, f64) },
    /// Uniform mean ratio `α/(α+β)` and concentration `α+β`; lets two artists
    /// share mean behaviour while differing in shape.
    MeanConcentration {
        mean_ratio: (f64, f64),
        concentration: (f64, f64),
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtistProfile {
    pub label: String,
    pub events: usize,
    pub support_min: (f64, f64),
    pub support_span: (f64, f64),
    pub shape: ShapePrior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    /// Per-snapshot Gaussian noise on mean and median, as a fraction of the
    /// event's price span. Zero reproduces the analytic statistics exactly.
    #[serde(default)]
    pub noise: f64,
    #[serde(default = "default_snapshots")]
    pub snapshots_per_event: usize,
    #[serde(default = "default_start")]
    pub start_date: NaiveDate,
    #[serde(rename = "artist")]
    pub artists: Vec<ArtistProfile>,
}

fn default_snapshots() -> usize {
    5
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date")
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub corpus: EventCorpus,
    pub truth: BTreeMap<String, ScaledBetaParams>,
}

pub fn load_synth_config(path: &Path) -> Result<SynthConfig, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| PipelineError::Schema {
        path: path.to_path_buf(),
        line: e
            .span()
            .map_or(0, |s| text[..s.start].matches('\n').count() as u64 + 1),
        message: e.message().to_string(),
    })
}

fn check_range(name: &str, (lo, hi): (f64, f64), positive: bool) -> Result<(), PipelineError> {
    let ok = lo.is_finite() && hi.is_finite() && lo <= hi && (!positive || lo > 0.0);
    if ok {
        Ok(())
    } else {
        Err(PipelineError::Config(format!(
            "{name} range [{lo}, {hi}] is invalid"
        )))
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.artists.len() < 2 {
            return Err(PipelineError::Config(
                "need at least two artist profiles".into(),
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(PipelineError::Config("noise must be non-negative".into()));
        }
        if self.snapshots_per_event == 0 {
            return Err(PipelineError::Config(
                "snapshots_per_event must be positive".into(),
            ));
        }
        for p in &self.artists {
            if p.events == 0 {
                return Err(PipelineError::Config(format!(
                    "artist {} has no events",
                    p.label
                )));
            }
            check_range("support_min", p.support_min, false)?;
            check_range("support_span", p.support_span, true)?;
            match p.shape {
                ShapePrior::AlphaBeta { alpha, beta } => {
                    check_range("alpha", alpha, true)?;
                    check_range("beta", beta, true)?;
                }
                ShapePrior::MeanConcentration {
                    mean_ratio,
                    concentration,
                } => {
                    check_range("mean_ratio", mean_ratio, true)?;
                    check_range("concentration", concentration, true)?;
                    if mean_ratio.1 >= 1.0 {
                        return Err(PipelineError::Config("mean_ratio must stay below 1".into()));
                    }
                }
            }
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

fn draw_shape(rng: &mut ChaCha8Rng, prior: &ShapePrior) -> (f64, f64) {
    match *prior {
        ShapePrior::AlphaBeta { alpha, beta } => (uniform(rng, alpha), uniform(rng, beta)),
        ShapePrior::MeanConcentration {
            mean_ratio,
            concentration,
        } => {
            let s = uniform(rng, mean_ratio);
            let k = uniform(rng, concentration);
            (s * k, (1.0 - s) * k)
        }
    }
}

/// Draws every event's support and shape, then emits snapshots whose
/// aggregate equals the analytic mean and approximate median (plus noise).
pub fn synth_generate(config: &SynthConfig) -> Result<SynthCorpus, PipelineError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut snapshots = Vec::new();
    let mut truth = BTreeMap::new();
    for profile in &config.artists {
        for e in 0..profile.events {
            let event_id = format!("{}-{e:04}", profile.label);
            let params = draw_valid(&mut rng, profile)?;
            let min = params.support_min();
            let max = params.support_max();
            let span = params.span();
            let mean = scaled_beta::beta_mean(&params);
            let median = scaled_beta::beta_median_approx(&params);
            let noise = Normal::new(0.0, config.noise * span)
                .map_err(|e| PipelineError::Config(e.to_string()))?;
            let first_day = config.start_date + Duration::days(7 * e as i64);
            let margin = 1e-9 * span;
            for t in 0..config.snapshots_per_event {
                let (m, q) = if config.noise > 0.0 {
                    (
                        (mean + noise.sample(&mut rng)).clamp(min + margin, max - margin),
                        (median + noise.sample(&mut rng)).clamp(min + margin, max - margin),
                    )
                } else {
                    (mean, median)
                };
                snapshots.push(EventSnapshot {
                    artist: profile.label.clone(),
                    event_id: event_id.clone(),
                    snapshot_date: first_day + Duration::days(t as i64),
                    mean_price: m,
                    median_price: q,
                    low_price: min,
                    high_price: max,
                    listing_count: rng.gen_range(20..500),
                });
            }
            truth.insert(event_id, params);
        }
    }
    Ok(SynthCorpus {
        corpus: EventCorpus::from_snapshots(snapshots),
        truth,
    })
}

fn draw_valid(
    rng: &mut ChaCha8Rng,
    profile: &ArtistProfile,
) -> Result<ScaledBetaParams, PipelineError> {
    for _ in 0..MAX_REDRAWS {
        let min = uniform(rng, profile.support_min);
        let span = uniform(rng, profile.support_span);
        let (alpha, beta) = draw_shape(rng, &profile.shape);
        let Ok(params) = ScaledBetaParams::new(alpha, beta, min, min + span) else {
            continue;
        };
        // keep only shapes the estimator can invert
        if scaled_beta::estimate(&params.implied_stats()).is_ok() {
            return Ok(params);
        }
    }
    Err(PipelineError::Config(format!(
        "profile {} rarely yields invertible shapes",
        profile.label
    )))
}
