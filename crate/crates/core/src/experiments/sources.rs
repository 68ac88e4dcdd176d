use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ExperimentError, PairSpec};
use crate::feature_pipeline::{
    augment_zero_variance, build_alpha_beta, build_basic, digit_pairs, synth_generate,
    ArtistProfile, DigitsSubset, EventCorpus, ImputationPolicy, ShapePrior, SynthConfig, Window,
};
use crate::seed::derive_seed;

/// Arm A: the raw pixel subset; arm B: the same plus `n_zv` constant columns.
pub fn digits_pairs(
    digits: &DigitsSubset,
    n_zv: usize,
    fill: f64,
    ordered: bool,
) -> Result<Vec<PairSpec>, ExperimentError> {
    digit_pairs(&digits.classes(), ordered)
        .into_iter()
        .map(|(a, b)| {
            let base = digits.pair_dataset(a, b)?;
            let reg = augment_zero_variance(&base, n_zv, fill);
            PairSpec::new(base, reg)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TicketComparison {
    /// Summary statistics vs summary statistics plus `(α, β)`.
    BasicVsAlphaBeta,
    /// Summary statistics plus `(α, β)`, without vs with constant columns.
    ZeroVariance { n_zv: usize, fill: f64 },
}

/// Builds the paired arms for each artist pair.
pub fn ticket_pairs(
    corpus: &EventCorpus,
    artists: &[(String, String)],
    window: Window,
    imputation: ImputationPolicy,
    comparison: TicketComparison,
) -> Result<Vec<PairSpec>, ExperimentError> {
    artists
        .iter()
        .map(|(a, b)| {
            let basic = build_basic(corpus, (a, b), window)?;
            let ab = build_alpha_beta(&basic, imputation);
            let basic_rows = basic.dataset.select_rows(&ab.source_rows);
            match comparison {
                TicketComparison::BasicVsAlphaBeta => PairSpec::new(basic_rows, ab.dataset),
                TicketComparison::ZeroVariance { n_zv, fill } => {
                    let reg = augment_zero_variance(&ab.dataset, n_zv, fill);
                    PairSpec::new(ab.dataset, reg)
                }
            }
        })
        .collect()
}

/// Desk-scale stand-in for the ticket corpus: each pair gets two artists
/// with the same support and mean-ratio priors but different concentration
/// priors, so their shapes differ while their average price levels match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthBenchmark {
    pub pairs: usize,
    pub events_per_artist: usize,
    pub noise: f64,
    pub snapshots_per_event: usize,
    pub seed: u64,
}

impl Default for SynthBenchmark {
    fn default() -> Self {
        Self {
            pairs: 200,
            events_per_artist: 47,
            noise: 0.01,
            snapshots_per_event: 5,
            seed: 42,
        }
    }
}

/// Generator config for benchmark pair `index`.
pub fn synthetic_ticket_config(bench: &SynthBenchmark, index: usize) -> SynthConfig {
    let seed = derive_seed(bench.seed, index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centre: f64 = rng.gen_range(0.2..0.5);
    let mean_ratio = (centre - 0.05, centre + 0.05);
    let lo: f64 = rng.gen_range(20.0..100.0);
    let span: f64 = rng.gen_range(50.0..200.0);
    let k: f64 = rng.gen_range(2.0..5.0);
    let factor: f64 = rng.gen_range(2.0..4.0);
    let profile = |label: String, concentration: (f64, f64)| ArtistProfile {
        label,
        events: bench.events_per_artist,
        support_min: (lo, lo + 50.0),
        support_span: (span, 3.0 * span),
        shape: ShapePrior::MeanConcentration {
            mean_ratio,
            concentration,
        },
    };
    SynthConfig {
        seed,
        noise: bench.noise,
        snapshots_per_event: bench.snapshots_per_event,
        start_date: chrono::NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date"),
        artists: vec![
            profile(format!("p{index:03}a"), (k, 1.5 * k)),
            profile(format!("p{index:03}b"), (k * factor, 1.5 * k * factor)),
        ],
    }
}

pub fn synthetic_ticket_pairs(
    bench: &SynthBenchmark,
    comparison: TicketComparison,
) -> Result<Vec<PairSpec>, ExperimentError> {
    (0..bench.pairs)
        .into_par_iter()
        .map(|i| {
            let config = synthetic_ticket_config(bench, i);
            let synth = synth_generate(&config)?;
            let names = (
                config.artists[0].label.clone(),
                config.artists[1].label.clone(),
            );
            let mut pair = ticket_pairs(
                &synth.corpus,
                &[names],
                Window::Full,
                ImputationPolicy::Sentinel,
                comparison,
            )?;
            Ok(pair.remove(0))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature_pipeline::bundled_digits;

    #[test]
    fn digits_pairs_are_aligned() {
        let d = bundled_digits(6, 42).unwrap();
        let pairs = digits_pairs(&d, 20, 1.0, false).unwrap();
        assert_eq!(pairs.len(), 45);
        for p in &pairs {
            assert_eq!(p.arm_a.width(), 6);
            assert_eq!(p.arm_b.width(), 26);
        }
    }

    #[test]
    fn synthetic_pairs() {
        let bench = SynthBenchmark {
            pairs: 3,
            events_per_artist: 12,
            ..Default::default()
        };
        let pairs = synthetic_ticket_pairs(&bench, TicketComparison::BasicVsAlphaBeta).unwrap();
        assert_eq!(pairs.len(), 3);
        assert_eq!(pairs[0].arm_a.width(), 4);
        assert_eq!(pairs[0].arm_b.width(), 6);
        assert_eq!(pairs[1].arm_a.n_rows(), 24);
        let reg = synthetic_ticket_pairs(
            &bench,
            TicketComparison::ZeroVariance { n_zv: 5, fill: 1.0 },
        )
        .unwrap();
        assert_eq!(reg[2].arm_b.width(), 11);
    }
}
