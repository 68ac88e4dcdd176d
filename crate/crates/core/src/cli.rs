//! `betaforge` command line: one subcommand per pipeline stage. Every
//! command prints (or writes) a JSON document that starts with the fully
//! resolved configuration. Exit codes: 0 success, 1 invalid input, 2 I/O.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::divergence::{self, Bandwidth};
use crate::experiments::{
    self, digits_pairs, run_pairs, sweep_m, synthetic_ticket_pairs, ticket_pairs, ExperimentConfig,
    ExperimentError, ExperimentReport, PairSpec, SynthBenchmark, TicketComparison,
};
use crate::feature_pipeline::{
    self, augment_zero_variance, build_alpha_beta, build_basic, bundled_digits, load_digits,
    load_event_csv, load_synth_config, synth_generate, write_event_csv, ImputationPolicy,
    PipelineError, Window,
};
use crate::forest::{ClassWeight, ForestConfig, NoValidSplitPolicy};
use crate::scaled_beta::{self, SummaryStats};
use crate::selection_theory::{self, ScoreProfile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IO: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Invalid(_) => EXIT_INVALID,
            Self::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Invalid(m) | Self::Io(m) => m,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        if e.is_io() {
            Self::Io(e.to_string())
        } else {
            Self::Invalid(e.to_string())
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        if e.is_io() {
            Self::Io(e.to_string())
        } else {
            Self::Invalid(e.to_string())
        }
    }
}

impl From<divergence::DivergenceError> for CliError {
    fn from(e: divergence::DivergenceError) -> Self {
        match e {
            divergence::DivergenceError::Io { .. } => Self::Io(e.to_string()),
            other => Self::Invalid(other.to_string()),
        }
    }
}

macro_rules! invalid_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self::Invalid(e.to_string())
            }
        }
    )*};
}
invalid_from!(
    scaled_beta::EstimationError,
    selection_theory::SelectionError,
    crate::forest::ForestError,
    serde_json::Error
);

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "betaforge",
    version,
    about = "Scaled-Beta features and instrumented random forests"
)]
pub struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true, env = "BETAFORGE_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate an event snapshot CSV and summarize it.
    Ingest(IngestArgs),
    /// Recover scaled-Beta shape parameters from summary statistics.
    Estimate(EstimateArgs),
    /// Build a labeled dataset for one artist pair.
    Features(FeaturesArgs),
    /// Train both arms on every pair and run the paired sign test.
    TrainPair(TrainPairArgs),
    /// Repeat the paired runs over a list of max_features values.
    Sweep(SweepArgs),
    /// Continuity-corrected paired sign test.
    Signtest(SigntestArgs),
    /// Per-feature KDE divergence table for one artist pair.
    Kde(KdeArgs),
    /// Exact, approximate and simulated split-selection probabilities.
    Selection(SelectionArgs),
    /// Choose the zero-variance column count for a target selection rate.
    PlanZv(PlanZvArgs),
    /// Generate a synthetic event corpus from a TOML profile file.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Write the JSON document here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Event snapshot CSV.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub min: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub max: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub mean: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub median: f64,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantArg {
    Basic,
    AlphaBeta,
    AlphaBetaReg,
}

#[derive(Debug, Args, Serialize)]
pub struct EventArgs {
    /// Event snapshot CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Two artist names separated by a comma; the first gets label 0.
    #[arg(long, value_parser = parse_two::<String>)]
    pub artists: Two<String>,
    /// `full` or `last:K`.
    #[arg(long, default_value = "full")]
    #[serde(serialize_with = "display")]
    pub window: Window,
    /// `sentinel` or `drop`.
    #[arg(long, default_value = "sentinel")]
    pub imputation: ImputationPolicy,
}

/// Exactly two comma-separated values.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Two<T>(pub [T; 2]);

impl<T> std::ops::Deref for Two<T> {
    type Target = [T; 2];
    fn deref(&self) -> &[T; 2] {
        &self.0
    }
}

fn parse_two<T: std::str::FromStr>(s: &str) -> Result<Two<T>, String>
where
    T::Err: std::fmt::Display,
{
    let parts: Vec<&str> = s.split(',').collect();
    let [a, b] = parts[..] else {
        return Err(format!("expected two comma-separated values, got {s:?}"));
    };
    let one = |v: &str| v.trim().parse::<T>().map_err(|e| format!("{v:?}: {e}"));
    Ok(Two([one(a)?, one(b)?]))
}

fn display<T: std::fmt::Display, S: serde::Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[command(flatten)]
    pub events: EventArgs,
    #[arg(long, value_enum, default_value = "alpha-beta")]
    pub variant: VariantArg,
    /// Zero-variance columns for `alpha-beta-reg`.
    #[arg(long, default_value_t = 20)]
    pub n_zv: usize,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub fill: f64,
    /// Dataset CSV destination.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Digits,
    Synth,
    Events,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonArg {
    BasicVsAlphaBeta,
    ZeroVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeightArg {
    Balanced,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyArg {
    ExtendUntilValid,
    Leaf,
}

#[derive(Debug, Args, Serialize)]
pub struct SourceArgs {
    /// Where pairs come from.
    #[arg(long, value_enum, default_value = "digits")]
    pub source: SourceKind,
    /// Digits CSV (64 pixels + label per line); defaults to the bundled copy.
    #[arg(long)]
    pub digits_path: Option<PathBuf>,
    /// Pixel columns kept for digits.
    #[arg(long, default_value_t = 6)]
    pub n_features: usize,
    /// Seed choosing the digits pixel columns.
    #[arg(long, default_value_t = 42)]
    pub subset_seed: u64,
    /// Use both orders of every digit pair.
    #[arg(long)]
    pub ordered_pairs: bool,
    /// Zero-variance columns appended to the comparison arm.
    #[arg(long, default_value_t = 20)]
    pub n_zv: usize,
    /// Constant written into zero-variance columns.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub fill: f64,
    /// Arms for ticket sources; digits always compare against zero-variance columns.
    #[arg(long, value_enum, default_value = "basic-vs-alpha-beta")]
    pub comparison: ComparisonArg,
    /// Synthetic benchmark: number of artist pairs.
    #[arg(long, default_value_t = 200)]
    pub pairs: usize,
    /// Synthetic benchmark: events per artist.
    #[arg(long, default_value_t = 47)]
    pub events_per_artist: usize,
    /// Synthetic benchmark: snapshot noise as a fraction of the price span.
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    /// Synthetic benchmark seed.
    #[arg(long, default_value_t = 42)]
    pub synth_seed: u64,
    /// Event snapshot CSV for `--source events`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value = "full")]
    #[serde(serialize_with = "display")]
    pub window: Window,
    #[arg(long, default_value = "sentinel")]
    pub imputation: ImputationPolicy,
    /// Keep only this pair (two class names, comma separated).
    #[arg(long, value_parser = parse_two::<String>)]
    pub pair: Option<Two<String>>,
}

#[derive(Debug, Args, Serialize)]
pub struct ForestArgs {
    /// Trees per forest.
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    /// Candidate features per split (m).
    #[arg(long, default_value_t = 2)]
    pub max_features: usize,
    #[arg(long, default_value_t = 100)]
    pub max_depth: usize,
    #[arg(long, value_enum, default_value = "balanced")]
    pub class_weight: ClassWeightArg,
    /// Behaviour when no drawn candidate can split.
    #[arg(long, value_enum, default_value = "extend-until-valid")]
    pub policy: PolicyArg,
    /// Experiment master seed.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.8)]
    pub train_ratio: f64,
}

impl ForestArgs {
    fn config(&self) -> ExperimentConfig {
        ExperimentConfig {
            forest: ForestConfig {
                n_estimators: self.trees,
                max_features: self.max_features,
                max_depth: self.max_depth,
                class_weight: match self.class_weight {
                    ClassWeightArg::Balanced => ClassWeight::Balanced,
                    ClassWeightArg::None => ClassWeight::None,
                },
                seed: self.seed,
                no_valid_split_policy: match self.policy {
                    PolicyArg::ExtendUntilValid => NoValidSplitPolicy::ExtendUntilValid,
                    PolicyArg::Leaf => NoValidSplitPolicy::Leaf,
                },
            },
            train_ratio: self.train_ratio,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainPairArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub forest: ForestArgs,
    /// Directory for outcome and plot CSVs.
    #[arg(long)]
    pub plots: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub forest: ForestArgs,
    /// Comma-separated max_features values.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6")]
    pub m_values: Vec<usize>,
    #[arg(long)]
    pub plots: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SigntestArgs {
    #[arg(long)]
    pub better: u64,
    #[arg(long)]
    pub worse: u64,
    #[arg(long, default_value_t = 0)]
    pub ties: u64,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct KdeArgs {
    #[command(flatten)]
    pub events: EventArgs,
    #[arg(long, value_enum, default_value = "alpha-beta")]
    pub variant: VariantArg,
    #[arg(long, default_value_t = divergence::DEFAULT_GRID)]
    pub grid_size: usize,
    /// Fixed kernel bandwidth; Silverman's rule when absent.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Table CSV destination.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SelectionArgs {
    /// Comma-separated rank scores of the informative features.
    #[arg(long, value_delimiter = ',', required = true)]
    pub scores: Vec<f64>,
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub n_zv: usize,
    /// Monte Carlo trials (0 skips simulation).
    #[arg(long, default_value_t = 0)]
    pub trials: u64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Indices (into --scores) of a stronger and a weaker feature for the
    /// odds curve.
    #[arg(long, value_parser = parse_two::<usize>)]
    pub odds: Option<Two<usize>>,
    #[arg(long, default_value_t = 40)]
    pub max_n_zv: usize,
    /// Odds curve CSV destination.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct PlanZvArgs {
    /// Target informative-feature selection rate.
    #[arg(long)]
    pub target: f64,
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 40)]
    pub max_n_zv: usize,
    /// Lattice CSV destination.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML generator profile.
    #[arg(long)]
    pub config: PathBuf,
    /// Event CSV destination.
    #[arg(long)]
    pub events: PathBuf,
    #[command(flatten)]
    pub out: OutputArgs,
}

fn emit(doc: &Value, out: &OutputArgs) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    match &out.output {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Io(format!("stdout: {e}")))
        }
    }
}

fn document(command: &str, config: Value, result: Value) -> Value {
    json!({ "command": command, "config": config, "result": result })
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn ingest(a: &IngestArgs) -> CliResult<Value> {
    let corpus = load_event_csv(&a.input)?;
    let mut events: BTreeMap<String, usize> = BTreeMap::new();
    for s in &corpus.series {
        *events.entry(s.artist.clone()).or_default() += 1;
    }
    Ok(document(
        "ingest",
        json!({ "input": path_str(&a.input) }),
        json!({
            "series": corpus.series.len(),
            "snapshots": corpus.snapshot_count(),
            "events_by_artist": events,
            "rejected": corpus.rejected,
        }),
    ))
}

fn estimate(a: &EstimateArgs) -> CliResult<Value> {
    let stats = SummaryStats::new(a.min, a.max, a.mean, a.median);
    let scaled = scaled_beta::scale_stats(&stats)?;
    let params = scaled_beta::estimate(&stats)?;
    Ok(document(
        "estimate",
        json!({ "min": a.min, "max": a.max, "mean": a.mean, "median": a.median }),
        json!({
            "scaled": scaled,
            "alpha": params.alpha(),
            "beta": params.beta(),
            "support": [params.support_min(), params.support_max()],
            "implied_mean": scaled_beta::beta_mean(&params),
            "implied_median_approx": scaled_beta::beta_median_approx(&params),
            "numeric_median": scaled_beta::numeric_median(&params, 1e-12),
        }),
    ))
}

struct BuiltEvents {
    dataset: feature_pipeline::LabeledDataset,
    dropped: Vec<(String, scaled_beta::EstimationError)>,
    imputed: usize,
}

fn build_events(
    e: &EventArgs,
    variant: VariantArg,
    n_zv: usize,
    fill: f64,
) -> CliResult<BuiltEvents> {
    let corpus = load_event_csv(&e.input)?;
    let basic = build_basic(&corpus, (&e.artists[0], &e.artists[1]), e.window)?;
    let ab = build_alpha_beta(&basic, e.imputation);
    let dataset = match variant {
        VariantArg::Basic => basic.dataset.clone(),
        VariantArg::AlphaBeta => ab.dataset.clone(),
        VariantArg::AlphaBetaReg => augment_zero_variance(&ab.dataset, n_zv, fill),
    };
    Ok(BuiltEvents {
        dataset,
        dropped: basic.dropped,
        imputed: ab.imputed.len(),
    })
}

fn features(a: &FeaturesArgs) -> CliResult<Value> {
    let built = build_events(&a.events, a.variant, a.n_zv, a.fill)?;
    if let Some(csv) = &a.csv {
        built.dataset.write_csv(csv)?;
    }
    let ds = &built.dataset;
    Ok(document(
        "features",
        json!({
            "events": a.events,
            "variant": a.variant,
            "n_zv": a.n_zv,
            "fill": a.fill,
            "csv": a.csv.as_deref().map(path_str),
        }),
        json!({
            "variant": ds.variant,
            "feature_names": ds.feature_names,
            "rows": ds.n_rows(),
            "class_counts": ds.class_counts(),
            "dropped_events": built.dropped,
            "imputed_rows": built.imputed,
        }),
    ))
}

fn build_pairs(s: &SourceArgs) -> CliResult<Vec<PairSpec>> {
    let comparison = match s.comparison {
        ComparisonArg::BasicVsAlphaBeta => TicketComparison::BasicVsAlphaBeta,
        ComparisonArg::ZeroVariance => TicketComparison::ZeroVariance {
            n_zv: s.n_zv,
            fill: s.fill,
        },
    };
    let mut pairs = match s.source {
        SourceKind::Digits => {
            let digits = match &s.digits_path {
                Some(p) => load_digits(p, s.n_features, s.subset_seed)?,
                None => bundled_digits(s.n_features, s.subset_seed)?,
            };
            digits_pairs(&digits, s.n_zv, s.fill, s.ordered_pairs)?
        }
        SourceKind::Synth => {
            let bench = SynthBenchmark {
                pairs: s.pairs,
                events_per_artist: s.events_per_artist,
                noise: s.noise,
                seed: s.synth_seed,
                ..Default::default()
            };
            synthetic_ticket_pairs(&bench, comparison)?
        }
        SourceKind::Events => {
            let input = s
                .input
                .as_ref()
                .ok_or_else(|| CliError::Invalid("--source events requires --input".into()))?;
            let corpus = load_event_csv(input)?;
            let artists = corpus.artists();
            let mut combos = Vec::new();
            for (i, a) in artists.iter().enumerate() {
                for b in &artists[i + 1..] {
                    combos.push((a.clone(), b.clone()));
                }
            }
            ticket_pairs(&corpus, &combos, s.window, s.imputation, comparison)?
        }
    };
    if let Some(filter) = &s.pair {
        pairs.retain(|p| p.name() == filter.0);
        if pairs.is_empty() {
            return Err(CliError::Invalid(format!(
                "--pair {} matches no pair",
                filter.join(",")
            )));
        }
    }
    Ok(pairs)
}

fn experiment_config_echo(s: &SourceArgs, f: &ForestArgs, extra: Value) -> CliResult<Value> {
    let mut cfg = json!({ "source": s, "forest": f });
    if let (Value::Object(map), Value::Object(more)) = (&mut cfg, extra) {
        map.extend(more);
    }
    Ok(cfg)
}

fn write_plots(report: &ExperimentReport, dir: &Option<PathBuf>) -> CliResult<()> {
    if let Some(dir) = dir {
        experiments::write_plot_data(report, dir)?;
    }
    Ok(())
}

fn train_pair(a: &TrainPairArgs) -> CliResult<Value> {
    let pairs = build_pairs(&a.source)?;
    let config = a.forest.config();
    let outcomes = run_pairs(&pairs, &config)?;
    let echo = experiment_config_echo(&a.source, &a.forest, json!({ "command": "train-pair" }))?;
    let report = ExperimentReport::new(echo, config.forest.seed, &pairs, outcomes, None);
    write_plots(&report, &a.plots)?;
    Ok(serde_json::to_value(&report)?)
}

fn sweep(a: &SweepArgs) -> CliResult<Value> {
    let pairs = build_pairs(&a.source)?;
    let config = a.forest.config();
    let result = sweep_m(&pairs, &a.m_values, &config)?;
    for m in &result.skipped {
        eprintln!("warning: skipping m = {m}, wider than the narrower arm");
    }
    let echo = experiment_config_echo(
        &a.source,
        &a.forest,
        json!({ "command": "sweep", "m_values": a.m_values, "skipped_m": result.skipped }),
    )?;
    let report = ExperimentReport::new(echo, config.forest.seed, &pairs, Vec::new(), Some(result));
    write_plots(&report, &a.plots)?;
    Ok(serde_json::to_value(&report)?)
}

fn signtest(a: &SigntestArgs) -> CliResult<Value> {
    let r = experiments::sign_test(a.better, a.worse, a.ties)?;
    Ok(document(
        "signtest",
        json!({ "better": a.better, "worse": a.worse, "ties": a.ties }),
        serde_json::to_value(r)?,
    ))
}

fn kde(a: &KdeArgs) -> CliResult<Value> {
    let built = build_events(&a.events, a.variant, 0, 1.0)?;
    let bandwidth = a.bandwidth.map_or(Bandwidth::Silverman, Bandwidth::Fixed);
    let table = divergence::feature_divergence_table(&built.dataset, a.grid_size, bandwidth)?;
    if let Some(csv) = &a.csv {
        table.write_csv(csv)?;
    }
    Ok(document(
        "kde",
        json!({
            "events": a.events,
            "variant": a.variant,
            "grid_size": a.grid_size,
            "bandwidth": a.bandwidth.map_or(json!("silverman"), |h| json!(h)),
            "csv": a.csv.as_deref().map(path_str),
        }),
        serde_json::to_value(table)?,
    ))
}

fn csv_rows(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> CliResult<()> {
    let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.flush()
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn selection(a: &SelectionArgs) -> CliResult<Value> {
    let profile = ScoreProfile::new(a.scores.clone(), a.m, a.n_zv)?;
    let trials = (a.trials > 0).then_some(a.trials);
    let report = selection_theory::selection_report(&profile, trials, a.seed)?;
    let odds = match &a.odds {
        Some(idx) => {
            let get = |i: usize| {
                a.scores.get(i).copied().ok_or_else(|| {
                    CliError::Invalid(format!(
                        "--odds index {i} outside the {} scores",
                        a.scores.len()
                    ))
                })
            };
            let (hi, lo) = (get(idx[0])?, get(idx[1])?);
            let r_bar = a.scores.iter().sum::<f64>() / a.scores.len() as f64;
            let curve =
                selection_theory::odds_curve(hi, lo, a.m, r_bar, a.scores.len(), a.max_n_zv)?;
            if let Some(csv) = &a.csv {
                csv_rows(
                    csv,
                    &["n_zv", "k_t", "odds_after"],
                    curve
                        .iter()
                        .map(|d| {
                            vec![
                                d.n_zv.to_string(),
                                d.k_t.to_string(),
                                d.odds_after.to_string(),
                            ]
                        })
                        .collect(),
                )?;
            }
            Some(curve)
        }
        None => None,
    };
    Ok(document(
        "selection",
        json!({
            "scores": a.scores,
            "m": a.m,
            "n_zv": a.n_zv,
            "trials": a.trials,
            "seed": a.seed,
            "odds": a.odds,
            "max_n_zv": a.max_n_zv,
            "csv": a.csv.as_deref().map(path_str),
        }),
        json!({ "selection": report, "odds_curve": odds }),
    ))
}

fn plan_zv(a: &PlanZvArgs) -> CliResult<Value> {
    let plan = selection_theory::plan_n_zv(a.target, a.m, a.n)?;
    let lattice = selection_theory::gamma_lattice(a.m, a.n, a.max_n_zv);
    if let Some(csv) = &a.csv {
        csv_rows(
            csv,
            &["n_zv", "gamma"],
            lattice
                .iter()
                .map(|(z, g)| vec![z.to_string(), g.to_string()])
                .collect(),
        )?;
    }
    Ok(document(
        "plan-zv",
        json!({
            "target": a.target,
            "m": a.m,
            "n": a.n,
            "max_n_zv": a.max_n_zv,
            "csv": a.csv.as_deref().map(path_str),
        }),
        json!({ "plan": plan, "lattice": lattice }),
    ))
}

fn synth(a: &SynthArgs) -> CliResult<Value> {
    let config = load_synth_config(&a.config)?;
    let generated = synth_generate(&config)?;
    write_event_csv(&generated.corpus, &a.events)?;
    let truth: BTreeMap<&String, Value> = generated
        .truth
        .iter()
        .map(|(id, p)| {
            (
                id,
                json!({
                    "alpha": p.alpha(),
                    "beta": p.beta(),
                    "support": [p.support_min(), p.support_max()],
                }),
            )
        })
        .collect();
    Ok(document(
        "synth",
        json!({ "config_file": path_str(&a.config), "generator": config, "events": path_str(&a.events) }),
        json!({
            "series": generated.corpus.series.len(),
            "snapshots": generated.corpus.snapshot_count(),
            "truth": truth,
        }),
    ))
}

fn dispatch(command: &Command) -> CliResult<()> {
    let (doc, out) = match command {
        Command::Ingest(a) => (ingest(a)?, &a.out),
        Command::Estimate(a) => (estimate(a)?, &a.out),
        Command::Features(a) => (features(a)?, &a.out),
        Command::TrainPair(a) => (train_pair(a)?, &a.out),
        Command::Sweep(a) => (sweep(a)?, &a.out),
        Command::Signtest(a) => (signtest(a)?, &a.out),
        Command::Kde(a) => (kde(a)?, &a.out),
        Command::Selection(a) => (selection(a)?, &a.out),
        Command::PlanZv(a) => (plan_zv(a)?, &a.out),
        Command::Synth(a) => (synth(a)?, &a.out),
    };
    emit(&doc, out)
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    match cli.threads {
        Some(0) => Err(CliError::Invalid("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Invalid(format!("thread pool: {e}")))?;
            pool.install(|| dispatch(&cli.command))
        }
        None => dispatch(&cli.command),
    }
}

/// Parses `args` (including the program name), runs, and returns the exit
/// code. Help and version requests exit 0; any other parse failure exits 1.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
