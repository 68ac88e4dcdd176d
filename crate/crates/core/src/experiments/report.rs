use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    arm_view, mean, mean_option, pair_seeds, sign_test_outcomes, sum_usage, tally, Arm,
    ExperimentError, PairSpec, PairwiseOutcome, SignTestReport, SweepResult, SweepRow, Verdict,
};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
/// JSON Schema for [`ExperimentReport`].
pub const REPORT_SCHEMA: &str = include_str!("../../schema/report.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSeedRecord {
    pub pair: [String; 2],
    pub split: u64,
    pub forest: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub master: u64,
    pub pairs: Vec<PairSeedRecord>,
}

/// One arm averaged over all pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmAggregate {
    pub arm: Arm,
    pub variant: String,
    pub feature_names: Vec<String>,
    pub mean_accuracy: f64,
    pub mean_depth: f64,
    pub median_depth: f64,
    pub mean_variety: f64,
    pub median_variety: f64,
    pub mean_cosine: Option<f64>,
    pub aggregate_usage: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    /// Fully resolved configuration of the run.
    pub config: serde_json::Value,
    pub seeds: SeedRecord,
    pub outcomes: Vec<PairwiseOutcome>,
    pub sign_test: Option<SignTestReport>,
    pub sweep: Vec<SweepRow>,
    pub diagnostics: Vec<ArmAggregate>,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

impl ExperimentReport {
    pub fn new(
        config: serde_json::Value,
        master_seed: u64,
        pairs: &[PairSpec],
        outcomes: Vec<PairwiseOutcome>,
        sweep: Option<SweepResult>,
    ) -> Self {
        let seeds = SeedRecord {
            master: master_seed,
            pairs: pairs
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let s = pair_seeds(master_seed, i);
                    PairSeedRecord {
                        pair: p.name(),
                        split: s.split,
                        forest: s.forest,
                    }
                })
                .collect(),
        };
        let diagnostics = if outcomes.is_empty() {
            Vec::new()
        } else {
            [Arm::A, Arm::B]
                .into_iter()
                .map(|arm| {
                    let ds = match arm {
                        Arm::A => &pairs[0].arm_a,
                        Arm::B => &pairs[0].arm_b,
                    };
                    let view = || outcomes.iter().map(|o| arm_view(o, arm));
                    ArmAggregate {
                        arm,
                        variant: ds.variant.to_string(),
                        feature_names: ds.feature_names.clone(),
                        mean_accuracy: mean(view().map(|s| s.accuracy)),
                        mean_depth: mean(view().map(|s| s.mean_depth)),
                        median_depth: median(view().map(|s| s.mean_depth).collect()),
                        mean_variety: mean(view().map(|s| s.variety_mean)),
                        median_variety: median(view().map(|s| s.variety_mean).collect()),
                        mean_cosine: mean_option(view().map(|s| s.avg_cosine_correlation)),
                        aggregate_usage: sum_usage(view().map(|s| &s.aggregate_usage)),
                    }
                })
                .collect()
        };
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            config,
            seeds,
            sign_test: sign_test_outcomes(&outcomes),
            outcomes,
            sweep: sweep.map(|s| s.rows).unwrap_or_default(),
            diagnostics,
        }
    }

    pub fn to_json(&self) -> Result<String, ExperimentError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn aggregate(&self, arm: Arm) -> Option<&ArmAggregate> {
        self.diagnostics.iter().find(|d| d.arm == arm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown format {other:?} (expected json or csv)")),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), ExperimentError> {
    let io = io_err(path);
    let mut w = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
    w.write_record(header).map_err(|e| io(e.into()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| io(e.into()))?;
    }
    w.flush().map_err(io)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// JSON writes one file; CSV writes `outcomes.csv` plus the plot tables into
/// the directory `path`.
pub fn emit_report(
    report: &ExperimentReport,
    format: ReportFormat,
    path: &Path,
) -> Result<(), ExperimentError> {
    match format {
        ReportFormat::Json => std::fs::write(path, report.to_json()?).map_err(io_err(path)),
        ReportFormat::Csv => write_plot_data(report, path),
    }
}

pub fn write_plot_data(report: &ExperimentReport, dir: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let pair_name = |o: &PairwiseOutcome| format!("{}-{}", o.pair[0], o.pair[1]);

    write_csv(
        &dir.join("outcomes.csv"),
        &["class_a", "class_b", "accuracy_a", "accuracy_b", "verdict"],
        report
            .outcomes
            .iter()
            .map(|o| {
                vec![
                    o.pair[0].clone(),
                    o.pair[1].clone(),
                    o.accuracy_a.to_string(),
                    o.accuracy_b.to_string(),
                    o.verdict.as_str().into(),
                ]
            })
            .collect(),
    )?;

    write_csv(
        &dir.join("sweep_accuracy.csv"),
        &[
            "m",
            "arm",
            "mean_accuracy",
            "mean_depth",
            "mean_variety",
            "mean_cosine",
        ],
        report
            .sweep
            .iter()
            .map(|r| {
                vec![
                    r.m.to_string(),
                    r.arm.as_str().into(),
                    r.mean_accuracy.to_string(),
                    r.mean_depth.to_string(),
                    r.mean_variety.to_string(),
                    opt(r.mean_cosine),
                ]
            })
            .collect(),
    )?;

    let mut usage = Vec::new();
    for d in &report.diagnostics {
        for (name, count) in d.feature_names.iter().zip(&d.aggregate_usage) {
            usage.push(vec![d.arm.as_str().into(), name.clone(), count.to_string()]);
        }
    }
    for r in &report.sweep {
        for (j, count) in r.aggregate_usage.iter().enumerate() {
            usage.push(vec![
                format!("{}@m{}", r.arm.as_str(), r.m),
                j.to_string(),
                count.to_string(),
            ]);
        }
    }
    write_csv(
        &dir.join("usage_hist.csv"),
        &["arm", "feature", "count"],
        usage,
    )?;

    let per_arm = |f: fn(&super::ArmSummary) -> Vec<String>| {
        let mut rows = Vec::new();
        for o in &report.outcomes {
            for arm in [Arm::A, Arm::B] {
                let mut row = vec![pair_name(o), arm.as_str().to_string()];
                row.extend(f(arm_view(o, arm)));
                rows.push(row);
            }
        }
        rows
    };
    write_csv(
        &dir.join("depth_dist.csv"),
        &["pair", "arm", "mean_depth", "median_depth"],
        per_arm(|s| vec![s.mean_depth.to_string(), s.median_depth.to_string()]),
    )?;
    write_csv(
        &dir.join("variety_dist.csv"),
        &["pair", "arm", "variety_mean", "variety_sum", "avg_cosine"],
        per_arm(|s| {
            vec![
                s.variety_mean.to_string(),
                s.variety_sum.to_string(),
                opt(s.avg_cosine_correlation),
            ]
        }),
    )?;

    let (b, w, t) = tally(&report.outcomes);
    write_csv(
        &dir.join("outcome_bars.csv"),
        &["verdict", "count"],
        [(Verdict::Better, b), (Verdict::Worse, w), (Verdict::Tie, t)]
            .iter()
            .map(|(v, c)| vec![v.as_str().into(), c.to_string()])
            .collect(),
    )
}
