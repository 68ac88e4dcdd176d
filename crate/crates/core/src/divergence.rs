//! Gaussian kernel density estimates on uniform grids and the distances
//! used to compare per-artist feature distributions.

use std::collections::BTreeMap;
use std::f64::consts::LN_2;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feature_pipeline::LabeledDataset;

pub const DEFAULT_GRID: usize = 512;
pub const LOG_FLOOR: f64 = 1e-12;
const MASS_TOL: f64 = 1e-9;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Error)]
pub enum DivergenceError {
    #[error("need at least two finite samples with non-zero spread")]
    Degenerate,
    #[error("invalid bandwidth {0}")]
    Bandwidth(f64),
    #[error("grid needs at least 2 points, got {0}")]
    GridSize(usize),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("feature {feature} has too few or constant values for class {class}")]
    InsufficientEvents { feature: String, class: String },
    #[error("writing {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// `0.9 * min(sd, IQR / 1.34) * E^(-1/5)`.
    #[default]
    Silverman,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GriddedDensity {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl GriddedDensity {
    /// Checks for a uniform increasing grid and rescales to unit mass.
    pub fn new(grid: Vec<f64>, density: Vec<f64>, bandwidth: f64) -> Result<Self, DivergenceError> {
        if grid.len() < 2 {
            return Err(DivergenceError::GridSize(grid.len()));
        }
        if grid.len() != density.len() {
            return Err(DivergenceError::Grid(
                "grid and density lengths differ".into(),
            ));
        }
        let step = grid[1] - grid[0];
        let uniform = step > 0.0
            && grid
                .windows(2)
                .all(|w| ((w[1] - w[0]) - step).abs() <= 1e-9 * step.max(w[1].abs()));
        if !uniform {
            return Err(DivergenceError::Grid(
                "grid must be uniform and increasing".into(),
            ));
        }
        if density.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(DivergenceError::Grid(
                "density must be finite and non-negative".into(),
            ));
        }
        let mut d = Self {
            grid,
            density,
            bandwidth,
        };
        d.normalize()?;
        Ok(d)
    }

    pub fn step(&self) -> f64 {
        (self.grid[self.grid.len() - 1] - self.grid[0]) / (self.grid.len() - 1) as f64
    }

    pub fn mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.step()
    }

    pub fn mean(&self) -> f64 {
        self.grid
            .iter()
            .zip(&self.density)
            .map(|(x, d)| x * d)
            .sum::<f64>()
            * self.step()
    }

    fn normalize(&mut self) -> Result<(), DivergenceError> {
        let mass = self.mass();
        if !(mass > 0.0) {
            return Err(DivergenceError::Grid("density has zero mass".into()));
        }
        for d in &mut self.density {
            *d /= mass;
        }
        debug_assert!((self.mass() - 1.0).abs() < MASS_TOL);
        Ok(())
    }

    /// Linear interpolation, zero outside the grid.
    pub fn value_at(&self, x: f64) -> f64 {
        let n = self.grid.len();
        let (lo, hi) = (self.grid[0], self.grid[n - 1]);
        if !(lo..=hi).contains(&x) {
            return 0.0;
        }
        let t = (x - lo) / self.step();
        let i = (t.floor() as usize).min(n - 2);
        let frac = (t - i as f64).clamp(0.0, 1.0);
        self.density[i] * (1.0 - frac) + self.density[i + 1] * frac
    }

    fn regrid(&self, grid: &[f64]) -> Result<Self, DivergenceError> {
        let density = grid.iter().map(|&x| self.value_at(x)).collect();
        Self::new(grid.to_vec(), density, self.bandwidth)
    }
}

/// Type-7 sample quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let i = h.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (h - i as f64) * (sorted[j] - sorted[i])
}

pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64, DivergenceError> {
    let n = samples.len();
    if n < 2 || samples.iter().any(|x| !x.is_finite()) {
        return Err(DivergenceError::Degenerate);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    if !(sd > 0.0) {
        return Err(DivergenceError::Degenerate);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    Ok(0.9 * spread * (n as f64).powf(-0.2))
}

/// Gaussian KDE on `grid_size` points spanning `[min - 3h, max + 3h]`.
pub fn kde_fit(
    samples: &[f64],
    grid_size: usize,
    bandwidth: Bandwidth,
) -> Result<GriddedDensity, DivergenceError> {
    if grid_size < 2 {
        return Err(DivergenceError::GridSize(grid_size));
    }
    let auto = silverman_bandwidth(samples)?;
    let h = match bandwidth {
        Bandwidth::Silverman => auto,
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => h,
        Bandwidth::Fixed(h) => return Err(DivergenceError::Bandwidth(h)),
    };
    let (min, max) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let lo = min - 3.0 * h;
    let step = (max + 3.0 * h - lo) / (grid_size - 1) as f64;
    let grid: Vec<f64> = (0..grid_size).map(|i| lo + step * i as f64).collect();
    let scale = INV_SQRT_2PI / (samples.len() as f64 * h);
    let density = grid
        .par_iter()
        .map(|&x| {
            samples
                .iter()
                .map(|&s| {
                    let u = (x - s) / h;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
                * scale
        })
        .collect();
    GriddedDensity::new(grid, density, h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub hellinger: f64,
    pub js_nats: f64,
    pub kl_forward: f64,
    pub kl_reverse: f64,
    pub tv: f64,
    pub theorem3_lhs: f64,
    pub theorem3_rhs: f64,
    pub theorem3_holds: bool,
}

fn kl(p: &[f64], q: &[f64], step: f64) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (a.max(LOG_FLOOR) / b.max(LOG_FLOOR)).ln())
        .sum::<f64>()
        .max(0.0)
        * step
}

/// Regrids both densities onto their union span (the finer of the two point
/// counts) and evaluates the discrete integrals.
pub fn compare(
    d1: &GriddedDensity,
    d2: &GriddedDensity,
) -> Result<DivergenceReport, DivergenceError> {
    let lo = d1.grid[0].min(d2.grid[0]);
    let hi = d1.grid[d1.grid.len() - 1].max(d2.grid[d2.grid.len() - 1]);
    let n = d1.grid.len().max(d2.grid.len());
    let step = (hi - lo) / (n - 1) as f64;
    let grid: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
    let p = d1.regrid(&grid)?;
    let q = d2.regrid(&grid)?;
    let (p, q) = (&p.density, &q.density);
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    let h2 = 0.5
        * p.iter()
            .zip(q)
            .map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2))
            .sum::<f64>()
        * step;
    let tv = (0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>() * step).min(1.0);
    let js = (0.5 * kl(p, &m, step) + 0.5 * kl(q, &m, step)).clamp(0.0, LN_2);
    let rhs = tv * tv / (2.0 * LN_2);
    Ok(DivergenceReport {
        hellinger: h2.clamp(0.0, 1.0).sqrt(),
        js_nats: js,
        kl_forward: kl(p, q, step),
        kl_reverse: kl(q, p, step),
        tv,
        theorem3_lhs: js,
        theorem3_rhs: rhs,
        theorem3_holds: js <= rhs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDivergence {
    pub feature: String,
    pub report: DivergenceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceTable {
    pub class_names: [String; 2],
    pub grid_size: usize,
    pub rows: Vec<FeatureDivergence>,
    /// Feature names ordered by decreasing distance, per metric.
    pub rankings: BTreeMap<String, Vec<String>>,
}

type Metric = fn(&DivergenceReport) -> f64;

/// One KDE per (class, feature) and one comparison per feature.
pub fn feature_divergence_table(
    ds: &LabeledDataset,
    grid_size: usize,
    bandwidth: Bandwidth,
) -> Result<DivergenceTable, DivergenceError> {
    let mut rows = Vec::with_capacity(ds.width());
    for (j, name) in ds.feature_names.iter().enumerate() {
        let mut by_class: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for (x, &y) in ds.features.iter().zip(&ds.labels) {
            by_class[usize::from(y)].push(x[j]);
        }
        let mut fits = Vec::with_capacity(2);
        for (c, samples) in by_class.iter().enumerate() {
            let fit = kde_fit(samples, grid_size, bandwidth).map_err(|e| match e {
                DivergenceError::Degenerate => DivergenceError::InsufficientEvents {
                    feature: name.clone(),
                    class: ds.class_names[c].clone(),
                },
                other => other,
            })?;
            fits.push(fit);
        }
        rows.push(FeatureDivergence {
            feature: name.clone(),
            report: compare(&fits[0], &fits[1])?,
        });
    }
    let metrics: [(&str, Metric); 5] = [
        ("hellinger", |r| r.hellinger),
        ("js_nats", |r| r.js_nats),
        ("kl_forward", |r| r.kl_forward),
        ("kl_reverse", |r| r.kl_reverse),
        ("tv", |r| r.tv),
    ];
    let rankings = metrics
        .iter()
        .map(|(name, get)| {
            let mut order: Vec<&FeatureDivergence> = rows.iter().collect();
            order.sort_by(|a, b| get(&b.report).total_cmp(&get(&a.report)));
            (
                name.to_string(),
                order.iter().map(|r| r.feature.clone()).collect(),
            )
        })
        .collect();
    Ok(DivergenceTable {
        class_names: ds.class_names.clone(),
        grid_size,
        rows,
        rankings,
    })
}

impl DivergenceTable {
    pub fn write_csv(&self, path: &Path) -> Result<(), DivergenceError> {
        let io = |source: std::io::Error| DivergenceError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
        w.write_record(["feature", "hellinger", "js", "kl_fwd", "kl_rev", "tv"])
            .map_err(|e| io(e.into()))?;
        for row in &self.rows {
            let r = &row.report;
            w.write_record([
                row.feature.clone(),
                r.hellinger.to_string(),
                r.js_nats.to_string(),
                r.kl_forward.to_string(),
                r.kl_reverse.to_string(),
                r.tv.to_string(),
            ])
            .map_err(|e| io(e.into()))?;
        }
        w.flush().map_err(io)
    }
}
