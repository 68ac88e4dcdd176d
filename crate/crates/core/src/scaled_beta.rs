//! Scaled Beta distributions on `[min, max]` and the closed-form recovery of
//! their shape parameters from four summary statistics.
//!
//! The estimator combines one moment (the mean) and one quantile (the
//! median). The median is modelled with the approximation
//! `median ≈ (α − 1/3) / (α + β − 2/3)` on the unit interval; the inversion of
//! the mean/median pair under that approximation is exact, so a forward pass
//! followed by [`estimate_alpha_beta`] reproduces `(α, β)` to rounding error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;
use thiserror::Error;

use crate::quadrature;

/// Minimum `|q − s|` accepted by the estimator.
pub const QS_EPSILON: f64 = 1e-9;
/// Upper bound on either recovered shape parameter.
pub const SHAPE_CAP: f64 = 1e6;
/// Density reported at an endpoint where the true density diverges.
pub const DENSITY_CAP: f64 = 1e300;

const CDF_TOL: f64 = 1e-13;
const INVERSE_GRID: usize = 2048;
const INVERSE_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum EstimationError {
    #[error("zero price range (max equals min)")]
    ZeroRange,
    #[error("summary statistics out of order (need min <= mean, median <= max)")]
    StatsOutOfOrder,
    #[error("mean equals median at the midpoint; symmetric shapes are not identifiable")]
    SymmetricUnderdetermined,
    #[error("mean equals median away from the midpoint; no shape pair matches")]
    InconsistentStats,
    #[error("statistics fall outside the estimator's domain")]
    OutOfDomain,
}

/// Per-event price summary: the estimator's entire input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub min_price: f64,
    pub max_price: f64,
    pub mean_price: f64,
    pub median_price: f64,
}

impl SummaryStats {
    pub fn new(min_price: f64, max_price: f64, mean_price: f64, median_price: f64) -> Self {
        Self {
            min_price,
            max_price,
            mean_price,
            median_price,
        }
    }

    /// Checks the ordering invariants. Equal min and max is reported as
    /// [`EstimationError::ZeroRange`].
    pub fn validate(&self) -> Result<(), EstimationError> {
        let all = [
            self.min_price,
            self.max_price,
            self.mean_price,
            self.median_price,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(EstimationError::OutOfDomain);
        }
        if self.max_price < self.min_price {
            return Err(EstimationError::StatsOutOfOrder);
        }
        let inside = |v: f64| self.min_price <= v && v <= self.max_price;
        if !inside(self.mean_price) || !inside(self.median_price) {
            return Err(EstimationError::StatsOutOfOrder);
        }
        if self.max_price == self.min_price {
            return Err(EstimationError::ZeroRange);
        }
        Ok(())
    }
}

/// Mean and median mapped onto the unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledStats {
    pub s: f64,
    pub q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledBetaParams {
    alpha: f64,
    beta: f64,
    support_min: f64,
    support_max: f64,
}

impl ScaledBetaParams {
    pub fn new(
        alpha: f64,
        beta: f64,
        support_min: f64,
        support_max: f64,
    ) -> Result<Self, EstimationError> {
        let shape_ok = |v: f64| v.is_finite() && v > 0.0 && v <= SHAPE_CAP;
        if !shape_ok(alpha) || !shape_ok(beta) {
            return Err(EstimationError::OutOfDomain);
        }
        if !support_min.is_finite() || !support_max.is_finite() {
            return Err(EstimationError::OutOfDomain);
        }
        if support_max <= support_min {
            return Err(EstimationError::ZeroRange);
        }
        Ok(Self {
            alpha,
            beta,
            support_min,
            support_max,
        })
    }

    /// Standard Beta on `[0, 1]`.
    pub fn unit(alpha: f64, beta: f64) -> Result<Self, EstimationError> {
        Self::new(alpha, beta, 0.0, 1.0)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn support_min(&self) -> f64 {
        self.support_min
    }

    pub fn support_max(&self) -> f64 {
        self.support_max
    }

    pub fn span(&self) -> f64 {
        self.support_max - self.support_min
    }

    /// Same shape on a different support.
    pub fn with_support(
        &self,
        support_min: f64,
        support_max: f64,
    ) -> Result<Self, EstimationError> {
        Self::new(self.alpha, self.beta, support_min, support_max)
    }

    fn to_unit(self, x: f64) -> f64 {
        (x - self.support_min) / self.span()
    }

    fn unit_to_price(&self, t: f64) -> f64 {
        self.support_min + t * self.span()
    }

    /// Summary statistics implied by the shape: exact mean, approximate median.
    pub fn implied_stats(&self) -> SummaryStats {
        SummaryStats::new(
            self.support_min,
            self.support_max,
            beta_mean(self),
            beta_median_approx(self),
        )
    }

    /// Density with an explicit flag for the capped endpoint case.
    pub fn pdf_eval(&self, x: f64) -> PdfEval {
        let t = self.to_unit(x);
        let span = self.span();
        unit_pdf_eval(self.alpha, self.beta, t).map(|d| d / span)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.pdf_eval(x).density
    }

    /// Cumulative distribution function by quadrature of the density.
    pub fn cdf(&self, x: f64) -> f64 {
        regularized_incomplete_beta(self.alpha, self.beta, self.to_unit(x))
    }
}

/// A density value; `capped` marks an endpoint where the true density is
/// unbounded and [`DENSITY_CAP`] is reported instead.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdfEval {
    pub density: f64,
    pub capped: bool,
}

impl PdfEval {
    fn finite(density: f64) -> Self {
        Self {
            density,
            capped: false,
        }
    }

    fn map(self, f: impl FnOnce(f64) -> f64) -> Self {
        if self.capped {
            self
        } else {
            Self::finite(f(self.density))
        }
    }
}

fn unit_pdf_eval(a: f64, b: f64, t: f64) -> PdfEval {
    if !(0.0..=1.0).contains(&t) {
        return PdfEval::finite(0.0);
    }
    let capped = PdfEval {
        density: DENSITY_CAP,
        capped: true,
    };
    if t == 0.0 {
        return match a.partial_cmp(&1.0) {
            Some(std::cmp::Ordering::Less) => capped,
            Some(std::cmp::Ordering::Equal) => PdfEval::finite((-ln_beta(a, b)).exp()),
            _ => PdfEval::finite(0.0),
        };
    }
    if t == 1.0 {
        return match b.partial_cmp(&1.0) {
            Some(std::cmp::Ordering::Less) => capped,
            Some(std::cmp::Ordering::Equal) => PdfEval::finite((-ln_beta(a, b)).exp()),
            _ => PdfEval::finite(0.0),
        };
    }
    PdfEval::finite(unit_pdf(a, b, t, ln_beta(a, b)))
}

#[inline]
fn unit_pdf(a: f64, b: f64, t: f64, log_norm: f64) -> f64 {
    ((a - 1.0) * t.ln() + (b - 1.0) * (-t).ln_1p() - log_norm).exp()
}

/// Regularized incomplete Beta `I_x(a, b)` computed by adaptive quadrature.
///
/// The substitution `t = x·v^{1/a}` removes the left-endpoint singularity;
/// for `x > 1/2` the reflection `I_x(a,b) = 1 − I_{1−x}(b,a)` keeps the
/// integrand bounded on the other side.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    if x > 0.5 {
        return 1.0 - lower_incomplete(b, a, 1.0 - x);
    }
    lower_incomplete(a, b, x)
}

fn lower_incomplete(a: f64, b: f64, x: f64) -> f64 {
    let log_prefactor = a * x.ln() - a.ln() - ln_beta(a, b);
    let prefactor = log_prefactor.exp();
    if prefactor == 0.0 {
        return 0.0;
    }
    let inv_a = 1.0 / a;
    let value = quadrature::integrate(
        |v| ((b - 1.0) * (-x * v.powf(inv_a)).ln_1p()).exp(),
        0.0,
        1.0,
        CDF_TOL,
    );
    (prefactor * value).clamp(0.0, 1.0)
}

/// Maps raw statistics onto the unit interval.
pub fn scale_stats(stats: &SummaryStats) -> Result<ScaledStats, EstimationError> {
    stats.validate()?;
    let span = stats.max_price - stats.min_price;
    let s = (stats.mean_price - stats.min_price) / span;
    let q = (stats.median_price - stats.min_price) / span;
    let open = |v: f64| v > 0.0 && v < 1.0;
    if !open(s) || !open(q) {
        return Err(EstimationError::OutOfDomain);
    }
    Ok(ScaledStats { s, q })
}

/// Closed-form composite mean/median matching on the unit interval:
/// `α = s(2q−1) / (3(q−s))`, `β = (1−s)(2q−1) / (3(q−s))`.
///
/// The returned params live on `[0, 1]`; use [`estimate`] to keep the
/// original support. Shapes larger than [`SHAPE_CAP`] are scaled down
/// together so the implied mean is preserved.
pub fn estimate_alpha_beta(scaled: &ScaledStats) -> Result<ScaledBetaParams, EstimationError> {
    let ScaledStats { s, q } = *scaled;
    let open = |v: f64| v.is_finite() && v > 0.0 && v < 1.0;
    if !open(s) || !open(q) {
        return Err(EstimationError::OutOfDomain);
    }
    let gap = q - s;
    if gap.abs() < QS_EPSILON {
        if (q - 0.5).abs() < QS_EPSILON {
            return Err(EstimationError::SymmetricUnderdetermined);
        }
        return Err(EstimationError::InconsistentStats);
    }
    let skew = 2.0 * q - 1.0;
    if skew == 0.0 || skew.signum() != gap.signum() {
        return Err(EstimationError::OutOfDomain);
    }
    let mut alpha = s * skew / (3.0 * gap);
    let mut beta = (1.0 - s) * skew / (3.0 * gap);
    if !(alpha.is_finite() && beta.is_finite() && alpha > 0.0 && beta > 0.0) {
        return Err(EstimationError::OutOfDomain);
    }
    let largest = alpha.max(beta);
    if largest > SHAPE_CAP {
        let shrink = SHAPE_CAP / largest;
        alpha = (alpha * shrink).min(SHAPE_CAP);
        beta = (beta * shrink).min(SHAPE_CAP);
    }
    ScaledBetaParams::unit(alpha, beta)
}

/// Scales, estimates, and re-attaches the original support.
pub fn estimate(stats: &SummaryStats) -> Result<ScaledBetaParams, EstimationError> {
    let scaled = scale_stats(stats)?;
    estimate_alpha_beta(&scaled)?.with_support(stats.min_price, stats.max_price)
}

/// `α / (α + β)`.
pub fn scaled_mean(alpha: f64, beta: f64) -> f64 {
    alpha / (alpha + beta)
}

/// `(α − 1/3) / (α + β − 2/3)`, evaluated as written for any shapes.
pub fn scaled_median_approx(alpha: f64, beta: f64) -> f64 {
    (alpha - 1.0 / 3.0) / (alpha + beta - 2.0 / 3.0)
}

pub fn beta_mean(params: &ScaledBetaParams) -> f64 {
    params.unit_to_price(scaled_mean(params.alpha, params.beta))
}

pub fn beta_median_approx(params: &ScaledBetaParams) -> f64 {
    params.unit_to_price(scaled_median_approx(params.alpha, params.beta))
}

pub fn pdf(params: &ScaledBetaParams, x: f64) -> f64 {
    params.pdf(x)
}

/// Median located by bisection on the quadrature CDF; the result is within
/// `tol` (in price units) of the point where the CDF crosses one half.
pub fn numeric_median(params: &ScaledBetaParams, tol: f64) -> f64 {
    assert!(tol > 0.0, "tolerance must be positive");
    let unit_tol = tol / params.span();
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        if hi - lo <= unit_tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if regularized_incomplete_beta(params.alpha, params.beta, mid) < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    params.unit_to_price(0.5 * (lo + hi))
}

/// Tabulated CDF used for inverse-transform sampling. The table brackets each
/// quantile; bisection inside the bracket refines it against the quadrature
/// CDF.
#[derive(Debug, Clone)]
pub struct InverseCdf {
    alpha: f64,
    beta: f64,
    log_norm: f64,
    knots: Vec<f64>,
    cdf: Vec<f64>,
}

impl InverseCdf {
    pub fn new(alpha: f64, beta: f64) -> Self {
        let knots: Vec<f64> = (0..=INVERSE_GRID)
            .map(|k| k as f64 / INVERSE_GRID as f64)
            .collect();
        let mut cdf: Vec<f64> = knots
            .iter()
            .map(|&t| regularized_incomplete_beta(alpha, beta, t))
            .collect();
        for k in 1..cdf.len() {
            if cdf[k] < cdf[k - 1] {
                cdf[k] = cdf[k - 1];
            }
        }
        Self {
            alpha,
            beta,
            log_norm: ln_beta(alpha, beta),
            knots,
            cdf,
        }
    }

    /// Unit-interval quantile for probability `u`.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let k = self
            .cdf
            .partition_point(|&c| c <= u)
            .clamp(1, self.cdf.len() - 1)
            - 1;
        let (t0, t1) = (self.knots[k], self.knots[k + 1]);
        let edge = k == 0 || k + 2 == self.knots.len();
        let base = self.cdf[k];
        let cdf_at = |t: f64| {
            if edge {
                regularized_incomplete_beta(self.alpha, self.beta, t)
            } else {
                base + quadrature::gk15_panel(
                    &|x| unit_pdf(self.alpha, self.beta, x, self.log_norm),
                    t0,
                    t,
                )
                .0
            }
        };
        let (mut lo, mut hi) = (t0, t1);
        while hi - lo > INVERSE_TOL {
            let mid = 0.5 * (lo + hi);
            if cdf_at(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Deterministic draws by inverse-CDF transform of ChaCha8 uniforms.
pub fn sample(params: &ScaledBetaParams, count: usize, seed: u64) -> Vec<f64> {
    let inverse = InverseCdf::new(params.alpha, params.beta);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let u: f64 = rng.gen();
            params.unit_to_price(inverse.quantile(u))
        })
        .collect()
}
