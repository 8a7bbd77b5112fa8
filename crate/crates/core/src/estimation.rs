//! Parameter estimation: GPD by probability-weighted moments and maximum
//! likelihood, GEV by probability-weighted moments, the Normal baseline, and
//! shape-stability threshold selection.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::distributions::{DistError, GevParams, GpdParams, NormalParams, SHAPE_EPS};
use crate::ingest::{excesses_over, ArrivalSeries, ExcessSample, IngestError};
use crate::optimize;

/// Minimum exceedances accepted by [`fit_gpd_mle`].
pub const MLE_MIN_EXCEED: usize = 5;
/// Simplex-diameter tolerance for the likelihood search over `(xi, ln beta)`.
pub const MLE_TOLERANCE: f64 = 1e-10;
pub const MLE_MAX_ITER: usize = 2000;

pub const DEFAULT_STABILITY_TOL: f64 = 0.1;
pub const DEFAULT_N_MIN: usize = 30;
pub const DEFAULT_QUANTILE_GRID: [f64; 6] = [0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("estimation failed: {0}")]
    Degenerate(String),

    #[error("likelihood search did not converge after {iterations} iterations (best xi = {shape}, beta = {scale}, log-likelihood = {log_likelihood})")]
    NotConverged {
        shape: f64,
        scale: f64,
        log_likelihood: f64,
        iterations: usize,
    },

    #[error("no candidate threshold has a stable shape estimate (tolerance {})", .0.stability_tol)]
    NoStableThreshold(Box<ThresholdReport>),

    #[error(transparent)]
    Ingest(#[from] IngestError),

    #[error(transparent)]
    Distribution(#[from] DistError),
}

/// GPD estimation method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Pwm,
    Mle,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Pwm => "pwm",
            Method::Mle => "mle",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pwm" => Ok(Method::Pwm),
            "mle" => Ok(Method::Mle),
            other => Err(format!("unknown method {other:?} (expected pwm or mle)")),
        }
    }
}

/// A fitted peaks-over-threshold model.
#[derive(Debug, Clone, PartialEq)]
pub struct GpdFit {
    pub params: GpdParams,
    pub threshold: f64,
    /// Exceedance fraction, the empirical P(X > u).
    pub exceedance_fraction: f64,
    pub method: Method,
    pub n_exceed: usize,
    pub n_total: usize,
    /// Maximized log-likelihood; only for [`Method::Mle`].
    pub log_likelihood: Option<f64>,
}

impl GpdFit {
    fn from_sample(
        sample: &ExcessSample,
        params: GpdParams,
        method: Method,
        log_likelihood: Option<f64>,
    ) -> Self {
        Self {
            params,
            threshold: sample.threshold(),
            exceedance_fraction: sample.exceedance_fraction(),
            method,
            n_exceed: sample.n_exceed(),
            n_total: sample.n_total(),
            log_likelihood,
        }
    }
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn all_equal(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] == w[1])
}

/// PWM estimates from raw excesses, plotting positions `(i - 0.35) / n`.
pub fn gpd_pwm_params(excesses: &[f64]) -> Result<GpdParams, EstimationError> {
    let n = excesses.len();
    if n < 2 {
        return Err(EstimationError::InvalidArgument(format!(
            "PWM needs at least 2 excesses, got {n}"
        )));
    }
    if all_equal(excesses) {
        return Err(EstimationError::Degenerate("all excesses are equal".into()));
    }
    let ys = sorted(excesses);
    let nf = n as f64;
    let a0 = ys.iter().sum::<f64>() / nf;
    let a1 = ys
        .iter()
        .enumerate()
        .map(|(i, &y)| y * (1.0 - (i as f64 + 1.0 - 0.35) / nf))
        .sum::<f64>()
        / nf;
    let denom = a0 - 2.0 * a1;
    if !(denom > 0.0) {
        return Err(EstimationError::Degenerate(format!(
            "PWM denominator a0 - 2 a1 = {denom} is not positive"
        )));
    }
    let k = a0 / denom - 2.0;
    let scale = 2.0 * a0 * a1 / denom;
    GpdParams::new(-k, scale).map_err(|e| EstimationError::Degenerate(e.to_string()))
}

pub fn fit_gpd_pwm(sample: &ExcessSample) -> Result<GpdFit, EstimationError> {
    let params = gpd_pwm_params(sample.excesses())?;
    Ok(GpdFit::from_sample(sample, params, Method::Pwm, None))
}

/// GPD log-likelihood; `-inf` outside `{beta > 0, 1 + xi y / beta > 0}`.
pub fn gpd_log_likelihood(params: &GpdParams, excesses: &[f64]) -> f64 {
    let (shape, scale) = (params.shape(), params.scale());
    let n = excesses.len() as f64;
    if shape.abs() < SHAPE_EPS {
        return -n * scale.ln() - excesses.iter().sum::<f64>() / scale;
    }
    let mut log_terms = 0.0;
    for &y in excesses {
        let arg = shape * y / scale;
        if arg <= -1.0 {
            return f64::NEG_INFINITY;
        }
        log_terms += arg.ln_1p();
    }
    -n * scale.ln() - (1.0 + 1.0 / shape) * log_terms
}

/// Maximum-likelihood GPD fit by a simplex search over `(xi, ln beta)`,
/// started from `init` or the PWM estimate. The search is confined to
/// `xi > -1`, where the likelihood is bounded.
pub fn fit_gpd_mle(
    sample: &ExcessSample,
    init: Option<GpdParams>,
) -> Result<GpdFit, EstimationError> {
    let ys = sample.excesses();
    if ys.len() < MLE_MIN_EXCEED {
        return Err(EstimationError::InvalidArgument(format!(
            "maximum likelihood needs at least {MLE_MIN_EXCEED} excesses, got {}",
            ys.len()
        )));
    }
    if all_equal(ys) {
        return Err(EstimationError::Degenerate("all excesses are equal".into()));
    }
    let start = match init {
        Some(p) => p,
        None => gpd_pwm_params(ys)?,
    };
    let y_max = ys.iter().copied().fold(0.0, f64::max);
    let objective = |x: [f64; 2]| {
        if x[0] <= -1.0 || !x[1].is_finite() {
            return f64::INFINITY;
        }
        match GpdParams::new(x[0], x[1].exp()) {
            Ok(p) => -gpd_log_likelihood(&p, ys),
            Err(_) => f64::INFINITY,
        }
    };

    // Pull an infeasible start inside the support so the simplex has a finite vertex.
    let mut shape0 = start.shape().max(-0.9);
    let mut scale0 = start.scale();
    if shape0 < 0.0 && 1.0 + shape0 * y_max / scale0 <= 0.0 {
        scale0 = -shape0 * y_max * 1.05;
    }
    if !objective([shape0, scale0.ln()]).is_finite() {
        shape0 = 0.0;
        scale0 = sample.mean_excess();
    }
    let init_ll = gpd_log_likelihood(&start, ys);

    let mut x = [shape0, scale0.ln()];
    let mut fx = objective(x);
    let mut iterations = 0;
    // A restart from the optimum guards against a collapsed simplex.
    for step in [0.1, 0.02] {
        let out = optimize::nelder_mead(objective, x, [step, step], MLE_TOLERANCE, MLE_MAX_ITER);
        iterations += out.iterations;
        if !out.converged {
            return Err(EstimationError::NotConverged {
                shape: out.x[0],
                scale: out.x[1].exp(),
                log_likelihood: -out.fx,
                iterations,
            });
        }
        if out.fx <= fx {
            x = out.x;
            fx = out.fx;
        }
    }
    let log_likelihood = -fx;
    if !log_likelihood.is_finite() || log_likelihood < init_ll {
        return Err(EstimationError::NotConverged {
            shape: x[0],
            scale: x[1].exp(),
            log_likelihood,
            iterations,
        });
    }
    let params = GpdParams::new(x[0], x[1].exp())?;
    Ok(GpdFit::from_sample(
        sample,
        params,
        Method::Mle,
        Some(log_likelihood),
    ))
}

pub fn fit_gpd(sample: &ExcessSample, method: Method) -> Result<GpdFit, EstimationError> {
    match method {
        Method::Pwm => fit_gpd_pwm(sample),
        Method::Mle => fit_gpd_mle(sample, None),
    }
}

/// A block-maxima GEV model.
#[derive(Debug, Clone, PartialEq)]
pub struct GevFit {
    pub params: GevParams,
    pub block_len: usize,
    pub n_blocks: usize,
}

/// Unbiased sample PWMs `b_0, b_1, b_2` of sorted data.
fn sample_pwms(xs: &[f64]) -> [f64; 3] {
    let n = xs.len() as f64;
    let mut b = [0.0; 3];
    for (idx, &x) in xs.iter().enumerate() {
        let i = idx as f64 + 1.0;
        b[0] += x;
        b[1] += x * (i - 1.0) / (n - 1.0);
        b[2] += x * (i - 1.0) * (i - 2.0) / ((n - 1.0) * (n - 2.0));
    }
    b.map(|v| v / n)
}

/// GEV PWM fit using the rational approximation `k = 7.8590 c + 2.9554 c^2`.
/// The returned shape follows `distributions`' sign convention, `xi_g = -k`.
pub fn fit_gev_pwm(maxima: &[f64], block_len: usize) -> Result<GevFit, EstimationError> {
    if block_len == 0 {
        return Err(EstimationError::InvalidArgument(
            "block length must be at least 1".into(),
        ));
    }
    if maxima.len() < 3 {
        return Err(EstimationError::InvalidArgument(format!(
            "GEV PWM needs at least 3 block maxima, got {}",
            maxima.len()
        )));
    }
    if maxima.iter().any(|x| !x.is_finite()) {
        return Err(EstimationError::InvalidArgument(
            "non-finite block maximum".into(),
        ));
    }
    if all_equal(maxima) {
        return Err(EstimationError::Degenerate(
            "all block maxima are equal".into(),
        ));
    }
    let [b0, b1, b2] = sample_pwms(&sorted(maxima));
    let denom = 3.0 * b2 - b0;
    if denom == 0.0 {
        return Err(EstimationError::Degenerate("3 b2 - b0 is zero".into()));
    }
    let c = (2.0 * b1 - b0) / denom - std::f64::consts::LN_2 / 3f64.ln();
    let k = 7.8590 * c + 2.9554 * c * c;
    let (scale, location) = if k.abs() < SHAPE_EPS {
        let scale = (2.0 * b1 - b0) / std::f64::consts::LN_2;
        (scale, b0 - EULER_GAMMA * scale)
    } else {
        if k <= -1.0 {
            return Err(EstimationError::Degenerate(format!(
                "shape k = {k} leaves Gamma(1+k) undefined"
            )));
        }
        let g = libm::tgamma(1.0 + k);
        if !g.is_finite() {
            return Err(EstimationError::Degenerate(format!(
                "Gamma(1 + {k}) overflows"
            )));
        }
        let scale = k * (2.0 * b1 - b0) / (g * -(-k * std::f64::consts::LN_2).exp_m1());
        (scale, b0 + scale * (g - 1.0) / k)
    };
    let params = GevParams::new(location, scale, -k)
        .map_err(|e| EstimationError::Degenerate(e.to_string()))?;
    Ok(GevFit {
        params,
        block_len,
        n_blocks: maxima.len(),
    })
}

/// Sample mean and `n - 1` standard deviation.
pub fn fit_normal(sample: &[f64]) -> Result<NormalParams, EstimationError> {
    let n = sample.len();
    if n < 2 {
        return Err(EstimationError::InvalidArgument(format!(
            "Normal fit needs at least 2 values, got {n}"
        )));
    }
    let mean = sample.iter().sum::<f64>() / n as f64;
    let var = sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if !(var > 0.0) {
        return Err(EstimationError::Degenerate(
            "sample variance is zero".into(),
        ));
    }
    NormalParams::new(mean, var.sqrt()).map_err(|e| EstimationError::Degenerate(e.to_string()))
}

/// Linear-interpolation sample quantile of sorted data.
pub fn sample_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdCandidate {
    pub probability: f64,
    pub threshold: f64,
    pub fit: GpdFit,
    /// `beta / (1 - xi)` of the fit.
    pub fitted_mean_excess: f64,
    pub empirical_mean_excess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectedCandidate {
    pub probability: f64,
    pub threshold: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport {
    /// Admissible candidates, strictly increasing in threshold.
    pub candidates: Vec<ThresholdCandidate>,
    pub rejected: Vec<RejectedCandidate>,
    /// Index into `candidates` of the selected threshold.
    pub selected: Option<usize>,
    pub n_min: usize,
    pub stability_tol: f64,
}

impl ThresholdReport {
    pub fn selected(&self) -> Option<&ThresholdCandidate> {
        self.selected.map(|i| &self.candidates[i])
    }
}

/// Picks the smallest candidate quantile whose PWM shape estimate agrees
/// with every higher candidate's to within `stability_tol`. The highest
/// candidate has nothing to be compared with and is never selected.
pub fn select_threshold(
    series: &ArrivalSeries,
    quantile_grid: &[f64],
    n_min: usize,
    stability_tol: f64,
) -> Result<ThresholdReport, EstimationError> {
    if quantile_grid.is_empty() {
        return Err(EstimationError::InvalidArgument(
            "empty quantile grid".into(),
        ));
    }
    if quantile_grid.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
        return Err(EstimationError::InvalidArgument(
            "grid probabilities must lie in (0, 1)".into(),
        ));
    }
    if quantile_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EstimationError::InvalidArgument(
            "grid probabilities must be strictly increasing".into(),
        ));
    }
    if !(stability_tol > 0.0) {
        return Err(EstimationError::InvalidArgument(format!(
            "stability tolerance {stability_tol} must be positive"
        )));
    }
    if series.is_empty() {
        return Err(EstimationError::InvalidArgument("series is empty".into()));
    }

    let ordered = sorted(series.values());
    let mut candidates: Vec<ThresholdCandidate> = Vec::new();
    let mut rejected = Vec::new();
    for &probability in quantile_grid {
        let threshold = sample_quantile(&ordered, probability);
        let mut reject = |reason: String| {
            rejected.push(RejectedCandidate {
                probability,
                threshold,
                reason,
            })
        };
        if candidates.last().is_some_and(|c| c.threshold >= threshold) {
            reject("duplicates a lower candidate".into());
            continue;
        }
        let sample = match excesses_over(series, threshold) {
            Ok(s) => s,
            Err(e) => {
                reject(e.to_string());
                continue;
            }
        };
        if sample.n_exceed() < n_min.max(2) {
            reject(format!(
                "{} exceedances, fewer than {n_min}",
                sample.n_exceed()
            ));
            continue;
        }
        match fit_gpd_pwm(&sample) {
            Ok(fit) => {
                let fitted_mean_excess = fit.params.mean().unwrap_or(f64::INFINITY);
                candidates.push(ThresholdCandidate {
                    probability,
                    threshold,
                    fitted_mean_excess,
                    empirical_mean_excess: sample.mean_excess(),
                    fit,
                });
            }
            Err(e) => reject(e.to_string()),
        }
    }

    let shapes: Vec<f64> = candidates.iter().map(|c| c.fit.params.shape()).collect();
    let selected = (0..shapes.len().saturating_sub(1)).find(|&i| {
        shapes[i + 1..]
            .iter()
            .all(|s| (s - shapes[i]).abs() < stability_tol)
    });
    let report = ThresholdReport {
        candidates,
        rejected,
        selected,
        n_min,
        stability_tol,
    };
    if report.selected.is_none() {
        return Err(EstimationError::NoStableThreshold(Box::new(report)));
    }
    Ok(report)
}
