//! Goodness of fit: Anderson-Darling statistic, parametric-bootstrap
//! p-values and the Kolmogorov sup-distance between an ECDF and a model CDF.

use rayon::prelude::*;
use thiserror::Error;

use crate::estimation::{fit_gpd, GpdFit};
use crate::ingest::ExcessSample;
use crate::rng;

/// Model probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-15;
pub const MIN_REPLICATES: usize = 500;
pub const DEFAULT_REPLICATES: usize = 2000;
/// Largest tolerated share of null replicates whose refit fails.
pub const MAX_NULL_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum GofError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unstable null distribution: {failed} of {replicates} replicate refits failed")]
    UnstableNull { failed: usize, replicates: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GofReport {
    pub model: String,
    pub ad_statistic: f64,
    pub p_value: f64,
    pub supnorm_gap: f64,
    /// Null replicates that contributed to the p-value.
    pub b_used: usize,
    pub failed_replicates: usize,
    pub seed: u64,
}

fn sorted_nonempty(sample: &[f64]) -> Result<Vec<f64>, GofError> {
    if sample.is_empty() {
        return Err(GofError::InvalidArgument("empty sample".into()));
    }
    if sample.iter().any(|x| x.is_nan()) {
        return Err(GofError::InvalidArgument("sample contains NaN".into()));
    }
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Anderson-Darling `A^2` of `sample` against `cdf`.
pub fn ad_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64, GofError> {
    let ys = sorted_nonempty(sample)?;
    let z: Vec<f64> = ys
        .iter()
        .map(|&y| cdf(y).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
        .collect();
    let n = z.len();
    let sum: f64 = (0..n)
        .map(|i| (2 * i + 1) as f64 * (z[i].ln() + (-z[n - 1 - i]).ln_1p()))
        .sum();
    Ok(-(n as f64) - sum / n as f64)
}

/// Exact sup-distance between the sample's step ECDF and a continuous `cdf`.
pub fn supnorm_gap(cdf: impl Fn(f64) -> f64, sample: &[f64]) -> Result<f64, GofError> {
    let ys = sorted_nonempty(sample)?;
    let n = ys.len() as f64;
    Ok(ys
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let f = cdf(y);
            (i as f64 / n - f).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max))
}

/// `(1 + #{null >= observed}) / (B + 1)`.
pub fn monte_carlo_p_value(observed: f64, null: &[f64]) -> f64 {
    let at_least = null.iter().filter(|&&a| a >= observed).count();
    (1 + at_least) as f64 / (null.len() + 1) as f64
}

/// Parametric-bootstrap p-value of the AD statistic for a GPD fit: each
/// replicate draws `n_exceed` excesses from the fitted model, refits with
/// the same method and records its own `A^2`.
pub fn ad_pvalue_bootstrap(
    fit: &GpdFit,
    sample: &ExcessSample,
    replicates: usize,
    seed: u64,
) -> Result<GofReport, GofError> {
    if replicates < MIN_REPLICATES {
        return Err(GofError::InvalidArgument(format!(
            "at least {MIN_REPLICATES} replicates required, got {replicates}"
        )));
    }
    let observed = ad_statistic(sample.excesses(), |y| fit.params.cdf(y))?;
    let gap = supnorm_gap(|y| fit.params.cdf(y), sample.excesses())?;

    let null: Vec<Option<f64>> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::replicate_stream(seed, b as u64, 0);
            let draws = fit.params.sample_with(&mut rng, sample.n_exceed());
            let synthetic = ExcessSample::new(sample.threshold(), draws, sample.n_total()).ok()?;
            let refit = fit_gpd(&synthetic, fit.method).ok()?;
            ad_statistic(synthetic.excesses(), |y| refit.params.cdf(y)).ok()
        })
        .collect();
    let null: Vec<f64> = null.into_iter().flatten().collect();
    let failed = replicates - null.len();
    if failed as f64 > MAX_NULL_FAILURE_RATE * replicates as f64 {
        return Err(GofError::UnstableNull { failed, replicates });
    }

    Ok(GofReport {
        model: format!("gpd-{}", fit.method),
        ad_statistic: observed,
        p_value: monte_carlo_p_value(observed, &null),
        supnorm_gap: gap,
        b_used: null.len(),
        failed_replicates: failed,
        seed,
    })
}
