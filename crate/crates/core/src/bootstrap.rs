//! Parametric bootstrap of a fitted GPD, maximum-deviation envelope curves
//! and the multi-model accuracy table.
//!
//! Each replicate draws `n_exceed` excesses from the fitted model and refits
//! them with the fit's own estimator. Replicate `b` uses RNG stream `b`; a
//! failed refit is redrawn up to [`MAX_ATTEMPTS`] times within that stream.
//!
//! A replicate's deviation is the signed value of `G_b - G_orig` at the grid
//! point where its magnitude peaks. The conservative envelope is the
//! replicate with the most positive deviation (its CDF runs above the
//! original, so it overstates how often low levels are reached); the
//! non-conservative envelope has the most negative one.

use rayon::prelude::*;
use thiserror::Error;

use crate::distributions::GpdParams;
use crate::estimation::{fit_gpd, GpdFit};
use crate::ingest::{ecdf, ExcessSample};
use crate::rng;

pub const MIN_REPLICATES: usize = 500;
/// Envelope replicate count used by the valve-shop walkthrough.
pub const DEFAULT_REPLICATES: usize = 2100;
pub const MAX_ATTEMPTS: u32 = 10;
/// Largest tolerated share of replicates that exhaust their redraws.
pub const MAX_EXHAUSTED_RATE: f64 = 0.01;
pub const GRID_POINTS: usize = 200;
/// Upper end of the evaluation grid as a quantile of the original fit.
pub const GRID_UPPER_QUANTILE: f64 = 0.999;

#[derive(Debug, Error)]
pub enum BootstrapError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unstable bootstrap: {exhausted} of {replicates} replicates failed all {MAX_ATTEMPTS} refit attempts")]
    Unstable { exhausted: usize, replicates: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    pub original: GpdFit,
    /// One refitted parameter pair per replicate, in replicate order.
    pub replicates: Vec<GpdParams>,
    /// Excess levels `0 ..= Q(0.999)` of the original fit.
    pub grid: Vec<f64>,
    pub seed: u64,
    /// Refit failures that were redrawn successfully.
    pub redraws: usize,
    /// Replicates refilled from overflow streams after exhausting their redraws.
    pub exhausted: usize,
}

fn evaluation_grid(params: &GpdParams) -> Vec<f64> {
    let top = params
        .quantile(GRID_UPPER_QUANTILE)
        .expect("grid quantile lies in [0, 1)");
    let step = top / (GRID_POINTS - 1) as f64;
    (0..GRID_POINTS).map(|i| i as f64 * step).collect()
}

/// Tries one replicate stream; returns the refit and the failed attempts before it.
fn replicate(fit: &GpdFit, seed: u64, stream: u64) -> (Option<GpdParams>, usize) {
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = rng::replicate_stream(seed, stream, attempt);
        let draws = fit.params.sample_with(&mut rng, fit.n_exceed);
        let refit = ExcessSample::new(fit.threshold, draws, fit.n_total)
            .ok()
            .and_then(|s| fit_gpd(&s, fit.method).ok());
        if let Some(r) = refit {
            return (Some(r.params), attempt as usize);
        }
    }
    (None, MAX_ATTEMPTS as usize)
}

pub fn parametric_bootstrap(
    fit: &GpdFit,
    replicates: usize,
    seed: u64,
) -> Result<BootstrapResult, BootstrapError> {
    if replicates < MIN_REPLICATES {
        return Err(BootstrapError::InvalidArgument(format!(
            "at least {MIN_REPLICATES} replicates required, got {replicates}"
        )));
    }
    if fit.n_exceed < 2 {
        return Err(BootstrapError::InvalidArgument(
            "fit has fewer than 2 exceedances".into(),
        ));
    }

    let outcomes: Vec<(Option<GpdParams>, usize)> = (0..replicates as u64)
        .into_par_iter()
        .map(|b| replicate(fit, seed, b))
        .collect();
    let exhausted = outcomes.iter().filter(|o| o.0.is_none()).count();
    if exhausted as f64 > MAX_EXHAUSTED_RATE * replicates as f64 {
        return Err(BootstrapError::Unstable {
            exhausted,
            replicates,
        });
    }

    let mut redraws = 0;
    let mut overflow = replicates as u64;
    let mut params = Vec::with_capacity(replicates);
    for (outcome, failures) in outcomes {
        redraws += failures;
        let p = match outcome {
            Some(p) => p,
            None => loop {
                // Bounded: at most 1% of slots reach here and refits rarely fail.
                let (refill, more) = replicate(fit, seed, overflow);
                overflow += 1;
                redraws += more;
                if let Some(p) = refill {
                    break p;
                }
            },
        };
        params.push(p);
    }

    Ok(BootstrapResult {
        original: fit.clone(),
        replicates: params,
        grid: evaluation_grid(&fit.params),
        seed,
        redraws,
        exhausted,
    })
}

/// The two extreme bootstrap curves on the evaluation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopePair {
    pub grid: Vec<f64>,
    pub original: Vec<f64>,
    pub conservative: Vec<f64>,
    pub non_conservative: Vec<f64>,
    pub conservative_index: usize,
    pub non_conservative_index: usize,
    pub conservative_params: GpdParams,
    pub non_conservative_params: GpdParams,
    /// Signed deviation at the point of largest disagreement.
    pub conservative_deviation: f64,
    pub non_conservative_deviation: f64,
    /// Every replicate coincides with the original on the grid.
    pub degenerate: bool,
}

impl EnvelopePair {
    /// Share of grid points where the original lies between the two envelopes.
    pub fn fraction_between(&self) -> f64 {
        let inside = (0..self.grid.len())
            .filter(|&i| {
                let (a, b) = (self.conservative[i], self.non_conservative[i]);
                a.min(b) <= self.original[i] && self.original[i] <= a.max(b)
            })
            .count();
        inside as f64 / self.grid.len() as f64
    }

    /// Largest vertical distance between the envelopes.
    pub fn spread(&self) -> f64 {
        self.conservative
            .iter()
            .zip(&self.non_conservative)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn curve(params: &GpdParams, grid: &[f64]) -> Vec<f64> {
    grid.iter().map(|&y| params.cdf(y)).collect()
}

/// Signed `G_b - G_orig` at the first grid point maximizing `|G_b - G_orig|`.
fn signed_max_deviation(params: &GpdParams, grid: &[f64], original: &[f64]) -> f64 {
    let mut best = 0.0f64;
    for (&y, &g0) in grid.iter().zip(original) {
        let d = params.cdf(y) - g0;
        if d.abs() > best.abs() {
            best = d;
        }
    }
    best
}

pub fn envelopes(result: &BootstrapResult) -> Result<EnvelopePair, BootstrapError> {
    if result.replicates.len() < 2 {
        return Err(BootstrapError::InvalidArgument(
            "at least 2 replicates required".into(),
        ));
    }
    let grid = &result.grid;
    let original = curve(&result.original.params, grid);
    let deviations: Vec<f64> = result
        .replicates
        .par_iter()
        .map(|p| signed_max_deviation(p, grid, &original))
        .collect();

    // Strict comparisons keep the lowest index on ties.
    let (mut hi, mut lo) = (0, 0);
    for (b, &d) in deviations.iter().enumerate() {
        if d > deviations[hi] {
            hi = b;
        }
        if d < deviations[lo] {
            lo = b;
        }
    }
    let degenerate = deviations.iter().all(|&d| d == 0.0);
    if degenerate {
        hi = 0;
        lo = 1;
    }

    let conservative_params = result.replicates[hi];
    let non_conservative_params = result.replicates[lo];
    Ok(EnvelopePair {
        grid: grid.clone(),
        conservative: curve(&conservative_params, grid),
        non_conservative: curve(&non_conservative_params, grid),
        original,
        conservative_index: hi,
        non_conservative_index: lo,
        conservative_params,
        non_conservative_params,
        conservative_deviation: deviations[hi],
        non_conservative_deviation: deviations[lo],
        degenerate,
    })
}

/// Occurrence probabilities `P(X <= level)` for each model, one entry per level.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyGrid {
    pub levels: Vec<f64>,
    pub ecdf: Vec<f64>,
    pub original: Vec<f64>,
    pub conservative: Vec<f64>,
    pub non_conservative: Vec<f64>,
}

/// Evaluates the empirical and the three GPD models at arrival `levels`
/// (threshold plus excess).
pub fn accuracy_grid(
    fit: &GpdFit,
    env: &EnvelopePair,
    sample: &ExcessSample,
    levels: &[f64],
) -> Result<AccuracyGrid, BootstrapError> {
    if levels.is_empty() {
        return Err(BootstrapError::InvalidArgument("no levels given".into()));
    }
    if levels.iter().any(|l| !l.is_finite()) {
        return Err(BootstrapError::InvalidArgument(
            "levels must be finite".into(),
        ));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BootstrapError::InvalidArgument(
            "levels must be strictly increasing".into(),
        ));
    }
    let u = fit.threshold;
    if levels[0] < u {
        return Err(BootstrapError::InvalidArgument(format!(
            "level {} lies below the threshold {u}",
            levels[0]
        )));
    }
    let empirical =
        ecdf(sample.excesses()).map_err(|e| BootstrapError::InvalidArgument(e.to_string()))?;
    let row = |f: &dyn Fn(f64) -> f64| levels.iter().map(|&l| f(l - u)).collect::<Vec<f64>>();
    Ok(AccuracyGrid {
        levels: levels.to_vec(),
        ecdf: row(&|y| empirical.eval(y)),
        original: row(&|y| fit.params.cdf(y)),
        conservative: row(&|y| env.conservative_params.cdf(y)),
        non_conservative: row(&|y| env.non_conservative_params.cdf(y)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{fit_gpd_pwm, Method};

    fn table2_fit(n_exceed: usize) -> GpdFit {
        GpdFit {
            params: GpdParams::new(0.1215, 22.48).unwrap(),
            threshold: 49.0,
            exceedance_fraction: n_exceed as f64 / 476.0f64.max(n_exceed as f64),
            method: Method::Pwm,
            n_exceed,
            n_total: n_exceed.max(476),
            log_likelihood: None,
        }
    }

    #[test]
    fn replicate_count_and_determinism() {
        let fit = table2_fit(100);
        let a = parametric_bootstrap(&fit, 2100, 42).unwrap();
        assert_eq!(a.replicates.len(), 2100);
        assert_eq!(a.grid.len(), GRID_POINTS);
        assert!(a.grid.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(a.grid[0], 0.0);
        let b = parametric_bootstrap(&fit, 2100, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(envelopes(&a).unwrap(), envelopes(&b).unwrap());
        assert!(parametric_bootstrap(&fit, 100, 42).is_err());
    }

    #[test]
    fn replicate_cloud_centred_on_original() {
        let fit = table2_fit(200);
        let r = parametric_bootstrap(&fit, 1000, 3).unwrap();
        let n = r.replicates.len() as f64;
        let mean_shape = r.replicates.iter().map(|p| p.shape()).sum::<f64>() / n;
        let mean_scale = r.replicates.iter().map(|p| p.scale()).sum::<f64>() / n;
        // Replicate sd is ~0.08 (shape) and ~2.6 (scale) at n = 200; the mean
        // of 1000 replicates carries at most a small-sample PWM bias.
        assert!((mean_shape - 0.1215).abs() < 0.03, "{mean_shape}");
        assert!((mean_scale - 22.48).abs() < 0.8, "{mean_scale}");
    }

    fn fake_result(replicates: Vec<GpdParams>) -> BootstrapResult {
        let original = table2_fit(100);
        BootstrapResult {
            grid: evaluation_grid(&original.params),
            original,
            replicates,
            seed: 0,
            redraws: 0,
            exhausted: 0,
        }
    }

    #[test]
    fn identical_replicates_are_degenerate() {
        let p = table2_fit(100).params;
        let env = envelopes(&fake_result(vec![p; 5])).unwrap();
        assert!(env.degenerate);
        assert_eq!((env.conservative_index, env.non_conservative_index), (0, 1));
        assert_eq!(env.conservative, env.original);
        assert_eq!(env.non_conservative, env.original);
    }

    #[test]
    fn signed_selection_by_construction() {
        let fit = table2_fit(100);
        let r = parametric_bootstrap(&fit, 600, 8).unwrap();
        let env = envelopes(&r).unwrap();
        assert!(!env.degenerate);
        assert!(env.conservative_deviation > 0.0);
        assert!(env.non_conservative_deviation < 0.0);
        let at = |curve: &[f64], dev: f64| {
            (0..env.grid.len())
                .find(|&i| curve[i] - env.original[i] == dev)
                .unwrap()
        };
        let i = at(&env.conservative, env.conservative_deviation);
        assert!(env.conservative[i] >= env.original[i]);
        let j = at(&env.non_conservative, env.non_conservative_deviation);
        assert!(env.non_conservative[j] <= env.original[j]);
        for c in [&env.conservative, &env.non_conservative] {
            assert!(c.windows(2).all(|w| w[0] <= w[1]));
            assert!(c.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn selection_is_permutation_invariant() {
        let fit = table2_fit(80);
        let r = parametric_bootstrap(&fit, 500, 5).unwrap();
        let env = envelopes(&r).unwrap();
        let mut shuffled = r.clone();
        shuffled.replicates.reverse();
        let env2 = envelopes(&shuffled).unwrap();
        assert_eq!(env.conservative_params, env2.conservative_params);
        assert_eq!(env.non_conservative_params, env2.non_conservative_params);
    }

    #[test]
    fn too_few_replicates_for_envelopes() {
        assert!(envelopes(&fake_result(vec![table2_fit(10).params])).is_err());
    }

    #[test]
    fn spread_shrinks_with_sample_size() {
        let small = envelopes(&parametric_bootstrap(&table2_fit(50), 1000, 1).unwrap()).unwrap();
        let large = envelopes(&parametric_bootstrap(&table2_fit(500), 1000, 1).unwrap()).unwrap();
        assert!(
            large.spread() < small.spread(),
            "{} vs {}",
            large.spread(),
            small.spread()
        );
    }

    #[test]
    fn accuracy_grid_limits() {
        let params = table2_fit(100).params;
        let draws = params.sample(100, 77).unwrap();
        let sample = ExcessSample::new(49.0, draws, 476).unwrap();
        let fit = fit_gpd_pwm(&sample).unwrap();
        let env = envelopes(&parametric_bootstrap(&fit, 500, 2).unwrap()).unwrap();
        let grid = accuracy_grid(&fit, &env, &sample, &[49.0, 60.0, 80.0, 120.0, 1e9]).unwrap();
        assert_eq!(grid.ecdf[0], 0.0);
        assert_eq!(grid.original[0], 0.0);
        assert_eq!(grid.conservative[0], 0.0);
        assert_eq!(grid.non_conservative[0], 0.0);
        let last = grid.levels.len() - 1;
        for row in [
            &grid.ecdf,
            &grid.original,
            &grid.conservative,
            &grid.non_conservative,
        ] {
            assert!(row[last] > 0.999);
            assert!(row.windows(2).all(|w| w[0] <= w[1]));
        }
        assert!(accuracy_grid(&fit, &env, &sample, &[40.0, 60.0]).is_err());
        assert!(accuracy_grid(&fit, &env, &sample, &[60.0, 55.0]).is_err());
        assert!(accuracy_grid(&fit, &env, &sample, &[]).is_err());
    }

    #[test]
    fn non_conservative_crosses_ecdf() {
        // Below the ECDF at moderate levels, above it in the far tail.
        let params = table2_fit(100).params;
        let sample = ExcessSample::new(49.0, params.sample(100, 3).unwrap(), 476).unwrap();
        let fit = fit_gpd_pwm(&sample).unwrap();
        let env = envelopes(&parametric_bootstrap(&fit, 2100, 3).unwrap()).unwrap();
        let levels: Vec<f64> = [0.1, 0.3, 0.5, 0.7, 0.95, 0.99]
            .iter()
            .map(|&q| 49.0 + fit.params.quantile(q).unwrap())
            .collect();
        let grid = accuracy_grid(&fit, &env, &sample, &levels).unwrap();
        assert!(
            (0..4).all(|i| grid.non_conservative[i] < grid.ecdf[i]),
            "{grid:?}"
        );
        assert!(grid.non_conservative[5] > grid.ecdf[5], "{grid:?}");
    }
}
