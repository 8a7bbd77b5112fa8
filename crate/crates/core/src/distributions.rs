//! Generalized Pareto, generalized extreme value and Normal distributions.
//!
//! Power forms `(1 + xi z)^(-1/xi)` are evaluated as `exp(-log1p(xi z) / xi)`
//! and switch to the exponential/Gumbel limit when `|xi| < SHAPE_EPS`.
//! Sampling is inverse-transform on open-interval uniforms from the
//! reproducible streams in [`crate::rng`].

use rand::distr::Open01;
use rand::Rng;
use statrs::function::erf::erfc_inv;
use thiserror::Error;

use crate::rng;

/// Below this `|xi|` the exponential (GPD) or Gumbel (GEV) limit is used.
pub const SHAPE_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mean is infinite for shape {shape} >= 1")]
    InfiniteMean { shape: f64 },
}

fn check_probability(q: f64, allow_zero: bool) -> Result<(), DistError> {
    let ok = if allow_zero {
        (0.0..1.0).contains(&q)
    } else {
        q > 0.0 && q < 1.0
    };
    if ok {
        Ok(())
    } else {
        let range = if allow_zero { "[0, 1)" } else { "(0, 1)" };
        Err(DistError::InvalidArgument(format!(
            "probability {q} outside {range}"
        )))
    }
}

fn check_count(n: usize) -> Result<(), DistError> {
    if n == 0 {
        Err(DistError::InvalidArgument(
            "sample size must be at least 1".into(),
        ))
    } else {
        Ok(())
    }
}

fn check_finite(x: f64) -> Result<(), DistError> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(DistError::InvalidArgument(format!("{x} is not finite")))
    }
}

/// Generalized Pareto distribution of threshold excesses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpdParams {
    shape: f64,
    scale: f64,
}

impl GpdParams {
    pub fn new(shape: f64, scale: f64) -> Result<Self, DistError> {
        if !shape.is_finite() {
            return Err(DistError::InvalidParameter(format!(
                "GPD shape {shape} is not finite"
            )));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(DistError::InvalidParameter(format!(
                "GPD scale {scale} must be positive"
            )));
        }
        Ok(Self { shape, scale })
    }

    /// Shape xi.
    pub fn shape(&self) -> f64 {
        self.shape
    }

    /// Scale beta.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    fn is_exponential(&self) -> bool {
        self.shape.abs() < SHAPE_EPS
    }

    /// Finite right endpoint `-beta/xi` when `xi < 0`.
    pub fn upper_endpoint(&self) -> Option<f64> {
        (self.shape < 0.0 && !self.is_exponential()).then(|| -self.scale / self.shape)
    }

    /// Natural log of P(Y > y) inside the support.
    fn log_sf(&self, y: f64) -> f64 {
        let z = y / self.scale;
        if self.is_exponential() {
            -z
        } else {
            -(self.shape * z).ln_1p() / self.shape
        }
    }

    /// P(Y <= y), clamped to 0 below the support and 1 above it.
    pub fn cdf(&self, y: f64) -> f64 {
        if y.is_nan() {
            return f64::NAN;
        }
        if y <= 0.0 {
            return 0.0;
        }
        if let Some(end) = self.upper_endpoint() {
            if y >= end {
                return 1.0;
            }
        }
        -self.log_sf(y).exp_m1()
    }

    /// P(Y > y), computed directly for accuracy far in the tail.
    pub fn sf(&self, y: f64) -> f64 {
        if y.is_nan() {
            return f64::NAN;
        }
        if y <= 0.0 {
            return 1.0;
        }
        if let Some(end) = self.upper_endpoint() {
            if y >= end {
                return 0.0;
            }
        }
        self.log_sf(y).exp()
    }

    pub fn quantile(&self, q: f64) -> Result<f64, DistError> {
        check_probability(q, true)?;
        Ok(self.quantile_unchecked(q))
    }

    fn quantile_unchecked(&self, q: f64) -> f64 {
        let log_tail = (-q).ln_1p();
        if self.is_exponential() {
            -self.scale * log_tail
        } else {
            self.scale * (-self.shape * log_tail).exp_m1() / self.shape
        }
    }

    /// Expected excess `beta / (1 - xi)`.
    pub fn mean(&self) -> Result<f64, DistError> {
        if self.shape >= 1.0 {
            return Err(DistError::InfiniteMean { shape: self.shape });
        }
        Ok(self.scale / (1.0 - self.shape))
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| self.quantile_unchecked(rng.sample(Open01)))
            .collect()
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>, DistError> {
        check_count(n)?;
        Ok(self.sample_with(&mut rng::seeded(seed), n))
    }
}

/// Generalized extreme value distribution, `xi_g > 0` heavy (Frechet) tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GevParams {
    location: f64,
    scale: f64,
    shape: f64,
}

impl GevParams {
    pub fn new(location: f64, scale: f64, shape: f64) -> Result<Self, DistError> {
        if !(location.is_finite() && shape.is_finite()) {
            return Err(DistError::InvalidParameter(
                "GEV location and shape must be finite".into(),
            ));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(DistError::InvalidParameter(format!(
                "GEV scale {scale} must be positive"
            )));
        }
        Ok(Self {
            location,
            scale,
            shape,
        })
    }

    pub fn location(&self) -> f64 {
        self.location
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    /// `t(x)` with `H(x) = exp(-t(x))`; saturates to `inf` below the
    /// support and `0` above it.
    fn t(&self, x: f64) -> f64 {
        let z = (x - self.location) / self.scale;
        if self.shape.abs() < SHAPE_EPS {
            return (-z).exp();
        }
        let arg = self.shape * z;
        if arg <= -1.0 {
            // Outside the support: below it for xi > 0, above it for xi < 0.
            return if self.shape > 0.0 { f64::INFINITY } else { 0.0 };
        }
        (-arg.ln_1p() / self.shape).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        (-self.t(x)).exp()
    }

    pub fn sf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        -(-self.t(x)).exp_m1()
    }

    pub fn quantile(&self, q: f64) -> Result<f64, DistError> {
        check_probability(q, false)?;
        Ok(self.quantile_unchecked(q))
    }

    fn quantile_unchecked(&self, q: f64) -> f64 {
        let t = -q.ln();
        if self.shape.abs() < SHAPE_EPS {
            self.location - self.scale * t.ln()
        } else {
            self.location + self.scale * (-self.shape * t.ln()).exp_m1() / self.shape
        }
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| self.quantile_unchecked(rng.sample(Open01)))
            .collect()
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>, DistError> {
        check_count(n)?;
        Ok(self.sample_with(&mut rng::seeded(seed), n))
    }
}

/// Normal distribution, the central-tendency baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalParams {
    mean: f64,
    sd: f64,
}

impl NormalParams {
    pub fn new(mean: f64, sd: f64) -> Result<Self, DistError> {
        if !mean.is_finite() {
            return Err(DistError::InvalidParameter(format!(
                "Normal mean {mean} is not finite"
            )));
        }
        if !(sd.is_finite() && sd > 0.0) {
            return Err(DistError::InvalidParameter(format!(
                "Normal standard deviation {sd} must be positive"
            )));
        }
        Ok(Self { mean, sd })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sd(&self) -> f64 {
        self.sd
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.sd;
        0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
    }

    pub fn sf(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.sd;
        0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
    }

    pub fn quantile(&self, q: f64) -> Result<f64, DistError> {
        check_probability(q, false)?;
        Ok(self.quantile_unchecked(q))
    }

    fn quantile_unchecked(&self, q: f64) -> f64 {
        let mut z = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * q);
        // One Newton step on the CDF tightens the inverse to round-off.
        let density = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if density > 0.0 {
            let err = 0.5 * libm::erfc(-z / std::f64::consts::SQRT_2) - q;
            z -= err / density;
        }
        self.mean + self.sd * z
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| self.quantile_unchecked(rng.sample(Open01)))
            .collect()
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>, DistError> {
        check_count(n)?;
        Ok(self.sample_with(&mut rng::seeded(seed), n))
    }
}

pub fn gpd_cdf(p: &GpdParams, y: f64) -> Result<f64, DistError> {
    check_finite(y)?;
    Ok(p.cdf(y))
}

pub fn gpd_quantile(p: &GpdParams, q: f64) -> Result<f64, DistError> {
    p.quantile(q)
}

pub fn gpd_sample(p: &GpdParams, n: usize, seed: u64) -> Result<Vec<f64>, DistError> {
    p.sample(n, seed)
}

pub fn gpd_mean(p: &GpdParams) -> Result<f64, DistError> {
    p.mean()
}

pub fn gev_cdf(p: &GevParams, x: f64) -> Result<f64, DistError> {
    check_finite(x)?;
    Ok(p.cdf(x))
}

pub fn gev_quantile(p: &GevParams, q: f64) -> Result<f64, DistError> {
    p.quantile(q)
}

pub fn gev_sample(p: &GevParams, n: usize, seed: u64) -> Result<Vec<f64>, DistError> {
    p.sample(n, seed)
}

pub fn normal_cdf(p: &NormalParams, x: f64) -> f64 {
    p.cdf(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn gpd(shape: f64, scale: f64) -> GpdParams {
        GpdParams::new(shape, scale).unwrap()
    }

    fn table2() -> GpdParams {
        gpd(0.1215, 22.48)
    }

    /// Standard-normal CDF from the Maclaurin series of erf; slow but
    /// independent of the erfc implementation under test.
    fn phi_series(z: f64) -> f64 {
        let x = z / std::f64::consts::SQRT_2;
        let mut term = x;
        let mut sum = x;
        let mut k = 0.0;
        loop {
            k += 1.0;
            term *= -x * x / k;
            let add = term / (2.0 * k + 1.0);
            sum += add;
            if add.abs() < 1e-17 {
                break;
            }
        }
        0.5 + sum / std::f64::consts::PI.sqrt()
    }

    #[test]
    fn parameter_validation() {
        assert!(GpdParams::new(0.1, 0.0).is_err());
        assert!(GpdParams::new(f64::NAN, 1.0).is_err());
        assert!(GevParams::new(0.0, -1.0, 0.0).is_err());
        assert!(NormalParams::new(0.0, 0.0).is_err());
    }

    #[test]
    fn gpd_cdf_examples() {
        assert!((gpd_cdf(&gpd(0.0, 1.0), LN2).unwrap() - 0.5).abs() < 1e-15);
        assert!((gpd_cdf(&gpd(1.0, 1.0), 1.0).unwrap() - 0.5).abs() < 1e-15);
        // mpmath, 40 digits: 1 - 1.1215^(-1/0.1215)
        let expected = 0.610_838_920_118_976_2;
        assert!((gpd_cdf(&table2(), 22.48).unwrap() - expected).abs() < 1e-14);
        assert!(gpd_cdf(&table2(), f64::INFINITY).is_err());
        assert!(gpd_cdf(&table2(), f64::NAN).is_err());
    }

    #[test]
    fn gpd_cdf_clamps_outside_support() {
        let bounded = gpd(-0.5, 1.0);
        assert_eq!(bounded.cdf(-3.0), 0.0);
        assert_eq!(bounded.cdf(2.0), 1.0);
        assert_eq!(bounded.cdf(5.0), 1.0);
        assert_eq!(bounded.sf(5.0), 0.0);
        assert_eq!(bounded.upper_endpoint(), Some(2.0));
    }

    #[test]
    fn gpd_quantile_examples() {
        assert!((gpd_quantile(&gpd(0.0, 1.0), 0.5).unwrap() - LN2).abs() < 1e-15);
        assert_eq!(gpd_quantile(&table2(), 0.0).unwrap(), 0.0);
        let q90 = gpd_quantile(&table2(), 0.9).unwrap();
        assert!((table2().cdf(q90) - 0.9).abs() < 1e-12);
        assert!(gpd_quantile(&table2(), 1.0).is_err());
        assert!(gpd_quantile(&table2(), -0.1).is_err());
    }

    #[test]
    fn gpd_mean_examples() {
        assert_eq!(gpd_mean(&gpd(0.0, 5.0)).unwrap(), 5.0);
        assert!((gpd_mean(&gpd(0.5, 1.0)).unwrap() - 2.0).abs() < 1e-15);
        let m = gpd_mean(&table2()).unwrap();
        assert!((m - 25.589_072_282_299_37).abs() < 1e-12);
        assert_eq!(format!("{m:.2}"), "25.59");
        assert!(matches!(
            gpd_mean(&gpd(1.0, 1.0)),
            Err(DistError::InfiniteMean { .. })
        ));
    }

    #[test]
    fn gpd_sampling_contract() {
        let a = gpd_sample(&table2(), 1000, 99).unwrap();
        let b = gpd_sample(&table2(), 1000, 99).unwrap();
        assert_eq!(a, b);
        assert!(gpd_sample(&table2(), 0, 1).is_err());

        let bounded = gpd_sample(&gpd(-0.5, 1.0), 10_000, 3).unwrap();
        assert!(bounded.iter().all(|&y| y > 0.0 && y <= 2.0));
    }

    #[test]
    fn gpd_sample_mean_matches_closed_form() {
        let p = table2();
        let n = 100_000;
        let draws = gpd_sample(&p, n, 2016).unwrap();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - p.mean().unwrap()).abs() < 3.0 * se,
            "mean {mean} se {se}"
        );
    }

    #[test]
    fn gumbel_cdf_at_location() {
        let g = GevParams::new(0.0, 1.0, 0.0).unwrap();
        assert!((gev_cdf(&g, 0.0).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn gev_support_edges() {
        let frechet = GevParams::new(0.0, 1.0, 0.5).unwrap();
        assert_eq!(frechet.cdf(-2.0), 0.0);
        let weibull = GevParams::new(0.0, 1.0, -0.5).unwrap();
        assert_eq!(weibull.cdf(2.0), 1.0);
        assert_eq!(weibull.cdf(5.0), 1.0);
        assert!(gev_quantile(&weibull, 0.0).is_err());
    }

    #[test]
    fn gev_sample_glivenko_cantelli() {
        let g = GevParams::new(10.0, 2.0, 0.2).unwrap();
        let mut draws = gev_sample(&g, 100_000, 11).unwrap();
        draws.sort_by(f64::total_cmp);
        let n = draws.len() as f64;
        let gap = draws
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = g.cdf(x);
                (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        assert!(gap < 0.01, "sup distance {gap}");
        assert_eq!(
            gev_sample(&g, 50, 4).unwrap(),
            gev_sample(&g, 50, 4).unwrap()
        );
    }

    #[test]
    fn normal_cdf_examples() {
        let std = NormalParams::new(0.0, 1.0).unwrap();
        assert!((normal_cdf(&std, 0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(&std, 1.959964) - 0.975).abs() < 1e-6);
        assert!(normal_cdf(&std, -40.0) < 1e-300);
        assert_eq!(normal_cdf(&std, f64::NEG_INFINITY), 0.0);
    }

    #[test]
    fn normal_quantile_from_series_bisection() {
        // Bisection on the series CDF for the 0.975 quantile.
        let (mut lo, mut hi) = (0.0f64, 4.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if phi_series(mid) < 0.975 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        assert!((oracle - 1.959964).abs() < 1e-6);
        let std = NormalParams::new(0.0, 1.0).unwrap();
        assert!((std.quantile(0.975).unwrap() - oracle).abs() < 1e-10);
        for z in [-3.0, -1.0, -0.25, 0.5, 2.0, 3.5] {
            assert!((std.cdf(z) - phi_series(z)).abs() < 1e-12, "z = {z}");
        }
    }

    #[test]
    fn round_trips_on_dense_grid() {
        let gpds = [gpd(0.0, 1.0), table2(), gpd(-0.4, 3.0), gpd(0.9, 0.5)];
        let gevs = [
            GevParams::new(0.0, 1.0, 0.0).unwrap(),
            GevParams::new(10.0, 2.0, 0.2).unwrap(),
            GevParams::new(-3.0, 0.5, -0.3).unwrap(),
        ];
        let normal = NormalParams::new(25.0, 7.0).unwrap();
        for k in 1..=999 {
            let q = k as f64 / 1000.0;
            for p in &gpds {
                assert!(
                    (p.cdf(p.quantile(q).unwrap()) - q).abs() < 1e-12,
                    "{p:?} q={q}"
                );
            }
            for p in &gevs {
                assert!(
                    (p.cdf(p.quantile(q).unwrap()) - q).abs() < 1e-12,
                    "{p:?} q={q}"
                );
            }
            assert!(
                (normal.cdf(normal.quantile(q).unwrap()) - q).abs() < 1e-12,
                "q={q}"
            );
        }
    }

    #[test]
    fn shape_zero_continuity() {
        let near = gpd(1e-9, 2.0);
        let exact = gpd(0.0, 2.0);
        for k in 0..500 {
            let y = k as f64 * 0.1;
            assert!((near.cdf(y) - exact.cdf(y)).abs() < 1e-7);
        }
        let near = GevParams::new(1.0, 2.0, 1e-9).unwrap();
        let exact = GevParams::new(1.0, 2.0, 0.0).unwrap();
        for k in -50..500 {
            let x = k as f64 * 0.1;
            assert!((near.cdf(x) - exact.cdf(x)).abs() < 1e-7);
        }
    }

    proptest! {
        #[test]
        fn cdfs_are_monotone(shape in -0.9f64..1.5, scale in 0.01f64..100.0,
                             a in -50.0f64..500.0, b in -50.0f64..500.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let p = gpd(shape, scale);
            prop_assert!(p.cdf(lo) <= p.cdf(hi));
            prop_assert!((0.0..=1.0).contains(&p.cdf(lo)));
            let g = GevParams::new(10.0, scale, shape).unwrap();
            prop_assert!(g.cdf(lo) <= g.cdf(hi));
            let n = NormalParams::new(10.0, scale).unwrap();
            prop_assert!(n.cdf(lo) <= n.cdf(hi));
        }

        #[test]
        fn gpd_sf_complements_cdf(shape in -0.9f64..1.5, scale in 0.01f64..100.0, y in 0.0f64..500.0) {
            let p = gpd(shape, scale);
            prop_assert!((p.cdf(y) + p.sf(y) - 1.0).abs() < 1e-12);
        }

    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn sample_mean_within_four_standard_errors(shape in -0.5f64..0.45, scale in 0.1f64..50.0, seed in any::<u64>()) {
            let p = gpd(shape, scale);
            let n = 20_000;
            let draws = p.sample(n, seed).unwrap();
            let mean = draws.iter().sum::<f64>() / n as f64;
            // Variance of the GPD: beta^2 / ((1-xi)^2 (1-2xi)).
            let sd = scale / ((1.0 - shape) * (1.0 - 2.0 * shape).sqrt());
            let se = sd / (n as f64).sqrt();
            prop_assert!((mean - p.mean().unwrap()).abs() < 4.0 * se, "mean {} expected {}", mean, p.mean().unwrap());
        }
    }
}
