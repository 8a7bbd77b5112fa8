//! Exceedance probabilities from a spliced body/tail model and a minimal
//! normal/extreme triage flag.
//!
//! Below the threshold `u` the model answers from the empirical CDF of the
//! full series; at or above it, `P(X > c) = zeta_u * (1 + xi (c - u) / beta)^(-1/xi)`.

use std::fmt;

use thiserror::Error;

use crate::estimation::{fit_gpd, EstimationError, GpdFit, Method};
use crate::ingest::{ecdf, excesses_over, ArrivalSeries, IngestError, StepFunction};

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Ingest(#[from] IngestError),

    #[error(transparent)]
    Estimation(#[from] EstimationError),
}

/// Which part of the model answered a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    TailModel,
    Empirical,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::TailModel => "tail-model",
            Provenance::Empirical => "empirical",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Normal,
    Extreme,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Normal => "normal",
            Mode::Extreme => "extreme",
        })
    }
}

/// GPD tail glued to the empirical body of the series it was fitted on.
#[derive(Debug, Clone, PartialEq)]
pub struct TailModel {
    fit: GpdFit,
    body: StepFunction,
}

impl TailModel {
    /// Pairs a fit with its source series; the fit's exceedance fraction
    /// must be the series' own fraction above the threshold.
    pub fn new(fit: GpdFit, series: &ArrivalSeries) -> Result<Self, RiskError> {
        let body = ecdf(series.values())?;
        let empirical = 1.0 - body.eval(fit.threshold);
        if (empirical - fit.exceedance_fraction).abs() > 1e-12 {
            return Err(RiskError::InvalidArgument(format!(
                "fit exceedance fraction {} does not match the series' {empirical} above {}",
                fit.exceedance_fraction, fit.threshold
            )));
        }
        Ok(Self { fit, body })
    }

    /// Extracts excesses over `u` and fits them with `method`.
    pub fn fit(series: &ArrivalSeries, u: f64, method: Method) -> Result<Self, RiskError> {
        let sample = excesses_over(series, u)?;
        let fit = fit_gpd(&sample, method)?;
        Self::new(fit, series)
    }

    pub fn gpd(&self) -> &GpdFit {
        &self.fit
    }

    pub fn threshold(&self) -> f64 {
        self.fit.threshold
    }

    pub fn body(&self) -> &StepFunction {
        &self.body
    }

    fn provenance(&self, level: f64) -> Provenance {
        if level >= self.fit.threshold {
            Provenance::TailModel
        } else {
            Provenance::Empirical
        }
    }

    fn survival(&self, level: f64) -> f64 {
        match self.provenance(level) {
            Provenance::TailModel => {
                self.fit.exceedance_fraction * self.fit.params.sf(level - self.fit.threshold)
            }
            Provenance::Empirical => 1.0 - self.body.eval(level),
        }
    }
}

/// `P(X > level)` under the spliced model.
pub fn exceedance_prob(model: &TailModel, level: f64) -> Result<f64, RiskError> {
    if !level.is_finite() {
        return Err(RiskError::InvalidArgument(format!(
            "level {level} is not finite"
        )));
    }
    Ok(model.survival(level))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverCapacity {
    pub capacity: f64,
    pub probability: f64,
    pub provenance: Provenance,
}

/// Probability that arrivals exceed `capacity`.
pub fn over_capacity_prob(model: &TailModel, capacity: f64) -> Result<OverCapacity, RiskError> {
    if !(capacity.is_finite() && capacity >= 0.0) {
        return Err(RiskError::InvalidArgument(format!(
            "capacity {capacity} must be finite and nonnegative"
        )));
    }
    Ok(OverCapacity {
        capacity,
        probability: model.survival(capacity),
        provenance: model.provenance(capacity),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriageAdvice {
    pub arrival: f64,
    pub capacity: f64,
    /// `P(X > arrival)`: how rare the observed arrival is.
    pub exceedance_prob: f64,
    pub exceedance_provenance: Provenance,
    /// `P(X > capacity)`: how often capacity is breached.
    pub capacity_breach_prob: f64,
    pub capacity_provenance: Provenance,
    pub mode: Mode,
}

/// Flags an observed arrival as extreme when it lies above the threshold.
pub fn triage_flag(
    model: &TailModel,
    arrival: f64,
    capacity: f64,
) -> Result<TriageAdvice, RiskError> {
    if !(arrival.is_finite() && arrival >= 0.0) {
        return Err(RiskError::InvalidArgument(format!(
            "arrival {arrival} must be finite and nonnegative"
        )));
    }
    let breach = over_capacity_prob(model, capacity)?;
    Ok(TriageAdvice {
        arrival,
        capacity,
        exceedance_prob: model.survival(arrival),
        exceedance_provenance: model.provenance(arrival),
        capacity_breach_prob: breach.probability,
        capacity_provenance: breach.provenance,
        mode: if arrival > model.threshold() {
            Mode::Extreme
        } else {
            Mode::Normal
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::GpdParams;
    use proptest::prelude::*;

    /// 1000 observations, exactly 100 of them above 49.
    fn valve_like_series() -> ArrivalSeries {
        let tail = GpdParams::new(0.1215, 22.48).unwrap();
        let mut values: Vec<f64> = (0..900).map(|i| 5.0 + (i % 44) as f64).collect();
        values.extend((1..=100).map(|k| 49.0 + tail.quantile(k as f64 / 101.0).unwrap()));
        ArrivalSeries::new(values).unwrap()
    }

    fn table2_model(shape: f64, scale: f64) -> TailModel {
        let series = valve_like_series();
        let fit = GpdFit {
            params: GpdParams::new(shape, scale).unwrap(),
            threshold: 49.0,
            exceedance_fraction: 0.1,
            method: Method::Pwm,
            n_exceed: 100,
            n_total: 1000,
            log_likelihood: None,
        };
        TailModel::new(fit, &series).unwrap()
    }

    #[test]
    fn zeta_at_threshold() {
        let m = table2_model(0.1215, 22.48);
        assert_eq!(exceedance_prob(&m, 49.0).unwrap(), 0.1);
        let oc = over_capacity_prob(&m, 49.0).unwrap();
        assert_eq!(oc.probability, 0.1);
        assert_eq!(oc.provenance, Provenance::TailModel);
    }

    #[test]
    fn table2_tail_level() {
        // mpmath: 0.1 * 1.1215^(-1/0.1215)
        let m = table2_model(0.1215, 22.48);
        let p = exceedance_prob(&m, 71.48).unwrap();
        assert!((p - 0.038_916_107_988_102_38).abs() < 1e-14, "{p}");
    }

    #[test]
    fn bounded_tail_is_zero_beyond_endpoint() {
        let m = table2_model(-0.5, 1.0);
        assert_eq!(exceedance_prob(&m, 51.5).unwrap(), 0.0);
        assert!(exceedance_prob(&m, 50.5).unwrap() > 0.0);
    }

    #[test]
    fn capacity_below_threshold_is_empirical() {
        let m = table2_model(0.1215, 22.48);
        let oc = over_capacity_prob(&m, 10.0).unwrap();
        assert_eq!(oc.provenance, Provenance::Empirical);
        let above = valve_like_series()
            .values()
            .iter()
            .filter(|&&x| x > 10.0)
            .count();
        assert_eq!(oc.probability, above as f64 / 1000.0);
        assert!(over_capacity_prob(&m, -1.0).is_err());
    }

    #[test]
    fn extrapolates_past_sample_max() {
        let m = table2_model(0.1215, 22.48);
        let max = valve_like_series().max().unwrap();
        assert!(over_capacity_prob(&m, max * 3.0).unwrap().probability > 0.0);
    }

    #[test]
    fn triage_modes() {
        let m = table2_model(0.1215, 22.48);
        let floor = triage_flag(&m, 0.0, 10.0).unwrap();
        assert_eq!(floor.mode, Mode::Normal);
        assert_eq!(floor.exceedance_prob, 1.0);
        assert_eq!(floor.exceedance_provenance, Provenance::Empirical);

        let extreme = triage_flag(&m, 49.0 + 22.48, 10.0).unwrap();
        assert_eq!(extreme.mode, Mode::Extreme);
        assert!((extreme.exceedance_prob - 0.038_916_107_988_102_38).abs() < 1e-14);
        assert_eq!(extreme.capacity_provenance, Provenance::Empirical);

        assert_eq!(triage_flag(&m, 49.0, 10.0).unwrap().mode, Mode::Normal);
        assert!(triage_flag(&m, -1.0, 10.0).is_err());
    }

    #[test]
    fn splice_consistency_is_enforced() {
        let series = valve_like_series();
        let mut fit = TailModel::fit(&series, 49.0, Method::Pwm)
            .unwrap()
            .gpd()
            .clone();
        assert_eq!(fit.exceedance_fraction, 0.1);
        fit.exceedance_fraction = 0.2;
        assert!(TailModel::new(fit, &series).is_err());
    }

    #[test]
    fn non_finite_level_rejected() {
        let m = table2_model(0.1215, 22.48);
        assert!(exceedance_prob(&m, f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn nonincreasing_across_splice(a in 0.0f64..400.0, b in 0.0f64..400.0) {
            let m = table2_model(0.1215, 22.48);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(exceedance_prob(&m, lo).unwrap() >= exceedance_prob(&m, hi).unwrap());
        }
    }
}
