//! Clock-parameter estimators and their theoretical bounds.
//!
//! One-way estimators consume `(departure, arrival)` timestamp pairs where
//! the departure is carried in the message (head-node frame) and the arrival
//! is stamped by the receiver's hardware clock:
//!
//! ```text
//! arrival(k) = R * departure(k) + theta + d(k),   R = 1 + skew
//! ```
//!
//! * [`JointMleState`] — closed-form joint maximum-likelihood estimate of
//!   offset and frequency ratio for white Gaussian delay with known mean.
//! * [`CrEstimator`] — cumulative ratio of elapsed receive time to elapsed
//!   transmit time since the first message; four scalars of state, the
//!   cheapest estimator and the default for battery-powered nodes.
//! * [`RlsEstimator`] — scalar exponentially-weighted recursive least
//!   squares on the baseline-subtracted regression-through-origin model.
//! * [`GmlleState`] — two-way comparison estimator: least-squares slope of
//!   initiator-clock exchange midpoints against responder-clock midpoints.
//!
//! The bound evaluators ([`crlb_skew`], [`crlb_offset`], [`cr_lower_bound`])
//! give the Cramer-Rao lower bounds of the joint estimate and the two-point
//! bound that the cumulative ratio attains.
//!
//! All accumulating estimators center their sums on the first observation
//! before accumulating. Departures reach thousands of seconds while the
//! noise sits at nanoseconds, and raw sums of products would cancel
//! catastrophically; the slope is invariant to the shift, and the offset
//! estimate restores it explicitly.

use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum EstimatorError {
    #[error("estimator needs at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },
    /// The departure timestamps carry no spread, so the design matrix is
    /// singular.
    #[error("degenerate design: departure timestamps carry no spread")]
    DegenerateDesign,
    #[error("time span must be positive")]
    NonPositiveSpan,
    #[error("invalid two-way exchange: {0}")]
    InvalidExchange(&'static str),
}

/// One timestamped one-way message as seen by a receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneWayObservation {
    /// Departure timestamp carried in the message, head-node frame.
    pub departure: f64,
    /// Arrival time per the receiver's hardware clock.
    pub arrival: f64,
}

impl OneWayObservation {
    pub fn new(departure: f64, arrival: f64) -> Self {
        OneWayObservation { departure, arrival }
    }
}

/// Joint offset/ratio estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointEstimate {
    /// Estimated clock offset in seconds.
    pub offset: f64,
    /// Estimated frequency ratio `R = 1 + skew`.
    pub skew_ratio: f64,
}

/// Running sufficient statistics for the joint ML estimator.
///
/// Internally a Welford-style accumulation of means and co-deviations of
/// the baseline-centered observations; the raw-sum accessors reconstruct
/// the plain sums exactly for inspection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointMleState {
    n: u64,
    baseline: Option<(f64, f64)>,
    mean_x: f64,
    mean_y: f64,
    m2_x: f64,
    c_xy: f64,
    known_mean_delay: f64,
}

impl JointMleState {
    /// `known_mean_delay` is the fixed portion of delay assumed known; it
    /// shifts only the offset estimate, never the ratio.
    pub fn new(known_mean_delay: f64) -> Self {
        JointMleState {
            n: 0,
            baseline: None,
            mean_x: 0.0,
            mean_y: 0.0,
            m2_x: 0.0,
            c_xy: 0.0,
            known_mean_delay,
        }
    }

    pub fn ingest(&mut self, obs: OneWayObservation) {
        let (x0, y0) = *self.baseline.get_or_insert((obs.departure, obs.arrival));
        let x = obs.departure - x0;
        let y = obs.arrival - y0;
        self.n += 1;
        let n = self.n as f64;
        let dx = x - self.mean_x;
        self.mean_x += dx / n;
        self.m2_x += dx * (x - self.mean_x);
        let dy = y - self.mean_y;
        self.mean_y += dy / n;
        self.c_xy += dx * (y - self.mean_y);
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn known_mean_delay(&self) -> f64 {
        self.known_mean_delay
    }

    /// Sum of ingested departures.
    pub fn sum_departure(&self) -> f64 {
        let x0 = self.baseline.map_or(0.0, |(x0, _)| x0);
        self.n as f64 * (self.mean_x + x0)
    }

    /// Sum of squared ingested departures.
    pub fn sum_departure_sq(&self) -> f64 {
        let x0 = self.baseline.map_or(0.0, |(x0, _)| x0);
        let n = self.n as f64;
        // sum (x + x0)^2 = (m2 + n*mean^2) + 2*x0*n*mean + n*x0^2
        self.m2_x + n * self.mean_x * self.mean_x + 2.0 * x0 * n * self.mean_x + n * x0 * x0
    }

    /// Sum of ingested arrivals.
    pub fn sum_arrival(&self) -> f64 {
        let y0 = self.baseline.map_or(0.0, |(_, y0)| y0);
        self.n as f64 * (self.mean_y + y0)
    }

    /// Sum of departure*arrival products.
    pub fn sum_cross(&self) -> f64 {
        let (x0, y0) = self.baseline.unwrap_or((0.0, 0.0));
        let n = self.n as f64;
        self.c_xy + n * self.mean_x * self.mean_y + x0 * n * (self.mean_y + y0)
            + y0 * n * self.mean_x
    }

    /// Closed-form joint estimate of offset and frequency ratio.
    ///
    /// Requires at least two observations with distinct departures.
    pub fn estimate(&self) -> Result<JointEstimate, EstimatorError> {
        if self.n < 2 {
            return Err(EstimatorError::InsufficientData {
                needed: 2,
                got: self.n as usize,
            });
        }
        if self.m2_x <= 0.0 {
            return Err(EstimatorError::DegenerateDesign);
        }
        let ratio = self.c_xy / self.m2_x;
        let (x0, y0) = self.baseline.expect("n >= 2 implies baseline");
        let intercept = (self.mean_y + y0) - ratio * (self.mean_x + x0);
        Ok(JointEstimate {
            offset: intercept - self.known_mean_delay,
            skew_ratio: ratio,
        })
    }
}

/// Cramer-Rao lower bound on the variance of the joint skew-ratio estimate
/// for white Gaussian delay with standard deviation `sigma`, over the given
/// departure design.
pub fn crlb_skew(departures: &[f64], sigma: f64) -> Result<f64, EstimatorError> {
    let (n, pop_var, _) = design_moments(departures)?;
    Ok(sigma * sigma / (n * pop_var))
}

/// Cramer-Rao lower bound on the variance of the joint offset estimate.
pub fn crlb_offset(departures: &[f64], sigma: f64) -> Result<f64, EstimatorError> {
    let (n, pop_var, mean_sq) = design_moments(departures)?;
    Ok(sigma * sigma * mean_sq / (n * pop_var))
}

fn design_moments(departures: &[f64]) -> Result<(f64, f64, f64), EstimatorError> {
    if departures.len() < 2 {
        return Err(EstimatorError::InsufficientData {
            needed: 2,
            got: departures.len(),
        });
    }
    let n = departures.len() as f64;
    let mean = departures.iter().sum::<f64>() / n;
    let pop_var = departures.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    if pop_var <= 0.0 {
        return Err(EstimatorError::DegenerateDesign);
    }
    let mean_sq = departures.iter().map(|x| x * x).sum::<f64>() / n;
    Ok((n, pop_var, mean_sq))
}

/// State of the cumulative-ratio estimator: exactly four scalars.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrState {
    pub baseline_departure: f64,
    pub baseline_arrival: f64,
    pub last_departure: f64,
    pub last_arrival: f64,
}

impl CrState {
    /// Current ratio estimate, elapsed arrival over elapsed departure.
    pub fn ratio(&self) -> Result<f64, EstimatorError> {
        let span = self.last_departure - self.baseline_departure;
        if span == 0.0 {
            return Err(EstimatorError::DegenerateDesign);
        }
        Ok((self.last_arrival - self.baseline_arrival) / span)
    }

    /// Elapsed departure time since the baseline message.
    pub fn departure_span(&self) -> f64 {
        self.last_departure - self.baseline_departure
    }
}

/// Cumulative-ratio estimator. The first observation only fixes the
/// baseline and yields no estimate.
#[derive(Debug, Clone, Copy, Default)]
pub enum CrEstimator {
    #[default]
    Empty,
    Tracking(CrState),
}

impl CrEstimator {
    pub fn new() -> Self {
        CrEstimator::Empty
    }

    /// Ingest one observation. Returns `Ok(None)` on the baseline call and
    /// the fresh ratio estimate afterwards; a repeated departure timestamp
    /// is a degenerate design.
    pub fn update(&mut self, obs: OneWayObservation) -> Result<Option<f64>, EstimatorError> {
        match self {
            CrEstimator::Empty => {
                *self = CrEstimator::Tracking(CrState {
                    baseline_departure: obs.departure,
                    baseline_arrival: obs.arrival,
                    last_departure: obs.departure,
                    last_arrival: obs.arrival,
                });
                Ok(None)
            }
            CrEstimator::Tracking(state) => {
                if obs.departure == state.baseline_departure {
                    return Err(EstimatorError::DegenerateDesign);
                }
                state.last_departure = obs.departure;
                state.last_arrival = obs.arrival;
                Ok(Some(state.ratio()?))
            }
        }
    }

    pub fn state(&self) -> Option<&CrState> {
        match self {
            CrEstimator::Empty => None,
            CrEstimator::Tracking(s) => Some(s),
        }
    }
}

/// Lower bound attained by the cumulative ratio for white Gaussian delay:
/// `2 sigma^2 / span^2` where `span` is the elapsed departure time between
/// the first and last message.
pub fn cr_lower_bound(departure_span: f64, sigma: f64) -> Result<f64, EstimatorError> {
    if departure_span <= 0.0 {
        return Err(EstimatorError::NonPositiveSpan);
    }
    Ok(2.0 * sigma * sigma / (departure_span * departure_span))
}

/// Default inverse-covariance prior for the scalar RLS update. Large enough
/// that the first update lands on the one-point least-squares solution.
pub const RLS_DEFAULT_PRIOR: f64 = 1e12;

/// State of the scalar recursive-least-squares estimator on the
/// baseline-subtracted regression-through-origin model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlsState {
    /// Current ratio estimate.
    pub coeff_estimate: f64,
    /// Inverse-covariance scalar `P`.
    pub gain_denominator: f64,
    /// Forgetting factor `lambda` in (0, 1].
    pub forgetting: f64,
    pub baseline_departure: f64,
    pub baseline_arrival: f64,
}

/// Scalar exponentially-weighted RLS estimator of the frequency ratio.
#[derive(Debug, Clone, Copy)]
pub enum RlsEstimator {
    Empty { forgetting: f64, prior: f64 },
    Tracking(RlsState),
}

impl Default for RlsEstimator {
    fn default() -> Self {
        RlsEstimator::new(1.0)
    }
}

impl RlsEstimator {
    pub fn new(forgetting: f64) -> Self {
        assert!(
            forgetting > 0.0 && forgetting <= 1.0,
            "forgetting factor must be in (0, 1]"
        );
        RlsEstimator::Empty {
            forgetting,
            prior: RLS_DEFAULT_PRIOR,
        }
    }

    pub fn with_prior(forgetting: f64, prior: f64) -> Self {
        assert!(prior > 0.0);
        let mut e = Self::new(forgetting);
        if let RlsEstimator::Empty { prior: p, .. } = &mut e {
            *p = prior;
        }
        e
    }

    /// Ingest one observation; the baseline call yields no estimate.
    pub fn update(&mut self, obs: OneWayObservation) -> Result<Option<f64>, EstimatorError> {
        match self {
            RlsEstimator::Empty { forgetting, prior } => {
                *self = RlsEstimator::Tracking(RlsState {
                    // A frequency ratio near one is the only sensible prior.
                    coeff_estimate: 1.0,
                    gain_denominator: *prior,
                    forgetting: *forgetting,
                    baseline_departure: obs.departure,
                    baseline_arrival: obs.arrival,
                });
                Ok(None)
            }
            RlsEstimator::Tracking(s) => {
                let x = obs.departure - s.baseline_departure;
                let y = obs.arrival - s.baseline_arrival;
                let p = s.gain_denominator;
                let gain = p * x / (s.forgetting + p * x * x);
                s.coeff_estimate += gain * (y - s.coeff_estimate * x);
                s.gain_denominator = (p - gain * x * p) / s.forgetting;
                Ok(Some(s.coeff_estimate))
            }
        }
    }

    pub fn state(&self) -> Option<&RlsState> {
        match self {
            RlsEstimator::Empty { .. } => None,
            RlsEstimator::Tracking(s) => Some(s),
        }
    }
}

/// Timestamps of one two-way exchange. `t1`/`t4` are read from the
/// initiator's clock, `t2`/`t3` from the responder's.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoWayExchange {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
}

impl TwoWayExchange {
    pub fn new(t1: f64, t2: f64, t3: f64, t4: f64) -> Result<Self, EstimatorError> {
        if t4 <= t1 || t1.is_nan() || t4.is_nan() {
            return Err(EstimatorError::InvalidExchange("t1 must precede t4"));
        }
        if t3 < t2 || t2.is_nan() || t3.is_nan() {
            return Err(EstimatorError::InvalidExchange("t2 must not exceed t3"));
        }
        Ok(TwoWayExchange { t1, t2, t3, t4 })
    }

    /// Exchange midpoint in the initiator's clock.
    pub fn initiator_midpoint(&self) -> f64 {
        0.5 * (self.t1 + self.t4)
    }

    /// Exchange midpoint in the responder's clock.
    pub fn responder_midpoint(&self) -> f64 {
        0.5 * (self.t2 + self.t3)
    }
}

/// Two-way ML-like comparison estimator for Gaussian delays.
///
/// Fits a least-squares line of initiator-clock midpoints over
/// responder-clock midpoints; under symmetric i.i.d. delays the midpoint
/// model is `m_initiator = R * m_responder + theta + noise`, so the slope
/// estimates the initiator's frequency ratio.
#[derive(Debug, Clone, Default)]
pub struct GmlleState {
    exchanges: Vec<TwoWayExchange>,
    baseline: Option<(f64, f64)>,
    mean_x: f64,
    mean_y: f64,
    m2_x: f64,
    c_xy: f64,
}

impl GmlleState {
    pub fn new() -> Self {
        GmlleState::default()
    }

    pub fn exchanges(&self) -> &[TwoWayExchange] {
        &self.exchanges
    }

    /// Ingest one exchange; yields a slope once two exchanges with distinct
    /// responder midpoints have been seen.
    pub fn update(&mut self, ex: TwoWayExchange) -> Result<Option<f64>, EstimatorError> {
        let x_raw = ex.responder_midpoint();
        let y_raw = ex.initiator_midpoint();
        self.exchanges.push(ex);
        let (x0, y0) = *self.baseline.get_or_insert((x_raw, y_raw));
        let x = x_raw - x0;
        let y = y_raw - y0;
        let n = self.exchanges.len() as f64;
        let dx = x - self.mean_x;
        self.mean_x += dx / n;
        self.m2_x += dx * (x - self.mean_x);
        let dy = y - self.mean_y;
        self.mean_y += dy / n;
        self.c_xy += dx * (y - self.mean_y);
        if self.exchanges.len() < 2 {
            return Ok(None);
        }
        Ok(Some(self.estimate()?))
    }

    /// Current slope estimate of the initiator's frequency ratio.
    pub fn estimate(&self) -> Result<f64, EstimatorError> {
        if self.exchanges.len() < 2 {
            return Err(EstimatorError::InsufficientData {
                needed: 2,
                got: self.exchanges.len(),
            });
        }
        if self.m2_x <= 0.0 {
            return Err(EstimatorError::DegenerateDesign);
        }
        Ok(self.c_xy / self.m2_x)
    }
}
