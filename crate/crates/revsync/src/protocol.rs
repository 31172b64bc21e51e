//! Message formats and node-side state machines of the synchronization
//! schemes.
//!
//! Two families are implemented:
//!
//! * the reverse scheme: the head broadcasts timestamped beacons, sensors
//!   passively recover the head clock frequency from them and reply only
//!   inside measurement reports, which double as the return leg of a
//!   reverse two-way exchange so the head can estimate each sensor's
//!   offset;
//! * conventional two-way exchanges: the sensor initiates a dedicated
//!   request/response round every synchronization interval and corrects its
//!   own logical clock (offset only, or offset plus a two-way skew estimate).
//!
//! Measurement reports in the reverse scheme may bundle several records;
//! the offset estimated from one report is applied collectively to every
//! bundled record.

use std::fmt;

use thiserror::Error;

use crate::clock::{ClockError, LogicalClockState};
use crate::estimators::{
    CrEstimator, EstimatorError, GmlleState, JointMleState, OneWayObservation, RlsEstimator,
    TwoWayExchange,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("report bundle must not be empty")]
    EmptyBundle,
    #[error("bundle timestamps must be nondecreasing")]
    UnorderedBundle,
    #[error("beacon arrival must not follow report departure")]
    ExchangeOrder,
    #[error(transparent)]
    Clock(#[from] ClockError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// Timestamped broadcast from the head node; its departure timestamp is the
/// embedded request of the reverse exchange.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Beacon {
    pub seq: u64,
    /// Departure timestamp in the sender's clock.
    pub departure: f64,
}

/// One sensor measurement, timestamped with the sensor's logical clock at
/// occurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub measurement_id: u64,
    /// Opaque payload; the protocol never interprets it.
    pub payload: Vec<u8>,
    pub local_time: f64,
}

/// Measurement report of the reverse scheme, doubling as the response leg
/// of a reverse two-way exchange.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub sensor_id: u32,
    /// Bundled records, nonempty with nondecreasing local times.
    pub bundle: Vec<MeasurementRecord>,
    /// Departure timestamp copied from the eliciting beacon (t1).
    pub beacon_departure: f64,
    /// Sensor logical clock at that beacon's arrival (t2).
    pub beacon_arrival_local: f64,
    /// Sensor logical clock at report transmission (t3).
    pub departure_local: f64,
}

impl Report {
    pub fn new(
        sensor_id: u32,
        bundle: Vec<MeasurementRecord>,
        beacon_departure: f64,
        beacon_arrival_local: f64,
        departure_local: f64,
    ) -> Result<Self, ProtocolError> {
        if bundle.is_empty() {
            return Err(ProtocolError::EmptyBundle);
        }
        if bundle.windows(2).any(|w| w[1].local_time < w[0].local_time) {
            return Err(ProtocolError::UnorderedBundle);
        }
        if beacon_arrival_local > departure_local {
            return Err(ProtocolError::ExchangeOrder);
        }
        Ok(Report {
            sensor_id,
            bundle,
            beacon_departure,
            beacon_arrival_local,
            departure_local,
        })
    }
}

/// Head-side record of one sensor's clock, updated once per received report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorLedger {
    /// Latest offset estimate of the sensor's logical clock relative to
    /// this node's clock.
    pub last_offset_estimate: f64,
    pub last_update_ref_time: f64,
}

/// Skew estimator selection for the reverse scheme's sensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkewEstimatorKind {
    Cr,
    Rls,
    Mle,
}

/// Which synchronization scheme a run exercises.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchemeKind {
    ProposedReverse {
        estimator: SkewEstimatorKind,
        /// Number of measurements bundled per report (>= 1).
        bundle_size: u32,
    },
    ConventionalTwoWay {
        with_gmlle: bool,
    },
}

/// Every message the simulator routes, with a one-line diagnostic text form.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Beacon(Beacon),
    Report(Report),
    Request { seq: u64, t1: f64 },
    Response { seq: u64, t2: f64, t3: f64 },
    /// Stand-alone measurement report of the conventional schemes.
    DataReport { sensor_id: u32, record: MeasurementRecord },
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Message::Beacon(b) => write!(f, "beacon seq={} t1={:.9e}", b.seq, b.departure),
            Message::Report(r) => write!(
                f,
                "report sensor={} bundle={} t1={:.9e} t2={:.9e} t3={:.9e}",
                r.sensor_id,
                r.bundle.len(),
                r.beacon_departure,
                r.beacon_arrival_local,
                r.departure_local
            ),
            Message::Request { seq, t1 } => write!(f, "request seq={seq} t1={t1:.9e}"),
            Message::Response { seq, t2, t3 } => {
                write!(f, "response seq={seq} t2={t2:.9e} t3={t3:.9e}")
            }
            Message::DataReport { sensor_id, record } => write!(
                f,
                "data-report sensor={} bundle=1 tau={:.9e}",
                sensor_id, record.local_time
            ),
        }
    }
}

/// Offset of the responder's clock relative to the initiator's, from one
/// two-way exchange: `((t2 - t1) - (t4 - t3)) / 2`. `t1`/`t4` are initiator
/// timestamps, `t2`/`t3` responder timestamps; symmetric delays cancel.
pub fn two_way_offset(t1: f64, t2: f64, t3: f64, t4: f64) -> f64 {
    0.5 * ((t2 - t1) - (t4 - t3))
}

/// Head-side processing of a report arriving at `arrival_ref` (receiver
/// clock): estimates the sensor's offset from the embedded reverse exchange,
/// updates the ledger, and maps every bundled record to its estimated
/// occurrence time in the receiver's frame. The same offset estimate is
/// applied collectively to all bundled records.
pub fn head_on_report(
    ledger: &mut Option<SensorLedger>,
    report: &Report,
    arrival_ref: f64,
) -> Vec<(u64, f64)> {
    let offset = two_way_offset(
        report.beacon_departure,
        report.beacon_arrival_local,
        report.departure_local,
        arrival_ref,
    );
    *ledger = Some(SensorLedger {
        last_offset_estimate: offset,
        last_update_ref_time: arrival_ref,
    });
    report
        .bundle
        .iter()
        .map(|m| (m.measurement_id, m.local_time - offset))
        .collect()
}

/// Sensor-side skew estimator of the reverse scheme.
#[derive(Debug, Clone)]
pub enum SkewEstimator {
    Cr(CrEstimator),
    Rls(RlsEstimator),
    Mle(JointMleState),
}

impl SkewEstimator {
    pub fn new(kind: SkewEstimatorKind, known_mean_delay: f64) -> Self {
        match kind {
            SkewEstimatorKind::Cr => SkewEstimator::Cr(CrEstimator::new()),
            SkewEstimatorKind::Rls => SkewEstimator::Rls(RlsEstimator::new(1.0)),
            SkewEstimatorKind::Mle => SkewEstimator::Mle(JointMleState::new(known_mean_delay)),
        }
    }

    /// Feed one observation; returns the fresh frequency-ratio estimate
    /// once available.
    pub fn update(&mut self, obs: OneWayObservation) -> Result<Option<f64>, EstimatorError> {
        match self {
            SkewEstimator::Cr(e) => e.update(obs),
            SkewEstimator::Rls(e) => e.update(obs),
            SkewEstimator::Mle(m) => {
                m.ingest(obs);
                match m.estimate() {
                    Ok(est) => Ok(Some(est.skew_ratio)),
                    Err(EstimatorError::InsufficientData { .. }) => Ok(None),
                    Err(e) => Err(e),
                }
            }
        }
    }
}

/// What a beacon did to a reverse-scheme sensor.
#[derive(Debug)]
pub struct BeaconOutcome {
    /// Fresh frequency-ratio estimate, if the estimator produced one.
    pub new_skew_ratio: Option<f64>,
    /// Reports released because the first beacon unblocked queued
    /// measurements.
    pub reports: Vec<Report>,
}

/// Sensor state machine of the reverse scheme.
///
/// Listens passively to beacons, recovers the source clock frequency with a
/// one-way estimator, applies frequency-only corrections to its logical
/// clock, and replies exclusively inside measurement reports. Measurements
/// are reported once `bundle_size` of them have accumulated; measurements
/// occurring before the first beacon wait for it.
#[derive(Debug, Clone)]
pub struct ReverseSensor {
    id: u32,
    clock: LogicalClockState,
    estimator: SkewEstimator,
    pending_exchange: Option<(f64, f64)>,
    pending: Vec<MeasurementRecord>,
    bundle_size: usize,
    n_tx: u64,
    n_rx: u64,
}

impl ReverseSensor {
    pub fn new(
        id: u32,
        clock: LogicalClockState,
        estimator: SkewEstimator,
        bundle_size: u32,
    ) -> Self {
        assert!(bundle_size >= 1, "bundle size must be at least 1");
        ReverseSensor {
            id,
            clock,
            estimator,
            pending_exchange: None,
            pending: Vec::new(),
            bundle_size: bundle_size as usize,
            n_tx: 0,
            n_rx: 0,
        }
    }

    pub fn clock(&self) -> &LogicalClockState {
        &self.clock
    }

    pub fn n_tx(&self) -> u64 {
        self.n_tx
    }

    pub fn n_rx(&self) -> u64 {
        self.n_rx
    }

    /// Process one beacon arriving at local hardware time `hw_arrival`.
    ///
    /// Feeds the one-way estimator with the carried departure timestamp and
    /// the hardware arrival time, applies a frequency-only sync when an
    /// estimate is available, and records the (t1, t2) pair for the next
    /// report. The first beacon only sets the estimator baseline and leaves
    /// the clock untouched.
    pub fn on_beacon(&mut self, beacon: &Beacon, hw_arrival: f64) -> Result<BeaconOutcome, ProtocolError> {
        self.n_rx += 1;
        let obs = OneWayObservation::new(beacon.departure, hw_arrival);
        let ratio = self.estimator.update(obs)?;
        if let Some(r) = ratio {
            self.clock = self.clock.apply_sync(hw_arrival, Some(r - 1.0), None)?;
        }
        let arrival_local = self.clock.logical_read(hw_arrival)?;
        let first = self.pending_exchange.is_none();
        self.pending_exchange = Some((beacon.departure, arrival_local));
        let reports = if first {
            self.drain_full_bundles(hw_arrival)?
        } else {
            Vec::new()
        };
        Ok(BeaconOutcome {
            new_skew_ratio: ratio,
            reports,
        })
    }

    /// Record one measurement at local hardware time `hw_now`; returns any
    /// reports that became due.
    pub fn on_measurement(
        &mut self,
        measurement_id: u64,
        payload: Vec<u8>,
        hw_now: f64,
    ) -> Result<Vec<Report>, ProtocolError> {
        let local_time = self.clock.logical_read(hw_now)?;
        self.pending.push(MeasurementRecord {
            measurement_id,
            payload,
            local_time,
        });
        self.drain_full_bundles(hw_now)
    }

    /// Emit a final partial report for any leftover measurements, typically
    /// at the end of a run.
    pub fn flush_partial(&mut self, hw_now: f64) -> Result<Option<Report>, ProtocolError> {
        if self.pending.is_empty() || self.pending_exchange.is_none() {
            return Ok(None);
        }
        let bundle: Vec<MeasurementRecord> = self.pending.drain(..).collect();
        Ok(Some(self.emit(bundle, hw_now)?))
    }

    fn drain_full_bundles(&mut self, hw_now: f64) -> Result<Vec<Report>, ProtocolError> {
        let mut out = Vec::new();
        if self.pending_exchange.is_none() {
            return Ok(out);
        }
        while self.pending.len() >= self.bundle_size {
            let bundle: Vec<MeasurementRecord> = self.pending.drain(..self.bundle_size).collect();
            out.push(self.emit(bundle, hw_now)?);
        }
        Ok(out)
    }

    fn emit(&mut self, bundle: Vec<MeasurementRecord>, hw_now: f64) -> Result<Report, ProtocolError> {
        let (t1, t2) = self.pending_exchange.expect("checked by caller");
        let t3 = self.clock.logical_read(hw_now)?;
        let report = Report::new(self.id, bundle, t1, t2, t3)?;
        self.n_tx += 1;
        Ok(report)
    }
}

/// An in-flight conventional exchange, waiting for the response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendingExchange {
    pub seq: u64,
    /// Logical-clock timestamp at request transmission; the offset estimate
    /// corrects the logical clock, so it is computed in the logical frame.
    pub t1_local: f64,
    /// Hardware-clock timestamp at request transmission; the two-way skew
    /// estimator needs the raw linear clock, unaffected by earlier
    /// corrections.
    pub t1_hw: f64,
}

/// Sensor state machine of the conventional two-way schemes.
#[derive(Debug, Clone)]
pub struct ConventionalSensor {
    id: u32,
    clock: LogicalClockState,
    gmlle: Option<GmlleState>,
    n_tx: u64,
    n_rx: u64,
}

impl ConventionalSensor {
    pub fn new(id: u32, clock: LogicalClockState, with_gmlle: bool) -> Self {
        ConventionalSensor {
            id,
            clock,
            gmlle: with_gmlle.then(GmlleState::new),
            n_tx: 0,
            n_rx: 0,
        }
    }

    pub fn clock(&self) -> &LogicalClockState {
        &self.clock
    }

    pub fn n_tx(&self) -> u64 {
        self.n_tx
    }

    pub fn n_rx(&self) -> u64 {
        self.n_rx
    }

    /// Initiate one exchange at local hardware time `hw_now`.
    pub fn start_exchange(
        &mut self,
        seq: u64,
        hw_now: f64,
    ) -> Result<(PendingExchange, Message), ProtocolError> {
        let t1_local = self.clock.logical_read(hw_now)?;
        self.n_tx += 1;
        Ok((
            PendingExchange {
                seq,
                t1_local,
                t1_hw: hw_now,
            },
            Message::Request { seq, t1: t1_local },
        ))
    }

    /// Complete an exchange when the response arrives at local hardware
    /// time `hw_arrival`.
    ///
    /// The offset measured in the logical frame is corrected immediately;
    /// with the two-way skew estimator enabled, the exchange also feeds the
    /// estimator (on raw hardware timestamps) and the correction includes
    /// the fresh skew estimate. Returns that estimate when one was produced.
    pub fn complete_exchange(
        &mut self,
        pending: PendingExchange,
        t2: f64,
        t3: f64,
        hw_arrival: f64,
    ) -> Result<Option<f64>, ProtocolError> {
        self.n_rx += 1;
        let t4_local = self.clock.logical_read(hw_arrival)?;
        // two_way_offset yields responder-minus-initiator; the sensor's own
        // offset relative to the head is the negative.
        let own_offset = -two_way_offset(pending.t1_local, t2, t3, t4_local);
        let ratio = match &mut self.gmlle {
            Some(g) => g.update(TwoWayExchange::new(pending.t1_hw, t2, t3, hw_arrival)?)?,
            None => None,
        };
        self.clock =
            self.clock
                .apply_sync(hw_arrival, ratio.map(|r| r - 1.0), Some(own_offset))?;
        Ok(ratio)
    }

    /// Timestamp one measurement and hand it off as a stand-alone report.
    pub fn on_measurement(
        &mut self,
        measurement_id: u64,
        payload: Vec<u8>,
        hw_now: f64,
    ) -> Result<Message, ProtocolError> {
        let local_time = self.clock.logical_read(hw_now)?;
        self.n_tx += 1;
        Ok(Message::DataReport {
            sensor_id: self.id,
            record: MeasurementRecord {
                measurement_id,
                payload,
                local_time,
            },
        })
    }
}

/// Best-case measurement-time error of the conventional scheme under a
/// deterministic one-way delay `d`: `(d + elapsed) * skew` without skew
/// compensation, or `elapsed * skew_error` with it (valid for elapsed >> d).
pub fn predict_error_conventional(
    elapsed_since_sync: f64,
    one_way_delay: f64,
    skew_or_error: f64,
    compensated: bool,
) -> f64 {
    debug_assert!(elapsed_since_sync >= 0.0 && one_way_delay >= 0.0);
    if compensated {
        elapsed_since_sync * skew_or_error
    } else {
        (one_way_delay + elapsed_since_sync) * skew_or_error
    }
}

/// Best-case measurement-time error of the reverse scheme:
/// `(2d + elapsed) * skew_error / 2`.
pub fn predict_error_reverse(elapsed_since_sync: f64, one_way_delay: f64, skew_error: f64) -> f64 {
    debug_assert!(elapsed_since_sync >= 0.0 && one_way_delay >= 0.0);
    0.5 * (2.0 * one_way_delay + elapsed_since_sync) * skew_error
}
