//! Deterministic event-driven simulator.
//!
//! A run owns a priority queue of events ordered by time, with deliveries
//! before timers before measurements at equal times and sequence numbers
//! breaking the remaining ties, so identical configurations replay
//! bit-exactly. Sync events (beacons of the reverse scheme, exchanges of the
//! conventional ones) fire every synchronization interval; measurement
//! arrivals follow a Poisson process conditioned on the configured count;
//! messages travel through per-link seeded delay samplers, optionally
//! crossing a chain of packet-relaying or time-translating gateways.

mod bench;
mod engine;

pub use bench::{default_bench_delay, estimator_benchmark, BenchConfig, BenchCurve, BenchEstimator, BenchPoint};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::clock::{ClockError, ClockParams};
use crate::delay::{DelayError, DelaySpec, DEFAULT_MEAN_DELAY};
use crate::estimators::EstimatorError;
use crate::protocol::{Message, ProtocolError, SchemeKind, SensorLedger};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("config: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error(transparent)]
    Delay(#[from] DelayError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Clock(#[from] ClockError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("event ordering violated at node {node}: time {now} after {prev}")]
    NonMonotoneEvents { node: usize, now: f64, prev: f64 },
}

pub(crate) fn invalid(field: &'static str, reason: String) -> SimError {
    SimError::InvalidConfig { field, reason }
}

/// How a gateway treats traffic passing through it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GatewayMode {
    /// Pass messages through untouched; only per-hop delay is added.
    PacketRelay,
    /// Act as head for the downstream node: maintain its offset ledger and
    /// rewrite downstream timestamps into the gateway's own frame before
    /// forwarding.
    TimeTranslate,
}

/// Delay processes of one link, one per direction. Directions are sampled
/// independently even when the specs coincide.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkDelays {
    pub down: DelaySpec,
    pub up: DelaySpec,
}

impl LinkDelays {
    pub fn symmetric(spec: DelaySpec) -> Self {
        LinkDelays {
            down: spec,
            up: spec,
        }
    }
}

/// Network layout between the head node and the measuring sensor.
#[derive(Debug, Clone, PartialEq)]
pub enum Topology {
    /// Head and sensor share one link using the run's delay spec.
    SingleHop,
    /// `links.len() - 1` gateways between head and sensor; link 0 touches
    /// the head. Supported by the reverse scheme only.
    GatewayChain {
        mode: GatewayMode,
        links: Vec<LinkDelays>,
        /// Hardware clocks of the gateways, ordered head-side first.
        gateway_params: Vec<ClockParams>,
    },
}

/// Full parameterization of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scheme: SchemeKind,
    /// Synchronization interval: beacon period for the reverse scheme,
    /// exchange period for the conventional ones.
    pub si: f64,
    /// Observation window in seconds.
    pub horizon: f64,
    pub n_measurements: u32,
    /// Samples earlier than this are excluded from the error metrics;
    /// message counts always cover the whole horizon.
    pub warmup: f64,
    pub delay: DelaySpec,
    pub sensor_params: ClockParams,
    pub seed: u64,
    pub topology: Topology,
    /// Responder turnaround between request reception and response
    /// transmission. A deterministic turnaround cancels in the two-way
    /// offset computation.
    pub processing_delay: f64,
    pub record_traces: bool,
    /// Explicit measurement times overriding the Poisson schedule; must be
    /// sorted and inside (0, horizon].
    pub measurement_times: Option<Vec<f64>>,
}

impl RunConfig {
    /// A run with the default experiment settings: one-hour horizon, 100
    /// measurements, 360 s warmup, Gaussian 1 ns delay noise around the
    /// 100 m line-of-sight delay, sensor at +100 ppm and 1 s offset.
    pub fn new(scheme: SchemeKind, si: f64) -> Self {
        RunConfig {
            scheme,
            si,
            horizon: 3600.0,
            n_measurements: 100,
            warmup: 360.0,
            delay: DelaySpec::GaussianIid {
                mean: DEFAULT_MEAN_DELAY,
                sigma: 1e-9,
            },
            sensor_params: ClockParams::new(1e-4, 1.0),
            seed: 1,
            topology: Topology::SingleHop,
            processing_delay: 0.0,
            record_traces: false,
            measurement_times: None,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.si > 0.0 && self.si.is_finite()) {
            return Err(invalid("si", format!("must be positive, got {}", self.si)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid("horizon", format!("must be positive, got {}", self.horizon)));
        }
        if !(0.0..self.horizon).contains(&self.warmup) {
            return Err(invalid(
                "warmup",
                format!("must lie in [0, horizon), got {}", self.warmup),
            ));
        }
        if self.processing_delay < 0.0 {
            return Err(invalid(
                "processing_delay",
                format!("must be >= 0, got {}", self.processing_delay),
            ));
        }
        self.delay.validate()?;
        if let SchemeKind::ProposedReverse { bundle_size, .. } = self.scheme {
            if bundle_size < 1 {
                return Err(invalid("n_bm", "must be at least 1".into()));
            }
        }
        match &self.topology {
            Topology::SingleHop => {}
            Topology::GatewayChain {
                links,
                gateway_params,
                ..
            } => {
                if links.len() < 2 {
                    return Err(invalid(
                        "topology.links",
                        "a gateway chain needs at least two links".into(),
                    ));
                }
                if gateway_params.len() + 1 != links.len() {
                    return Err(invalid(
                        "topology.gateway_params",
                        format!(
                            "{} gateways require {} links, got {}",
                            gateway_params.len(),
                            gateway_params.len() + 1,
                            links.len()
                        ),
                    ));
                }
                for l in links {
                    l.down.validate()?;
                    l.up.validate()?;
                }
                if matches!(self.scheme, SchemeKind::ConventionalTwoWay { .. }) {
                    return Err(invalid(
                        "topology",
                        "gateway chains are supported by the reverse scheme only".into(),
                    ));
                }
            }
        }
        if let Some(times) = &self.measurement_times {
            if times.windows(2).any(|w| w[1] < w[0]) {
                return Err(invalid("measurement_times", "must be sorted".into()));
            }
            if times.iter().any(|&t| !(t > 0.0 && t <= self.horizon)) {
                return Err(invalid(
                    "measurement_times",
                    "must lie in (0, horizon]".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One recorded error sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    /// Reference time of the sample (estimator update or true measurement
    /// occurrence).
    pub t: f64,
    pub error: f64,
}

/// Metrics of one simulation run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    /// Mean squared skew-estimation error over post-warmup estimator
    /// updates; absent when the scheme never estimates skew.
    pub skew_mse: Option<f64>,
    /// Mean squared measurement-time estimation error over measurements
    /// whose head-side processing completed after warmup.
    pub meas_time_mse: Option<f64>,
    pub n_skew_samples: u64,
    pub n_meas_samples: u64,
    /// Message transmissions of the measuring sensor over the whole run.
    pub n_tx: u64,
    /// Message receptions of the measuring sensor over the whole run.
    pub n_rx: u64,
    /// All transmissions over all nodes, for conservation checks.
    pub messages_sent: u64,
    pub messages_received: u64,
    /// Time-translating forwards that had to fall back to relaying because
    /// no downstream ledger existed yet.
    pub translate_fallbacks: u64,
    pub skew_trace: Vec<TraceSample>,
    pub meas_trace: Vec<TraceSample>,
}

/// Measurement arrival times: a Poisson process conditioned on exactly `n`
/// arrivals in `(0, horizon]`, i.e. `n` sorted i.i.d. uniforms.
pub fn generate_measurement_schedule(n: u32, horizon: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut times: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            horizon * (1.0 - u)
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times
}

/// What happened to a message inside [`gateway_forward`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardDisposition {
    Relayed,
    Translated,
    /// Translation was requested but no downstream ledger exists yet; the
    /// message passed unchanged and the run report flags it.
    MissingLedger,
}

/// Forward one message through a gateway.
///
/// Packet relay never mutates the message. Time translation rewrites every
/// downstream-clock timestamp in the payload (bundle record times, and the
/// t2/t3 exchange legs of a report) by subtracting the ledgered offset of
/// the downstream node; messages without downstream timestamps pass
/// unchanged.
pub fn gateway_forward(
    mode: GatewayMode,
    msg: &Message,
    ledger: Option<&SensorLedger>,
) -> (Message, ForwardDisposition) {
    match mode {
        GatewayMode::PacketRelay => (msg.clone(), ForwardDisposition::Relayed),
        GatewayMode::TimeTranslate => {
            let offset = match ledger {
                Some(l) => l.last_offset_estimate,
                None => {
                    return match msg {
                        Message::Report(_) | Message::DataReport { .. } => {
                            (msg.clone(), ForwardDisposition::MissingLedger)
                        }
                        _ => (msg.clone(), ForwardDisposition::Relayed),
                    }
                }
            };
            match msg {
                Message::Report(r) => {
                    let mut out = r.clone();
                    out.beacon_arrival_local -= offset;
                    out.departure_local -= offset;
                    for m in &mut out.bundle {
                        m.local_time -= offset;
                    }
                    (Message::Report(out), ForwardDisposition::Translated)
                }
                Message::DataReport { sensor_id, record } => {
                    let mut record = record.clone();
                    record.local_time -= offset;
                    (
                        Message::DataReport {
                            sensor_id: *sensor_id,
                            record,
                        },
                        ForwardDisposition::Translated,
                    )
                }
                other => (other.clone(), ForwardDisposition::Relayed),
            }
        }
    }
}

/// Execute one simulation run. Deterministic: identical configurations
/// (including the seed) produce identical reports, bit for bit.
pub fn run_simulation(cfg: &RunConfig) -> Result<RunReport, SimError> {
    cfg.validate()?;
    engine::Engine::new(cfg)?.run()
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable derivation of independent seeded streams from one master seed.
pub(crate) fn substream_seed(master: u64, tag: u64) -> u64 {
    splitmix64(master.wrapping_add(splitmix64(tag)))
}
