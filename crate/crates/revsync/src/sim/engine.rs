//! The event loop behind [`run_simulation`](super::run_simulation).

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use crate::clock::{ClockParams, LogicalClockState};
use crate::delay::DelaySampler;
use crate::estimators::CrEstimator;
use crate::protocol::{
    two_way_offset, Beacon, ConventionalSensor, head_on_report, Message, PendingExchange, Report,
    ReverseSensor, SchemeKind, SensorLedger, SkewEstimator,
};

use super::{
    gateway_forward, generate_measurement_schedule, substream_seed, ForwardDisposition,
    GatewayMode, LinkDelays, RunConfig, RunReport, SimError, Topology, TraceSample,
};

const STREAM_MEASUREMENTS: u64 = 1;
const STREAM_LINK_BASE: u64 = 0x10;

// Deliveries are processed before timers, timers before measurements, and
// the end-of-run flush last; sequence numbers break the remaining ties.
const CLASS_DELIVERY: u8 = 0;
const CLASS_TIMER: u8 = 1;
const CLASS_MEASUREMENT: u8 = 2;
const CLASS_END: u8 = 3;

#[derive(Debug)]
enum EvKind {
    Deliver { node: usize, msg: Message },
    SyncTick { k: u64 },
    Measure { idx: usize },
    EndOfData,
}

#[derive(Debug)]
struct Ev {
    time: f64,
    class: u8,
    seq: u64,
    kind: EvKind,
}

impl PartialEq for Ev {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Ev {}
impl PartialOrd for Ev {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ev {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.class.cmp(&other.class))
            .then(self.seq.cmp(&other.seq))
    }
}

struct LinkRuntime {
    down: DelaySampler,
    up: DelaySampler,
}

/// Runtime state of one gateway node.
enum GatewayRuntime {
    Relay,
    Translate(Box<TranslateGateway>),
}

struct TranslateGateway {
    params: ClockParams,
    clock: LogicalClockState,
    estimator: CrEstimator,
    /// (t1, t2) of the most recent upstream beacon, for the gateway's own
    /// upstream reports.
    pending_exchange: Option<(f64, f64)>,
    /// Translated bundles waiting for the first upstream beacon.
    queued: Vec<Vec<crate::protocol::MeasurementRecord>>,
    /// Offset ledger of the downstream node.
    ledger: Option<SensorLedger>,
    /// Downstream beaconing starts only once the gateway's own frequency is
    /// locked; advertising a raw unsynchronized clock would poison the
    /// downstream estimator baselines.
    locked: bool,
    beacon_seq: u64,
}

enum SensorNode {
    Reverse(ReverseSensor),
    Conventional(ConventionalSensor),
}

#[derive(Default, Clone, Copy)]
struct NodeCounters {
    tx: u64,
    rx: u64,
}

struct Metrics {
    warmup: f64,
    record_traces: bool,
    skew_sq: f64,
    skew_n: u64,
    meas_sq: f64,
    meas_n: u64,
    skew_trace: Vec<TraceSample>,
    meas_trace: Vec<TraceSample>,
}

impl Metrics {
    fn new(warmup: f64, record_traces: bool) -> Self {
        Metrics {
            warmup,
            record_traces,
            skew_sq: 0.0,
            skew_n: 0,
            meas_sq: 0.0,
            meas_n: 0,
            skew_trace: Vec::new(),
            meas_trace: Vec::new(),
        }
    }

    fn skew_sample(&mut self, t: f64, err: f64) {
        if t > self.warmup {
            self.skew_sq += err * err;
            self.skew_n += 1;
        }
        if self.record_traces {
            self.skew_trace.push(TraceSample { t, error: err });
        }
    }

    fn meas_sample(&mut self, processed_at: f64, true_time: f64, err: f64) {
        if processed_at > self.warmup {
            self.meas_sq += err * err;
            self.meas_n += 1;
        }
        if self.record_traces {
            self.meas_trace.push(TraceSample {
                t: true_time,
                error: err,
            });
        }
    }
}

pub(super) struct Engine {
    scheme: SchemeKind,
    si: f64,
    horizon: f64,
    processing_delay: f64,
    sensor_params: ClockParams,
    true_ratio: f64,
    sensor: SensorNode,
    head_ledger: Option<SensorLedger>,
    gateways: Vec<GatewayRuntime>,
    gateway_mode: Option<GatewayMode>,
    links: Vec<LinkRuntime>,
    queue: BinaryHeap<std::cmp::Reverse<Ev>>,
    seq: u64,
    schedule: Vec<f64>,
    pending_exchanges: HashMap<u64, PendingExchange>,
    counters: Vec<NodeCounters>,
    last_event_time: Vec<f64>,
    metrics: Metrics,
    messages_sent: u64,
    messages_received: u64,
    translate_fallbacks: u64,
}

impl Engine {
    pub(super) fn new(cfg: &RunConfig) -> Result<Self, SimError> {
        let seed = cfg.seed;
        let (link_specs, gateway_params, gateway_mode): (Vec<LinkDelays>, Vec<ClockParams>, _) =
            match &cfg.topology {
                Topology::SingleHop => (vec![LinkDelays::symmetric(cfg.delay)], vec![], None),
                Topology::GatewayChain {
                    mode,
                    links,
                    gateway_params,
                } => (links.clone(), gateway_params.clone(), Some(*mode)),
            };
        let links = link_specs
            .iter()
            .enumerate()
            .map(|(i, l)| {
                Ok(LinkRuntime {
                    down: DelaySampler::new(
                        l.down,
                        substream_seed(seed, STREAM_LINK_BASE + 2 * i as u64),
                    )?,
                    up: DelaySampler::new(
                        l.up,
                        substream_seed(seed, STREAM_LINK_BASE + 2 * i as u64 + 1),
                    )?,
                })
            })
            .collect::<Result<Vec<_>, SimError>>()?;
        let gateways = gateway_params
            .iter()
            .map(|p| match gateway_mode {
                Some(GatewayMode::TimeTranslate) => {
                    GatewayRuntime::Translate(Box::new(TranslateGateway {
                        params: *p,
                        clock: LogicalClockState::passthrough(p.hw_read(0.0)),
                        estimator: CrEstimator::new(),
                        pending_exchange: None,
                        queued: Vec::new(),
                        ledger: None,
                        locked: false,
                        beacon_seq: 0,
                    }))
                }
                _ => GatewayRuntime::Relay,
            })
            .collect::<Vec<_>>();
        // The mean one-way delay along the whole downlink path, the fixed
        // delay portion the joint MLE assumes known.
        let path_mean_delay: f64 = link_specs.iter().map(|l| l.down.mean()).sum();
        let start_clock = LogicalClockState::passthrough(cfg.sensor_params.hw_read(0.0));
        let sensor = match cfg.scheme {
            SchemeKind::ProposedReverse {
                estimator,
                bundle_size,
            } => SensorNode::Reverse(ReverseSensor::new(
                0,
                start_clock,
                SkewEstimator::new(estimator, path_mean_delay),
                bundle_size,
            )),
            SchemeKind::ConventionalTwoWay { with_gmlle } => {
                SensorNode::Conventional(ConventionalSensor::new(0, start_clock, with_gmlle))
            }
        };
        let schedule = match &cfg.measurement_times {
            Some(times) => times.clone(),
            None => generate_measurement_schedule(
                cfg.n_measurements,
                cfg.horizon,
                substream_seed(seed, STREAM_MEASUREMENTS),
            ),
        };
        let n_nodes = 2 + gateways.len();
        let mut engine = Engine {
            scheme: cfg.scheme,
            si: cfg.si,
            horizon: cfg.horizon,
            processing_delay: cfg.processing_delay,
            sensor_params: cfg.sensor_params,
            true_ratio: cfg.sensor_params.frequency_ratio(),
            sensor,
            head_ledger: None,
            gateways,
            gateway_mode,
            links,
            queue: BinaryHeap::new(),
            seq: 0,
            schedule,
            pending_exchanges: HashMap::new(),
            counters: vec![NodeCounters::default(); n_nodes],
            last_event_time: vec![f64::NEG_INFINITY; n_nodes],
            metrics: Metrics::new(cfg.warmup, cfg.record_traces),
            messages_sent: 0,
            messages_received: 0,
            translate_fallbacks: 0,
        };
        engine.push(0.0, CLASS_TIMER, EvKind::SyncTick { k: 0 });
        for idx in 0..engine.schedule.len() {
            engine.push(engine.schedule[idx], CLASS_MEASUREMENT, EvKind::Measure { idx });
        }
        engine.push(cfg.horizon, CLASS_END, EvKind::EndOfData);
        Ok(engine)
    }

    fn leaf(&self) -> usize {
        self.counters.len() - 1
    }

    fn push(&mut self, time: f64, class: u8, kind: EvKind) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(std::cmp::Reverse(Ev {
            time,
            class,
            seq,
            kind,
        }));
    }

    /// Send over `link` toward the sensor; the sender is the upper endpoint.
    fn send_down(&mut self, link: usize, msg: Message, now: f64) {
        let delay = self.links[link].down.sample();
        self.counters[link].tx += 1;
        self.messages_sent += 1;
        self.push(
            now + delay,
            CLASS_DELIVERY,
            EvKind::Deliver {
                node: link + 1,
                msg,
            },
        );
    }

    /// Send over `link` toward the head; the sender is the lower endpoint.
    fn send_up(&mut self, link: usize, msg: Message, now: f64) {
        let delay = self.links[link].up.sample();
        self.counters[link + 1].tx += 1;
        self.messages_sent += 1;
        self.push(
            now + delay,
            CLASS_DELIVERY,
            EvKind::Deliver { node: link, msg },
        );
    }

    fn observe_node_time(&mut self, node: usize, now: f64) -> Result<(), SimError> {
        let prev = self.last_event_time[node];
        if now < prev {
            return Err(SimError::NonMonotoneEvents { node, now, prev });
        }
        self.last_event_time[node] = now;
        Ok(())
    }

    pub(super) fn run(mut self) -> Result<RunReport, SimError> {
        while let Some(std::cmp::Reverse(ev)) = self.queue.pop() {
            match ev.kind {
                EvKind::SyncTick { k } => self.on_tick(k, ev.time)?,
                EvKind::Measure { idx } => self.on_measurement(idx, ev.time)?,
                EvKind::Deliver { node, msg } => self.on_deliver(node, msg, ev.time)?,
                EvKind::EndOfData => self.on_end(ev.time)?,
            }
        }
        Ok(self.finish())
    }

    fn on_tick(&mut self, k: u64, t: f64) -> Result<(), SimError> {
        let next = (k + 1) as f64 * self.si;
        if next < self.horizon {
            self.push(next, CLASS_TIMER, EvKind::SyncTick { k: k + 1 });
        }
        match self.scheme {
            SchemeKind::ProposedReverse { .. } => {
                self.observe_node_time(0, t)?;
                // The head clock is the reference.
                self.send_down(0, Message::Beacon(Beacon { seq: k, departure: t }), t);
                if self.gateway_mode == Some(GatewayMode::TimeTranslate) {
                    for gi in 0..self.gateways.len() {
                        let beacon = match &mut self.gateways[gi] {
                            GatewayRuntime::Translate(gw) if gw.locked => {
                                let departure = gw.clock.logical_read(gw.params.hw_read(t))?;
                                let seq = gw.beacon_seq;
                                gw.beacon_seq += 1;
                                Some(Beacon { seq, departure })
                            }
                            _ => None,
                        };
                        if let Some(b) = beacon {
                            self.send_down(gi + 1, Message::Beacon(b), t);
                        }
                    }
                }
            }
            SchemeKind::ConventionalTwoWay { .. } => {
                let leaf = self.leaf();
                self.observe_node_time(leaf, t)?;
                let hw = self.sensor_params.hw_read(t);
                let SensorNode::Conventional(sensor) = &mut self.sensor else {
                    unreachable!("scheme/sensor mismatch");
                };
                let (pending, msg) = sensor.start_exchange(k, hw)?;
                self.pending_exchanges.insert(k, pending);
                self.send_up(leaf - 1, msg, t);
            }
        }
        Ok(())
    }

    fn on_measurement(&mut self, idx: usize, t: f64) -> Result<(), SimError> {
        let leaf = self.leaf();
        self.observe_node_time(leaf, t)?;
        let hw = self.sensor_params.hw_read(t);
        let link = leaf - 1;
        match &mut self.sensor {
            SensorNode::Reverse(sensor) => {
                let reports = sensor.on_measurement(idx as u64, Vec::new(), hw)?;
                for r in reports {
                    self.send_up(link, Message::Report(r), t);
                }
            }
            SensorNode::Conventional(sensor) => {
                let msg = sensor.on_measurement(idx as u64, Vec::new(), hw)?;
                self.send_up(link, msg, t);
            }
        }
        Ok(())
    }

    fn on_end(&mut self, t: f64) -> Result<(), SimError> {
        let leaf = self.leaf();
        if let SensorNode::Reverse(sensor) = &mut self.sensor {
            let hw = self.sensor_params.hw_read(t);
            if let Some(report) = sensor.flush_partial(hw)? {
                self.send_up(leaf - 1, Message::Report(report), t);
            }
        }
        Ok(())
    }

    fn on_deliver(&mut self, node: usize, msg: Message, t: f64) -> Result<(), SimError> {
        self.observe_node_time(node, t)?;
        self.counters[node].rx += 1;
        self.messages_received += 1;
        if node == 0 {
            self.head_receive(msg, t)
        } else if node == self.leaf() {
            self.sensor_receive(msg, t)
        } else {
            self.gateway_receive(node, msg, t)
        }
    }

    fn head_receive(&mut self, msg: Message, t: f64) -> Result<(), SimError> {
        match msg {
            Message::Report(report) => {
                let estimates = head_on_report(&mut self.head_ledger, &report, t);
                for (id, est) in estimates {
                    let true_time = self.schedule[id as usize];
                    self.metrics.meas_sample(t, true_time, est - true_time);
                }
            }
            Message::DataReport { record, .. } => {
                // Conventional schemes synchronize the sensor clock itself,
                // so the reported local time is the estimate.
                let true_time = self.schedule[record.measurement_id as usize];
                self.metrics
                    .meas_sample(t, true_time, record.local_time - true_time);
            }
            Message::Request { seq, .. } => {
                let t2 = t;
                let t3 = t + self.processing_delay;
                self.send_down(0, Message::Response { seq, t2, t3 }, t3);
            }
            other => unreachable!("head received {other}"),
        }
        Ok(())
    }

    fn sensor_receive(&mut self, msg: Message, t: f64) -> Result<(), SimError> {
        let hw = self.sensor_params.hw_read(t);
        match (&mut self.sensor, msg) {
            (SensorNode::Reverse(sensor), Message::Beacon(beacon)) => {
                let outcome = sensor.on_beacon(&beacon, hw)?;
                if let Some(ratio) = outcome.new_skew_ratio {
                    let err = ratio - self.true_ratio;
                    self.metrics.skew_sample(t, err);
                }
                let link = self.leaf() - 1;
                for r in outcome.reports {
                    self.send_up(link, Message::Report(r), t);
                }
            }
            (SensorNode::Conventional(sensor), Message::Response { seq, t2, t3 }) => {
                let pending = self
                    .pending_exchanges
                    .remove(&seq)
                    .expect("response matches a pending exchange");
                let ratio = sensor.complete_exchange(pending, t2, t3, hw)?;
                if let Some(ratio) = ratio {
                    let err = ratio - self.true_ratio;
                    self.metrics.skew_sample(t, err);
                }
            }
            (_, other) => unreachable!("sensor received {other}"),
        }
        Ok(())
    }

    fn gateway_receive(&mut self, node: usize, msg: Message, t: f64) -> Result<(), SimError> {
        let gi = node - 1;
        match &mut self.gateways[gi] {
            GatewayRuntime::Relay => {
                // Relaying adds per-hop delay and never touches the payload.
                match msg {
                    Message::Beacon(_) => self.send_down(node, msg, t),
                    Message::Report(_) | Message::DataReport { .. } => {
                        self.send_up(node - 1, msg, t)
                    }
                    other => unreachable!("relay gateway received {other}"),
                }
                Ok(())
            }
            GatewayRuntime::Translate(_) => self.translate_gateway_receive(gi, msg, t),
        }
    }

    fn translate_gateway_receive(
        &mut self,
        gi: usize,
        msg: Message,
        t: f64,
    ) -> Result<(), SimError> {
        let node = gi + 1;
        match msg {
            Message::Beacon(beacon) => {
                let flushed: Vec<Report> = {
                    let GatewayRuntime::Translate(gw) = &mut self.gateways[gi] else {
                        unreachable!()
                    };
                    let hw = gw.params.hw_read(t);
                    let obs = crate::estimators::OneWayObservation::new(beacon.departure, hw);
                    if let Some(ratio) = gw.estimator.update(obs)? {
                        gw.clock = gw.clock.apply_sync(hw, Some(ratio - 1.0), None)?;
                        gw.locked = true;
                    }
                    let arrival_local = gw.clock.logical_read(hw)?;
                    let first = gw.pending_exchange.is_none();
                    gw.pending_exchange = Some((beacon.departure, arrival_local));
                    if first && !gw.queued.is_empty() {
                        let (t1, t2) = (beacon.departure, arrival_local);
                        let t3 = arrival_local;
                        gw.queued
                            .drain(..)
                            .map(|bundle| Report::new(node as u32, bundle, t1, t2, t3))
                            .collect::<Result<Vec<_>, _>>()?
                    } else {
                        Vec::new()
                    }
                };
                for r in flushed {
                    self.send_up(node - 1, Message::Report(r), t);
                }
                Ok(())
            }
            Message::Report(_) => {
                let (forwarded, fallback) = {
                    let GatewayRuntime::Translate(gw) = &mut self.gateways[gi] else {
                        unreachable!()
                    };
                    let hw = gw.params.hw_read(t);
                    let t4_local = gw.clock.logical_read(hw)?;
                    let Message::Report(ref incoming) = msg else {
                        unreachable!()
                    };
                    // Acting as head for the downstream node: refresh the
                    // ledger from this report's embedded exchange, then
                    // translate the payload into this gateway's frame.
                    let offset = two_way_offset(
                        incoming.beacon_departure,
                        incoming.beacon_arrival_local,
                        incoming.departure_local,
                        t4_local,
                    );
                    gw.ledger = Some(SensorLedger {
                        last_offset_estimate: offset,
                        last_update_ref_time: t4_local,
                    });
                    let (translated, disposition) = gateway_forward(
                        GatewayMode::TimeTranslate,
                        &msg,
                        gw.ledger.as_ref(),
                    );
                    let Message::Report(translated) = translated else {
                        unreachable!()
                    };
                    let fallback = disposition == ForwardDisposition::MissingLedger;
                    // Acting as a normal sensor toward the upstream node:
                    // re-stamp the exchange legs from this gateway's own
                    // beacon bookkeeping.
                    match gw.pending_exchange {
                        Some((t1, t2)) => {
                            let t3 = gw.clock.logical_read(hw)?;
                            let report = Report::new(node as u32, translated.bundle, t1, t2, t3)?;
                            (Some(report), fallback)
                        }
                        None => {
                            gw.queued.push(translated.bundle);
                            (None, fallback)
                        }
                    }
                };
                if fallback {
                    self.translate_fallbacks += 1;
                }
                if let Some(report) = forwarded {
                    self.send_up(node - 1, Message::Report(report), t);
                }
                Ok(())
            }
            other => unreachable!("translate gateway received {other}"),
        }
    }

    fn finish(self) -> RunReport {
        let (n_tx, n_rx) = match &self.sensor {
            SensorNode::Reverse(s) => (s.n_tx(), s.n_rx()),
            SensorNode::Conventional(s) => (s.n_tx(), s.n_rx()),
        };
        let leaf = self.leaf();
        debug_assert_eq!(n_tx, self.counters[leaf].tx);
        debug_assert_eq!(n_rx, self.counters[leaf].rx);
        RunReport {
            skew_mse: (self.metrics.skew_n > 0)
                .then(|| self.metrics.skew_sq / self.metrics.skew_n as f64),
            meas_time_mse: (self.metrics.meas_n > 0)
                .then(|| self.metrics.meas_sq / self.metrics.meas_n as f64),
            n_skew_samples: self.metrics.skew_n,
            n_meas_samples: self.metrics.meas_n,
            n_tx,
            n_rx,
            messages_sent: self.messages_sent,
            messages_received: self.messages_received,
            translate_fallbacks: self.translate_fallbacks,
            skew_trace: self.metrics.skew_trace,
            meas_trace: self.metrics.meas_trace,
        }
    }
}
