//! Monte-Carlo benchmark of the skew estimators against their bounds.
//!
//! One-way estimators see timestamped messages departing every `si`
//! seconds; the two-way comparison estimator sees request/response
//! exchanges on the same spacing, each exchange costing two messages.
//! Curves are aligned by message budget: the two-way point after `j`
//! exchanges sits at budget `2 j`. Both directions of an exchange draw
//! from independent samplers of the same delay spec.
//!
//! Exchanges are built directly from the delay model, so at large noise
//! levels a round trip may come out non-causal; the estimator consumes the
//! timestamps regardless, exactly as the observation model assumes.

use rayon::prelude::*;

use crate::clock::ClockParams;
use crate::delay::{DelaySampler, DelaySpec, DEFAULT_MEAN_DELAY};
use crate::estimators::{
    cr_lower_bound, crlb_skew, CrEstimator, GmlleState, JointMleState, OneWayObservation,
    RlsEstimator, TwoWayExchange,
};

use super::{invalid, substream_seed, SimError};

const RUN_CHUNK: usize = 64;
const STREAM_ONEWAY: u64 = 0;
const STREAM_EXCHANGE_UP: u64 = 1;
const STREAM_EXCHANGE_DOWN: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchEstimator {
    Mle,
    Cr,
    Rls,
    Gmlle,
}

impl BenchEstimator {
    pub fn name(&self) -> &'static str {
        match self {
            BenchEstimator::Mle => "mle",
            BenchEstimator::Cr => "cr",
            BenchEstimator::Rls => "rls",
            BenchEstimator::Gmlle => "gmlle",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub estimators: Vec<BenchEstimator>,
    pub delay: DelaySpec,
    /// Message (and exchange) spacing in seconds.
    pub si: f64,
    /// One-way message budget; the two-way estimator gets `n_messages / 2`
    /// exchanges.
    pub n_messages: u32,
    pub runs: u32,
    pub seed: u64,
    pub sensor_params: ClockParams,
}

impl BenchConfig {
    pub fn new(delay: DelaySpec) -> Self {
        BenchConfig {
            estimators: vec![
                BenchEstimator::Mle,
                BenchEstimator::Cr,
                BenchEstimator::Rls,
                BenchEstimator::Gmlle,
            ],
            delay,
            si: 1.0,
            n_messages: 1000,
            runs: 10_000,
            seed: 1,
            sensor_params: ClockParams::new(1e-4, 1.0),
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.estimators.is_empty() {
            return Err(invalid("bench.estimators", "must not be empty".into()));
        }
        if !(self.si > 0.0 && self.si.is_finite()) {
            return Err(invalid("bench.si", format!("must be positive, got {}", self.si)));
        }
        if self.n_messages < 2 {
            return Err(invalid("bench.n_messages", "need at least 2 messages".into()));
        }
        if self.runs < 1 {
            return Err(invalid("bench.runs", "need at least 1 run".into()));
        }
        self.delay.validate()?;
        Ok(())
    }
}

/// Empirical MSE after a given number of messages, with the matching
/// theoretical bound: the Cramer-Rao lower bound of the joint estimate for
/// `mle`/`rls`/`gmlle` (at equal message budget) and the two-point bound
/// for `cr`. Bounds assume white Gaussian delay and are emitted unchanged
/// under AR(1) for reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchPoint {
    /// Messages consumed so far (two per exchange for `gmlle`).
    pub messages: u32,
    pub mse: f64,
    pub bound: f64,
}

#[derive(Debug, Clone)]
pub struct BenchCurve {
    pub estimator: BenchEstimator,
    pub points: Vec<BenchPoint>,
}

struct PartialSums {
    oneway: Vec<f64>,
    gmlle: Vec<f64>,
}

/// Run the Monte-Carlo benchmark. Deterministic for a given config; runs
/// execute in parallel but accumulate in fixed chunk order, so results are
/// bit-exact regardless of thread scheduling.
pub fn estimator_benchmark(cfg: &BenchConfig) -> Result<Vec<BenchCurve>, SimError> {
    cfg.validate()?;
    let n = cfg.n_messages as usize;
    let n_exchanges = n / 2;
    let departures: Vec<f64> = (0..n).map(|k| k as f64 * cfg.si).collect();
    let ratio = cfg.sensor_params.frequency_ratio();

    let want = |e: BenchEstimator| cfg.estimators.contains(&e);
    let want_oneway =
        want(BenchEstimator::Mle) || want(BenchEstimator::Cr) || want(BenchEstimator::Rls);
    let want_gmlle = want(BenchEstimator::Gmlle) && n_exchanges >= 2;

    let run_indices: Vec<u32> = (0..cfg.runs).collect();
    let partials: Vec<[PartialSums; 3]> = run_indices
        .par_chunks(RUN_CHUNK)
        .map(|chunk| {
            let mut sums = [
                PartialSums::zeros(n, n_exchanges),
                PartialSums::zeros(n, n_exchanges),
                PartialSums::zeros(n, n_exchanges),
            ];
            for &run in chunk {
                let errors = single_run(cfg, &departures, ratio, run, want_oneway, want_gmlle);
                for (slot, e) in sums.iter_mut().zip(errors.iter()) {
                    slot.add(e);
                }
            }
            sums
        })
        .collect();

    let mut totals = [
        PartialSums::zeros(n, n_exchanges),
        PartialSums::zeros(n, n_exchanges),
        PartialSums::zeros(n, n_exchanges),
    ];
    for chunk in &partials {
        for (t, c) in totals.iter_mut().zip(chunk.iter()) {
            t.add(c);
        }
    }
    let mle_sums = &totals[0].oneway;
    let cr_sums = &totals[1].oneway;
    let rls_sums = &totals[2].oneway;
    let gmlle_sums = &totals[0].gmlle;

    let sigma = cfg.delay.sigma();
    let runs = cfg.runs as f64;
    let mut curves = Vec::new();
    for &kind in &cfg.estimators {
        let points = match kind {
            BenchEstimator::Mle | BenchEstimator::Rls => {
                let sums = if kind == BenchEstimator::Mle {
                    mle_sums
                } else {
                    rls_sums
                };
                (1..n)
                    .map(|i| BenchPoint {
                        messages: (i + 1) as u32,
                        mse: sums[i] / runs,
                        bound: crlb_skew(&departures[..=i], sigma).unwrap_or(f64::NAN),
                    })
                    .collect()
            }
            BenchEstimator::Cr => (1..n)
                .map(|i| BenchPoint {
                    messages: (i + 1) as u32,
                    mse: cr_sums[i] / runs,
                    bound: cr_lower_bound(departures[i] - departures[0], sigma)
                        .unwrap_or(f64::NAN),
                })
                .collect(),
            BenchEstimator::Gmlle => (1..n_exchanges)
                .map(|j| {
                    let budget = 2 * (j + 1);
                    BenchPoint {
                        messages: budget as u32,
                        mse: gmlle_sums[j] / runs,
                        bound: crlb_skew(&departures[..budget.min(n)], sigma)
                            .unwrap_or(f64::NAN),
                    }
                })
                .collect(),
        };
        curves.push(BenchCurve {
            estimator: kind,
            points,
        });
    }
    Ok(curves)
}

impl PartialSums {
    fn zeros(n: usize, n_exchanges: usize) -> Self {
        PartialSums {
            oneway: vec![0.0; n],
            gmlle: vec![0.0; n_exchanges],
        }
    }

    fn add(&mut self, other: &PartialSums) {
        for (a, b) in self.oneway.iter_mut().zip(&other.oneway) {
            *a += b;
        }
        for (a, b) in self.gmlle.iter_mut().zip(&other.gmlle) {
            *a += b;
        }
    }
}

/// Squared ratio errors of one run, indexed `[mle, cr, rls]` on the one-way
/// vectors; the gmlle vector rides on the first element.
fn single_run(
    cfg: &BenchConfig,
    departures: &[f64],
    ratio: f64,
    run: u32,
    want_oneway: bool,
    want_gmlle: bool,
) -> [PartialSums; 3] {
    let n = departures.len();
    let n_exchanges = n / 2;
    let theta = cfg.sensor_params.offset;
    let tag = |stream: u64| substream_seed(cfg.seed, ((run as u64) << 3) | stream);
    let mut out = [
        PartialSums::zeros(n, n_exchanges),
        PartialSums::zeros(n, n_exchanges),
        PartialSums::zeros(n, n_exchanges),
    ];
    if want_oneway {
        let mut sampler =
            DelaySampler::new(cfg.delay, tag(STREAM_ONEWAY)).expect("spec validated");
        let mut mle = JointMleState::new(cfg.delay.mean());
        let mut cr = CrEstimator::new();
        let mut rls = RlsEstimator::new(1.0);
        for (i, &td) in departures.iter().enumerate() {
            let obs = OneWayObservation::new(td, ratio * td + theta + sampler.sample());
            mle.ingest(obs);
            let cr_est = cr.update(obs).expect("distinct departures");
            let rls_est = rls.update(obs).expect("distinct departures");
            if i >= 1 {
                let e = mle.estimate().expect("two distinct points").skew_ratio - ratio;
                out[0].oneway[i] = e * e;
                let e = cr_est.expect("post-baseline") - ratio;
                out[1].oneway[i] = e * e;
                let e = rls_est.expect("post-baseline") - ratio;
                out[2].oneway[i] = e * e;
            }
        }
    }
    if want_gmlle {
        let mut up = DelaySampler::new(cfg.delay, tag(STREAM_EXCHANGE_UP)).expect("validated");
        let mut down =
            DelaySampler::new(cfg.delay, tag(STREAM_EXCHANGE_DOWN)).expect("validated");
        let mut gmlle = GmlleState::new();
        for j in 0..n_exchanges {
            let u = j as f64 * cfg.si;
            let arrive = u + up.sample();
            let back = arrive + down.sample();
            // Raw construction: heavy-tailed noise can make a round trip
            // non-causal, which the estimator tolerates by design.
            let ex = TwoWayExchange {
                t1: ratio * u + theta,
                t2: arrive,
                t3: arrive,
                t4: ratio * back + theta,
            };
            let est = gmlle.update(ex).expect("distinct midpoints");
            if j >= 1 {
                let e = est.expect("post-baseline") - ratio;
                out[0].gmlle[j] = e * e;
            }
        }
    }
    out
}

/// Default benchmark delay model from the experiment settings.
pub fn default_bench_delay(sigma: f64) -> DelaySpec {
    DelaySpec::GaussianIid {
        mean: DEFAULT_MEAN_DELAY,
        sigma,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> BenchConfig {
        let mut cfg = BenchConfig::new(default_bench_delay(1e-9));
        cfg.n_messages = 40;
        cfg.runs = 400;
        cfg
    }

    #[test]
    fn benchmark_is_deterministic_under_parallelism() {
        let cfg = small_cfg();
        let a = estimator_benchmark(&cfg).unwrap();
        let b = estimator_benchmark(&cfg).unwrap();
        assert_eq!(a.len(), b.len());
        for (ca, cb) in a.iter().zip(&b) {
            assert_eq!(ca.estimator, cb.estimator);
            for (pa, pb) in ca.points.iter().zip(&cb.points) {
                assert_eq!(pa.mse.to_bits(), pb.mse.to_bits());
            }
        }
    }

    #[test]
    fn curve_shapes_align_with_message_budget() {
        let cfg = small_cfg();
        let curves = estimator_benchmark(&cfg).unwrap();
        let find = |k: BenchEstimator| curves.iter().find(|c| c.estimator == k).unwrap();
        assert_eq!(find(BenchEstimator::Mle).points.len(), 39);
        assert_eq!(find(BenchEstimator::Gmlle).points.len(), 19);
        assert_eq!(find(BenchEstimator::Gmlle).points.last().unwrap().messages, 40);
        assert_eq!(find(BenchEstimator::Mle).points.last().unwrap().messages, 40);
    }

    #[test]
    fn single_run_is_a_degenerate_mse() {
        let mut cfg = small_cfg();
        cfg.runs = 1;
        let curves = estimator_benchmark(&cfg).unwrap();
        for c in curves {
            for p in c.points {
                assert!(p.mse.is_finite() && p.mse >= 0.0);
            }
        }
    }
}
