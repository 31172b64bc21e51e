//! Experiment configuration files.
//!
//! A single TOML document parameterizes single runs, sweeps, and estimator
//! benchmarks. Unknown keys are rejected so typos fail loudly instead of
//! silently running the wrong experiment. Annotated examples live under
//! `configs/` in the repository root.

use std::fs;
use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clock::ClockParams;
use crate::delay::{DelaySpec, DEFAULT_MEAN_DELAY};
use crate::protocol::{SchemeKind, SkewEstimatorKind};
use crate::sim::{
    BenchConfig, BenchEstimator, GatewayMode, LinkDelays, RunConfig, SimError, Topology,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config: {field}: {reason}")]
    Invalid { field: String, reason: String },
}

impl From<SimError> for ConfigError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig { field, reason } => ConfigError::Invalid {
                field: field.to_string(),
                reason,
            },
            other => ConfigError::Invalid {
                field: "config".to_string(),
                reason: other.to_string(),
            },
        }
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum SchemeName {
    #[serde(rename = "proposed")]
    Proposed,
    #[serde(rename = "two-way")]
    TwoWay,
    #[serde(rename = "two-way-gmlle")]
    TwoWayGmlle,
}

impl SchemeName {
    pub fn label(&self) -> &'static str {
        match self {
            SchemeName::Proposed => "proposed",
            SchemeName::TwoWay => "two-way",
            SchemeName::TwoWayGmlle => "two-way-gmlle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum EstimatorName {
    #[serde(rename = "cr")]
    Cr,
    #[serde(rename = "rls")]
    Rls,
    #[serde(rename = "mle")]
    Mle,
}

impl From<EstimatorName> for SkewEstimatorKind {
    fn from(e: EstimatorName) -> Self {
        match e {
            EstimatorName::Cr => SkewEstimatorKind::Cr,
            EstimatorName::Rls => SkewEstimatorKind::Rls,
            EstimatorName::Mle => SkewEstimatorKind::Mle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum BenchEstimatorName {
    #[serde(rename = "mle")]
    Mle,
    #[serde(rename = "cr")]
    Cr,
    #[serde(rename = "rls")]
    Rls,
    #[serde(rename = "gmlle")]
    Gmlle,
}

impl From<BenchEstimatorName> for BenchEstimator {
    fn from(e: BenchEstimatorName) -> Self {
        match e {
            BenchEstimatorName::Mle => BenchEstimator::Mle,
            BenchEstimatorName::Cr => BenchEstimator::Cr,
            BenchEstimatorName::Rls => BenchEstimator::Rls,
            BenchEstimatorName::Gmlle => BenchEstimator::Gmlle,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSection {
    pub skew: f64,
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewaySection {
    pub skew: f64,
    pub offset: f64,
}

/// One link of a gateway chain: either one spec for both directions or an
/// explicit down/up pair.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    pub delay: Option<DelaySpec>,
    pub down: Option<DelaySpec>,
    pub up: Option<DelaySpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum GatewayModeName {
    #[serde(rename = "relay")]
    Relay,
    #[serde(rename = "translate")]
    Translate,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    pub mode: GatewayModeName,
    pub links: Vec<LinkSection>,
    pub gateways: Vec<GatewaySection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub si: Vec<f64>,
    #[serde(default = "default_nbm_axis")]
    pub n_bm: Vec<u32>,
    pub schemes: Vec<SchemeName>,
    pub seeds: u32,
}

fn default_nbm_axis() -> Vec<u32> {
    vec![1]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    pub runs: u32,
    pub n_messages: u32,
    /// Message spacing; defaults to the top-level `si`.
    pub si: Option<f64>,
    pub estimators: Vec<BenchEstimatorName>,
}

/// The full experiment file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scheme: SchemeName,
    /// Skew estimator of the reverse scheme; ignored by the conventional
    /// schemes. Defaults to the cumulative ratio.
    pub estimator: Option<EstimatorName>,
    /// Measurements bundled per report in the reverse scheme.
    pub n_bm: Option<u32>,
    pub si: f64,
    pub horizon: Option<f64>,
    pub n_measurements: Option<u32>,
    pub warmup: Option<f64>,
    pub seed: Option<u64>,
    pub processing_delay: Option<f64>,
    /// Emit per-sample error traces alongside the run report.
    pub trace: Option<bool>,
    pub delay: DelaySpec,
    pub sensor: Option<SensorSection>,
    pub topology: Option<TopologySection>,
    pub sweep: Option<SweepSection>,
    pub bench: Option<BenchSection>,
}

/// A parsed configuration plus the hash of the file it came from, embedded
/// in every output row for provenance.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub hash: String,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<LoadedConfig, ConfigError> {
        let bytes = fs::read(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let text = String::from_utf8_lossy(&bytes);
        let config = Self::parse(&text)?;
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        let digest = hasher.finalize();
        let hash = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        Ok(LoadedConfig { config, hash })
    }

    pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn scheme_kind(&self, scheme: SchemeName, n_bm: u32) -> SchemeKind {
        match scheme {
            SchemeName::Proposed => SchemeKind::ProposedReverse {
                estimator: self.estimator.unwrap_or(EstimatorName::Cr).into(),
                bundle_size: n_bm,
            },
            SchemeName::TwoWay => SchemeKind::ConventionalTwoWay { with_gmlle: false },
            SchemeName::TwoWayGmlle => SchemeKind::ConventionalTwoWay { with_gmlle: true },
        }
    }

    fn topology(&self) -> Result<Topology, ConfigError> {
        let Some(section) = &self.topology else {
            return Ok(Topology::SingleHop);
        };
        let mut links = Vec::with_capacity(section.links.len());
        for (i, l) in section.links.iter().enumerate() {
            let link = match (l.delay, l.down, l.up) {
                (Some(both), None, None) => LinkDelays::symmetric(both),
                (None, Some(down), Some(up)) => LinkDelays { down, up },
                _ => {
                    return Err(invalid(
                        "topology.links",
                        format!("link {i}: give either `delay` or both `down` and `up`"),
                    ))
                }
            };
            links.push(link);
        }
        let gateway_params = section
            .gateways
            .iter()
            .map(|g| {
                if 1.0 + g.skew <= 0.0 {
                    return Err(invalid("topology.gateways.skew", "1 + skew must be positive"));
                }
                Ok(ClockParams::new(g.skew, g.offset))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Topology::GatewayChain {
            mode: match section.mode {
                GatewayModeName::Relay => GatewayMode::PacketRelay,
                GatewayModeName::Translate => GatewayMode::TimeTranslate,
            },
            links,
            gateway_params,
        })
    }

    fn sensor_params(&self) -> Result<ClockParams, ConfigError> {
        match &self.sensor {
            Some(s) => {
                if 1.0 + s.skew <= 0.0 {
                    return Err(invalid("sensor.skew", "1 + skew must be positive"));
                }
                Ok(ClockParams::new(s.skew, s.offset))
            }
            None => Ok(ClockParams::new(1e-4, 1.0)),
        }
    }

    /// Resolve one runnable configuration for the given scheme/interval/
    /// bundle/seed cell.
    pub fn run_config(
        &self,
        scheme: SchemeName,
        si: f64,
        n_bm: u32,
        seed: u64,
    ) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::new(self.scheme_kind(scheme, n_bm), si);
        cfg.seed = seed;
        cfg.delay = self.delay;
        cfg.sensor_params = self.sensor_params()?;
        cfg.topology = self.topology()?;
        if let Some(h) = self.horizon {
            cfg.horizon = h;
        }
        if let Some(n) = self.n_measurements {
            cfg.n_measurements = n;
        }
        if let Some(w) = self.warmup {
            cfg.warmup = w;
        }
        if let Some(p) = self.processing_delay {
            cfg.processing_delay = p;
        }
        cfg.record_traces = self.trace.unwrap_or(false);
        cfg.validate()?;
        Ok(cfg)
    }

    /// The single-run configuration of the top-level keys.
    pub fn base_run(&self, seed_override: Option<u64>) -> Result<RunConfig, ConfigError> {
        self.run_config(
            self.scheme,
            self.si,
            self.n_bm.unwrap_or(1),
            seed_override.or(self.seed).unwrap_or(1),
        )
    }

    /// All sweep cells in deterministic order: schemes, then intervals,
    /// then bundle sizes, then seeds. Conventional schemes ignore bundling,
    /// so their bundle axis collapses to one cell.
    pub fn sweep_cells(
        &self,
        seed_override: Option<u64>,
    ) -> Result<Vec<SweepCell>, ConfigError> {
        let section = self
            .sweep
            .as_ref()
            .ok_or_else(|| invalid("sweep", "section required by the sweep command"))?;
        if section.si.is_empty() {
            return Err(invalid("sweep.si", "axis must not be empty"));
        }
        if section.n_bm.is_empty() {
            return Err(invalid("sweep.n_bm", "axis must not be empty"));
        }
        if section.schemes.is_empty() {
            return Err(invalid("sweep.schemes", "axis must not be empty"));
        }
        if section.seeds == 0 {
            return Err(invalid("sweep.seeds", "need at least one seed"));
        }
        let seed_base = seed_override.or(self.seed).unwrap_or(1);
        let mut cells = Vec::new();
        for &scheme in &section.schemes {
            let n_bm_axis: &[u32] = match scheme {
                SchemeName::Proposed => &section.n_bm,
                _ => &[1],
            };
            for &si in &section.si {
                for &n_bm in n_bm_axis {
                    for s in 0..section.seeds {
                        cells.push(SweepCell {
                            scheme,
                            si,
                            n_bm,
                            seed: seed_base + s as u64,
                        });
                    }
                }
            }
        }
        Ok(cells)
    }

    pub fn bench_config(&self, seed_override: Option<u64>) -> Result<BenchConfig, ConfigError> {
        let section = self
            .bench
            .as_ref()
            .ok_or_else(|| invalid("bench", "section required by the bench command"))?;
        if section.estimators.is_empty() {
            return Err(invalid("bench.estimators", "axis must not be empty"));
        }
        let mut cfg = BenchConfig::new(self.delay);
        cfg.estimators = section.estimators.iter().map(|&e| e.into()).collect();
        cfg.si = section.si.unwrap_or(self.si);
        cfg.n_messages = section.n_messages;
        cfg.runs = section.runs;
        cfg.seed = seed_override.or(self.seed).unwrap_or(1);
        cfg.sensor_params = self.sensor_params()?;
        Ok(cfg)
    }
}

/// One cell of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub scheme: SchemeName,
    pub si: f64,
    pub n_bm: u32,
    pub seed: u64,
}

/// Default delay section used by generated example configs.
pub fn default_delay() -> DelaySpec {
    DelaySpec::GaussianIid {
        mean: DEFAULT_MEAN_DELAY,
        sigma: 1e-9,
    }
}
