//! Energy-efficient time synchronization for asymmetric sensor networks,
//! reproduced in a deterministic discrete-event simulator.
//!
//! The head node of a sensor network is mains-powered; the sensors are
//! battery-powered. This library implements a synchronization scheme built
//! around that asymmetry — sensors recover the head's clock frequency
//! passively from timestamped beacons (one-way skew estimation) and reply
//! only inside measurement reports, which double as the return leg of a
//! reverse two-way exchange so the head can track every sensor's clock
//! offset centrally. Conventional two-way exchange schemes, with and
//! without two-way skew estimation, are implemented alongside for
//! comparison, together with the estimators' theoretical bounds.
//!
//! Modules:
//!
//! * [`clock`] — hardware/logical clock models.
//! * [`delay`] — seeded one-way delay processes (deterministic, white
//!   Gaussian, AR(1)).
//! * [`estimators`] — one-way joint MLE, cumulative ratio, scalar RLS, the
//!   two-way midpoint estimator, and bound evaluators.
//! * [`protocol`] — messages and per-node state machines of the schemes.
//! * [`sim`] — the event-driven simulator, gateway chains, and the
//!   Monte-Carlo estimator benchmark.
//! * [`config`] — the TOML experiment-configuration schema.
//! * [`runner`] — `run` / `sweep` / `bench` commands and their CSV outputs.

pub mod clock;
pub mod config;
pub mod delay;
pub mod estimators;
pub mod protocol;
pub mod runner;
pub mod sim;

pub use clock::{ClockParams, LogicalClockState};
pub use delay::{DelaySampler, DelaySpec};
pub use protocol::{SchemeKind, SkewEstimatorKind};
pub use sim::{run_simulation, RunConfig, RunReport};
