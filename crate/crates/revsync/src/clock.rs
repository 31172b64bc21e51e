//! Hardware and logical clock models.
//!
//! Every node owns a free-running hardware clock that is an affine function
//! of reference time (the head node's clock), `T(t) = (1 + skew) * t + offset`,
//! and a logical clock derived from the hardware clock as a piecewise linear
//! function. Synchronization events start a new segment of the logical clock
//! with fresh skew/offset corrections; between events the segment parameters
//! are fixed.
//!
//! All timestamps are real-valued seconds in double precision relative to
//! simulation start. At a one-hour horizon the f64 ulp is ~4.5e-13 s, at
//! least three orders below any error this library needs to resolve.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum ClockError {
    /// A read or sync was requested before the current segment start, which
    /// signals an event-ordering bug in the caller.
    #[error("hardware time {requested} precedes current segment start {segment_start}")]
    TimeReversal { requested: f64, segment_start: f64 },
}

/// Parameters of a free-running hardware clock relative to the reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockParams {
    /// Normalized frequency difference (epsilon). Quartz oscillators sit at
    /// tens of ppm; `1 + skew` must be positive.
    pub skew: f64,
    /// Additive offset in seconds (theta).
    pub offset: f64,
}

impl ClockParams {
    /// A clock that reads exactly the reference time.
    pub const IDEAL: ClockParams = ClockParams {
        skew: 0.0,
        offset: 0.0,
    };

    pub fn new(skew: f64, offset: f64) -> Self {
        assert!(1.0 + skew > 0.0, "clock frequency ratio must be positive");
        ClockParams { skew, offset }
    }

    /// Frequency ratio of this clock to the reference, `R = 1 + skew`.
    pub fn frequency_ratio(&self) -> f64 {
        1.0 + self.skew
    }

    /// Hardware clock reading at reference time `t`.
    pub fn hw_read(&self, t: f64) -> f64 {
        (1.0 + self.skew) * t + self.offset
    }
}

/// The current segment of a logical clock.
///
/// Within a segment the logical reading at hardware time `T` is
///
/// ```text
/// L(T) = last_sync_logical_time + (T - last_sync_hw_time) / (1 + est_skew) - est_offset
/// ```
///
/// The argument is always the local hardware time, never reference time:
/// reference time is not observable at a sensor node. Only the latest
/// segment is retained; earlier history is never consulted again.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogicalClockState {
    /// Hardware time at which the latest synchronization occurred.
    pub last_sync_hw_time: f64,
    /// Logical reading at the sync point, before the `-est_offset` jump.
    pub last_sync_logical_time: f64,
    /// Skew estimate applied to the current segment.
    pub est_skew: f64,
    /// Offset estimate subtracted throughout the current segment.
    pub est_offset: f64,
}

impl LogicalClockState {
    /// A fresh logical clock that passes the hardware clock through
    /// unchanged, anchored at hardware time `hw_start`.
    pub fn passthrough(hw_start: f64) -> Self {
        LogicalClockState {
            last_sync_hw_time: hw_start,
            last_sync_logical_time: hw_start,
            est_skew: 0.0,
            est_offset: 0.0,
        }
    }

    /// Logical clock reading at hardware time `hw_time`.
    pub fn logical_read(&self, hw_time: f64) -> Result<f64, ClockError> {
        if hw_time < self.last_sync_hw_time {
            return Err(ClockError::TimeReversal {
                requested: hw_time,
                segment_start: self.last_sync_hw_time,
            });
        }
        Ok(self.last_sync_logical_time + (hw_time - self.last_sync_hw_time) / (1.0 + self.est_skew)
            - self.est_offset)
    }

    /// Start a new segment at `at_hw_time` with fresh corrections.
    ///
    /// An absent component is set to zero: a frequency-only sync clears the
    /// offset term and an offset-only sync clears the skew term. The logical
    /// reading is continuous across the boundary except for the explicit
    /// `-new_offset` jump.
    pub fn apply_sync(
        &self,
        at_hw_time: f64,
        new_skew: Option<f64>,
        new_offset: Option<f64>,
    ) -> Result<Self, ClockError> {
        let anchor = self.logical_read(at_hw_time)?;
        Ok(LogicalClockState {
            last_sync_hw_time: at_hw_time,
            last_sync_logical_time: anchor,
            est_skew: new_skew.unwrap_or(0.0),
            est_offset: new_offset.unwrap_or(0.0),
        })
    }
}
