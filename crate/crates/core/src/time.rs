//! Synchrophasor timestamps (second-of-century plus sub-second ticks).

use std::fmt;

use serde::{Deserialize, Serialize};

/// Sub-second ticks per second used throughout the pipeline; 20 ms is exactly 20 000 ticks.
pub const TIME_BASE: u32 = 1_000_000;

/// Reporting interval of the PMUs at 50 frames/s, in microseconds.
pub const FRAME_PERIOD_US: i64 = 20_000;

/// Nominal PMU reporting rate.
pub const PMU_RATE: u16 = 50;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Timestamp {
    pub soc: u32,
    /// Ticks of [`TIME_BASE`], always `< TIME_BASE`.
    pub frac: u32,
}

impl Timestamp {
    pub fn new(soc: u32, frac: u32) -> Self {
        debug_assert!(frac < TIME_BASE);
        Self { soc, frac }
    }

    pub fn from_micros(us: i64) -> Self {
        let soc = us.div_euclid(TIME_BASE as i64);
        let frac = us.rem_euclid(TIME_BASE as i64);
        Self {
            soc: soc as u32,
            frac: frac as u32,
        }
    }

    pub fn as_micros(&self) -> i64 {
        self.soc as i64 * TIME_BASE as i64 + self.frac as i64
    }

    /// Signed distance to `earlier` in microseconds.
    pub fn micros_since(&self, earlier: Timestamp) -> i64 {
        self.as_micros() - earlier.as_micros()
    }

    /// Whole 20 ms frames elapsed since `earlier` (truncating).
    pub fn frames_since(&self, earlier: Timestamp) -> i64 {
        self.micros_since(earlier) / FRAME_PERIOD_US
    }

    pub fn offset_micros(&self, us: i64) -> Self {
        Self::from_micros(self.as_micros() + us)
    }

    pub fn as_secs_f64(&self) -> f64 {
        self.soc as f64 + self.frac as f64 / TIME_BASE as f64
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.soc, self.frac)
    }
}
