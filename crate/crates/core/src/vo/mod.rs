//! Virtual objects: edge-side adapters that watch a PMU stream and decide how
//! often to report it upstream.

mod controller;
mod ingress;
mod object;
mod publish;

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::BusId;
use crate::time::Timestamp;

pub use controller::{
    compute_metrics, step_controller, Decision, Metrics, RateController, RateControllerState,
    StepOutcome,
};
pub use ingress::{FrameIngress, IngressEvent};
pub use object::{read_latest, ForwardPolicy, IngestOutcome, LatestHandle, VirtualObject, VoStats};
pub use publish::{Ack, MeasurementSink, NullSink, PublishStats, Publisher, SinkError};

#[derive(Debug, Error, PartialEq)]
pub enum VoError {
    #[error("sample at {got} is not after the previous input at {previous}")]
    NonMonotonic { previous: Timestamp, got: Timestamp },
    #[error("no measurement ingested yet")]
    NotReady,
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),
}

/// Output reporting rate of a VO.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RateLevel {
    Fps1,
    Fps10,
    Fps25,
    Fps50,
}

impl RateLevel {
    pub const ALL: [RateLevel; 4] = [RateLevel::Fps50, RateLevel::Fps25, RateLevel::Fps10, RateLevel::Fps1];

    pub fn fps(self) -> u16 {
        match self {
            RateLevel::Fps50 => 50,
            RateLevel::Fps25 => 25,
            RateLevel::Fps10 => 10,
            RateLevel::Fps1 => 1,
        }
    }

    /// Input frames per output frame at 50 frames/s input.
    pub fn decimation(self) -> u32 {
        50 / self.fps() as u32
    }

    /// One level slower; `Fps1` stays put.
    pub fn step_down(self) -> Self {
        match self {
            RateLevel::Fps50 => RateLevel::Fps25,
            RateLevel::Fps25 => RateLevel::Fps10,
            RateLevel::Fps10 | RateLevel::Fps1 => RateLevel::Fps1,
        }
    }

    pub fn from_fps(fps: u16) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.fps() == fps)
    }
}

impl fmt::Display for RateLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} fps", self.fps())
    }
}

/// Rate-change policy. Relative thresholds are fractions (0.02 = 2 %).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub alpha_up: f64,
    pub beta_up: f64,
    /// Hz/s.
    pub gamma_up: f64,
    pub beta_down: f64,
    /// Consecutive calm input frames required before each one-level step down.
    pub hold_frames: u32,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            alpha_up: 0.02,
            beta_up: 0.02,
            gamma_up: 5.0,
            beta_down: 0.001,
            hold_frames: 50,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), VoError> {
        let positive = [self.alpha_up, self.beta_up, self.gamma_up, self.beta_down]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !positive || self.hold_frames == 0 {
            return Err(VoError::InvalidThresholds(
                "all thresholds and hold_frames must be positive".into(),
            ));
        }
        if self.beta_down >= self.beta_up {
            return Err(VoError::InvalidThresholds("beta_down must be below beta_up".into()));
        }
        Ok(())
    }
}

/// Which metric forced the rate up.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trigger {
    #[default]
    None,
    Alpha,
    Beta,
    Gamma,
}

/// JSON record a VO publishes upstream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoMeasurement {
    pub vo_id: String,
    pub node: BusId,
    pub soc: u32,
    pub frac_us: u32,
    pub v_re: f64,
    pub v_im: f64,
    pub freq: f64,
    pub rocof: f64,
    pub rr: u16,
    pub trigger: Trigger,
}

impl VoMeasurement {
    pub fn timestamp(&self) -> Timestamp {
        Timestamp::new(self.soc, self.frac_us)
    }

    pub fn voltage(&self) -> Complex64 {
        Complex64::new(self.v_re, self.v_im)
    }

    /// Size on the wire as compact JSON.
    pub fn encoded_len(&self) -> usize {
        serde_json::to_vec(self).map(|v| v.len()).unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_order_and_decimation() {
        assert!(RateLevel::Fps50 > RateLevel::Fps25);
        assert!(RateLevel::Fps10 > RateLevel::Fps1);
        let d: Vec<u32> = RateLevel::ALL.iter().map(|l| l.decimation()).collect();
        assert_eq!(d, vec![1, 2, 5, 50]);
        assert_eq!(RateLevel::Fps1.step_down(), RateLevel::Fps1);
    }

    #[test]
    fn threshold_validation() {
        assert!(Thresholds::default().validate().is_ok());
        let t = Thresholds {
            beta_down: 0.05,
            ..Thresholds::default()
        };
        assert!(t.validate().is_err());
    }

    #[test]
    fn measurement_json_field_names() {
        let m = VoMeasurement {
            vo_id: "vo71".into(),
            node: "71".into(),
            soc: 1,
            frac_us: 20_000,
            v_re: 0.9,
            v_im: -0.1,
            freq: 50.0,
            rocof: 0.0,
            rr: 50,
            trigger: Trigger::Alpha,
        };
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        for k in ["vo_id", "node", "soc", "frac_us", "v_re", "v_im", "freq", "rocof", "rr", "trigger"] {
            assert!(keys.contains(&k), "missing {k}");
        }
        assert_eq!(v["trigger"], "alpha");
    }
}
