use std::sync::{Arc, RwLock};

use super::{
    Ack, Decision, MeasurementSink, Publisher, RateController, RateLevel, StepOutcome,
    Thresholds, Trigger, VoError, VoMeasurement,
};
use crate::grid::BusId;
use crate::pmu::SynchrophasorSample;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ForwardPolicy {
    Adaptive(Thresholds),
    /// Forward every input at 50 fps; the reference run.
    FullRate,
}

/// Shared view of the newest ingested sample, read by the `/latest` endpoint.
pub type LatestHandle = Arc<RwLock<Option<VoMeasurement>>>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct VoStats {
    pub inputs: u64,
    pub forwarded: u64,
    pub rejected: u64,
    pub resets: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IngestOutcome {
    pub forwarded: Option<VoMeasurement>,
    pub level: RateLevel,
    pub trigger: Trigger,
    pub ack: Option<Ack>,
    pub reset: bool,
}

pub struct VirtualObject<S> {
    id: String,
    node: BusId,
    policy: ForwardPolicy,
    controller: RateController,
    last_ts: Option<crate::time::Timestamp>,
    publisher: Publisher<S>,
    latest: LatestHandle,
    stats: VoStats,
}

impl<S: MeasurementSink> VirtualObject<S> {
    pub fn new(
        id: impl Into<String>,
        node: impl Into<BusId>,
        policy: ForwardPolicy,
        publisher: Publisher<S>,
    ) -> Result<Self, VoError> {
        let thresholds = match policy {
            ForwardPolicy::Adaptive(t) => {
                t.validate()?;
                t
            }
            ForwardPolicy::FullRate => Thresholds::default(),
        };
        Ok(Self {
            id: id.into(),
            node: node.into(),
            policy,
            controller: RateController::new(thresholds),
            last_ts: None,
            publisher,
            latest: Arc::new(RwLock::new(None)),
            stats: VoStats::default(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn node(&self) -> &BusId {
        &self.node
    }

    pub fn level(&self) -> RateLevel {
        match self.policy {
            ForwardPolicy::Adaptive(_) => self.controller.level(),
            ForwardPolicy::FullRate => RateLevel::Fps50,
        }
    }

    pub fn stats(&self) -> VoStats {
        self.stats
    }

    pub fn publisher(&self) -> &Publisher<S> {
        &self.publisher
    }

    pub fn into_publisher(self) -> Publisher<S> {
        self.publisher
    }

    pub fn latest_handle(&self) -> LatestHandle {
        Arc::clone(&self.latest)
    }

    fn record(&self, s: &SynchrophasorSample, rr: RateLevel, trigger: Trigger) -> VoMeasurement {
        VoMeasurement {
            vo_id: self.id.clone(),
            node: self.node.clone(),
            soc: s.timestamp.soc,
            frac_us: s.timestamp.frac,
            v_re: s.v.re,
            v_im: s.v.im,
            freq: s.freq,
            rocof: s.rocof,
            rr: rr.fps(),
            trigger,
        }
    }

    /// Processes one decoded input sample and publishes it if selected.
    pub fn ingest(&mut self, s: &SynchrophasorSample) -> Result<IngestOutcome, VoError> {
        let outcome = match self.policy {
            ForwardPolicy::Adaptive(_) => self.controller.step(s),
            ForwardPolicy::FullRate => self.full_rate_step(s),
        };
        let outcome = match outcome {
            Ok(o) => o,
            Err(e) => {
                self.stats.rejected += 1;
                return Err(e);
            }
        };
        self.last_ts = Some(s.timestamp);
        self.stats.inputs += 1;
        if outcome.reset {
            self.stats.resets += 1;
        }
        let m = self.record(s, outcome.level, outcome.trigger);
        *self.latest.write().unwrap_or_else(|p| p.into_inner()) = Some(m.clone());
        if outcome.decision == Decision::Suppress {
            return Ok(IngestOutcome {
                forwarded: None,
                level: outcome.level,
                trigger: outcome.trigger,
                ack: None,
                reset: outcome.reset,
            });
        }
        self.stats.forwarded += 1;
        let ack = self.publisher.publish(&m);
        Ok(IngestOutcome {
            forwarded: Some(m),
            level: outcome.level,
            trigger: outcome.trigger,
            ack: Some(ack),
            reset: outcome.reset,
        })
    }

    fn full_rate_step(&self, s: &SynchrophasorSample) -> Result<StepOutcome, VoError> {
        if let Some(prev) = self.last_ts {
            if s.timestamp <= prev {
                return Err(VoError::NonMonotonic {
                    previous: prev,
                    got: s.timestamp,
                });
            }
        }
        Ok(StepOutcome {
            decision: Decision::Forward,
            trigger: Trigger::None,
            level: RateLevel::Fps50,
            metrics: super::Metrics {
                alpha: 0.0,
                beta: 0.0,
                gamma: 0.0,
            },
            reset: false,
        })
    }

    /// Newest input sample with the current rate, regardless of decimation.
    pub fn serve_latest(&self) -> Result<VoMeasurement, VoError> {
        read_latest(&self.latest)
    }
}

/// Reads a [`LatestHandle`] shared with an HTTP endpoint.
pub fn read_latest(h: &LatestHandle) -> Result<VoMeasurement, VoError> {
    h.read()
        .unwrap_or_else(|p| p.into_inner())
        .clone()
        .ok_or(VoError::NotReady)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::{Timestamp, FRAME_PERIOD_US};
    use num_complex::Complex64;

    fn s(k: i64, mag: f64) -> SynchrophasorSample {
        SynchrophasorSample {
            timestamp: Timestamp::new(10, 0).offset_micros(k * FRAME_PERIOD_US),
            v: Complex64::new(mag, 0.0),
            freq: 50.0,
            rocof: 0.0,
        }
    }

    fn vo(policy: ForwardPolicy) -> VirtualObject<Vec<VoMeasurement>> {
        VirtualObject::new("vo31", "31", policy, Publisher::new(Vec::new())).unwrap()
    }

    #[test]
    fn latest_before_any_frame_is_not_ready() {
        assert_eq!(vo(ForwardPolicy::FullRate).serve_latest(), Err(VoError::NotReady));
    }

    #[test]
    fn latest_is_newest_input_during_suppression() {
        let mut v = vo(ForwardPolicy::Adaptive(Thresholds::default()));
        for k in 0..200 {
            v.ingest(&s(k, 1.0)).unwrap();
        }
        let out = v.ingest(&s(200, 1.0)).unwrap();
        assert!(out.forwarded.is_none());
        let latest = v.serve_latest().unwrap();
        assert_eq!(latest.timestamp(), s(200, 1.0).timestamp);
        assert_eq!(latest.rr, 1);
    }

    #[test]
    fn forwarded_published_once_with_rr_suppressed_never() {
        let mut v = vo(ForwardPolicy::Adaptive(Thresholds::default()));
        let mut forwarded = 0;
        for k in 0..300 {
            let out = v.ingest(&s(k, 1.0)).unwrap();
            if let Some(m) = out.forwarded {
                forwarded += 1;
                assert_eq!(m.rr, out.level.fps());
            }
        }
        assert_eq!(v.publisher().sink().len(), forwarded);
        assert_eq!(v.stats().forwarded as usize, forwarded);
        assert!(v.publisher().sink().iter().all(|m| m.vo_id == "vo31"));
    }

    #[test]
    fn full_rate_forwards_everything() {
        let mut v = vo(ForwardPolicy::FullRate);
        for k in 0..120 {
            assert!(v.ingest(&s(k, 1.0)).unwrap().forwarded.is_some());
        }
        assert!(v.ingest(&s(5, 1.0)).is_err());
        assert_eq!(v.stats().rejected, 1);
        assert_eq!(v.publisher().sink().len(), 120);
    }
}
