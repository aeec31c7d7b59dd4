use super::{RateLevel, Thresholds, Trigger, VoError};
use crate::pmu::SynchrophasorSample;
use crate::time::{Timestamp, FRAME_PERIOD_US};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    /// Relative |V| change against the previous input sample.
    pub alpha: f64,
    /// Relative |V| change against the last forwarded sample.
    pub beta: f64,
    /// |ROCOF|, Hz/s.
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateControllerState {
    pub current: RateLevel,
    pub last_input: Option<SynchrophasorSample>,
    pub last_forwarded: Option<SynchrophasorSample>,
    pub calm_count: u32,
    /// Timestamp of the last forwarded sample; the decimation grid is anchored here.
    pub phase_anchor: Option<Timestamp>,
}

impl Default for RateControllerState {
    fn default() -> Self {
        Self {
            current: RateLevel::Fps50,
            last_input: None,
            last_forwarded: None,
            calm_count: 0,
            phase_anchor: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Forward,
    Suppress,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub decision: Decision,
    pub trigger: Trigger,
    /// Level after this sample was processed.
    pub level: RateLevel,
    pub metrics: Metrics,
    /// History was discarded because of a gap in the input.
    pub reset: bool,
}

fn relative_change(v: f64, previous: Option<&SynchrophasorSample>) -> f64 {
    match previous {
        None => 0.0,
        Some(p) => {
            let base = p.v.norm();
            if base == 0.0 {
                f64::INFINITY
            } else {
                (v - base).abs() / base
            }
        }
    }
}

pub fn compute_metrics(state: &RateControllerState, sample: &SynchrophasorSample) -> Metrics {
    let mag = sample.v.norm();
    Metrics {
        alpha: relative_change(mag, state.last_input.as_ref()),
        beta: relative_change(mag, state.last_forwarded.as_ref()),
        gamma: sample.rocof.abs(),
    }
}

/// Pure transition of the reporting-rate state machine for one input sample.
pub fn step_controller(
    state: &RateControllerState,
    sample: &SynchrophasorSample,
    thresholds: &Thresholds,
) -> Result<(RateControllerState, StepOutcome), VoError> {
    let mut reset = false;
    let mut next = state.clone();
    if let Some(prev) = &state.last_input {
        let gap = sample.timestamp.micros_since(prev.timestamp);
        if gap <= 0 {
            return Err(VoError::NonMonotonic {
                previous: prev.timestamp,
                got: sample.timestamp,
            });
        }
        if gap > FRAME_PERIOD_US {
            next = RateControllerState::default();
            reset = true;
        }
    }

    let metrics = compute_metrics(&next, sample);
    let trigger = if metrics.alpha > thresholds.alpha_up {
        Trigger::Alpha
    } else if metrics.beta > thresholds.beta_up {
        Trigger::Beta
    } else if metrics.gamma > thresholds.gamma_up {
        Trigger::Gamma
    } else {
        Trigger::None
    };

    let decision = if trigger != Trigger::None {
        next.current = RateLevel::Fps50;
        next.calm_count = 0;
        Decision::Forward
    } else if next.last_forwarded.is_none() {
        // No history: this sample opens the stream and anchors the grid.
        Decision::Forward
    } else {
        if metrics.beta < thresholds.beta_down {
            next.calm_count += 1;
        } else {
            next.calm_count = 0;
        }
        if next.calm_count >= thresholds.hold_frames {
            next.current = next.current.step_down();
            next.calm_count = 0;
        }
        let anchor = next.phase_anchor.unwrap_or(sample.timestamp);
        let period = next.current.decimation() as i64 * FRAME_PERIOD_US;
        if sample.timestamp.micros_since(anchor) % period == 0 {
            Decision::Forward
        } else {
            Decision::Suppress
        }
    };

    next.last_input = Some(*sample);
    if decision == Decision::Forward {
        next.last_forwarded = Some(*sample);
        next.phase_anchor = Some(sample.timestamp);
    }
    Ok((
        next.clone(),
        StepOutcome {
            decision,
            trigger,
            level: next.current,
            metrics,
            reset,
        },
    ))
}

#[derive(Clone, Debug)]
pub struct RateController {
    state: RateControllerState,
    thresholds: Thresholds,
}

impl RateController {
    pub fn new(thresholds: Thresholds) -> Self {
        Self {
            state: RateControllerState::default(),
            thresholds,
        }
    }

    pub fn state(&self) -> &RateControllerState {
        &self.state
    }

    pub fn thresholds(&self) -> &Thresholds {
        &self.thresholds
    }

    pub fn level(&self) -> RateLevel {
        self.state.current
    }

    /// Rejected samples leave the state untouched.
    pub fn step(&mut self, sample: &SynchrophasorSample) -> Result<StepOutcome, VoError> {
        let (state, outcome) = step_controller(&self.state, sample, &self.thresholds)?;
        self.state = state;
        Ok(outcome)
    }
}
