//! Quasi-static scenario stepping and ground-truth series.

use std::collections::HashMap;
use std::io::{Read, Write};

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::network::{BusId, NetworkModel};
use super::powerflow::{solve_power_flow, PowerFlowError};
use crate::time::{Timestamp, TIME_BASE};
use crate::Real;

/// Default start of every scenario: 2016-01-01T00:00:00Z as second-of-century.
pub const DEFAULT_START_SOC: u32 = 1_451_606_400;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("power flow failed at {timestamp}: {source}")]
    PowerFlow {
        timestamp: Timestamp,
        #[source]
        source: PowerFlowError,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BreakerEvent {
    #[serde(rename = "breaker")]
    pub breaker_id: String,
    /// Seconds from scenario start.
    pub open_time: f64,
    pub close_time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfilePoint {
    pub t: f64,
    pub f: f64,
}

/// Piecewise-linear frequency `f(t)`; constant before the first and after the last point.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyProfile {
    points: Vec<ProfilePoint>,
}

impl Default for FrequencyProfile {
    fn default() -> Self {
        Self::constant(50.0)
    }
}

impl FrequencyProfile {
    pub fn constant(f: f64) -> Self {
        Self {
            points: vec![ProfilePoint { t: 0.0, f }],
        }
    }

    pub fn new(points: Vec<ProfilePoint>) -> Result<Self, ScenarioError> {
        if points.is_empty() {
            return Ok(Self::default());
        }
        if points.iter().any(|p| !p.t.is_finite() || !p.f.is_finite()) {
            return Err(ScenarioError::Invalid("non-finite frequency profile point".into()));
        }
        if points.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(ScenarioError::Invalid(
                "frequency profile times must be strictly increasing".into(),
            ));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[ProfilePoint] {
        &self.points
    }

    fn segment(&self, t: f64) -> Option<(ProfilePoint, ProfilePoint)> {
        self.points
            .windows(2)
            .find(|w| t >= w[0].t && t < w[1].t)
            .map(|w| (w[0], w[1]))
    }

    pub fn frequency_at(&self, t: f64) -> f64 {
        match self.segment(t) {
            Some((a, b)) => a.f + (b.f - a.f) * (t - a.t) / (b.t - a.t),
            None if t < self.points[0].t => self.points[0].f,
            None => self.points[self.points.len() - 1].f,
        }
    }

    /// Right derivative of the profile, Hz/s.
    pub fn rocof_at(&self, t: f64) -> f64 {
        match self.segment(t) {
            Some((a, b)) => (b.f - a.f) / (b.t - a.t),
            None => 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Scenario<T> {
    pub network: NetworkModel<T>,
    /// Seconds.
    pub duration: f64,
    /// Seconds between samples.
    pub step: f64,
    pub start_soc: u32,
    pub events: Vec<BreakerEvent>,
    pub frequency_profile: FrequencyProfile,
    pub noise_seed: u64,
}

fn seconds_to_micros(s: f64) -> i64 {
    (s * TIME_BASE as f64).round() as i64
}

impl<T: Real> Scenario<T> {
    pub fn new(network: NetworkModel<T>, duration: f64) -> Self {
        Self {
            network,
            duration,
            step: 0.02,
            start_soc: DEFAULT_START_SOC,
            events: Vec::new(),
            frequency_profile: FrequencyProfile::default(),
            noise_seed: 0,
        }
    }

    pub fn step_micros(&self) -> i64 {
        seconds_to_micros(self.step)
    }

    pub fn step_count(&self) -> usize {
        (seconds_to_micros(self.duration) / self.step_micros()) as usize
    }

    pub fn start(&self) -> Timestamp {
        Timestamp::new(self.start_soc, 0)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return invalid(format!("duration must be positive, got {}", self.duration));
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return invalid(format!("step must be positive, got {}", self.step));
        }
        let step_us = self.step_micros();
        if step_us <= 0
            || (self.step * TIME_BASE as f64 - step_us as f64).abs() > 1e-6
            || TIME_BASE as i64 % step_us != 0
        {
            return invalid(format!("step {} s does not divide 1 s evenly", self.step));
        }
        for ev in &self.events {
            if !self
                .network
                .loads()
                .iter()
                .any(|l| l.breaker_id.as_deref() == Some(ev.breaker_id.as_str()))
            {
                return invalid(format!("event references unknown breaker {:?}", ev.breaker_id));
            }
            if !(0.0 <= ev.open_time && ev.open_time < ev.close_time && ev.close_time <= self.duration)
            {
                return invalid(format!(
                    "breaker {:?}: need 0 <= open_time < close_time <= duration",
                    ev.breaker_id
                ));
            }
        }
        Ok(())
    }

    /// Whether each load is connected at `offset_us` after the start.
    fn load_mask(&self, offset_us: i64) -> Vec<bool> {
        self.network
            .loads()
            .iter()
            .map(|load| {
                let Some(id) = &load.breaker_id else {
                    return true;
                };
                !self.events.iter().any(|ev| {
                    &ev.breaker_id == id
                        && offset_us >= seconds_to_micros(ev.open_time)
                        && offset_us < seconds_to_micros(ev.close_time)
                })
            })
            .collect()
    }
}

/// Per-step truth: bus voltages, frequency and ROCOF.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthSeries<T> {
    pub buses: Vec<BusId>,
    pub timestamps: Vec<Timestamp>,
    /// `voltages[step][bus]`, per unit.
    pub voltages: Vec<Vec<Complex<T>>>,
    pub frequency: Vec<f64>,
    pub rocof: Vec<f64>,
}

impl<T: Real> GroundTruthSeries<T> {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn bus_index(&self, bus: &str) -> Option<usize> {
        self.buses.iter().position(|b| b == bus)
    }

    pub fn index_of(&self, ts: Timestamp) -> Option<usize> {
        self.timestamps.binary_search(&ts).ok()
    }

    pub fn bus_series(&self, bus: usize) -> impl Iterator<Item = Complex<T>> + '_ {
        self.voltages.iter().map(move |row| row[bus])
    }

    /// Writes `soc,frac,bus,v_re,v_im,freq,rocof`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ScenarioError> {
        let mut out = csv::Writer::from_writer(w);
        for (k, ts) in self.timestamps.iter().enumerate() {
            for (b, bus) in self.buses.iter().enumerate() {
                let v = self.voltages[k][b];
                out.serialize(TruthRow {
                    soc: ts.soc,
                    frac: ts.frac,
                    bus: bus.clone(),
                    v_re: v.re.to_f64_lossy(),
                    v_im: v.im.to_f64_lossy(),
                    freq: self.frequency[k],
                    rocof: self.rocof[k],
                })?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TruthRow {
    soc: u32,
    frac: u32,
    bus: String,
    v_re: f64,
    v_im: f64,
    freq: f64,
    rocof: f64,
}

impl GroundTruthSeries<f64> {
    pub fn read_csv<R: Read>(r: R) -> Result<Self, ScenarioError> {
        let mut reader = csv::Reader::from_reader(r);
        let mut series = GroundTruthSeries {
            buses: Vec::new(),
            timestamps: Vec::new(),
            voltages: Vec::new(),
            frequency: Vec::new(),
            rocof: Vec::new(),
        };
        let mut bus_pos: HashMap<String, usize> = HashMap::new();
        for row in reader.deserialize::<TruthRow>() {
            let row = row?;
            let ts = Timestamp::new(row.soc, row.frac);
            if series.timestamps.last() != Some(&ts) {
                if series.timestamps.last().is_some_and(|last| *last > ts) {
                    return Err(ScenarioError::Invalid("truth rows out of order".into()));
                }
                series.timestamps.push(ts);
                series.voltages.push(Vec::with_capacity(series.buses.len()));
                series.frequency.push(row.freq);
                series.rocof.push(row.rocof);
            }
            let k = series.timestamps.len() - 1;
            if k == 0 {
                bus_pos.insert(row.bus.clone(), series.buses.len());
                series.buses.push(row.bus);
            } else if bus_pos.get(&row.bus) != Some(&series.voltages[k].len()) {
                return Err(ScenarioError::Invalid(format!(
                    "truth bus order differs at {ts} (bus {:?})",
                    row.bus
                )));
            }
            series.voltages[k].push(Complex::new(row.v_re, row.v_im));
        }
        if series.voltages.iter().any(|row| row.len() != series.buses.len()) {
            return Err(ScenarioError::Invalid("incomplete truth row".into()));
        }
        Ok(series)
    }
}

/// Steps the scenario at `step` spacing: breaker states resolved at each
/// timestamp, power flow solved, frequency and ROCOF sampled from the profile.
pub fn run_scenario<T: Real>(scenario: &Scenario<T>) -> Result<GroundTruthSeries<T>, ScenarioError> {
    scenario.validate()?;
    let steps = scenario.step_count();
    let step_us = scenario.step_micros();
    let start = scenario.start();
    let network = &scenario.network;

    let mut cache: HashMap<Vec<bool>, Vec<Complex<T>>> = HashMap::new();
    let mut series = GroundTruthSeries {
        buses: network.buses().to_vec(),
        timestamps: Vec::with_capacity(steps),
        voltages: Vec::with_capacity(steps),
        frequency: Vec::with_capacity(steps),
        rocof: Vec::with_capacity(steps),
    };
    for k in 0..steps {
        let offset = k as i64 * step_us;
        let ts = start.offset_micros(offset);
        let mask = scenario.load_mask(offset);
        let voltages = match cache.get(&mask) {
            Some(v) => v.clone(),
            None => {
                let active = network
                    .loads()
                    .iter()
                    .zip(&mask)
                    .filter_map(|(l, &on)| on.then_some(l));
                let sol = solve_power_flow(network, active).map_err(|source| {
                    ScenarioError::PowerFlow {
                        timestamp: ts,
                        source,
                    }
                })?;
                cache.insert(mask, sol.voltages.clone());
                sol.voltages
            }
        };
        let t = offset as f64 / TIME_BASE as f64;
        series.timestamps.push(ts);
        series.voltages.push(voltages);
        series.frequency.push(scenario.frequency_profile.frequency_at(t));
        series.rocof.push(scenario.frequency_profile.rocof_at(t));
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::network::parse_network;

    fn net() -> NetworkModel<f64> {
        parse_network(
            r#"{"schema_version":1,"base_voltage":4160,"base_power":5e6,"slack":"0",
            "buses":["0","1","2"],
            "branches":[{"id":"a","from":"0","to":"1","r":0.01,"x":0.02},
                        {"id":"b","from":"1","to":"2","r":0.01,"x":0.02}],
            "loads":[{"node":"1","p":0.2,"q":0.1},{"node":"2","p":0.3,"q":0.1,"breaker":"B2"}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn eventless_series_is_time_invariant() {
        let s = Scenario::new(net(), 1.0);
        let truth = run_scenario(&s).unwrap();
        assert_eq!(truth.len(), 50);
        assert!(truth.voltages.iter().all(|row| row == &truth.voltages[0]));
        assert!(truth.frequency.iter().all(|&f| f == 50.0));
        assert!(truth.rocof.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn breaker_step_lands_on_first_timestamp_at_or_after_event() {
        let mut s = Scenario::new(net(), 2.0);
        s.events.push(BreakerEvent {
            breaker_id: "B2".into(),
            open_time: 0.5,
            close_time: 1.01,
        });
        let truth = run_scenario(&s).unwrap();
        let v2: Vec<f64> = truth.bus_series(2).map(|v| v.norm()).collect();
        assert_eq!(v2[24], v2[0]);
        assert!(v2[25] > v2[24] + 1e-3, "voltage rises when the load drops");
        // 1.01 s falls between frames 50 and 51; closing takes effect at frame 51.
        assert_eq!(v2[50], v2[25]);
        assert_eq!(v2[51], v2[0]);
    }

    #[test]
    fn ramp_gives_constant_rocof() {
        let profile = FrequencyProfile::new(vec![
            ProfilePoint { t: 0.1, f: 50.0 },
            ProfilePoint { t: 0.12, f: 49.8 },
        ])
        .unwrap();
        let mut s = Scenario::new(net(), 0.2);
        s.frequency_profile = profile;
        let truth = run_scenario(&s).unwrap();
        assert_eq!(truth.rocof[4], 0.0);
        assert!((truth.rocof[5] + 10.0).abs() < 1e-9);
        assert_eq!(truth.rocof[6], 0.0);
        assert!((truth.frequency[6] - 49.8).abs() < 1e-12);
    }

    #[test]
    fn invalid_events_rejected() {
        let mut s = Scenario::new(net(), 1.0);
        s.events.push(BreakerEvent {
            breaker_id: "B2".into(),
            open_time: 0.8,
            close_time: 0.4,
        });
        assert!(matches!(run_scenario(&s), Err(ScenarioError::Invalid(_))));
        s.events[0] = BreakerEvent {
            breaker_id: "nope".into(),
            open_time: 0.1,
            close_time: 0.4,
        };
        assert!(matches!(run_scenario(&s), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn step_must_divide_one_second() {
        let mut s = Scenario::new(net(), 1.0);
        s.step = 0.03;
        assert!(s.validate().is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut s = Scenario::new(net(), 0.1);
        s.events.push(BreakerEvent {
            breaker_id: "B2".into(),
            open_time: 0.04,
            close_time: 0.08,
        });
        let truth = run_scenario(&s).unwrap();
        let mut buf = Vec::new();
        truth.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("soc,frac,bus,v_re,v_im,freq,rocof\n"));
        assert_eq!(GroundTruthSeries::read_csv(buf.as_slice()).unwrap(), truth);
    }
}
