//! Comparison of adaptive and full-rate runs against ground truth.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsse::{EstimationSnapshot, MeasurementModel};
use crate::grid::{BreakerEvent, BusId, GroundTruthSeries};
use crate::pipeline::RateRecord;
use crate::time::{Timestamp, FRAME_PERIOD_US, TIME_BASE};
use crate::vo::{Trigger, VoMeasurement};
use crate::Real;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("snapshot at {0} has no ground-truth sample")]
    TimestampMismatch(Timestamp),
    #[error("snapshot at {ts} lacks bus {bus:?}")]
    MissingBus { ts: Timestamp, bus: BusId },
    #[error("{0}")]
    Invalid(String),
}

/// Serialized form of one snapshot (JSON-lines).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotRecord {
    pub soc: u32,
    pub frac: u32,
    /// Frames each PMU value was held, in PMU order.
    pub ages: Vec<u32>,
    /// Bus voltage `[re, im]`, per unit.
    pub v: BTreeMap<BusId, [f64; 2]>,
    /// Branch current `[re, im]`, per unit.
    pub i: BTreeMap<String, [f64; 2]>,
}

impl SnapshotRecord {
    pub fn from_snapshot<T: Real>(model: &MeasurementModel<T>, s: &EstimationSnapshot<T>) -> Self {
        let net = model.network();
        let c = |z: num_complex::Complex<T>| [z.re.to_f64_lossy(), z.im.to_f64_lossy()];
        Self {
            soc: s.timestamp.soc,
            frac: s.timestamp.frac,
            ages: s.ages.clone(),
            v: net
                .buses()
                .iter()
                .zip(&s.estimate.voltages)
                .map(|(b, &v)| (b.clone(), c(v)))
                .collect(),
            i: net
                .branches()
                .iter()
                .zip(&s.estimate.state.branch_currents)
                .map(|(b, &i)| (b.id.clone(), c(i)))
                .collect(),
        }
    }

    pub fn timestamp(&self) -> Timestamp {
        Timestamp::new(self.soc, self.frac)
    }

    pub fn v_mag(&self, bus: &str) -> Option<f64> {
        self.v.get(bus).map(|[re, im]| re.hypot(*im))
    }

    pub fn all_fresh(&self) -> bool {
        self.ages.iter().all(|&a| a == 0)
    }
}

/// Recorded outputs of one run mode, as stored on disk.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModeArtifacts {
    pub snapshots: Vec<SnapshotRecord>,
    pub forwarded: Vec<VoMeasurement>,
    /// Per VO id, one record per input sample.
    pub rates: BTreeMap<String, Vec<RateRecord>>,
}

impl ModeArtifacts {
    /// JSON bytes a VO would send for its forwarded measurements.
    pub fn forwarded_bytes(&self) -> u64 {
        self.forwarded.iter().map(|m| m.encoded_len() as u64).sum()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModePair<T> {
    pub adaptive: T,
    pub full_rate: T,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VoCounts {
    pub inputs: u64,
    pub forwarded: ModePair<Option<u64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateStep {
    /// Seconds from scenario start.
    pub t: f64,
    pub rr: u16,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    Open,
    Close,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventDetection {
    pub breaker: String,
    pub edge: Edge,
    /// Seconds from scenario start.
    pub time: f64,
    pub soc: u32,
    pub frac: u32,
    /// Input frames from the event frame to the first triggered RR=50
    /// forward, per VO; `None` when the VO did not trigger before the next event.
    pub latency_frames: BTreeMap<String, Option<i64>>,
    pub trigger: BTreeMap<String, Option<Trigger>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SharedComparison {
    /// Timestamps where every VO forwarded in adaptive mode and both modes have a snapshot.
    pub timestamps: u64,
    pub max_abs_delta_v_mag: Option<f64>,
    pub bit_identical: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    /// RMSE of |V| against truth over each mode's snapshots.
    pub rmse: BTreeMap<BusId, ModePair<Option<f64>>>,
    pub vos: BTreeMap<String, VoCounts>,
    pub forwarded_total: ModePair<Option<u64>>,
    /// Adaptive forwarded frames over full-rate forwarded frames.
    pub frame_ratio: Option<f64>,
    pub bytes: ModePair<Option<u64>>,
    /// Primary-mode bytes (adaptive if run, else full-rate) over full-rate bytes.
    pub bandwidth_ratio: Option<f64>,
    pub snapshots: ModePair<Option<u64>>,
    /// Adaptive RR changes per VO.
    pub rate_trace: BTreeMap<String, Vec<RateStep>>,
    pub detections: Vec<EventDetection>,
    pub shared: SharedComparison,
    pub warnings: Vec<String>,
}

fn event_frame(start: Timestamp, seconds: f64) -> Timestamp {
    let us = (seconds * TIME_BASE as f64).round() as i64;
    let frames = (us + FRAME_PERIOD_US - 1).div_euclid(FRAME_PERIOD_US);
    start.offset_micros(frames * FRAME_PERIOD_US)
}

fn rmse_of(
    truth: &GroundTruthSeries<f64>,
    truth_index: &HashMap<Timestamp, usize>,
    snaps: &[SnapshotRecord],
) -> Result<BTreeMap<BusId, f64>, ReportError> {
    let mut sums: BTreeMap<BusId, f64> = BTreeMap::new();
    for s in snaps {
        let ts = s.timestamp();
        let k = *truth_index.get(&ts).ok_or(ReportError::TimestampMismatch(ts))?;
        for (b, bus) in truth.buses.iter().enumerate() {
            let est = s.v_mag(bus).ok_or_else(|| ReportError::MissingBus {
                ts,
                bus: bus.clone(),
            })?;
            let d = est - truth.voltages[k][b].norm();
            *sums.entry(bus.clone()).or_default() += d * d;
        }
    }
    let n = snaps.len().max(1) as f64;
    Ok(sums.into_iter().map(|(b, s)| (b, (s / n).sqrt())).collect())
}

fn rate_steps(start: Timestamp, rates: &[RateRecord]) -> Vec<RateStep> {
    let mut out: Vec<RateStep> = Vec::new();
    for r in rates {
        if out.last().map(|l| l.rr) != Some(r.rr) {
            out.push(RateStep {
                t: r.timestamp().micros_since(start) as f64 / TIME_BASE as f64,
                rr: r.rr,
            });
        }
    }
    out
}

fn detections(
    start: Timestamp,
    events: &[BreakerEvent],
    rates: &BTreeMap<String, Vec<RateRecord>>,
) -> Vec<EventDetection> {
    let mut edges: Vec<(f64, &str, Edge)> = events
        .iter()
        .flat_map(|e| {
            [
                (e.open_time, e.breaker_id.as_str(), Edge::Open),
                (e.close_time, e.breaker_id.as_str(), Edge::Close),
            ]
        })
        .collect();
    edges.sort_by(|a, b| a.0.total_cmp(&b.0));
    let frames: Vec<Timestamp> = edges.iter().map(|e| event_frame(start, e.0)).collect();
    edges
        .iter()
        .enumerate()
        .map(|(n, &(time, breaker, edge))| {
            let at = frames[n];
            let until = frames.get(n + 1).copied();
            let mut latency_frames = BTreeMap::new();
            let mut trigger = BTreeMap::new();
            for (vo, recs) in rates {
                let hit = recs.iter().find(|r| {
                    let ts = r.timestamp();
                    ts >= at
                        && until.map_or(true, |u| ts < u)
                        && r.forwarded
                        && r.rr == 50
                        && r.trigger != Trigger::None
                });
                latency_frames.insert(vo.clone(), hit.map(|r| r.timestamp().frames_since(at)));
                trigger.insert(vo.clone(), hit.map(|r| r.trigger));
            }
            EventDetection {
                breaker: breaker.to_string(),
                edge,
                time,
                soc: at.soc,
                frac: at.frac,
                latency_frames,
                trigger,
            }
        })
        .collect()
}

/// Builds the report from recorded artifacts. Pure: the same inputs always
/// give the same report, whether they come from memory or from files.
pub fn compute_report(
    truth: &GroundTruthSeries<f64>,
    start: Timestamp,
    events: &[BreakerEvent],
    adaptive: Option<&ModeArtifacts>,
    full_rate: Option<&ModeArtifacts>,
    mut warnings: Vec<String>,
) -> Result<ComparisonReport, ReportError> {
    if adaptive.is_none() && full_rate.is_none() {
        return Err(ReportError::Invalid("no run artifacts".into()));
    }
    let truth_index: HashMap<Timestamp, usize> =
        truth.timestamps.iter().enumerate().map(|(k, &t)| (t, k)).collect();

    let rmse_a = adaptive.map(|a| rmse_of(truth, &truth_index, &a.snapshots)).transpose()?;
    let rmse_f = full_rate.map(|f| rmse_of(truth, &truth_index, &f.snapshots)).transpose()?;
    let rmse = truth
        .buses
        .iter()
        .map(|b| {
            (
                b.clone(),
                ModePair {
                    adaptive: rmse_a.as_ref().and_then(|m| m.get(b).copied()),
                    full_rate: rmse_f.as_ref().and_then(|m| m.get(b).copied()),
                },
            )
        })
        .collect();

    let mut vos: BTreeMap<String, VoCounts> = BTreeMap::new();
    for (mode, art) in [(0, adaptive), (1, full_rate)] {
        let Some(art) = art else { continue };
        for (vo, recs) in &art.rates {
            let c = vos.entry(vo.clone()).or_default();
            c.inputs = c.inputs.max(recs.len() as u64);
            let n = recs.iter().filter(|r| r.forwarded).count() as u64;
            let forwarded_here = art.forwarded.iter().filter(|m| &m.vo_id == vo).count() as u64;
            if forwarded_here != n {
                warnings.push(format!(
                    "{vo}: rate trace marks {n} forwards but {forwarded_here} measurements were recorded"
                ));
            }
            if mode == 0 {
                c.forwarded.adaptive = Some(n);
            } else {
                c.forwarded.full_rate = Some(n);
            }
        }
    }

    let count = |a: Option<&ModeArtifacts>| a.map(|a| a.forwarded.len() as u64);
    let forwarded_total = ModePair {
        adaptive: count(adaptive),
        full_rate: count(full_rate),
    };
    let frame_ratio = match (forwarded_total.adaptive, forwarded_total.full_rate) {
        (Some(a), Some(f)) if f > 0 => Some(a as f64 / f as f64),
        _ => None,
    };
    let bytes = ModePair {
        adaptive: adaptive.map(ModeArtifacts::forwarded_bytes),
        full_rate: full_rate.map(ModeArtifacts::forwarded_bytes),
    };
    let bandwidth_ratio = match (bytes.adaptive.or(bytes.full_rate), bytes.full_rate) {
        (Some(p), Some(f)) if f > 0 => Some(p as f64 / f as f64),
        _ => None,
    };
    if full_rate.is_none() {
        warnings.push("no full-rate run: bandwidth ratio unavailable".into());
    }

    let snapshots = ModePair {
        adaptive: adaptive.map(|a| a.snapshots.len() as u64),
        full_rate: full_rate.map(|f| f.snapshots.len() as u64),
    };

    for (name, art) in [("adaptive", adaptive), ("full_rate", full_rate)] {
        let Some(art) = art else { continue };
        let expected: BTreeSet<Timestamp> = art.forwarded.iter().map(|m| m.timestamp()).collect();
        let have: BTreeSet<Timestamp> = art.snapshots.iter().map(|s| s.timestamp()).collect();
        let covered = expected.intersection(&have).count();
        if covered < expected.len() {
            warnings.push(format!(
                "{name}: snapshots cover {covered} of {} forwarded timestamps",
                expected.len()
            ));
        }
    }

    let (rate_trace, detections) = match adaptive {
        Some(a) => (
            a.rates
                .iter()
                .map(|(vo, recs)| (vo.clone(), rate_steps(start, recs)))
                .collect(),
            detections(start, events, &a.rates),
        ),
        None => (BTreeMap::new(), Vec::new()),
    };

    let mut shared = SharedComparison {
        timestamps: 0,
        max_abs_delta_v_mag: None,
        bit_identical: true,
    };
    if let (Some(a), Some(f)) = (adaptive, full_rate) {
        let full: HashMap<Timestamp, &SnapshotRecord> =
            f.snapshots.iter().map(|s| (s.timestamp(), s)).collect();
        for sa in a.snapshots.iter().filter(|s| s.all_fresh()) {
            let Some(sf) = full.get(&sa.timestamp()) else { continue };
            shared.timestamps += 1;
            shared.bit_identical &= sa.v == sf.v && sa.i == sf.i;
            for bus in &truth.buses {
                if let (Some(x), Some(y)) = (sa.v_mag(bus), sf.v_mag(bus)) {
                    let d = (x - y).abs();
                    shared.max_abs_delta_v_mag = Some(shared.max_abs_delta_v_mag.map_or(d, |m: f64| m.max(d)));
                }
            }
        }
    }

    Ok(ComparisonReport {
        schema_version: REPORT_SCHEMA_VERSION,
        rmse,
        vos,
        forwarded_total,
        frame_ratio,
        bytes,
        bandwidth_ratio,
        snapshots,
        rate_trace,
        detections,
        shared,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_frame_rounds_up_to_frame_grid() {
        let s = Timestamp::new(100, 0);
        assert_eq!(event_frame(s, 8.2), Timestamp::new(108, 200_000));
        assert_eq!(event_frame(s, 8.21), Timestamp::new(108, 220_000));
        assert_eq!(event_frame(s, 0.0), s);
    }

    #[test]
    fn rate_steps_only_record_changes() {
        let s = Timestamp::new(0, 0);
        let rec = |k: u32, rr| RateRecord {
            soc: 0,
            frac: k * 20_000,
            rr,
            forwarded: true,
            trigger: Trigger::None,
        };
        let steps = rate_steps(s, &[rec(0, 50), rec(1, 50), rec(2, 25), rec(3, 25)]);
        assert_eq!(steps, vec![RateStep { t: 0.0, rr: 50 }, RateStep { t: 0.04, rr: 25 }]);
    }
}
