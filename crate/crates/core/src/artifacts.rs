//! On-disk run outputs: JSON-lines recordings, CSV tables and plot data.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsse::MeasurementModel;
use crate::grid::{BusId, GroundTruthSeries, ScenarioError};
use crate::pipeline::{PmuStream, RateRecord, RunMode, RunOutput, VoTrace};
use crate::pmu::SampleRecord;
use crate::report::{ModeArtifacts, ReportError, SnapshotRecord};
use crate::time::{Timestamp, TIME_BASE};
use crate::vo::{Trigger, VoMeasurement};
use crate::Real;

pub const TRUTH_FILE: &str = "truth.csv";
pub const SAMPLES_FILE: &str = "samples.jsonl";
pub const SNAPSHOTS_FILE: &str = "snapshots.jsonl";
pub const FORWARDED_FILE: &str = "forwarded.jsonl";
pub const RATES_FILE: &str = "rates.csv";
pub const VOLTAGES_FILE: &str = "voltages.csv";
pub const CURRENTS_FILE: &str = "currents.csv";
pub const REPORT_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RATE_PLOT_FILE: &str = "plot_rates.csv";
pub const ESTIMATE_PLOT_FILE: &str = "plot_estimates.csv";

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {source}")]
    Json {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Truth {
        path: String,
        #[source]
        source: ScenarioError,
    },
    #[error(transparent)]
    Report(#[from] ReportError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Csv {
        path: path.display().to_string(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, ArtifactError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

pub fn mode_dir(out: &Path, mode: RunMode) -> PathBuf {
    out.join(mode.as_str())
}

pub fn write_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    items: impl IntoIterator<Item = &'a T>,
) -> Result<(), ArtifactError> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| ArtifactError::Io {
            path: path.display().to_string(),
            source: e.into(),
        })?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads JSON-lines. A malformed final line is treated as truncation and
/// reported as a warning; malformed lines elsewhere are errors.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<(Vec<T>, Option<String>), ArtifactError> {
    let r = BufReader::new(File::open(path).map_err(io_err(path))?);
    let lines: Vec<String> = r.lines().collect::<Result<_, _>>().map_err(io_err(path))?;
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    let mut out = Vec::new();
    for (n, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(v) => out.push(v),
            Err(_) if Some(n) == last => {
                return Ok((
                    out,
                    Some(format!("{}: truncated final line {} ignored", path.display(), n + 1)),
                ))
            }
            Err(source) => {
                return Err(ArtifactError::Json {
                    path: path.display().to_string(),
                    line: n + 1,
                    source,
                })
            }
        }
    }
    Ok((out, None))
}

/// Writes every stream's samples, ordered by timestamp then stream order.
pub fn write_samples(path: &Path, streams: &[PmuStream]) -> Result<usize, ArtifactError> {
    let mut recs: Vec<(Timestamp, usize, SampleRecord)> = streams
        .iter()
        .enumerate()
        .flat_map(|(i, st)| {
            st.samples
                .iter()
                .map(move |s| (s.timestamp, i, SampleRecord::new(&st.config, s)))
        })
        .collect();
    recs.sort_by_key(|(t, i, _)| (*t, *i));
    write_jsonl(path, recs.iter().map(|(_, _, r)| r))?;
    Ok(recs.len())
}

#[derive(Serialize, Deserialize)]
struct RateRow {
    vo_id: String,
    soc: u32,
    frac: u32,
    rr: u16,
    forwarded: bool,
    trigger: Trigger,
}

pub fn write_rates_csv(path: &Path, traces: &[VoTrace]) -> Result<(), ArtifactError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for t in traces {
        for r in &t.rates {
            w.serialize(RateRow {
                vo_id: t.vo_id.clone(),
                soc: r.soc,
                frac: r.frac,
                rr: r.rr,
                forwarded: r.forwarded,
                trigger: r.trigger,
            })
            .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

pub fn read_rates_csv(path: &Path) -> Result<BTreeMap<String, Vec<RateRecord>>, ArtifactError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut out: BTreeMap<String, Vec<RateRecord>> = BTreeMap::new();
    for row in r.deserialize::<RateRow>() {
        let row = row.map_err(csv_err(path))?;
        out.entry(row.vo_id).or_default().push(RateRecord {
            soc: row.soc,
            frac: row.frac,
            rr: row.rr,
            forwarded: row.forwarded,
            trigger: row.trigger,
        });
    }
    Ok(out)
}

fn write_tables(dir: &Path, records: &[SnapshotRecord]) -> Result<(), ArtifactError> {
    let vp = dir.join(VOLTAGES_FILE);
    let mut v = csv::Writer::from_writer(create(&vp)?);
    v.write_record(["soc", "frac", "bus", "v_mag", "v_angle", "v_re", "v_im"])
        .map_err(csv_err(&vp))?;
    let ip = dir.join(CURRENTS_FILE);
    let mut i = csv::Writer::from_writer(create(&ip)?);
    i.write_record(["soc", "frac", "branch", "i_re", "i_im", "i_mag"])
        .map_err(csv_err(&ip))?;
    for s in records {
        let (soc, frac) = (s.soc.to_string(), s.frac.to_string());
        for (bus, [re, im]) in &s.v {
            v.write_record([
                soc.as_str(),
                frac.as_str(),
                bus,
                &re.hypot(*im).to_string(),
                &im.atan2(*re).to_string(),
                &re.to_string(),
                &im.to_string(),
            ])
            .map_err(csv_err(&vp))?;
        }
        for (br, [re, im]) in &s.i {
            i.write_record([
                soc.as_str(),
                frac.as_str(),
                br,
                &re.to_string(),
                &im.to_string(),
                &re.hypot(*im).to_string(),
            ])
            .map_err(csv_err(&ip))?;
        }
    }
    v.flush().map_err(io_err(&vp))?;
    i.flush().map_err(io_err(&ip))
}

/// Converts a run into its recorded form and writes it under `<out>/<mode>/`.
pub fn write_mode<T: Real>(
    out: &Path,
    model: &MeasurementModel<T>,
    run: &RunOutput<T>,
) -> Result<ModeArtifacts, ArtifactError> {
    let art = mode_artifacts(model, run);
    let dir = mode_dir(out, run.mode);
    write_jsonl(&dir.join(SNAPSHOTS_FILE), &art.snapshots)?;
    write_jsonl(&dir.join(FORWARDED_FILE), &art.forwarded)?;
    write_rates_csv(&dir.join(RATES_FILE), &run.vos)?;
    write_tables(&dir, &art.snapshots)?;
    Ok(art)
}

/// The recorded form of a run, without touching the filesystem.
pub fn mode_artifacts<T: Real>(model: &MeasurementModel<T>, run: &RunOutput<T>) -> ModeArtifacts {
    ModeArtifacts {
        snapshots: run
            .snapshots
            .iter()
            .map(|s| SnapshotRecord::from_snapshot(model, s))
            .collect(),
        forwarded: crate::pipeline::merge_forwarded(&run.vos),
        rates: run
            .vos
            .iter()
            .map(|t| (t.vo_id.clone(), t.rates.clone()))
            .collect(),
    }
}

/// Reads `<out>/<mode>/` back; `None` when that mode was not run.
pub fn read_mode(out: &Path, mode: RunMode) -> Result<Option<(ModeArtifacts, Vec<String>)>, ArtifactError> {
    let dir = mode_dir(out, mode);
    if !dir.join(SNAPSHOTS_FILE).exists() {
        return Ok(None);
    }
    let mut warnings = Vec::new();
    let (snapshots, w1) = read_jsonl::<SnapshotRecord>(&dir.join(SNAPSHOTS_FILE))?;
    let (mut forwarded, w2) = read_jsonl::<VoMeasurement>(&dir.join(FORWARDED_FILE))?;
    warnings.extend(w1);
    warnings.extend(w2);
    forwarded.sort_by_key(|m| m.timestamp());
    let rates = read_rates_csv(&dir.join(RATES_FILE))?;
    Ok(Some((
        ModeArtifacts {
            snapshots,
            forwarded,
            rates,
        },
        warnings,
    )))
}

pub fn write_truth(path: &Path, truth: &GroundTruthSeries<f64>) -> Result<(), ArtifactError> {
    let mut w = create(path)?;
    truth.write_csv(&mut w).map_err(|source| ArtifactError::Truth {
        path: path.display().to_string(),
        source,
    })?;
    w.flush().map_err(io_err(path))
}

pub fn read_truth(path: &Path) -> Result<GroundTruthSeries<f64>, ArtifactError> {
    let f = File::open(path).map_err(io_err(path))?;
    GroundTruthSeries::read_csv(BufReader::new(f)).map_err(|source| ArtifactError::Truth {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ArtifactError> {
    let f = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|source| ArtifactError::Json {
        path: path.display().to_string(),
        line: source.line(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ArtifactError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| ArtifactError::Io {
        path: path.display().to_string(),
        source: e.into(),
    })?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

fn secs(start: Timestamp, ts: Timestamp) -> f64 {
    ts.micros_since(start) as f64 / TIME_BASE as f64
}

/// Rate trace with forwarded markers, one row per VO input.
pub fn write_rate_plot(
    path: &Path,
    start: Timestamp,
    mode: RunMode,
    art: &ModeArtifacts,
) -> Result<(), ArtifactError> {
    let mags: HashMap<(&str, Timestamp), f64> = art
        .forwarded
        .iter()
        .map(|m| ((m.vo_id.as_str(), m.timestamp()), m.voltage().norm()))
        .collect();
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["mode", "vo_id", "t", "rr", "forwarded", "trigger", "forwarded_v_mag"])
        .map_err(csv_err(path))?;
    for (vo, recs) in &art.rates {
        for r in recs {
            let mag = mags
                .get(&(vo.as_str(), r.timestamp()))
                .map(|m| m.to_string())
                .unwrap_or_default();
            let trig = serde_json::to_value(r.trigger)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default();
            w.write_record([
                mode.as_str(),
                vo,
                &secs(start, r.timestamp()).to_string(),
                &r.rr.to_string(),
                &r.forwarded.to_string(),
                &trig,
                &mag,
            ])
            .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Truth and estimated |V| per plot node at every truth timestamp; estimate
/// cells are empty where that mode had no snapshot.
pub fn write_estimate_plot(
    path: &Path,
    truth: &GroundTruthSeries<f64>,
    nodes: &[BusId],
    adaptive: Option<&ModeArtifacts>,
    full_rate: Option<&ModeArtifacts>,
) -> Result<(), ArtifactError> {
    let index = |a: Option<&ModeArtifacts>| -> HashMap<Timestamp, SnapshotRecord> {
        a.map(|a| a.snapshots.iter().map(|s| (s.timestamp(), s.clone())).collect())
            .unwrap_or_default()
    };
    let (ia, ifr) = (index(adaptive), index(full_rate));
    let start = truth.timestamps.first().copied().unwrap_or_default();
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["t", "bus", "truth_v_mag", "adaptive_v_mag", "full_rate_v_mag"])
        .map_err(csv_err(path))?;
    for (k, &ts) in truth.timestamps.iter().enumerate() {
        for node in nodes {
            let Some(b) = truth.bus_index(node) else { continue };
            let cell = |m: &HashMap<Timestamp, SnapshotRecord>| {
                m.get(&ts)
                    .and_then(|s| s.v_mag(node))
                    .map(|v| v.to_string())
                    .unwrap_or_default()
            };
            w.write_record([
                &secs(start, ts).to_string(),
                node,
                &truth.voltages[k][b].norm().to_string(),
                &cell(&ia),
                &cell(&ifr),
            ])
            .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}
