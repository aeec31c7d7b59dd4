//! PMU emulation: noisy synchrophasor streams sampled from ground truth.

mod session;

use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{BusId, GroundTruthSeries};
use crate::time::{Timestamp, FRAME_PERIOD_US, PMU_RATE};
use crate::Real;

pub use session::PmuSession;

#[derive(Debug, Error)]
pub enum PmuError {
    #[error("PMU node {0:?} is not present in the ground truth")]
    UnknownNode(BusId),
    #[error("invalid PMU configuration: {0}")]
    InvalidConfig(String),
    #[error("ground truth is not spaced at 20 ms (step {index})")]
    Spacing { index: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Encode(#[from] crate::codec::EncodeError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PmuConfig {
    pub idcode: u16,
    pub station_name: String,
    pub node: BusId,
    /// Phasor signal-to-noise ratio; `f64::INFINITY` disables phasor noise.
    pub snr_db: f64,
    /// Hz.
    pub sigma_freq: f64,
    /// Hz/s.
    pub sigma_rocof: f64,
    pub rate: u16,
}

impl PmuConfig {
    pub fn new(idcode: u16, node: impl Into<BusId>) -> Self {
        let node = node.into();
        Self {
            idcode,
            station_name: format!("PMU{node}"),
            node,
            snr_db: 70.0,
            sigma_freq: 0.001,
            sigma_rocof: 0.01,
            rate: PMU_RATE,
        }
    }

    /// Emits truth exactly.
    pub fn noiseless(mut self) -> Self {
        self.snr_db = f64::INFINITY;
        self.sigma_freq = 0.0;
        self.sigma_rocof = 0.0;
        self
    }

    pub fn validate(&self) -> Result<(), PmuError> {
        let bad = |m: String| Err(PmuError::InvalidConfig(m));
        if self.idcode == 0 || self.idcode == u16::MAX {
            return bad(format!("idcode {} outside 1..=65534", self.idcode));
        }
        if self.station_name.len() > 16 || !self.station_name.is_ascii() {
            return bad("station name must be at most 16 ASCII characters".into());
        }
        if !(self.snr_db > 0.0) {
            return bad(format!("snr_db must be positive, got {}", self.snr_db));
        }
        if !(self.sigma_freq >= 0.0 && self.sigma_freq.is_finite())
            || !(self.sigma_rocof >= 0.0 && self.sigma_rocof.is_finite())
        {
            return bad("noise sigmas must be finite and non-negative".into());
        }
        if self.rate != PMU_RATE {
            return bad(format!("rate must be {PMU_RATE} frames/s"));
        }
        Ok(())
    }

    /// Per-component standard deviation of the phasor noise at magnitude `v_mag`.
    pub fn phasor_sigma(&self, v_mag: f64) -> f64 {
        v_mag * 10f64.powf(-self.snr_db / 20.0) / std::f64::consts::SQRT_2
    }
}

/// One reported measurement: voltage phasor (p.u.), frequency, ROCOF.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynchrophasorSample {
    pub timestamp: Timestamp,
    pub v: Complex64,
    pub freq: f64,
    pub rocof: f64,
}

/// Derives an independent noise stream seed per PMU from a scenario seed.
pub fn stream_seed(scenario_seed: u64, idcode: u16) -> u64 {
    // splitmix64 finalizer
    let mut z = scenario_seed ^ ((idcode as u64) << 32) ^ 0x9E37_79B9_7F4A_7C15;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Samples the truth at `config.node` with additive Gaussian noise.
pub fn emulate_stream<T: Real>(
    truth: &GroundTruthSeries<T>,
    config: &PmuConfig,
    seed: u64,
) -> Result<Vec<SynchrophasorSample>, PmuError> {
    config.validate()?;
    let bus = truth
        .bus_index(&config.node)
        .ok_or_else(|| PmuError::UnknownNode(config.node.clone()))?;
    if let Some(index) = truth
        .timestamps
        .windows(2)
        .position(|w| w[1].micros_since(w[0]) != FRAME_PERIOD_US)
    {
        return Err(PmuError::Spacing { index: index + 1 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let samples = truth
        .timestamps
        .iter()
        .enumerate()
        .map(|(k, &timestamp)| {
            let tv = truth.voltages[k][bus];
            let v_true = Complex64::new(tv.re.to_f64_lossy(), tv.im.to_f64_lossy());
            let sigma = config.phasor_sigma(v_true.norm());
            // Fixed draw order keeps streams reproducible whatever the sigmas are.
            let (n_re, n_im, n_f, n_r) = (normal(), normal(), normal(), normal());
            SynchrophasorSample {
                timestamp,
                v: v_true + Complex64::new(sigma * n_re, sigma * n_im),
                freq: truth.frequency[k] + config.sigma_freq * n_f,
                rocof: truth.rocof[k] + config.sigma_rocof * n_r,
            }
        })
        .collect();
    Ok(samples)
}

/// JSON-lines record of one emitted sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub idcode: u16,
    pub node: BusId,
    pub soc: u32,
    pub frac: u32,
    pub v_re: f64,
    pub v_im: f64,
    pub freq: f64,
    pub rocof: f64,
}

impl SampleRecord {
    pub fn new(config: &PmuConfig, s: &SynchrophasorSample) -> Self {
        Self {
            idcode: config.idcode,
            node: config.node.clone(),
            soc: s.timestamp.soc,
            frac: s.timestamp.frac,
            v_re: s.v.re,
            v_im: s.v.im,
            freq: s.freq,
            rocof: s.rocof,
        }
    }

    pub fn sample(&self) -> SynchrophasorSample {
        SynchrophasorSample {
            timestamp: Timestamp::new(self.soc, self.frac),
            v: Complex64::new(self.v_re, self.v_im),
            freq: self.freq,
            rocof: self.rocof,
        }
    }
}

pub fn write_samples_jsonl<W: Write>(
    mut w: W,
    config: &PmuConfig,
    samples: &[SynchrophasorSample],
) -> Result<(), PmuError> {
    for s in samples {
        serde_json::to_writer(&mut w, &SampleRecord::new(config, s))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_samples_jsonl<R: BufRead>(r: R) -> Result<Vec<SampleRecord>, PmuError> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
