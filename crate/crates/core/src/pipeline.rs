//! In-process pipeline: PMU emulators → C37.118.2 bytes → VOs → coordinator → WLS.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{Deframer, EncodeError, StreamError};
use crate::config::{vo_id, ConfigError, LoadedScenario};
use crate::dsse::{
    build_model, pseudos_from_network, Coordinator, CoordinatorOptions, CoordinatorStats,
    DsseError, EstimationSnapshot, MeasurementModel,
};
use crate::grid::{run_scenario, GroundTruthSeries, ScenarioError};
use crate::pmu::{emulate_stream, stream_seed, PmuConfig, PmuError, PmuSession, SynchrophasorSample};
use crate::time::Timestamp;
use crate::vo::{
    ForwardPolicy, FrameIngress, IngestOutcome, IngressEvent, PublishStats, Publisher, Trigger,
    VirtualObject, VoError, VoMeasurement,
};
use crate::Real;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("simulation: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("simulation: {0}")]
    Pmu(#[from] PmuError),
    #[error("transport: {0}")]
    Transport(String),
    #[error("virtual object: {0}")]
    Vo(#[from] VoError),
    #[error("estimation: {0}")]
    Estimation(#[from] DsseError),
}

impl From<StreamError> for PipelineError {
    fn from(e: StreamError) -> Self {
        PipelineError::Transport(e.to_string())
    }
}

impl From<EncodeError> for PipelineError {
    fn from(e: EncodeError) -> Self {
        PipelineError::Transport(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Adaptive,
    FullRate,
}

impl RunMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RunMode::Adaptive => "adaptive",
            RunMode::FullRate => "full_rate",
        }
    }
}

impl std::fmt::Display for RunMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PmuStream {
    pub config: PmuConfig,
    pub samples: Vec<SynchrophasorSample>,
}

#[derive(Clone, Debug)]
pub struct Simulation<T> {
    pub truth: GroundTruthSeries<T>,
    pub streams: Vec<PmuStream>,
    pub seed: u64,
}

/// Ground truth and noisy PMU samples for a scenario.
pub fn simulate<T: Real>(cfg: &LoadedScenario, seed: Option<u64>) -> Result<Simulation<T>, PipelineError> {
    let scenario = cfg.scenario::<T>(seed)?;
    let truth = run_scenario(&scenario)?;
    let seed = scenario.noise_seed;
    let streams = cfg
        .pmu_configs()
        .into_iter()
        .map(|config| {
            let samples = emulate_stream(&truth, &config, stream_seed(seed, config.idcode))?;
            Ok(PmuStream { config, samples })
        })
        .collect::<Result<_, PipelineError>>()?;
    Ok(Simulation { truth, streams, seed })
}

/// Reporting-rate state after one input sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRecord {
    pub soc: u32,
    pub frac: u32,
    pub rr: u16,
    pub forwarded: bool,
    pub trigger: Trigger,
}

impl RateRecord {
    pub fn timestamp(&self) -> Timestamp {
        Timestamp::new(self.soc, self.frac)
    }
}

/// Everything one VO did during a run.
#[derive(Clone, Debug, PartialEq)]
pub struct VoTrace {
    pub vo_id: String,
    pub node: String,
    pub idcode: u16,
    pub inputs: u64,
    pub forwarded: Vec<VoMeasurement>,
    pub rates: Vec<RateRecord>,
    pub publish: PublishStats,
}

pub fn forward_policy(cfg: &LoadedScenario, idcode: u16, mode: RunMode) -> ForwardPolicy {
    match mode {
        RunMode::FullRate => ForwardPolicy::FullRate,
        RunMode::Adaptive => {
            let entry = cfg
                .file
                .pmus
                .iter()
                .find(|p| p.idcode == idcode)
                .expect("PMU from this scenario");
            ForwardPolicy::Adaptive(cfg.thresholds_for(entry))
        }
    }
}

/// Accumulates a [`VoTrace`] from ingest outcomes.
#[derive(Debug)]
pub struct TraceRecorder {
    trace: VoTrace,
}

impl TraceRecorder {
    pub fn new(vo_id: String, node: String, idcode: u16) -> Self {
        Self {
            trace: VoTrace {
                vo_id,
                node,
                idcode,
                inputs: 0,
                forwarded: Vec::new(),
                rates: Vec::new(),
                publish: PublishStats::default(),
            },
        }
    }

    pub fn record(&mut self, s: &SynchrophasorSample, out: &IngestOutcome) {
        self.trace.inputs += 1;
        self.trace.rates.push(RateRecord {
            soc: s.timestamp.soc,
            frac: s.timestamp.frac,
            rr: out.level.fps(),
            forwarded: out.forwarded.is_some(),
            trigger: out.trigger,
        });
        if let Some(m) = &out.forwarded {
            self.trace.forwarded.push(m.clone());
        }
    }

    pub fn finish(mut self, publish: PublishStats) -> VoTrace {
        self.trace.publish = publish;
        self.trace
    }
}

/// Streams one PMU through the codec into its VO, entirely in memory.
pub fn run_vo_inprocess(stream: &PmuStream, policy: ForwardPolicy) -> Result<VoTrace, PipelineError> {
    let node = stream.config.node.clone();
    let mut pmu = PmuSession::new(&stream.config, stream.samples.clone())?;
    let mut ingress = FrameIngress::new(stream.config.idcode);
    let mut vo = VirtualObject::new(vo_id(&node), node.clone(), policy, Publisher::new(Vec::new()))?;
    let mut rec = TraceRecorder::new(vo.id().to_string(), node, stream.config.idcode);

    // Both directions go through encode → deframe → decode, as on a socket.
    let mut to_vo = Deframer::default();
    let mut to_pmu = Deframer::default();
    to_pmu.push(&ingress.hello());
    loop {
        while let Some(frame) = to_pmu.next_frame() {
            if let Some(reply) = pmu.handle_frame(&frame?)? {
                to_vo.push(&reply);
            }
        }
        let sent = match pmu.next_data_frame()? {
            Some(bytes) => {
                to_vo.push(&bytes);
                true
            }
            None => false,
        };
        let mut received = false;
        while let Some(frame) = to_vo.next_frame() {
            received = true;
            match ingress.on_frame(&frame?) {
                IngressEvent::Configured(cmd) => to_pmu.push(&cmd),
                IngressEvent::Sample(s) => {
                    let out = vo.ingest(&s)?;
                    rec.record(&s, &out);
                }
                IngressEvent::Ignored => {}
            }
        }
        if !sent && !received && to_pmu.buffered() == 0 {
            if pmu.is_exhausted() {
                break;
            }
            return Err(PipelineError::Transport(format!(
                "PMU {} handshake stalled",
                stream.config.idcode
            )));
        }
    }
    let publish = vo.publisher().stats();
    Ok(rec.finish(publish))
}

/// Estimator model for a scenario: PMU voltage rows at the configured nodes,
/// pseudos from scheduled loads and generators, zero injections at junctions.
pub fn build_estimator<T: Real>(cfg: &LoadedScenario) -> Result<Arc<MeasurementModel<T>>, PipelineError> {
    let network = cfg.network.cast::<T>();
    let settings = &cfg.file.estimator;
    let pseudos = pseudos_from_network(&network, T::lit(settings.pseudo_fraction));
    let model = build_model(&network, &cfg.pmu_nodes(), &pseudos, settings.sigmas())?;
    Ok(Arc::new(model))
}

/// Orders the forwarded streams by timestamp, VO order breaking ties.
pub fn merge_forwarded(traces: &[VoTrace]) -> Vec<VoMeasurement> {
    let mut all: Vec<(Timestamp, usize, &VoMeasurement)> = traces
        .iter()
        .enumerate()
        .flat_map(|(i, t)| t.forwarded.iter().map(move |m| (m.timestamp(), i, m)))
        .collect();
    all.sort_by_key(|(ts, i, _)| (*ts, *i));
    all.into_iter().map(|(_, _, m)| m.clone()).collect()
}

pub fn estimate_stream<'a, T: Real>(
    model: Arc<MeasurementModel<T>>,
    opts: CoordinatorOptions,
    measurements: impl IntoIterator<Item = &'a VoMeasurement>,
) -> Result<(Vec<EstimationSnapshot<T>>, CoordinatorStats), DsseError> {
    let mut coord = Coordinator::new(model, opts)?;
    let mut snapshots = Vec::new();
    for m in measurements {
        snapshots.extend(coord.push(m)?);
    }
    snapshots.extend(coord.finish()?);
    Ok((snapshots, coord.stats()))
}

#[derive(Clone, Debug)]
pub struct RunOutput<T> {
    pub mode: RunMode,
    pub vos: Vec<VoTrace>,
    pub snapshots: Vec<EstimationSnapshot<T>>,
    pub coordinator: CoordinatorStats,
}

/// One full run in the given mode over already simulated PMU streams.
pub fn run_estimation<T: Real>(
    cfg: &LoadedScenario,
    model: Arc<MeasurementModel<T>>,
    streams: &[PmuStream],
    mode: RunMode,
) -> Result<RunOutput<T>, PipelineError> {
    let vos = streams
        .iter()
        .map(|s| run_vo_inprocess(s, forward_policy(cfg, s.config.idcode, mode)))
        .collect::<Result<Vec<_>, _>>()?;
    let merged = merge_forwarded(&vos);
    let (snapshots, coordinator) =
        estimate_stream(model, cfg.file.estimator.coordinator_options(), &merged)?;
    Ok(RunOutput {
        mode,
        vos,
        snapshots,
        coordinator,
    })
}
