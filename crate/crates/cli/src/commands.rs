use std::fs;
use std::path::Path;

use adsse_core::artifacts::{
    mode_dir, read_json, read_mode, read_truth, write_estimate_plot, write_json, write_mode, write_rate_plot,
    write_samples, write_truth, ArtifactError, ESTIMATE_PLOT_FILE, MANIFEST_FILE, RATE_PLOT_FILE,
    REPORT_FILE, SAMPLES_FILE, TRUTH_FILE,
};
use adsse_core::config::{ConfigError, LoadedScenario};
use adsse_core::pipeline::{build_estimator, run_estimation, simulate as simulate_scenario, PipelineError, RunMode, RunOutput, Simulation};
use adsse_core::report::{compute_report, ComparisonReport, ModeArtifacts, ReportError};
use adsse_net::{run_sockets, NetError, Pacing, SocketOptions};
use anyhow::{anyhow, Context};

use crate::manifest::{Manifest, ManifestPmu, MANIFEST_SCHEMA_VERSION};
use crate::{ModeArg, PacingArg, ReportArgs, RunArgs, SimulateArgs, TransportArg};

pub const EXIT_IO: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_SIMULATION: u8 = 3;
pub const EXIT_TRANSPORT: u8 = 4;
pub const EXIT_ESTIMATION: u8 = 5;

/// An error with the process exit code of the stage that failed.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            error: error.into(),
        }
    }
}

fn pipeline_code(e: &PipelineError) -> u8 {
    match e {
        PipelineError::Config(_) => EXIT_CONFIG,
        PipelineError::Scenario(_) | PipelineError::Pmu(_) => EXIT_SIMULATION,
        PipelineError::Transport(_) | PipelineError::Vo(_) => EXIT_TRANSPORT,
        PipelineError::Estimation(_) => EXIT_ESTIMATION,
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::new(pipeline_code(&e), e)
    }
}

impl From<NetError> for Failure {
    fn from(e: NetError) -> Self {
        let code = e.pipeline().map_or(EXIT_TRANSPORT, pipeline_code);
        Failure::new(code, e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::new(EXIT_CONFIG, e)
    }
}

impl From<ArtifactError> for Failure {
    fn from(e: ArtifactError) -> Self {
        Failure::new(EXIT_IO, e)
    }
}

impl From<ReportError> for Failure {
    fn from(e: ReportError) -> Self {
        Failure::new(EXIT_IO, e)
    }
}

fn load(path: &Path) -> Result<LoadedScenario, Failure> {
    LoadedScenario::from_path(path)
        .with_context(|| format!("loading scenario {}", path.display()))
        .map_err(|e| Failure::new(EXIT_CONFIG, e))
}

fn prepare_out(out: &Path) -> Result<(), Failure> {
    fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(|e| Failure::new(EXIT_IO, e))
}

fn manifest(cfg: &LoadedScenario, path: &Path, sim: &Simulation<f64>, command: &str) -> Result<Manifest, Failure> {
    let start = cfg.scenario::<f64>(Some(sim.seed))?.start();
    Ok(Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        scenario: path.display().to_string(),
        scenario_name: cfg.file.name.clone(),
        seed: sim.seed,
        start_soc: start.soc,
        start_frac: start.frac,
        duration: cfg.file.duration,
        events: cfg.file.events.clone(),
        pmus: sim
            .streams
            .iter()
            .map(|s| ManifestPmu {
                idcode: s.config.idcode,
                node: s.config.node.clone(),
            })
            .collect(),
        plot_nodes: cfg.plot_nodes(),
        samples: sim.streams.iter().map(|s| s.samples.len()).sum(),
        modes: Vec::new(),
        transport: None,
        pacing: None,
        warnings: Vec::new(),
    })
}

fn simulate_into(args: &SimulateArgs, command: &str) -> Result<(LoadedScenario, Simulation<f64>, Manifest), Failure> {
    let cfg = load(&args.scenario)?;
    let sim = simulate_scenario::<f64>(&cfg, args.seed)?;
    prepare_out(&args.out)?;
    write_truth(&args.out.join(TRUTH_FILE), &sim.truth)?;
    write_samples(&args.out.join(SAMPLES_FILE), &sim.streams)?;
    let m = manifest(&cfg, &args.scenario, &sim, command)?;
    Ok((cfg, sim, m))
}

pub fn simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let (_, sim, m) = simulate_into(args, "simulate")?;
    write_json(&args.out.join(MANIFEST_FILE), &m)?;
    println!(
        "simulated {} s, {} truth steps, {} PMU samples (seed {}) -> {}",
        m.duration,
        sim.truth.timestamps.len(),
        m.samples,
        m.seed,
        args.out.display()
    );
    Ok(())
}

fn modes(arg: ModeArg) -> &'static [RunMode] {
    match arg {
        ModeArg::Adaptive => &[RunMode::Adaptive],
        ModeArg::FullRate => &[RunMode::FullRate],
        ModeArg::Both => &[RunMode::Adaptive, RunMode::FullRate],
    }
}

fn socket_options(cfg: &LoadedScenario, args: &RunArgs) -> SocketOptions {
    let pacing = match args.pacing {
        PacingArg::Realtime => Pacing::Realtime,
        PacingArg::Fast => Pacing::Fast,
    };
    let mut opts = SocketOptions::from_scenario(cfg, pacing);
    if let Some(p) = args.pmu_base_port {
        opts.pmu_base_port = p;
    }
    if let Some(a) = &args.ingress_addr {
        opts.ingress_addr = a.clone();
    }
    if let Some(a) = &args.latest_addr {
        opts.latest_addr = a.clone();
    }
    opts
}

fn run_warnings(run: &RunOutput<f64>) -> Vec<String> {
    let mut w = Vec::new();
    for t in &run.vos {
        if t.publish.dropped > 0 {
            w.push(format!(
                "{} {}: {} measurements dropped after retries",
                run.mode, t.vo_id, t.publish.dropped
            ));
        }
    }
    if run.coordinator.stale > 0 {
        w.push(format!("{}: {} stale measurements ignored", run.mode, run.coordinator.stale));
    }
    w
}

pub fn run(args: &RunArgs) -> Result<(), Failure> {
    let (cfg, sim, mut m) = simulate_into(&args.sim, "run")?;
    let model = build_estimator::<f64>(&cfg)?;
    let out = &args.sim.out;
    m.transport = Some(format!("{:?}", args.transport).to_lowercase());
    if args.transport == TransportArg::Sockets {
        m.pacing = Some(format!("{:?}", args.pacing).to_lowercase());
    } else if args.pacing == PacingArg::Realtime {
        log::warn!("--pacing realtime only applies to --transport sockets");
    }

    let mut adaptive = None;
    let mut full_rate = None;
    for &mode in modes(args.mode) {
        let run = match args.transport {
            TransportArg::Inprocess => run_estimation(&cfg, model.clone(), &sim.streams, mode)?,
            TransportArg::Sockets => {
                run_sockets(&cfg, model.clone(), &sim.streams, mode, &socket_options(&cfg, args))?.output
            }
        };
        prepare_out(&mode_dir(out, mode))?;
        let art = write_mode(out, &model, &run)?;
        m.warnings.extend(run_warnings(&run));
        m.modes.push(mode);
        match mode {
            RunMode::Adaptive => adaptive = Some(art),
            RunMode::FullRate => full_rate = Some(art),
        }
    }
    write_json(&out.join(MANIFEST_FILE), &m)?;
    let report = build_report(&m, &sim.truth, adaptive.as_ref(), full_rate.as_ref(), Vec::new())?;
    write_json(&out.join(REPORT_FILE), &report)?;
    write_plots(out, &m, &sim.truth, adaptive.as_ref(), full_rate.as_ref())?;
    print_summary(&report, out);
    Ok(())
}

fn build_report(
    m: &Manifest,
    truth: &adsse_core::GroundTruthSeries,
    adaptive: Option<&ModeArtifacts>,
    full_rate: Option<&ModeArtifacts>,
    read_warnings: Vec<String>,
) -> Result<ComparisonReport, Failure> {
    let mut warnings = m.warnings.clone();
    warnings.extend(read_warnings);
    Ok(compute_report(truth, m.start(), &m.events, adaptive, full_rate, warnings)?)
}

fn write_plots(
    out: &Path,
    m: &Manifest,
    truth: &adsse_core::GroundTruthSeries,
    adaptive: Option<&ModeArtifacts>,
    full_rate: Option<&ModeArtifacts>,
) -> Result<(), Failure> {
    let (mode, primary) = match (adaptive, full_rate) {
        (Some(a), _) => (RunMode::Adaptive, a),
        (None, Some(f)) => (RunMode::FullRate, f),
        (None, None) => return Ok(()),
    };
    write_rate_plot(&out.join(RATE_PLOT_FILE), m.start(), mode, primary)?;
    write_estimate_plot(&out.join(ESTIMATE_PLOT_FILE), truth, &m.plot_nodes, adaptive, full_rate)?;
    Ok(())
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

fn print_summary(r: &ComparisonReport, out: &Path) {
    println!(
        "forwarded frames: adaptive {} / full rate {}",
        opt(r.forwarded_total.adaptive),
        opt(r.forwarded_total.full_rate)
    );
    if let Some(b) = r.bandwidth_ratio {
        println!("bandwidth ratio: {b:.4}");
    }
    println!(
        "snapshots: adaptive {} / full rate {}",
        opt(r.snapshots.adaptive),
        opt(r.snapshots.full_rate)
    );
    for d in &r.detections {
        let hits: Vec<String> = d
            .latency_frames
            .iter()
            .map(|(vo, l)| format!("{vo}={}", opt(*l)))
            .collect();
        println!(
            "event {} {:?} at {} s: latency frames {}",
            d.breaker,
            d.edge,
            d.time,
            hits.join(" ")
        );
    }
    for w in &r.warnings {
        println!("warning: {w}");
    }
    println!("artifacts in {}", out.display());
}

pub fn report(args: &ReportArgs) -> Result<(), Failure> {
    let out = &args.out;
    let m: Manifest = read_json(&out.join(MANIFEST_FILE))?;
    if m.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(Failure::new(
            EXIT_CONFIG,
            anyhow!("manifest schema {} unsupported (expected {MANIFEST_SCHEMA_VERSION})", m.schema_version),
        ));
    }
    let truth = read_truth(&out.join(TRUTH_FILE))?;
    let mut warnings = Vec::new();
    let mut load_mode = |mode| -> Result<Option<ModeArtifacts>, Failure> {
        Ok(read_mode(out, mode)?.map(|(a, w)| {
            warnings.extend(w);
            a
        }))
    };
    let adaptive = load_mode(RunMode::Adaptive)?;
    let full_rate = load_mode(RunMode::FullRate)?;
    let report = build_report(&m, &truth, adaptive.as_ref(), full_rate.as_ref(), warnings)?;
    if args.write {
        write_json(&out.join(REPORT_FILE), &report)?;
    }
    let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::new(EXIT_IO, e))?;
    println!("{text}");
    Ok(())
}
