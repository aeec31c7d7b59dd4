use std::sync::Arc;
use std::thread;

use adsse_core::config::{vo_id, LoadedScenario};
use adsse_core::dsse::{Coordinator, MeasurementModel};
use adsse_core::pipeline::{forward_policy, PipelineError, PmuStream, RunMode, RunOutput};
use adsse_core::pmu::PmuSession;
use adsse_core::vo::{Publisher, VirtualObject};
use adsse_core::Real;

use crate::{
    ClientOptions, ClientStats, HttpSink, IngressServer, LatestServer, NetError, Pacing, PmuServer,
    PmuServerOptions, PmuServerStats,
};

#[derive(Clone, Debug)]
pub struct SocketOptions {
    pub pacing: Pacing,
    /// PMU `i` listens on `base + i`; 0 picks free ports.
    pub pmu_base_port: u16,
    pub ingress_addr: String,
    pub latest_addr: String,
    pub max_retries: u32,
    pub client: ClientOptions,
}

impl SocketOptions {
    pub fn from_scenario(cfg: &LoadedScenario, pacing: Pacing) -> Self {
        let t = &cfg.file.transport;
        Self {
            pacing,
            pmu_base_port: t.pmu_base_port,
            ingress_addr: t.ingress_addr.clone(),
            latest_addr: t.latest_addr.clone(),
            max_retries: t.max_retries,
            client: ClientOptions {
                reconnect_attempts: t.reconnect_attempts,
                ..ClientOptions::default()
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct SocketRun<T> {
    pub output: RunOutput<T>,
    pub servers: Vec<PmuServerStats>,
    pub clients: Vec<ClientStats>,
}

/// One run over real sockets: a TCP server per PMU, a VO client thread per
/// PMU posting to the HTTP ingress, and the coordinator reading the ingress.
pub fn run_sockets<T: Real>(
    cfg: &LoadedScenario,
    model: Arc<MeasurementModel<T>>,
    streams: &[PmuStream],
    mode: RunMode,
    opts: &SocketOptions,
) -> Result<SocketRun<T>, NetError> {
    let mut servers = Vec::with_capacity(streams.len());
    for (i, s) in streams.iter().enumerate() {
        let addr = match opts.pmu_base_port {
            0 => "127.0.0.1:0".to_string(),
            base => {
                let port = u16::try_from(base as usize + i)
                    .map_err(|_| NetError::Http(format!("PMU port {base}+{i} out of range")))?;
                format!("127.0.0.1:{port}")
            }
        };
        let session = PmuSession::new(&s.config, s.samples.clone()).map_err(PipelineError::from)?;
        let server = PmuServer::spawn(
            &addr,
            session,
            PmuServerOptions {
                pacing: opts.pacing,
                drop_after: None,
            },
        )?;
        log::info!("PMU {} serving on {}", s.config.idcode, server.addr());
        servers.push(server);
    }

    let (ingress, rx) = IngressServer::spawn(&opts.ingress_addr)?;
    log::info!("coordinator ingress on {}", ingress.url());
    let coord_opts = cfg.file.estimator.coordinator_options();
    let coordinator = {
        let mut coord = Coordinator::new(model, coord_opts).map_err(PipelineError::from)?;
        thread::Builder::new().name("coordinator".into()).spawn(move || {
            let mut snapshots = Vec::new();
            for m in rx {
                snapshots.extend(coord.push(&m)?);
            }
            snapshots.extend(coord.finish()?);
            Ok::<_, adsse_core::dsse::DsseError>((snapshots, coord.stats()))
        })?
    };

    let mut vos = Vec::with_capacity(streams.len());
    let mut latest = Vec::with_capacity(streams.len());
    for s in streams {
        let node = s.config.node.clone();
        let publisher = Publisher::with_retries(HttpSink::new(ingress.url()), opts.max_retries);
        let vo = VirtualObject::new(vo_id(&node), node, forward_policy(cfg, s.config.idcode, mode), publisher)
            .map_err(PipelineError::from)?;
        latest.push((vo.id().to_string(), vo.latest_handle()));
        vos.push(vo);
    }
    let latest = LatestServer::spawn(&opts.latest_addr, latest)?;
    log::info!("VO /latest on {}", latest.url());

    let clients: Vec<_> = vos
        .into_iter()
        .zip(streams.iter().zip(&servers))
        .map(|(vo, (s, server))| {
            let addr = server.addr();
            let idcode = s.config.idcode;
            let client = opts.client;
            thread::Builder::new()
                .name(format!("{}-client", vo.id()))
                .spawn(move || crate::run_vo_client(addr, idcode, vo, client))
        })
        .collect::<Result<_, _>>()?;

    let mut traces = Vec::with_capacity(clients.len());
    let mut client_stats = Vec::with_capacity(clients.len());
    let mut first_err = None;
    for c in clients {
        match c.join() {
            Ok(Ok((trace, stats, _vo))) => {
                traces.push(trace);
                client_stats.push(stats);
            }
            Ok(Err(e)) => {
                first_err.get_or_insert(e);
            }
            Err(_) => {
                first_err.get_or_insert(NetError::Thread("VO client panicked".into()));
            }
        }
    }
    // Every POST has been acknowledged, so the channel holds all of them.
    ingress.stop();
    latest.stop();
    let estimated = coordinator
        .join()
        .map_err(|_| NetError::Thread("coordinator panicked".into()))?;

    let mut server_stats = Vec::with_capacity(servers.len());
    for s in servers {
        match s.shutdown() {
            Ok(st) => server_stats.push(st),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    let (snapshots, coordinator) = estimated.map_err(PipelineError::from)?;
    let dropped: u64 = traces.iter().map(|t| t.publish.dropped).sum();
    if dropped > 0 {
        log::warn!("{dropped} measurements could not be delivered to the coordinator");
    }
    Ok(SocketRun {
        output: RunOutput {
            mode,
            vos: traces,
            snapshots,
            coordinator,
        },
        servers: server_stats,
        clients: client_stats,
    })
}
