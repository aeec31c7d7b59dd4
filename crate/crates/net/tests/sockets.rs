use std::path::PathBuf;
use std::time::Duration;

use adsse_core::config::{vo_id, LoadedScenario};
use adsse_core::pipeline::{build_estimator, forward_policy, run_estimation, run_vo_inprocess, simulate, RunMode};
use adsse_core::pmu::PmuSession;
use adsse_core::vo::{Publisher, VirtualObject, VoMeasurement};
use adsse_net::{
    run_sockets, run_vo_client, ClientOptions, IngressServer, LatestServer, Pacing, PmuServer,
    PmuServerOptions, SocketOptions,
};

fn scenario(name: &str) -> LoadedScenario {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/ieee13");
    LoadedScenario::from_path(root.join(name)).unwrap()
}

#[test]
fn socket_run_matches_inprocess_run() {
    let cfg = scenario("eventless.scenario.json");
    let sim = simulate::<f64>(&cfg, None).unwrap();
    let model = build_estimator::<f64>(&cfg).unwrap();
    let mut opts = SocketOptions::from_scenario(&cfg, Pacing::Fast);
    opts.pmu_base_port = 0;
    for mode in [RunMode::Adaptive, RunMode::FullRate] {
        let local = run_estimation(&cfg, model.clone(), &sim.streams, mode).unwrap();
        let net = run_sockets(&cfg, model.clone(), &sim.streams, mode, &opts).unwrap();
        assert_eq!(net.output.vos, local.vos, "{mode}");
        assert_eq!(net.output.snapshots, local.snapshots, "{mode}");
        assert!(net.clients.iter().all(|c| c.reconnects == 0 && c.decode_errors == 0));
        assert!(net.servers.iter().all(|s| s.frames_sent == 500));
    }
}

#[test]
fn client_resumes_after_disconnect_without_gap() {
    let cfg = scenario("eventless.scenario.json");
    let sim = simulate::<f64>(&cfg, None).unwrap();
    let stream = &sim.streams[1];
    let policy = forward_policy(&cfg, stream.config.idcode, RunMode::Adaptive);
    let expected = run_vo_inprocess(stream, policy).unwrap();

    let session = PmuSession::new(&stream.config, stream.samples.clone()).unwrap();
    let server = PmuServer::spawn(
        "127.0.0.1:0",
        session,
        PmuServerOptions {
            pacing: Pacing::Fast,
            drop_after: Some(137),
        },
    )
    .unwrap();
    let node = stream.config.node.clone();
    let vo = VirtualObject::new(vo_id(&node), node, policy, Publisher::new(Vec::<VoMeasurement>::new())).unwrap();
    let (trace, stats, vo) =
        run_vo_client(server.addr(), stream.config.idcode, vo, ClientOptions::default()).unwrap();
    let served = server.join().unwrap();

    assert_eq!(served.connections, 2);
    assert_eq!(stats.reconnects, 1);
    assert_eq!(vo.stats().resets, 0);
    assert_eq!(trace, expected);
    assert_eq!(vo.publisher().sink(), &expected.forwarded);
}

#[test]
fn client_without_server_reports_connect_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let vo = VirtualObject::new(
        "vo1",
        "1",
        adsse_core::vo::ForwardPolicy::FullRate,
        Publisher::new(Vec::<VoMeasurement>::new()),
    )
    .unwrap();
    let opts = ClientOptions {
        reconnect_attempts: 2,
        backoff: Duration::from_millis(1),
        ..ClientOptions::default()
    };
    let err = run_vo_client(addr, 1, vo, opts).err().expect("no server");
    assert!(err.to_string().contains("connect"), "{err}");
}

fn measurement(frac_us: u32) -> VoMeasurement {
    VoMeasurement {
        vo_id: "vo31".into(),
        node: "31".into(),
        soc: 1_000,
        frac_us,
        v_re: 0.987654321012345,
        v_im: -0.0123456789,
        freq: 50.001,
        rocof: -0.02,
        rr: 25,
        trigger: adsse_core::vo::Trigger::None,
    }
}

#[test]
fn ingress_round_trips_and_rejects_garbage() {
    let (server, rx) = IngressServer::spawn("127.0.0.1:0").unwrap();
    let m = measurement(40_000);
    let mut sink = adsse_net::HttpSink::new(server.url());
    adsse_core::vo::MeasurementSink::deliver(&mut sink, &m).unwrap();
    assert_eq!(rx.recv_timeout(Duration::from_secs(2)).unwrap(), m);

    let bad = ureq::post(&server.url()).send_string("{\"vo_id\": 3}");
    assert!(matches!(bad, Err(ureq::Error::Status(400, _))));
    let missing = ureq::get(&format!("http://{}/nothing", server.addr())).call();
    assert!(matches!(missing, Err(ureq::Error::Status(404, _))));
    server.stop();
    assert!(rx.recv().is_err());
}

#[test]
fn latest_endpoint_serves_newest_sample() {
    let handle = adsse_core::vo::LatestHandle::default();
    let server = LatestServer::spawn("127.0.0.1:0", vec![("vo31".into(), handle.clone())]).unwrap();
    let empty = ureq::get(&server.url()).call();
    assert!(matches!(empty, Err(ureq::Error::Status(503, _))));

    *handle.write().unwrap() = Some(measurement(60_000));
    let got: VoMeasurement = ureq::get(&format!("{}?vo=vo31", server.url()))
        .call()
        .unwrap()
        .into_json()
        .unwrap();
    assert_eq!(got, measurement(60_000));
    let unknown = ureq::get(&format!("{}?vo=vo99", server.url())).call();
    assert!(matches!(unknown, Err(ureq::Error::Status(404, _))));
    server.stop();
}
