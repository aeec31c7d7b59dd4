//! VO side of the PMU link: TCP client with reconnect.

use std::io::Write;
use std::net::{SocketAddr, TcpStream};
use std::thread;
use std::time::Duration;

use adsse_core::codec::FrameStream;
use adsse_core::pipeline::{TraceRecorder, VoTrace};
use adsse_core::vo::{FrameIngress, IngressEvent, MeasurementSink, VirtualObject};

use crate::NetError;

#[derive(Clone, Copy, Debug)]
pub struct ClientOptions {
    /// Consecutive failed connects before giving up.
    pub reconnect_attempts: u32,
    pub backoff: Duration,
    /// A silent PMU link is treated as lost after this long.
    pub read_timeout: Duration,
}

impl Default for ClientOptions {
    fn default() -> Self {
        Self {
            reconnect_attempts: 5,
            backoff: Duration::from_millis(20),
            read_timeout: Duration::from_secs(5),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ClientStats {
    pub connections: u64,
    pub reconnects: u64,
    pub decode_errors: u64,
    pub rejected: u64,
}

/// Drives `vo` from the PMU at `addr` until the PMU stops accepting
/// connections after having served this client at least once.
pub fn run_vo_client<S: MeasurementSink>(
    addr: SocketAddr,
    idcode: u16,
    mut vo: VirtualObject<S>,
    opts: ClientOptions,
) -> Result<(VoTrace, ClientStats, VirtualObject<S>), NetError> {
    let mut rec = TraceRecorder::new(vo.id().to_string(), vo.node().to_string(), idcode);
    let mut ingress = FrameIngress::new(idcode);
    let mut stats = ClientStats::default();
    let mut failures = 0u32;
    loop {
        let stream = match TcpStream::connect(addr) {
            Ok(s) => s,
            Err(e) => {
                failures += 1;
                if failures > opts.reconnect_attempts {
                    if stats.connections == 0 {
                        return Err(NetError::Connect(addr, e));
                    }
                    break;
                }
                log::debug!("{}: connect to {addr} failed ({e}), retry {failures}", vo.id());
                thread::sleep(opts.backoff * failures);
                continue;
            }
        };
        ingress.reset();
        let mut frames = 0u64;
        let result = session(&stream, &mut ingress, &mut vo, &mut rec, &mut stats, opts, &mut frames);
        if frames == 0 {
            // Accepted and closed without serving anything: the PMU is winding down.
            failures += 1;
            if failures > opts.reconnect_attempts {
                break;
            }
            thread::sleep(opts.backoff * failures);
            continue;
        }
        failures = 0;
        if stats.connections > 0 {
            stats.reconnects += 1;
        }
        stats.connections += 1;
        if let Err(e) = result {
            log::info!("{}: link to {addr} lost: {e}", vo.id());
        }
    }
    let publish = vo.publisher().stats();
    Ok((rec.finish(publish), stats, vo))
}

fn session<S: MeasurementSink>(
    stream: &TcpStream,
    ingress: &mut FrameIngress,
    vo: &mut VirtualObject<S>,
    rec: &mut TraceRecorder,
    stats: &mut ClientStats,
    opts: ClientOptions,
    frames: &mut u64,
) -> Result<(), NetError> {
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(opts.read_timeout))?;
    let mut out = stream;
    out.write_all(&ingress.hello())?;
    for frame in FrameStream::new(stream.try_clone()?) {
        let frame = match frame {
            Ok(f) => f,
            Err(adsse_core::codec::StreamError::Decode(e)) => {
                stats.decode_errors += 1;
                log::warn!("{}: dropped undecodable frame: {e}", vo.id());
                continue;
            }
            Err(e) => return Err(NetError::Stream(e)),
        };
        *frames += 1;
        match ingress.on_frame(&frame) {
            IngressEvent::Configured(cmd) => out.write_all(&cmd)?,
            IngressEvent::Sample(s) => match vo.ingest(&s) {
                Ok(o) => rec.record(&s, &o),
                Err(e) => {
                    stats.rejected += 1;
                    log::warn!("{}: rejected sample: {e}", vo.id());
                }
            },
            IngressEvent::Ignored => {}
        }
    }
    Ok(())
}
