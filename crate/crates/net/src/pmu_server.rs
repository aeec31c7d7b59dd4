//! PMU emulator served over TCP.

use std::io::{self, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use adsse_core::codec::{Frame, FrameStream};
use adsse_core::pmu::PmuSession;
use adsse_core::time::FRAME_PERIOD_US;

use crate::{NetError, Pacing};

#[derive(Clone, Copy, Debug, Default)]
pub struct PmuServerOptions {
    pub pacing: Pacing,
    /// Close the first connection after this many data frames. Fault injection for tests.
    pub drop_after: Option<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PmuServerStats {
    pub connections: u64,
    pub frames_sent: u64,
}

pub struct PmuServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    join: JoinHandle<Result<PmuServerStats, NetError>>,
}

impl PmuServer {
    /// Binds `addr` and serves `session` to one client at a time until every
    /// sample has been sent, then closes the connection and stops listening.
    pub fn spawn(addr: &str, session: PmuSession, opts: PmuServerOptions) -> Result<Self, NetError> {
        let listener = TcpListener::bind(addr).map_err(|e| NetError::Bind(addr.to_string(), e))?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let join = thread::Builder::new()
            .name(format!("pmu-{}", session.idcode()))
            .spawn(move || serve(listener, session, opts, &flag))?;
        Ok(Self { addr, stop, join })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Waits until every sample has been served.
    pub fn join(self) -> Result<PmuServerStats, NetError> {
        self.join
            .join()
            .map_err(|_| NetError::Thread(format!("PMU server at {} panicked", self.addr)))?
    }

    /// Stops accepting clients, even with samples left, and waits for the thread.
    pub fn shutdown(self) -> Result<PmuServerStats, NetError> {
        self.stop.store(true, Ordering::SeqCst);
        // Wake a blocking accept; refused once the server has finished on its own.
        let _ = TcpStream::connect(self.addr);
        self.join()
    }
}

fn serve(
    listener: TcpListener,
    mut session: PmuSession,
    opts: PmuServerOptions,
    stop: &AtomicBool,
) -> Result<PmuServerStats, NetError> {
    let mut stats = PmuServerStats::default();
    let mut drop_after = opts.drop_after;
    while !session.is_exhausted() {
        let (stream, peer) = listener.accept()?;
        if stop.load(Ordering::SeqCst) {
            log::debug!("PMU {}: stopped with {} samples left", session.idcode(), session.sample_count() - session.cursor());
            break;
        }
        stats.connections += 1;
        log::debug!("PMU {}: client {peer} connected", session.idcode());
        let limit = drop_after.take();
        match serve_connection(&stream, &mut session, opts.pacing, limit, &mut stats) {
            Ok(()) => {}
            Err(e) => log::info!("PMU {}: client {peer} lost: {e}", session.idcode()),
        }
        session.disconnect();
    }
    log::debug!("PMU {}: all {} samples sent", session.idcode(), session.sample_count());
    Ok(stats)
}

fn serve_connection(
    stream: &TcpStream,
    session: &mut PmuSession,
    pacing: Pacing,
    limit: Option<usize>,
    stats: &mut PmuServerStats,
) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let (tx, rx) = mpsc::channel::<Frame>();
    let reader = stream.try_clone()?;
    let idcode = session.idcode();
    thread::Builder::new()
        .name(format!("pmu-{idcode}-rx"))
        .spawn(move || {
            for frame in FrameStream::new(reader) {
                match frame {
                    Ok(f) => {
                        if tx.send(f).is_err() {
                            break;
                        }
                    }
                    Err(e) => log::debug!("PMU {idcode}: bad command frame: {e}"),
                }
            }
        })?;

    let result = pump(stream, &rx, session, pacing, limit, stats);
    // Half-close and wait for the client to hang up so it reads every frame.
    let _ = stream.shutdown(Shutdown::Write);
    let deadline = Instant::now() + Duration::from_secs(2);
    while let Some(left) = deadline.checked_duration_since(Instant::now()) {
        if let Err(RecvTimeoutError::Disconnected) = rx.recv_timeout(left) {
            break;
        }
    }
    result
}

fn pump(
    mut out: &TcpStream,
    rx: &mpsc::Receiver<Frame>,
    session: &mut PmuSession,
    pacing: Pacing,
    limit: Option<usize>,
    stats: &mut PmuServerStats,
) -> io::Result<()> {
    let period = Duration::from_micros(FRAME_PERIOD_US as u64);
    let mut epoch: Option<(Instant, usize)> = None;
    let mut sent_here = 0usize;
    loop {
        // Block for commands only while idle.
        let first = if session.is_streaming() {
            rx.try_recv().ok()
        } else {
            match rx.recv_timeout(Duration::from_millis(100)) {
                Ok(f) => Some(f),
                Err(RecvTimeoutError::Timeout) => None,
                Err(RecvTimeoutError::Disconnected) => return Ok(()),
            }
        };
        for frame in first.into_iter().chain(rx.try_iter()) {
            if let Some(reply) = session.handle_frame(&frame).map_err(io::Error::other)? {
                out.write_all(&reply)?;
            }
        }
        if !session.is_streaming() {
            epoch = None;
            continue;
        }
        if pacing == Pacing::Realtime {
            let (t0, k0) = *epoch.get_or_insert((Instant::now(), session.cursor()));
            let due = t0 + period * (session.cursor() - k0) as u32;
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                thread::sleep(wait);
            }
        }
        let Some(bytes) = session.next_data_frame().map_err(io::Error::other)? else {
            return Ok(());
        };
        out.write_all(&bytes)?;
        stats.frames_sent += 1;
        sent_here += 1;
        if session.is_exhausted() {
            return Ok(());
        }
        if limit.is_some_and(|n| sent_here >= n) {
            return Err(io::Error::new(io::ErrorKind::ConnectionAborted, "injected disconnect"));
        }
    }
}
