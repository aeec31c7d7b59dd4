//! HTTP sink, coordinator ingress and `/latest` endpoint.

use std::net::SocketAddr;
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use adsse_core::vo::{read_latest, LatestHandle, MeasurementSink, SinkError, VoMeasurement};
use tiny_http::{Header, Method, Request, Response, Server};

use crate::NetError;

pub const MEASUREMENTS_PATH: &str = "/measurements";
pub const LATEST_PATH: &str = "/latest";

/// Publishes measurements as JSON `POST`s.
pub struct HttpSink {
    agent: ureq::Agent,
    url: String,
}

impl HttpSink {
    pub fn new(url: impl Into<String>) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(5))
            .build();
        Self { agent, url: url.into() }
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl MeasurementSink for HttpSink {
    fn deliver(&mut self, m: &VoMeasurement) -> Result<(), SinkError> {
        let body = serde_json::to_string(m).map_err(|e| SinkError(e.to_string()))?;
        match self
            .agent
            .post(&self.url)
            .set("Content-Type", "application/json")
            .send_string(&body)
        {
            Ok(_) => Ok(()),
            Err(ureq::Error::Status(code, _)) => Err(SinkError(format!("{} answered {code}", self.url))),
            Err(e) => Err(SinkError(e.to_string())),
        }
    }
}

fn json_header() -> Header {
    Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..]).expect("static header")
}

fn text(code: u16, body: impl Into<String>) -> Response<std::io::Cursor<Vec<u8>>> {
    Response::from_string(body).with_status_code(code)
}

fn respond(req: Request, resp: Response<std::io::Cursor<Vec<u8>>>) {
    if let Err(e) = req.respond(resp) {
        log::debug!("http: failed to answer: {e}");
    }
}

/// A serving thread that stops when [`stop`](Self::stop) is called.
struct Running {
    server: Arc<Server>,
    addr: SocketAddr,
    join: Option<JoinHandle<()>>,
}

impl Running {
    fn spawn(addr: &str, name: &str, handler: impl FnMut(Request) + Send + 'static) -> Result<Self, NetError> {
        let server = Server::http(addr).map_err(|e| NetError::Http(format!("bind {addr}: {e}")))?;
        let bound = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| NetError::Http(format!("{addr} is not an IP listener")))?;
        let server = Arc::new(server);
        let srv = Arc::clone(&server);
        let mut handler = handler;
        let join = thread::Builder::new().name(name.into()).spawn(move || {
            for req in srv.incoming_requests() {
                handler(req);
            }
        })?;
        Ok(Self {
            server,
            addr: bound,
            join: Some(join),
        })
    }

    fn stop(&mut self) {
        self.server.unblock();
        if let Some(j) = self.join.take() {
            let _ = j.join();
        }
    }
}

impl Drop for Running {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Coordinator ingress: every valid `POST /measurements` lands on the
/// channel before the request is acknowledged.
pub struct IngressServer {
    inner: Running,
}

impl IngressServer {
    pub fn spawn(addr: &str) -> Result<(Self, Receiver<VoMeasurement>), NetError> {
        let (tx, rx) = mpsc::channel();
        let inner = Running::spawn(addr, "ingress", move |req| handle_ingress(req, &tx))?;
        Ok((Self { inner }, rx))
    }

    pub fn addr(&self) -> SocketAddr {
        self.inner.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}{MEASUREMENTS_PATH}", self.inner.addr)
    }

    /// Stops serving; the channel closes once the serving thread exits.
    pub fn stop(mut self) {
        self.inner.stop();
    }
}

fn handle_ingress(mut req: Request, tx: &Sender<VoMeasurement>) {
    if req.url() != MEASUREMENTS_PATH {
        return respond(req, text(404, "not found"));
    }
    if *req.method() != Method::Post {
        return respond(req, text(405, "use POST"));
    }
    let mut body = String::new();
    if let Err(e) = req.as_reader().read_to_string(&mut body) {
        return respond(req, text(400, format!("unreadable body: {e}")));
    }
    match serde_json::from_str::<VoMeasurement>(&body) {
        Ok(m) => {
            if tx.send(m).is_err() {
                return respond(req, text(503, "coordinator stopped"));
            }
            respond(req, Response::from_data(Vec::new()).with_status_code(204))
        }
        Err(e) => respond(req, text(400, format!("invalid measurement: {e}"))),
    }
}

/// `GET /latest?vo=<id>` returns the newest input of that VO, whether or
/// not it was forwarded. With a single VO the query may be omitted.
pub struct LatestServer {
    inner: Running,
}

impl LatestServer {
    pub fn spawn(addr: &str, handles: Vec<(String, LatestHandle)>) -> Result<Self, NetError> {
        let inner = Running::spawn(addr, "latest", move |req| handle_latest(req, &handles))?;
        Ok(Self { inner })
    }

    pub fn addr(&self) -> SocketAddr {
        self.inner.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}{LATEST_PATH}", self.inner.addr)
    }

    pub fn stop(mut self) {
        self.inner.stop();
    }
}

fn handle_latest(req: Request, handles: &[(String, LatestHandle)]) {
    if *req.method() != Method::Get {
        return respond(req, text(405, "use GET"));
    }
    let url = req.url().to_string();
    let (path, query) = url.split_once('?').unwrap_or((url.as_str(), ""));
    if path != LATEST_PATH {
        return respond(req, text(404, "not found"));
    }
    let wanted = query
        .split('&')
        .find_map(|kv| kv.strip_prefix("vo="))
        .map(str::to_string);
    let handle = match (&wanted, handles) {
        (Some(id), _) => handles.iter().find(|(v, _)| v == id),
        (None, [only]) => Some(only),
        (None, _) => {
            let ids: Vec<&str> = handles.iter().map(|(v, _)| v.as_str()).collect();
            return respond(req, text(400, format!("pick one with ?vo= among {}", ids.join(", "))));
        }
    };
    let Some((_, handle)) = handle else {
        return respond(req, text(404, format!("unknown VO {}", wanted.unwrap_or_default())));
    };
    match read_latest(handle) {
        Ok(m) => match serde_json::to_string(&m) {
            Ok(body) => respond(req, Response::from_string(body).with_header(json_header())),
            Err(e) => respond(req, text(500, e.to_string())),
        },
        Err(e) => respond(req, text(503, e.to_string())),
    }
}
