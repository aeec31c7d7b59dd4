//! Socket transports: PMUs serve C37.118.2 over TCP, VOs publish to the
//! coordinator over HTTP and expose their newest sample on `/latest`.

use std::net::SocketAddr;

use adsse_core::codec::StreamError;
use adsse_core::pipeline::PipelineError;
use thiserror::Error;

pub mod http;
pub mod pmu_server;
mod run;
pub mod vo_client;

pub use http::{HttpSink, IngressServer, LatestServer};
pub use pmu_server::{PmuServer, PmuServerOptions, PmuServerStats};
pub use run::{run_sockets, SocketOptions, SocketRun};
pub use vo_client::{run_vo_client, ClientOptions, ClientStats};

/// How fast a PMU server emits data frames.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Pacing {
    /// One frame per 20 ms of wall clock.
    Realtime,
    /// As fast as the link allows.
    #[default]
    Fast,
}

impl std::str::FromStr for Pacing {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "realtime" => Ok(Pacing::Realtime),
            "fast" => Ok(Pacing::Fast),
            other => Err(format!("unknown pacing {other:?}, expected realtime or fast")),
        }
    }
}

#[derive(Debug, Error)]
pub enum NetError {
    #[error("bind {0}: {1}")]
    Bind(String, std::io::Error),
    #[error("connect {0}: {1}")]
    Connect(SocketAddr, std::io::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("frame stream: {0}")]
    Stream(#[from] StreamError),
    #[error("http: {0}")]
    Http(String),
    #[error("{0}")]
    Thread(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

impl NetError {
    /// Failures of the pipeline itself as opposed to the sockets.
    pub fn pipeline(&self) -> Option<&PipelineError> {
        match self {
            NetError::Pipeline(e) => Some(e),
            _ => None,
        }
    }
}
