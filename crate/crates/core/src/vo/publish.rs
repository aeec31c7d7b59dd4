use std::sync::mpsc;

use thiserror::Error;

use super::VoMeasurement;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("sink: {0}")]
pub struct SinkError(pub String);

/// Destination of forwarded measurements (HTTP endpoint, channel, buffer).
pub trait MeasurementSink {
    fn deliver(&mut self, m: &VoMeasurement) -> Result<(), SinkError>;
}

impl MeasurementSink for Vec<VoMeasurement> {
    fn deliver(&mut self, m: &VoMeasurement) -> Result<(), SinkError> {
        self.push(m.clone());
        Ok(())
    }
}

impl MeasurementSink for mpsc::Sender<VoMeasurement> {
    fn deliver(&mut self, m: &VoMeasurement) -> Result<(), SinkError> {
        self.send(m.clone()).map_err(|_| SinkError("receiver dropped".into()))
    }
}

impl<S: MeasurementSink + ?Sized> MeasurementSink for Box<S> {
    fn deliver(&mut self, m: &VoMeasurement) -> Result<(), SinkError> {
        (**self).deliver(m)
    }
}

/// Discards everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl MeasurementSink for NullSink {
    fn deliver(&mut self, _: &VoMeasurement) -> Result<(), SinkError> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ack {
    Delivered { attempts: u32 },
    Dropped { attempts: u32 },
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct PublishStats {
    pub delivered: u64,
    pub retries: u64,
    pub dropped: u64,
    pub bytes: u64,
}

/// Delivers measurements with bounded retry; a measurement that still fails
/// after `max_retries` extra attempts is dropped so the stream keeps flowing.
#[derive(Debug)]
pub struct Publisher<S> {
    sink: S,
    max_retries: u32,
    stats: PublishStats,
}

impl<S: MeasurementSink> Publisher<S> {
    pub const DEFAULT_RETRIES: u32 = 3;

    pub fn new(sink: S) -> Self {
        Self::with_retries(sink, Self::DEFAULT_RETRIES)
    }

    pub fn with_retries(sink: S, max_retries: u32) -> Self {
        Self {
            sink,
            max_retries,
            stats: PublishStats::default(),
        }
    }

    pub fn publish(&mut self, m: &VoMeasurement) -> Ack {
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.sink.deliver(m) {
                Ok(()) => {
                    self.stats.delivered += 1;
                    self.stats.bytes += m.encoded_len() as u64;
                    return Ack::Delivered { attempts };
                }
                Err(e) if attempts > self.max_retries => {
                    log::error!(
                        "dropping measurement {} @ {} after {attempts} attempts: {e}",
                        m.vo_id,
                        m.timestamp()
                    );
                    self.stats.dropped += 1;
                    return Ack::Dropped { attempts };
                }
                Err(e) => {
                    log::warn!("publish attempt {attempts} for {} failed: {e}", m.vo_id);
                    self.stats.retries += 1;
                }
            }
        }
    }

    pub fn stats(&self) -> PublishStats {
        self.stats
    }

    pub fn sink(&self) -> &S {
        &self.sink
    }

    pub fn sink_mut(&mut self) -> &mut S {
        &mut self.sink
    }

    pub fn into_sink(self) -> S {
        self.sink
    }
}
