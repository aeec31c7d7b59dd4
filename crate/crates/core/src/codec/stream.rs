//! Re-framing of a byte stream into frames, with resynchronization.

use std::io::{ErrorKind, Read};

use thiserror::Error;

use super::crc::crc_ccitt;
use super::frame::{decode_frame, DecodeError, Frame, MIN_FRAME_LEN, SYNC_BYTE};

/// Default number of consecutive discarded bytes tolerated before the stream is declared broken.
pub const DEFAULT_GARBAGE_LIMIT: usize = 4096;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("transport: {0}")]
    Io(#[from] std::io::Error),
    #[error("{skipped} bytes of unframeable data exceeded the limit of {limit}")]
    Garbage { skipped: usize, limit: usize },
    #[error("frame decode: {0}")]
    Decode(#[from] DecodeError),
}

/// Incremental deframer: push bytes as they arrive, pull frames as they complete.
#[derive(Debug)]
pub struct Deframer {
    buf: Vec<u8>,
    skipped: usize,
    total_skipped: u64,
    garbage_limit: usize,
}

impl Default for Deframer {
    fn default() -> Self {
        Self::new(DEFAULT_GARBAGE_LIMIT)
    }
}

impl Deframer {
    pub fn new(garbage_limit: usize) -> Self {
        Self {
            buf: Vec::new(),
            skipped: 0,
            total_skipped: 0,
            garbage_limit,
        }
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Bytes discarded during resynchronization since creation.
    pub fn total_skipped(&self) -> u64 {
        self.total_skipped
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    fn discard(&mut self, n: usize) {
        self.buf.drain(..n);
        self.skipped += n;
        self.total_skipped += n as u64;
    }

    /// Next complete frame, or `None` when more bytes are needed.
    pub fn next_frame(&mut self) -> Option<Result<Frame, StreamError>> {
        self.scan(false)
    }

    /// Like [`next_frame`](Self::next_frame) but treats an incomplete candidate at
    /// end of input as garbage so frames buried behind it are still recovered.
    pub fn next_frame_at_eof(&mut self) -> Option<Result<Frame, StreamError>> {
        self.scan(true)
    }

    fn scan(&mut self, eof: bool) -> Option<Result<Frame, StreamError>> {
        loop {
            if self.skipped > self.garbage_limit {
                let skipped = self.skipped;
                self.skipped = 0;
                return Some(Err(StreamError::Garbage {
                    skipped,
                    limit: self.garbage_limit,
                }));
            }
            match self.buf.iter().position(|&b| b == SYNC_BYTE) {
                Some(0) => {}
                Some(p) => {
                    self.discard(p);
                    continue;
                }
                None => {
                    let n = self.buf.len();
                    self.discard(n);
                    if self.skipped > self.garbage_limit {
                        continue;
                    }
                    return None;
                }
            }
            if self.buf.len() < 4 {
                if eof && !self.buf.is_empty() {
                    let n = self.buf.len();
                    self.discard(n);
                }
                return None;
            }
            let size = u16::from_be_bytes([self.buf[2], self.buf[3]]) as usize;
            if size < MIN_FRAME_LEN || self.buf[1] & 0x80 != 0 {
                self.discard(1);
                continue;
            }
            if self.buf.len() < size {
                if eof {
                    self.discard(1);
                    continue;
                }
                return None;
            }
            let crc = u16::from_be_bytes([self.buf[size - 2], self.buf[size - 1]]);
            if crc != crc_ccitt(&self.buf[..size - 2]) {
                self.discard(1);
                continue;
            }
            let result = decode_frame(&self.buf[..size]).map_err(StreamError::from);
            self.buf.drain(..size);
            self.skipped = 0;
            return Some(result);
        }
    }
}

/// Iterator of frames read from a byte transport. Ends cleanly at EOF;
/// yields one error and stops on transport failure or persistent garbage.
pub struct FrameStream<R> {
    reader: R,
    deframer: Deframer,
    eof: bool,
    failed: bool,
    chunk: Box<[u8]>,
}

impl<R: Read> FrameStream<R> {
    pub fn new(reader: R) -> Self {
        Self::with_garbage_limit(reader, DEFAULT_GARBAGE_LIMIT)
    }

    pub fn with_garbage_limit(reader: R, limit: usize) -> Self {
        Self {
            reader,
            deframer: Deframer::new(limit),
            eof: false,
            failed: false,
            chunk: vec![0; 4096].into_boxed_slice(),
        }
    }

    pub fn get_ref(&self) -> &R {
        &self.reader
    }

    pub fn deframer(&self) -> &Deframer {
        &self.deframer
    }
}

impl<R: Read> Iterator for FrameStream<R> {
    type Item = Result<Frame, StreamError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            let item = if self.eof {
                self.deframer.next_frame_at_eof()
            } else {
                self.deframer.next_frame()
            };
            match item {
                Some(Err(e @ StreamError::Garbage { .. })) => {
                    self.failed = true;
                    return Some(Err(e));
                }
                Some(other) => return Some(other),
                None if self.eof => return None,
                None => {}
            }
            match self.reader.read(&mut self.chunk) {
                Ok(0) => self.eof = true,
                Ok(n) => self.deframer.push(&self.chunk[..n]),
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) => {
                    self.failed = true;
                    return Some(Err(StreamError::Io(e)));
                }
            }
        }
    }
}
