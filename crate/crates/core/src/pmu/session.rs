use std::sync::Arc;

use super::{PmuConfig, PmuError, SynchrophasorSample};
use crate::codec::{encode_data, Command, ConfigFrame2, EncodeError, Frame};
use crate::time::{Timestamp, PMU_RATE};

/// Transport-independent PMU side of the command protocol.
///
/// Data is off until a "data on" command arrives. The sample cursor survives
/// [`disconnect`](Self::disconnect) so a reconnecting client resumes where the
/// previous connection stopped.
#[derive(Debug, Clone)]
pub struct PmuSession {
    config_frame: ConfigFrame2,
    samples: Arc<[SynchrophasorSample]>,
    cursor: usize,
    streaming: bool,
    unknown_commands: u64,
    ignored_frames: u64,
}

impl PmuSession {
    pub fn new(
        config: &PmuConfig,
        samples: impl Into<Arc<[SynchrophasorSample]>>,
    ) -> Result<Self, PmuError> {
        config.validate()?;
        let samples = samples.into();
        let at = samples.first().map(|s| s.timestamp).unwrap_or(Timestamp::default());
        let channel: String = format!("V{}", config.node).chars().take(16).collect();
        let config_frame = ConfigFrame2::new(
            config.idcode,
            &config.station_name,
            &channel,
            PMU_RATE as i16,
            at,
        )?;
        Ok(Self {
            config_frame,
            samples,
            cursor: 0,
            streaming: false,
            unknown_commands: 0,
            ignored_frames: 0,
        })
    }

    pub fn config_frame(&self) -> &ConfigFrame2 {
        &self.config_frame
    }

    pub fn idcode(&self) -> u16 {
        self.config_frame.header.idcode
    }

    /// Reacts to a received frame; returns bytes to send back, if any.
    pub fn handle_frame(&mut self, frame: &Frame) -> Result<Option<Vec<u8>>, EncodeError> {
        let Frame::Command(cmd) = frame else {
            self.ignored_frames += 1;
            return Ok(None);
        };
        if cmd.header.idcode != self.idcode() {
            self.ignored_frames += 1;
            return Ok(None);
        }
        match cmd.command {
            Command::DataOn => self.streaming = true,
            Command::DataOff => self.streaming = false,
            Command::SendConfig2 => return self.config_frame.encode().map(Some),
            Command::Other(code) => {
                log::debug!("PMU {}: ignoring unknown command {code}", self.idcode());
                self.unknown_commands += 1;
            }
        }
        Ok(None)
    }

    /// Encodes the next sample when streaming is enabled.
    pub fn next_data_frame(&mut self) -> Result<Option<Vec<u8>>, EncodeError> {
        if !self.streaming || self.cursor >= self.samples.len() {
            return Ok(None);
        }
        let bytes = encode_data(&self.samples[self.cursor], &self.config_frame)?;
        self.cursor += 1;
        Ok(Some(bytes))
    }

    /// Connection lost: stop streaming but keep the cursor.
    pub fn disconnect(&mut self) {
        self.streaming = false;
    }

    pub fn is_streaming(&self) -> bool {
        self.streaming
    }

    pub fn is_exhausted(&self) -> bool {
        self.cursor >= self.samples.len()
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    pub fn unknown_commands(&self) -> u64 {
        self.unknown_commands
    }

    pub fn ignored_frames(&self) -> u64 {
        self.ignored_frames
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{decode_frame, CommandFrame};
    use num_complex::Complex64;

    fn session(n: usize) -> PmuSession {
        let samples: Vec<_> = (0..n)
            .map(|k| SynchrophasorSample {
                timestamp: Timestamp::new(100, k as u32 * 20_000),
                v: Complex64::new(1.0, 0.0),
                freq: 50.0,
                rocof: 0.0,
            })
            .collect();
        PmuSession::new(&PmuConfig::new(31, "31"), samples).unwrap()
    }

    fn cmd(c: Command) -> Frame {
        Frame::Command(CommandFrame::new(31, c, Timestamp::default()))
    }

    #[test]
    fn send_config_returns_config2() {
        let mut s = session(3);
        let reply = s.handle_frame(&cmd(Command::SendConfig2)).unwrap().unwrap();
        assert_eq!(decode_frame(&reply).unwrap(), Frame::Config2(s.config_frame().clone()));
    }

    #[test]
    fn no_data_before_data_on() {
        let mut s = session(3);
        assert_eq!(s.next_data_frame().unwrap(), None);
        s.handle_frame(&cmd(Command::DataOn)).unwrap();
        assert!(s.next_data_frame().unwrap().is_some());
        s.handle_frame(&cmd(Command::DataOff)).unwrap();
        assert_eq!(s.next_data_frame().unwrap(), None);
        assert_eq!(s.cursor(), 1);
    }

    #[test]
    fn unknown_command_counted_and_ignored() {
        let mut s = session(1);
        assert_eq!(s.handle_frame(&cmd(Command::Other(9))).unwrap(), None);
        assert_eq!(s.unknown_commands(), 1);
        assert!(!s.is_streaming());
    }

    #[test]
    fn resume_after_disconnect() {
        let mut s = session(3);
        s.handle_frame(&cmd(Command::DataOn)).unwrap();
        s.next_data_frame().unwrap();
        s.disconnect();
        assert_eq!(s.next_data_frame().unwrap(), None);
        s.handle_frame(&cmd(Command::DataOn)).unwrap();
        let Frame::Data(df) = decode_frame(&s.next_data_frame().unwrap().unwrap()).unwrap() else {
            panic!()
        };
        assert_eq!(df.header.fracsec, 20_000);
    }
}
