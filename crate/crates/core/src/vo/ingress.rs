use crate::codec::{Command, CommandFrame, ConfigFrame2, Frame};
use crate::pmu::SynchrophasorSample;
use crate::time::Timestamp;

/// What the VO side should do with a received frame.
#[derive(Clone, Debug, PartialEq)]
pub enum IngressEvent {
    /// Configuration learned; send these bytes (a "data on" command) back.
    Configured(Vec<u8>),
    Sample(SynchrophasorSample),
    /// Frame carries nothing for this VO (foreign idcode, data before config, command echo).
    Ignored,
}

/// Client side of the PMU command handshake: request config-2, then turn
/// data on, then convert data frames to samples.
#[derive(Clone, Debug)]
pub struct FrameIngress {
    idcode: u16,
    config: Option<ConfigFrame2>,
    ignored: u64,
}

impl FrameIngress {
    pub fn new(idcode: u16) -> Self {
        Self {
            idcode,
            config: None,
            ignored: 0,
        }
    }

    pub fn idcode(&self) -> u16 {
        self.idcode
    }

    pub fn config(&self) -> Option<&ConfigFrame2> {
        self.config.as_ref()
    }

    pub fn ignored(&self) -> u64 {
        self.ignored
    }

    /// Bytes to send right after connecting.
    pub fn hello(&self) -> Vec<u8> {
        CommandFrame::new(self.idcode, Command::SendConfig2, Timestamp::default()).encode()
    }

    /// Bytes that stop the stream.
    pub fn goodbye(&self) -> Vec<u8> {
        CommandFrame::new(self.idcode, Command::DataOff, Timestamp::default()).encode()
    }

    /// Forgets the configuration so the next connection repeats the handshake.
    pub fn reset(&mut self) {
        self.config = None;
    }

    pub fn on_frame(&mut self, frame: &Frame) -> IngressEvent {
        if frame.header().idcode != self.idcode {
            self.ignored += 1;
            return IngressEvent::Ignored;
        }
        match frame {
            Frame::Config2(cfg) => {
                self.config = Some(cfg.clone());
                IngressEvent::Configured(
                    CommandFrame::new(self.idcode, Command::DataOn, Timestamp::default()).encode(),
                )
            }
            Frame::Data(df) => match &self.config {
                Some(cfg) => IngressEvent::Sample(df.to_sample(cfg)),
                None => {
                    self.ignored += 1;
                    IngressEvent::Ignored
                }
            },
            Frame::Command(_) => {
                self.ignored += 1;
                IngressEvent::Ignored
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{decode_frame, Deframer};
    use crate::pmu::{PmuConfig, PmuSession};
    use num_complex::Complex64;

    #[test]
    fn handshake_then_samples() {
        let samples: Vec<_> = (0..4)
            .map(|k| SynchrophasorSample {
                timestamp: Timestamp::new(5, k * 20_000),
                v: Complex64::new(0.97, -0.02),
                freq: 50.01,
                rocof: 0.1,
            })
            .collect();
        let mut pmu = PmuSession::new(&PmuConfig::new(71, "71"), samples.clone()).unwrap();
        let mut vo = FrameIngress::new(71);
        let mut wire = Deframer::default();

        let reply = pmu.handle_frame(&decode_frame(&vo.hello()).unwrap()).unwrap().unwrap();
        wire.push(&reply);
        let IngressEvent::Configured(on) = vo.on_frame(&wire.next_frame().unwrap().unwrap()) else {
            panic!("expected config")
        };
        pmu.handle_frame(&decode_frame(&on).unwrap()).unwrap();
        let mut got = Vec::new();
        while let Some(b) = pmu.next_data_frame().unwrap() {
            wire.push(&b);
            if let IngressEvent::Sample(s) = vo.on_frame(&wire.next_frame().unwrap().unwrap()) {
                got.push(s);
            }
        }
        assert_eq!(got.len(), 4);
        assert_eq!(got[3].timestamp, samples[3].timestamp);
        assert!((got[0].v - samples[0].v).norm() < 1e-7);
    }

    #[test]
    fn data_before_config_ignored() {
        let mut pmu = PmuSession::new(
            &PmuConfig::new(3, "3"),
            vec![SynchrophasorSample {
                timestamp: Timestamp::new(1, 0),
                v: Complex64::new(1.0, 0.0),
                freq: 50.0,
                rocof: 0.0,
            }],
        )
        .unwrap();
        pmu.handle_frame(&Frame::Command(CommandFrame::new(3, Command::DataOn, Timestamp::default())))
            .unwrap();
        let frame = decode_frame(&pmu.next_data_frame().unwrap().unwrap()).unwrap();
        let mut vo = FrameIngress::new(3);
        assert_eq!(vo.on_frame(&frame), IngressEvent::Ignored);
        assert_eq!(FrameIngress::new(4).on_frame(&frame), IngressEvent::Ignored);
    }
}
