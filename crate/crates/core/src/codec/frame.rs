use num_complex::{Complex, Complex64};
use thiserror::Error;

use super::crc::crc_ccitt;
use crate::pmu::SynchrophasorSample;
use crate::time::{Timestamp, TIME_BASE};

pub const SYNC_BYTE: u8 = 0xAA;
pub const FRAME_VERSION: u8 = 1;

/// Header (SYNC..FRACSEC) plus the CRC trailer.
pub const MIN_FRAME_LEN: usize = 16;
pub const DATA_FRAME_LEN: usize = 34;
pub const CONFIG2_FRAME_LEN: usize = 74;
pub const COMMAND_FRAME_LEN: usize = 18;

/// FORMAT word: FREQ/DFREQ float (bit 3), phasors float (bit 1), rectangular (bit 0 clear).
pub const FORMAT_FLOAT_RECTANGULAR: u16 = 0x000A;

/// Reporting rates a config-2 frame may declare.
pub const SUPPORTED_RATES: [i16; 4] = [50, 25, 10, 1];

const NAME_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("truncated frame: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("bad sync byte 0x{0:02X}")]
    BadSync(u8),
    #[error("FRAMESIZE {declared} disagrees with {actual} bytes supplied")]
    FrameSize { declared: usize, actual: usize },
    #[error("CRC mismatch: frame carries 0x{expected:04X}, computed 0x{computed:04X}")]
    CrcMismatch { expected: u16, computed: u16 },
    #[error("unknown frame type code {0}")]
    UnknownFrameType(u8),
    #[error("unsupported frame content: {0}")]
    Unsupported(String),
    #[error("invalid field: {0}")]
    InvalidField(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("fracsec {fracsec} is not below time base {time_base}")]
    FracsecOutOfRange { fracsec: u32, time_base: u32 },
    #[error("invalid field: {0}")]
    InvalidField(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FrameType {
    Data,
    Config2,
    Command,
}

impl FrameType {
    pub fn code(self) -> u8 {
        match self {
            FrameType::Data => 0,
            FrameType::Config2 => 3,
            FrameType::Command => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(FrameType::Data),
            3 => Some(FrameType::Config2),
            4 => Some(FrameType::Command),
            _ => None,
        }
    }

    fn encoded_len(self) -> usize {
        match self {
            FrameType::Data => DATA_FRAME_LEN,
            FrameType::Config2 => CONFIG2_FRAME_LEN,
            FrameType::Command => COMMAND_FRAME_LEN,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameHeader {
    pub frame_type: FrameType,
    pub version: u8,
    pub framesize: u16,
    pub idcode: u16,
    pub soc: u32,
    /// 24-bit fraction-of-second count.
    pub fracsec: u32,
    pub time_quality: u8,
}

impl FrameHeader {
    /// Header with the fixed size of this frame type and a locked clock.
    pub fn new(frame_type: FrameType, idcode: u16, soc: u32, fracsec: u32) -> Self {
        Self {
            frame_type,
            version: FRAME_VERSION,
            framesize: frame_type.encoded_len() as u16,
            idcode,
            soc,
            fracsec,
            time_quality: 0,
        }
    }

    pub fn timestamp(&self) -> Timestamp {
        Timestamp::new(self.soc, self.fracsec)
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.push(SYNC_BYTE);
        out.push((self.frame_type.code() << 4) | (self.version & 0x0F));
        out.extend_from_slice(&[0, 0]); // FRAMESIZE, patched in finish()
        out.extend_from_slice(&self.idcode.to_be_bytes());
        out.extend_from_slice(&self.soc.to_be_bytes());
        let fracsec = ((self.time_quality as u32) << 24) | (self.fracsec & 0x00FF_FFFF);
        out.extend_from_slice(&fracsec.to_be_bytes());
    }
}

fn finish(mut out: Vec<u8>) -> Vec<u8> {
    let size = (out.len() + 2) as u16;
    out[2..4].copy_from_slice(&size.to_be_bytes());
    let crc = crc_ccitt(&out);
    out.extend_from_slice(&crc.to_be_bytes());
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DataFrame {
    pub header: FrameHeader,
    pub stat: u16,
    /// Rectangular voltage phasor, per unit.
    pub phasor: Complex<f32>,
    /// Deviation from nominal frequency, Hz.
    pub freq: f32,
    /// ROCOF, Hz/s.
    pub dfreq: f32,
}

impl DataFrame {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(DATA_FRAME_LEN);
        self.header.write(&mut out);
        out.extend_from_slice(&self.stat.to_be_bytes());
        out.extend_from_slice(&self.phasor.re.to_be_bytes());
        out.extend_from_slice(&self.phasor.im.to_be_bytes());
        out.extend_from_slice(&self.freq.to_be_bytes());
        out.extend_from_slice(&self.dfreq.to_be_bytes());
        finish(out)
    }

    /// Reconstructs the measured sample using the governing configuration.
    pub fn to_sample(&self, cfg: &ConfigFrame2) -> SynchrophasorSample {
        let frac = if cfg.time_base == TIME_BASE {
            self.header.fracsec
        } else {
            ((self.header.fracsec as u64 * TIME_BASE as u64 + cfg.time_base as u64 / 2)
                / cfg.time_base as u64) as u32
        };
        SynchrophasorSample {
            timestamp: Timestamp::new(self.header.soc, frac.min(TIME_BASE - 1)),
            v: Complex64::new(self.phasor.re as f64, self.phasor.im as f64),
            freq: cfg.fnom.hz() + self.freq as f64,
            rocof: self.dfreq as f64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NominalFrequency {
    Hz50,
    Hz60,
}

impl NominalFrequency {
    pub fn hz(self) -> f64 {
        match self {
            NominalFrequency::Hz50 => 50.0,
            NominalFrequency::Hz60 => 60.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhasorKind {
    Voltage,
    Current,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhasorUnit {
    pub kind: PhasorKind,
    /// 24-bit conversion factor; ignored for floating-point phasors.
    pub scale: u32,
}

/// Single-PMU configuration frame: one float rectangular voltage phasor, no analogs or digitals.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigFrame2 {
    pub header: FrameHeader,
    pub time_base: u32,
    pub station_name: String,
    pub pmu_idcode: u16,
    pub format: u16,
    pub channel_name: String,
    pub phasor_unit: PhasorUnit,
    pub fnom: NominalFrequency,
    pub cfgcnt: u16,
    /// Frames per second when positive, seconds per frame when negative.
    pub data_rate: i16,
}

fn check_name(name: &str, what: &str) -> Result<(), EncodeError> {
    if name.len() > NAME_LEN || !name.is_ascii() {
        return Err(EncodeError::InvalidField(format!(
            "{what} must be at most {NAME_LEN} ASCII characters"
        )));
    }
    Ok(())
}

impl ConfigFrame2 {
    pub fn new(
        idcode: u16,
        station_name: &str,
        channel_name: &str,
        data_rate: i16,
        timestamp: Timestamp,
    ) -> Result<Self, EncodeError> {
        let cfg = Self {
            header: FrameHeader::new(FrameType::Config2, idcode, timestamp.soc, timestamp.frac),
            time_base: TIME_BASE,
            station_name: station_name.to_string(),
            pmu_idcode: idcode,
            format: FORMAT_FLOAT_RECTANGULAR,
            channel_name: channel_name.to_string(),
            phasor_unit: PhasorUnit {
                kind: PhasorKind::Voltage,
                scale: 0,
            },
            fnom: NominalFrequency::Hz50,
            cfgcnt: 0,
            data_rate,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), EncodeError> {
        check_name(&self.station_name, "station name")?;
        check_name(&self.channel_name, "channel name")?;
        if self.time_base == 0 || self.time_base > 0x00FF_FFFF {
            return Err(EncodeError::InvalidField(format!(
                "time base {} outside 1..2^24",
                self.time_base
            )));
        }
        if !SUPPORTED_RATES.contains(&self.data_rate) {
            return Err(EncodeError::InvalidField(format!(
                "data rate {} not in {:?}",
                self.data_rate, SUPPORTED_RATES
            )));
        }
        if self.phasor_unit.scale > 0x00FF_FFFF {
            return Err(EncodeError::InvalidField("phasor scale exceeds 24 bits".into()));
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>, EncodeError> {
        self.validate()?;
        let mut out = Vec::with_capacity(CONFIG2_FRAME_LEN);
        self.header.write(&mut out);
        out.extend_from_slice(&(self.time_base & 0x00FF_FFFF).to_be_bytes());
        out.extend_from_slice(&1u16.to_be_bytes()); // NUM_PMU
        put_name(&mut out, &self.station_name);
        out.extend_from_slice(&self.pmu_idcode.to_be_bytes());
        out.extend_from_slice(&self.format.to_be_bytes());
        out.extend_from_slice(&1u16.to_be_bytes()); // PHNMR
        out.extend_from_slice(&0u16.to_be_bytes()); // ANNMR
        out.extend_from_slice(&0u16.to_be_bytes()); // DGNMR
        put_name(&mut out, &self.channel_name);
        let kind = match self.phasor_unit.kind {
            PhasorKind::Voltage => 0u32,
            PhasorKind::Current => 1u32,
        };
        out.extend_from_slice(&((kind << 24) | self.phasor_unit.scale).to_be_bytes());
        let fnom = match self.fnom {
            NominalFrequency::Hz50 => 1u16,
            NominalFrequency::Hz60 => 0u16,
        };
        out.extend_from_slice(&fnom.to_be_bytes());
        out.extend_from_slice(&self.cfgcnt.to_be_bytes());
        out.extend_from_slice(&self.data_rate.to_be_bytes());
        Ok(finish(out))
    }
}

fn put_name(out: &mut Vec<u8>, name: &str) {
    let mut field = [b' '; NAME_LEN];
    field[..name.len()].copy_from_slice(name.as_bytes());
    out.extend_from_slice(&field);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    DataOff,
    DataOn,
    SendConfig2,
    /// Any other code; carried through so receivers can count and ignore it.
    Other(u16),
}

impl Command {
    pub fn code(self) -> u16 {
        match self {
            Command::DataOff => 1,
            Command::DataOn => 2,
            Command::SendConfig2 => 5,
            Command::Other(c) => c,
        }
    }

    pub fn from_code(code: u16) -> Self {
        match code {
            1 => Command::DataOff,
            2 => Command::DataOn,
            5 => Command::SendConfig2,
            c => Command::Other(c),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CommandFrame {
    pub header: FrameHeader,
    pub command: Command,
}

impl CommandFrame {
    pub fn new(idcode: u16, command: Command, timestamp: Timestamp) -> Self {
        Self {
            header: FrameHeader::new(FrameType::Command, idcode, timestamp.soc, timestamp.frac),
            command,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(COMMAND_FRAME_LEN);
        self.header.write(&mut out);
        out.extend_from_slice(&self.command.code().to_be_bytes());
        finish(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Frame {
    Data(DataFrame),
    Config2(ConfigFrame2),
    Command(CommandFrame),
}

impl Frame {
    pub fn header(&self) -> &FrameHeader {
        match self {
            Frame::Data(f) => &f.header,
            Frame::Config2(f) => &f.header,
            Frame::Command(f) => &f.header,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>, EncodeError> {
        match self {
            Frame::Data(f) => Ok(f.encode()),
            Frame::Config2(f) => f.encode(),
            Frame::Command(f) => Ok(f.encode()),
        }
    }
}

/// Encodes one sample as a single-phasor float data frame described by `cfg`.
pub fn encode_data(sample: &SynchrophasorSample, cfg: &ConfigFrame2) -> Result<Vec<u8>, EncodeError> {
    if cfg.format != FORMAT_FLOAT_RECTANGULAR {
        return Err(EncodeError::InvalidField(format!(
            "data encoding needs float rectangular format, config declares 0x{:04X}",
            cfg.format
        )));
    }
    let fracsec = sample.timestamp.frac;
    if fracsec >= cfg.time_base {
        return Err(EncodeError::FracsecOutOfRange {
            fracsec,
            time_base: cfg.time_base,
        });
    }
    let frame = DataFrame {
        header: FrameHeader::new(FrameType::Data, cfg.header.idcode, sample.timestamp.soc, fracsec),
        stat: 0,
        phasor: Complex::new(sample.v.re as f32, sample.v.im as f32),
        freq: (sample.freq - cfg.fnom.hz()) as f32,
        dfreq: sample.rocof as f32,
    };
    Ok(frame.encode())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos + n;
        let s = self.buf.get(self.pos..end).ok_or(DecodeError::Truncated {
            needed: end,
            available: self.buf.len(),
        })?;
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, DecodeError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32(&mut self) -> Result<f32, DecodeError> {
        Ok(f32::from_bits(self.u32()?))
    }

    fn name(&mut self) -> Result<String, DecodeError> {
        let raw = self.take(NAME_LEN)?;
        let s = String::from_utf8_lossy(raw);
        Ok(s.trim_end_matches([' ', '\0']).to_string())
    }
}

/// Decodes one complete frame. Total over arbitrary input: every byte string
/// yields a frame or a [`DecodeError`].
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, DecodeError> {
    let Some(&first) = bytes.first() else {
        return Err(DecodeError::Truncated {
            needed: 4,
            available: 0,
        });
    };
    if first != SYNC_BYTE {
        return Err(DecodeError::BadSync(first));
    }
    if let Some(&second) = bytes.get(1).filter(|&&b| b & 0x80 != 0) {
        // Reserved bit of the second sync byte.
        return Err(DecodeError::BadSync(second));
    }
    if bytes.len() < 4 {
        return Err(DecodeError::Truncated {
            needed: 4,
            available: bytes.len(),
        });
    }
    let declared = u16::from_be_bytes([bytes[2], bytes[3]]) as usize;
    if declared < MIN_FRAME_LEN {
        return Err(DecodeError::FrameSize {
            declared,
            actual: bytes.len(),
        });
    }
    if bytes.len() < declared {
        return Err(DecodeError::Truncated {
            needed: declared,
            available: bytes.len(),
        });
    }
    if bytes.len() > declared {
        return Err(DecodeError::FrameSize {
            declared,
            actual: bytes.len(),
        });
    }
    let expected = u16::from_be_bytes([bytes[declared - 2], bytes[declared - 1]]);
    let computed = crc_ccitt(&bytes[..declared - 2]);
    if expected != computed {
        return Err(DecodeError::CrcMismatch { expected, computed });
    }

    let type_code = (bytes[1] >> 4) & 0x07;
    let frame_type =
        FrameType::from_code(type_code).ok_or(DecodeError::UnknownFrameType(type_code))?;
    if declared != frame_type.encoded_len() {
        return Err(DecodeError::Unsupported(format!(
            "{frame_type:?} frame of {declared} bytes (only the single-phasor layout of {} bytes is supported)",
            frame_type.encoded_len()
        )));
    }

    let mut r = Reader {
        buf: &bytes[..declared - 2],
        pos: 4,
    };
    let idcode = r.u16()?;
    let soc = r.u32()?;
    let fracsec_word = r.u32()?;
    let header = FrameHeader {
        frame_type,
        version: bytes[1] & 0x0F,
        framesize: declared as u16,
        idcode,
        soc,
        fracsec: fracsec_word & 0x00FF_FFFF,
        time_quality: (fracsec_word >> 24) as u8,
    };

    match frame_type {
        FrameType::Data => Ok(Frame::Data(DataFrame {
            header,
            stat: r.u16()?,
            phasor: Complex::new(r.f32()?, r.f32()?),
            freq: r.f32()?,
            dfreq: r.f32()?,
        })),
        FrameType::Command => Ok(Frame::Command(CommandFrame {
            header,
            command: Command::from_code(r.u16()?),
        })),
        FrameType::Config2 => decode_config2(header, &mut r).map(Frame::Config2),
    }
}

fn decode_config2(header: FrameHeader, r: &mut Reader<'_>) -> Result<ConfigFrame2, DecodeError> {
    let time_base = r.u32()? & 0x00FF_FFFF;
    let num_pmu = r.u16()?;
    if num_pmu != 1 {
        return Err(DecodeError::Unsupported(format!("NUM_PMU = {num_pmu}")));
    }
    let station_name = r.name()?;
    let pmu_idcode = r.u16()?;
    let format = r.u16()?;
    let phnmr = r.u16()?;
    let annmr = r.u16()?;
    let dgnmr = r.u16()?;
    if (phnmr, annmr, dgnmr) != (1, 0, 0) {
        return Err(DecodeError::Unsupported(format!(
            "channel counts PHNMR={phnmr} ANNMR={annmr} DGNMR={dgnmr}"
        )));
    }
    if format != FORMAT_FLOAT_RECTANGULAR {
        return Err(DecodeError::Unsupported(format!("FORMAT 0x{format:04X}")));
    }
    let channel_name = r.name()?;
    let unit = r.u32()?;
    let kind = match unit >> 24 {
        0 => PhasorKind::Voltage,
        1 => PhasorKind::Current,
        k => return Err(DecodeError::InvalidField(format!("PHUNIT type {k}"))),
    };
    let fnom = match r.u16()? & 1 {
        1 => NominalFrequency::Hz50,
        _ => NominalFrequency::Hz60,
    };
    let cfgcnt = r.u16()?;
    let data_rate = r.u16()? as i16;
    if time_base == 0 {
        return Err(DecodeError::InvalidField("TIME_BASE = 0".into()));
    }
    if !SUPPORTED_RATES.contains(&data_rate) {
        return Err(DecodeError::InvalidField(format!("DATA_RATE = {data_rate}")));
    }
    Ok(ConfigFrame2 {
        header,
        time_base,
        station_name,
        pmu_idcode,
        format,
        channel_name,
        phasor_unit: PhasorUnit {
            kind,
            scale: unit & 0x00FF_FFFF,
        },
        fnom,
        cfgcnt,
        data_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ConfigFrame2 {
        ConfigFrame2::new(31, "PMU31", "V31", 50, Timestamp::new(1_451_606_400, 0)).unwrap()
    }

    fn sample() -> SynchrophasorSample {
        SynchrophasorSample {
            timestamp: Timestamp::new(1_451_606_400, 20_000),
            v: Complex64::new(1.0, 0.0),
            freq: 50.0,
            rocof: 0.0,
        }
    }

    #[test]
    fn data_frame_is_34_bytes_with_zero_deviation() {
        let bytes = encode_data(&sample(), &cfg()).unwrap();
        assert_eq!(bytes.len(), 2 + 2 + 2 + 4 + 4 + 2 + 8 + 4 + 4 + 2);
        assert_eq!(&bytes[..2], &[0xAA, 0x01]);
        assert_eq!(u16::from_be_bytes([bytes[2], bytes[3]]), 34);
        assert_eq!(&bytes[24..32], &[0; 8], "FREQ and DFREQ encode 0.0");
    }

    #[test]
    fn config_frame_size_and_sync() {
        let bytes = cfg().encode().unwrap();
        assert_eq!(bytes.len(), CONFIG2_FRAME_LEN);
        assert_eq!(&bytes[..2], &[0xAA, 0x31]);
        assert_eq!(decode_frame(&bytes).unwrap(), Frame::Config2(cfg()));
    }

    #[test]
    fn command_frame_round_trip() {
        let f = CommandFrame::new(7, Command::SendConfig2, Timestamp::new(10, 5));
        let bytes = f.encode();
        assert_eq!(bytes.len(), COMMAND_FRAME_LEN);
        assert_eq!(&bytes[..2], &[0xAA, 0x41]);
        assert_eq!(decode_frame(&bytes).unwrap(), Frame::Command(f));
    }

    #[test]
    fn fracsec_beyond_time_base_is_rejected() {
        let mut s = sample();
        s.timestamp.frac = TIME_BASE;
        assert!(matches!(
            encode_data(&s, &cfg()),
            Err(EncodeError::FracsecOutOfRange { .. })
        ));
    }

    #[test]
    fn flipped_last_byte_is_crc_error() {
        let mut bytes = encode_data(&sample(), &cfg()).unwrap();
        *bytes.last_mut().unwrap() ^= 0x01;
        assert!(matches!(decode_frame(&bytes), Err(DecodeError::CrcMismatch { .. })));
    }

    #[test]
    fn distinct_errors_for_each_failure() {
        let good = encode_data(&sample(), &cfg()).unwrap();
        assert_eq!(decode_frame(&[0x55]), Err(DecodeError::BadSync(0x55)));
        assert!(matches!(decode_frame(&good[..20]), Err(DecodeError::Truncated { .. })));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(decode_frame(&long), Err(DecodeError::FrameSize { .. })));

        // Valid CRC over an unknown type code.
        let mut odd = good[..DATA_FRAME_LEN - 2].to_vec();
        odd[1] = 0x71;
        let crc = crc_ccitt(&odd);
        odd.extend_from_slice(&crc.to_be_bytes());
        assert_eq!(decode_frame(&odd), Err(DecodeError::UnknownFrameType(7)));
    }

    #[test]
    fn bad_data_rate_rejected() {
        assert!(ConfigFrame2::new(1, "X", "V", 30, Timestamp::default()).is_err());
        assert!(ConfigFrame2::new(1, "seventeen-chars-x", "V", 50, Timestamp::default()).is_err());
    }

    #[test]
    fn sample_survives_round_trip() {
        let s = SynchrophasorSample {
            timestamp: Timestamp::new(1_451_606_400, 980_000),
            v: Complex64::new(0.9375, -0.0625),
            freq: 49.75,
            rocof: -1.5,
        };
        let c = cfg();
        let Frame::Data(df) = decode_frame(&encode_data(&s, &c).unwrap()).unwrap() else {
            panic!("expected data frame");
        };
        assert_eq!(df.to_sample(&c), s);
    }
}
