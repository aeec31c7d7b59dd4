//! IEEE C37.118.2 frame subset: config-2, data and command frames with a
//! single float rectangular voltage phasor. All integers big-endian.

mod crc;
mod frame;
mod stream;

pub use crc::crc_ccitt;
pub use frame::{
    decode_frame, encode_data, Command, CommandFrame, ConfigFrame2, DataFrame, DecodeError,
    EncodeError, Frame, FrameHeader, FrameType, NominalFrequency, PhasorKind, PhasorUnit,
    COMMAND_FRAME_LEN, CONFIG2_FRAME_LEN, DATA_FRAME_LEN, FORMAT_FLOAT_RECTANGULAR, FRAME_VERSION,
    MIN_FRAME_LEN, SUPPORTED_RATES, SYNC_BYTE,
};
pub use stream::{Deframer, FrameStream, StreamError, DEFAULT_GARBAGE_LIMIT};

/// Default TCP port for emulated PMUs.
pub const DEFAULT_PMU_PORT: u16 = 4712;
