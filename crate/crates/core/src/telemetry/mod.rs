//! Binary frame codec for the capsule's wireless link, plus the packed
//! recording file built from it.

mod crc;
mod frame;
mod recording;

pub use crc::crc16;
pub use frame::{
    confidence_q8, decode, decode_exact, decode_stream, Payload, TelemetryFrame, FRAME_MAGIC, FRAME_VERSION,
    HEADER_LEN, RAW_FRAME_LEN, RESULT_CLASSES, RESULT_FRAME_LEN,
};
pub use recording::{PackedRecording, PACKED_HEADER_LEN, PACKED_MAGIC, PACKED_VERSION};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TelemetryError {
    #[error("truncated: need {needed} bytes, have {got}")]
    Truncated { needed: usize, got: usize },
    #[error("bad frame magic {0:02X?}")]
    BadMagic([u8; 2]),
    #[error("unsupported frame version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown payload kind {0}")]
    UnknownKind(u8),
    #[error("CRC mismatch: stored {stored:#06x}, computed {computed:#06x}")]
    CrcMismatch { stored: u16, computed: u16 },
    #[error("frame is {frame} bytes but the buffer holds {buffer}")]
    LengthMismatch { frame: usize, buffer: usize },
    #[error("field out of range: {0}")]
    OutOfRange(String),
    #[error("not a packed recording (bad magic)")]
    BadFileMagic,
    #[error("unsupported packed recording version {0}")]
    UnsupportedFileVersion(u16),
}

pub type Result<T> = std::result::Result<T, TelemetryError>;

/// Bytes sent per minute when every frame is transmitted raw, versus a
/// single result frame.
pub fn bandwidth_per_minute(sample_period_s: f64) -> (f64, usize) {
    (60.0 / sample_period_s * RAW_FRAME_LEN as f64, RESULT_FRAME_LEN)
}
