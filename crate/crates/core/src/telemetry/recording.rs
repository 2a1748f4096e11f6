//! Packed recording file: a 16-byte header followed by back-to-back raw
//! frames. Little-endian.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "CAPR"
//! 4       2     version (1)
//! 6       2     flags (0)
//! 8       4     frame count
//! 12      4     sample period, ms
//! 16      60·n  raw frames; frame i has seq = i mod 65536
//! ```

use super::frame::{decode, Payload, TelemetryFrame, RAW_FRAME_LEN};
use super::{Result, TelemetryError};
use crate::sim::SpectralFrame;

pub const PACKED_MAGIC: [u8; 4] = *b"CAPR";
pub const PACKED_VERSION: u16 = 1;
pub const PACKED_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct PackedRecording {
    pub sample_period_ms: u32,
    pub frames: Vec<TelemetryFrame>,
}

impl PackedRecording {
    pub fn from_frames(frames: &[SpectralFrame], sample_period_s: f64) -> Result<Self> {
        let period = (sample_period_s * 1000.0).round();
        if !(period >= 0.0 && period <= f64::from(u32::MAX)) {
            return Err(TelemetryError::OutOfRange(format!("sample period {sample_period_s} s")));
        }
        let frames = frames
            .iter()
            .enumerate()
            .map(|(i, f)| TelemetryFrame::from_spectral(i as u16, f))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { sample_period_ms: period as u32, frames })
    }

    pub fn spectral_frames(&self) -> Vec<SpectralFrame> {
        self.frames.iter().filter_map(TelemetryFrame::to_spectral).collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let count =
            u32::try_from(self.frames.len()).map_err(|_| TelemetryError::OutOfRange("more than 2^32 frames".into()))?;
        let mut out = Vec::with_capacity(PACKED_HEADER_LEN + RAW_FRAME_LEN * self.frames.len());
        out.extend_from_slice(&PACKED_MAGIC);
        out.extend_from_slice(&PACKED_VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&count.to_le_bytes());
        out.extend_from_slice(&self.sample_period_ms.to_le_bytes());
        for f in &self.frames {
            if !matches!(f.payload, Payload::Raw(_)) {
                return Err(TelemetryError::OutOfRange("packed recordings hold raw frames only".into()));
            }
            out.extend_from_slice(&f.encode()?);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < PACKED_HEADER_LEN {
            return Err(TelemetryError::Truncated { needed: PACKED_HEADER_LEN, got: bytes.len() });
        }
        if bytes[..4] != PACKED_MAGIC {
            return Err(TelemetryError::BadFileMagic);
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != PACKED_VERSION {
            return Err(TelemetryError::UnsupportedFileVersion(version));
        }
        let count = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let sample_period_ms = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes"));
        let needed = count
            .checked_mul(RAW_FRAME_LEN)
            .and_then(|n| n.checked_add(PACKED_HEADER_LEN))
            .ok_or(TelemetryError::OutOfRange("frame count".into()))?;
        if bytes.len() != needed {
            return Err(TelemetryError::LengthMismatch { frame: needed, buffer: bytes.len() });
        }
        let mut frames = Vec::with_capacity(count);
        let mut rest = &bytes[PACKED_HEADER_LEN..];
        for i in 0..count {
            let (f, used) = decode(rest)?;
            if !matches!(f.payload, Payload::Raw(_)) || used != RAW_FRAME_LEN {
                return Err(TelemetryError::OutOfRange(format!("frame {i} is not a raw frame")));
            }
            if f.seq != i as u16 {
                return Err(TelemetryError::OutOfRange(format!("frame {i} has sequence number {}", f.seq)));
            }
            frames.push(f);
            rest = &rest[used..];
        }
        Ok(Self { sample_period_ms, frames })
    }
}
