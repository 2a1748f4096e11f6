//! Link frame layout (little-endian):
//!
//! ```text
//! offset  size  field
//! 0       2     magic 0xCA 0x75
//! 2       1     version (1)
//! 3       2     sequence number
//! 5       4     timestamp, ms
//! 9       1     payload kind: 0 raw channels, 1 classification result
//! 10      48    kind 0: 24 × u16 channel counts
//! 10      2     kind 1: class index u8, confidence u8 (255 = 1.0)
//! end-2   2     CRC-16/CCITT-FALSE of every preceding byte
//! ```

use super::{crc16, Result, TelemetryError};
use crate::sim::{SpectralFrame, FRAME_CHANNELS};

pub const FRAME_MAGIC: [u8; 2] = [0xCA, 0x75];
pub const FRAME_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 10;
pub const RAW_FRAME_LEN: usize = HEADER_LEN + 2 * FRAME_CHANNELS + 2;
pub const RESULT_FRAME_LEN: usize = HEADER_LEN + 2 + 2;
/// Number of classes a result frame may carry.
pub const RESULT_CLASSES: u8 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Payload {
    Raw([u16; FRAME_CHANNELS]),
    Result { class: u8, confidence_q8: u8 },
}

impl Payload {
    pub fn kind(&self) -> u8 {
        match self {
            Payload::Raw(_) => 0,
            Payload::Result { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TelemetryFrame {
    pub seq: u16,
    pub timestamp_ms: u32,
    pub payload: Payload,
}

/// `round(255 × max p)`, saturating.
pub fn confidence_q8(probabilities: &[f64]) -> u8 {
    let p = probabilities.iter().copied().fold(0.0f64, f64::max);
    (255.0 * p).round().clamp(0.0, 255.0) as u8
}

fn frame_len(kind: u8) -> Option<usize> {
    match kind {
        0 => Some(RAW_FRAME_LEN),
        1 => Some(RESULT_FRAME_LEN),
        _ => None,
    }
}

impl TelemetryFrame {
    /// Raw frame from detector counts; values are rounded to whole counts.
    pub fn from_spectral(seq: u16, frame: &SpectralFrame) -> Result<Self> {
        let ms = (frame.timestamp_s * 1000.0).round();
        if !(0.0..=f64::from(u32::MAX)).contains(&ms) {
            return Err(TelemetryError::OutOfRange(format!("timestamp {} s", frame.timestamp_s)));
        }
        let mut counts = [0u16; FRAME_CHANNELS];
        for (c, &v) in counts.iter_mut().zip(&frame.values) {
            let r = v.round();
            if !(0.0..=65535.0).contains(&r) {
                return Err(TelemetryError::OutOfRange(format!("channel value {v}")));
            }
            *c = r as u16;
        }
        Ok(Self { seq, timestamp_ms: ms as u32, payload: Payload::Raw(counts) })
    }

    pub fn to_spectral(&self) -> Option<SpectralFrame> {
        match self.payload {
            Payload::Raw(counts) => Some(SpectralFrame {
                timestamp_s: f64::from(self.timestamp_ms) / 1000.0,
                values: counts.map(f64::from),
            }),
            Payload::Result { .. } => None,
        }
    }

    pub fn encoded_len(&self) -> usize {
        frame_len(self.payload.kind()).expect("known kind")
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&FRAME_MAGIC);
        out.push(FRAME_VERSION);
        out.extend_from_slice(&self.seq.to_le_bytes());
        out.extend_from_slice(&self.timestamp_ms.to_le_bytes());
        out.push(self.payload.kind());
        match self.payload {
            Payload::Raw(counts) => counts.iter().for_each(|c| out.extend_from_slice(&c.to_le_bytes())),
            Payload::Result { class, confidence_q8 } => {
                if class >= RESULT_CLASSES {
                    return Err(TelemetryError::OutOfRange(format!("class index {class}")));
                }
                out.push(class);
                out.push(confidence_q8);
            }
        }
        let crc = crc16(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }
}

/// Decodes the frame at the start of `bytes`, returning it with the number of
/// bytes consumed. Checks run in order: magic, version, kind, length, CRC.
pub fn decode(bytes: &[u8]) -> Result<(TelemetryFrame, usize)> {
    if bytes.len() < FRAME_MAGIC.len() {
        return Err(TelemetryError::Truncated { needed: FRAME_MAGIC.len(), got: bytes.len() });
    }
    if bytes[..2] != FRAME_MAGIC {
        return Err(TelemetryError::BadMagic([bytes[0], bytes[1]]));
    }
    if bytes.len() < HEADER_LEN {
        return Err(TelemetryError::Truncated { needed: HEADER_LEN, got: bytes.len() });
    }
    if bytes[2] != FRAME_VERSION {
        return Err(TelemetryError::UnsupportedVersion(bytes[2]));
    }
    let kind = bytes[9];
    let len = frame_len(kind).ok_or(TelemetryError::UnknownKind(kind))?;
    if bytes.len() < len {
        return Err(TelemetryError::Truncated { needed: len, got: bytes.len() });
    }
    let stored = u16::from_le_bytes([bytes[len - 2], bytes[len - 1]]);
    let computed = crc16(&bytes[..len - 2]);
    if stored != computed {
        return Err(TelemetryError::CrcMismatch { stored, computed });
    }
    let seq = u16::from_le_bytes([bytes[3], bytes[4]]);
    let timestamp_ms = u32::from_le_bytes([bytes[5], bytes[6], bytes[7], bytes[8]]);
    let payload = match kind {
        0 => {
            let mut counts = [0u16; FRAME_CHANNELS];
            for (k, c) in counts.iter_mut().enumerate() {
                let at = HEADER_LEN + 2 * k;
                *c = u16::from_le_bytes([bytes[at], bytes[at + 1]]);
            }
            Payload::Raw(counts)
        }
        _ => {
            let class = bytes[HEADER_LEN];
            if class >= RESULT_CLASSES {
                return Err(TelemetryError::OutOfRange(format!("class index {class}")));
            }
            Payload::Result { class, confidence_q8: bytes[HEADER_LEN + 1] }
        }
    };
    Ok((TelemetryFrame { seq, timestamp_ms, payload }, len))
}

/// Decodes a buffer that must hold exactly one frame.
pub fn decode_exact(bytes: &[u8]) -> Result<TelemetryFrame> {
    let (frame, used) = decode(bytes)?;
    if used != bytes.len() {
        return Err(TelemetryError::LengthMismatch { frame: used, buffer: bytes.len() });
    }
    Ok(frame)
}

/// Decodes back-to-back frames until the buffer is exhausted.
pub fn decode_stream(mut bytes: &[u8]) -> Result<Vec<TelemetryFrame>> {
    let mut frames = Vec::new();
    while !bytes.is_empty() {
        let (f, used) = decode(bytes)?;
        frames.push(f);
        bytes = &bytes[used..];
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(seq: u16) -> TelemetryFrame {
        let mut counts = [0u16; 24];
        counts.iter_mut().enumerate().for_each(|(k, c)| *c = (k as u16) * 1000 + seq);
        TelemetryFrame { seq, timestamp_ms: 1000 * u32::from(seq), payload: Payload::Raw(counts) }
    }

    #[test]
    fn lengths() {
        let zero = TelemetryFrame { seq: 0, timestamp_ms: 0, payload: Payload::Raw([0; 24]) };
        let bytes = zero.encode().unwrap();
        assert_eq!(bytes.len(), 60);
        assert_eq!(crc16(&bytes[..58]), u16::from_le_bytes([bytes[58], bytes[59]]));
        let result =
            TelemetryFrame { seq: 1, timestamp_ms: 2, payload: Payload::Result { class: 3, confidence_q8: 230 } };
        assert_eq!(result.encode().unwrap().len(), 14);
        assert_eq!(decode_exact(&result.encode().unwrap()).unwrap(), result);
    }

    #[test]
    fn distinct_errors() {
        let bytes = raw(3).encode().unwrap();
        let mut bad = bytes.clone();
        bad[0] = 0x00;
        assert!(matches!(decode(&bad), Err(TelemetryError::BadMagic(_))));
        // magic is checked before the (now wrong) CRC
        bad[59] ^= 0xFF;
        assert!(matches!(decode(&bad), Err(TelemetryError::BadMagic(_))));
        let mut bad = bytes.clone();
        bad[2] = 2;
        assert!(matches!(decode(&bad), Err(TelemetryError::UnsupportedVersion(2))));
        let mut bad = bytes.clone();
        bad[9] = 7;
        assert!(matches!(decode(&bad), Err(TelemetryError::UnknownKind(7))));
        let mut bad = bytes.clone();
        bad[20] ^= 0x10;
        assert!(matches!(decode(&bad), Err(TelemetryError::CrcMismatch { .. })));
        assert!(matches!(decode(&bytes[..59]), Err(TelemetryError::Truncated { needed: 60, got: 59 })));
        assert!(matches!(decode(&bytes[..1]), Err(TelemetryError::Truncated { .. })));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode_exact(&long), Err(TelemetryError::LengthMismatch { .. })));
    }

    #[test]
    fn out_of_range_fields() {
        let f = TelemetryFrame { seq: 0, timestamp_ms: 0, payload: Payload::Result { class: 6, confidence_q8: 0 } };
        assert!(matches!(f.encode(), Err(TelemetryError::OutOfRange(_))));
        let sf = SpectralFrame { timestamp_s: 0.0, values: [70000.0; 24] };
        assert!(TelemetryFrame::from_spectral(0, &sf).is_err());
    }

    #[test]
    fn three_frames_in_a_stream() {
        let frames = [
            raw(1),
            TelemetryFrame { seq: 2, timestamp_ms: 5, payload: Payload::Result { class: 0, confidence_q8: 255 } },
            raw(3),
        ];
        let bytes: Vec<u8> = frames.iter().flat_map(|f| f.encode().unwrap()).collect();
        assert_eq!(bytes.len(), 60 + 14 + 60);
        assert_eq!(decode_stream(&bytes).unwrap(), frames);
        let (_, used) = decode(&bytes).unwrap();
        assert_eq!(used, 60);
    }

    #[test]
    fn confidence() {
        assert_eq!(confidence_q8(&[0.1, 0.9]), 230);
        assert_eq!(confidence_q8(&[1.0]), 255);
        assert_eq!(confidence_q8(&[1.0 / 6.0; 6]), 43);
    }
}
