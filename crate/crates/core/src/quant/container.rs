//! Binary container for [`QuantizedModel`]. All multi-byte fields are
//! little-endian.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "HSQ8"
//! 4       2     format version (1)
//! 6       2     flags (0)
//! 8       4     body length N
//! 12      N     body
//! 12+N    2     CRC-16/CCITT-FALSE of bytes 0 .. 12+N
//!
//! body:
//!   str   normalizer source          (u16 length + UTF-8)
//!   str   training config hash
//!   24 × f64  normalizer means
//!   24 × f64  normalizer deviations
//!   4 × activation (input, conv1, conv2, fc1):
//!         f64 scale, i32 zero point, f64 calibration min, f64 calibration max
//!   4 × layer (conv1, conv2, fc1, fc2):
//!         f64 weight scale, i32 weight zero point,
//!         i32 requant mantissa, u32 requant shift   (both 0 on fc2)
//!         u32 weight count, weight count × i8
//!         u32 bias count,   bias count × i32
//!   f64   logit error bound
//! ```

use super::affine::{QuantParams, Requant};
use super::model::{ActQuant, QLayer, QuantizedModel};
use super::{QuantError, Result};
use crate::nn::Normalizer;
use crate::sim::FRAME_CHANNELS;
use crate::telemetry::crc16;

pub const QMODEL_MAGIC: [u8; 4] = *b"HSQ8";
pub const QMODEL_VERSION: u16 = 1;
const HEADER_LEN: usize = 12;

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    let len = u16::try_from(s.len()).map_err(|_| QuantError::Format("string longer than 65535 bytes".into()))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

pub fn to_bytes(m: &QuantizedModel) -> Result<Vec<u8>> {
    m.validate()?;
    let mut body = Vec::new();
    put_str(&mut body, &m.normalizer.source)?;
    put_str(&mut body, &m.train_config_hash)?;
    for v in m.normalizer.mean.iter().chain(&m.normalizer.std) {
        body.extend_from_slice(&v.to_le_bytes());
    }
    for a in &m.activations {
        body.extend_from_slice(&a.params.scale.to_le_bytes());
        body.extend_from_slice(&a.params.zero_point.to_le_bytes());
        body.extend_from_slice(&a.min.to_le_bytes());
        body.extend_from_slice(&a.max.to_le_bytes());
    }
    for l in &m.layers {
        body.extend_from_slice(&l.weight_params.scale.to_le_bytes());
        body.extend_from_slice(&l.weight_params.zero_point.to_le_bytes());
        let (mantissa, shift) = l.requant.map_or((0, 0), |r| (r.mantissa, r.shift));
        body.extend_from_slice(&mantissa.to_le_bytes());
        body.extend_from_slice(&shift.to_le_bytes());
        body.extend_from_slice(&(l.weight.len() as u32).to_le_bytes());
        body.extend(l.weight.iter().map(|&w| w as u8));
        body.extend_from_slice(&(l.bias.len() as u32).to_le_bytes());
        for b in &l.bias {
            body.extend_from_slice(&b.to_le_bytes());
        }
    }
    body.extend_from_slice(&m.logit_error_bound.to_le_bytes());

    let mut out = Vec::with_capacity(HEADER_LEN + body.len() + 2);
    out.extend_from_slice(&QMODEL_MAGIC);
    out.extend_from_slice(&QMODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend_from_slice(&body);
    let crc = crc16(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(QuantError::Truncated)?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| QuantError::Format("string is not UTF-8".into()))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<QuantizedModel> {
    if bytes.len() < HEADER_LEN + 2 {
        return Err(QuantError::Truncated);
    }
    if bytes[..4] != QMODEL_MAGIC {
        return Err(QuantError::BadMagic);
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != QMODEL_VERSION {
        return Err(QuantError::UnsupportedVersion(version));
    }
    let body_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let total = HEADER_LEN.checked_add(body_len).and_then(|n| n.checked_add(2)).ok_or(QuantError::Truncated)?;
    if bytes.len() < total {
        return Err(QuantError::Truncated);
    }
    if bytes.len() > total {
        return Err(QuantError::Format(format!("{} trailing bytes", bytes.len() - total)));
    }
    let stored = u16::from_le_bytes([bytes[total - 2], bytes[total - 1]]);
    if crc16(&bytes[..total - 2]) != stored {
        return Err(QuantError::CrcMismatch);
    }

    let mut r = Reader { buf: &bytes[HEADER_LEN..total - 2], pos: 0 };
    let source = r.string()?;
    let train_config_hash = r.string()?;
    let mut stats = [0.0; 2 * FRAME_CHANNELS];
    for v in stats.iter_mut() {
        *v = r.f64()?;
    }
    let normalizer =
        Normalizer { mean: stats[..FRAME_CHANNELS].to_vec(), std: stats[FRAME_CHANNELS..].to_vec(), source };
    let mut activations = Vec::with_capacity(4);
    for _ in 0..4 {
        let params = QuantParams { scale: r.f64()?, zero_point: r.i32()? };
        activations.push(ActQuant { params, min: r.f64()?, max: r.f64()? });
    }
    let mut layers = Vec::with_capacity(4);
    for _ in 0..4 {
        let weight_params = QuantParams { scale: r.f64()?, zero_point: r.i32()? };
        let mantissa = r.i32()?;
        let shift = r.u32()?;
        let requant = (mantissa != 0 || shift != 0).then_some(Requant { mantissa, shift });
        let nw = r.u32()? as usize;
        let weight = r.take(nw)?.iter().map(|&b| b as i8).collect();
        let nb = r.u32()? as usize;
        let bias = (0..nb).map(|_| r.i32()).collect::<Result<Vec<_>>>()?;
        layers.push(QLayer { weight, weight_params, bias, requant });
    }
    let logit_error_bound = r.f64()?;
    if r.pos != r.buf.len() {
        return Err(QuantError::Format("body length does not match its contents".into()));
    }
    let model = QuantizedModel {
        normalizer,
        train_config_hash,
        activations: activations.try_into().expect("four activations"),
        layers: layers.try_into().expect("four layers"),
        logit_error_bound,
    };
    model.validate()?;
    Ok(model)
}
