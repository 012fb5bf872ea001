//! Binary sketch format. All integers are u64 and all reals binary64,
//! little-endian:
//!
//! ```text
//! "FDSK" | version: u16 | k | ell | m | d | rows_seen | eps | delta | input_frob_sq | m·d buffer entries (row-major)
//! ```

use thiserror::Error;

use super::{FdParams, FdSketch, SketchError};
use crate::linalg::DenseMatrix;

pub const MAGIC: &[u8; 4] = b"FDSK";
pub const FORMAT_VERSION: u16 = 1;

const HEADER_LEN: usize = 4 + 2 + 5 * 8 + 3 * 8;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("not a sketch file (bad magic)")]
    BadMagic,
    #[error("unsupported sketch format version {0}")]
    UnsupportedVersion(u16),
    #[error("sketch file truncated: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("sketch file has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error("non-finite or negative value in field {0}")]
    BadValue(&'static str),
    #[error(transparent)]
    Params(#[from] SketchError),
}

/// Serialises the compressed form of `sketch`; buffered rows are
/// compressed on a copy first.
pub fn encode(sketch: &FdSketch) -> Result<Vec<u8>, SketchError> {
    let s = sketch.flushed()?;
    let p = s.params();
    let mut out = Vec::with_capacity(HEADER_LEN + p.capacity * p.d * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for v in [p.k as u64, p.ell as u64, p.capacity as u64, p.d as u64, s.rows_seen()] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in [p.eps, s.delta(), s.input_frob_sq()] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in s.buffer().as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        let end = self.pos + N;
        if end > self.bytes.len() {
            return Err(DecodeError::Truncated { need: end, have: self.bytes.len() });
        }
        let mut buf = [0u8; N];
        buf.copy_from_slice(&self.bytes[self.pos..end]);
        self.pos = end;
        Ok(buf)
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64, DecodeError> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

fn to_usize(v: u64, field: &'static str) -> Result<usize, DecodeError> {
    usize::try_from(v).map_err(|_| DecodeError::BadValue(field))
}

pub fn decode(bytes: &[u8]) -> Result<FdSketch, DecodeError> {
    let mut r = Reader { bytes, pos: 0 };
    if &r.take::<4>()? != MAGIC {
        return Err(DecodeError::BadMagic);
    }
    let version = u16::from_le_bytes(r.take()?);
    if version != FORMAT_VERSION {
        return Err(DecodeError::UnsupportedVersion(version));
    }
    let k = to_usize(r.u64()?, "k")?;
    let ell = to_usize(r.u64()?, "ell")?;
    let m = to_usize(r.u64()?, "m")?;
    let d = to_usize(r.u64()?, "d")?;
    let rows_seen = r.u64()?;
    let eps = r.f64()?;
    let delta = r.f64()?;
    let frob = r.f64()?;
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(DecodeError::BadValue("delta"));
    }
    if !(frob.is_finite() && frob >= 0.0) {
        return Err(DecodeError::BadValue("input_frob_sq"));
    }
    let params = FdParams::from_stored(k, eps, ell, m, d)?;

    let entries = m.checked_mul(d).ok_or(DecodeError::BadValue("m*d"))?;
    let need = HEADER_LEN + entries * 8;
    if bytes.len() < need {
        return Err(DecodeError::Truncated { need, have: bytes.len() });
    }
    if bytes.len() > need {
        return Err(DecodeError::TrailingBytes(bytes.len() - need));
    }
    let mut data = Vec::with_capacity(entries);
    for _ in 0..entries {
        data.push(r.f64()?);
    }
    let buffer = DenseMatrix::from_vec(m, d, data).map_err(|_| DecodeError::BadValue("buffer"))?;
    Ok(FdSketch::from_parts(params, buffer, delta, frob, rows_seen))
}
