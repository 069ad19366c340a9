//! Versioned binary checkpoints: magic bytes "MCHI1", a small fixed header,
//! then each weight matrix as little-endian u64 shape fields followed by its
//! row-major f64 payload.

use super::{EncoderParams, EncoderVariant};
use crate::error::{Error, Result};
use crate::numcore::Matrix;
use std::path::Path;

const MAGIC: &[u8; 5] = b"MCHI1";

fn push_matrix(buf: &mut Vec<u8>, m: &Matrix) {
    buf.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    buf.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for &v in m.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn save_checkpoint(path: &Path, params: &EncoderParams) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.push(match params.variant {
        EncoderVariant::Mlp => 0,
        EncoderVariant::HopAttention => 1,
    });
    buf.extend_from_slice(&params.dropout.to_le_bytes());
    buf.extend_from_slice(&(params.hop_proj.len() as u32).to_le_bytes());
    buf.push(u8::from(params.query_proj.is_some()));
    for m in params.matrices() {
        push_matrix(&mut buf, m);
    }
    std::fs::write(path, buf)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Parse(format!(
                "checkpoint truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn matrix(&mut self) -> Result<Matrix> {
        let rows = self.u64()? as usize;
        let cols = self.u64()? as usize;
        let count = rows.checked_mul(cols).ok_or_else(|| {
            Error::Parse(format!("checkpoint matrix shape overflow: {rows}x{cols}"))
        })?;
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            data.push(self.f64()?);
        }
        Matrix::try_from_vec(rows, cols, data)
    }
}

pub fn load_checkpoint(path: &Path) -> Result<EncoderParams> {
    let buf = std::fs::read(path)?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(MAGIC.len())? != MAGIC {
        return Err(Error::Parse("bad checkpoint magic".into()));
    }
    let variant = match c.u8()? {
        0 => EncoderVariant::Mlp,
        1 => EncoderVariant::HopAttention,
        v => return Err(Error::Parse(format!("unknown encoder variant tag {v}"))),
    };
    let dropout = c.f64()?;
    if !(0.0..1.0).contains(&dropout) {
        return Err(Error::Parse(format!("dropout {dropout} outside [0, 1)")));
    }
    let n_hops = c.u32()? as usize;
    let has_query = match c.u8()? {
        0 => false,
        1 => true,
        v => return Err(Error::Parse(format!("bad query-projection flag {v}"))),
    };
    let mut hop_proj = Vec::with_capacity(n_hops);
    for _ in 0..n_hops {
        hop_proj.push(c.matrix()?);
    }
    let query_proj = if has_query { Some(c.matrix()?) } else { None };
    let w1 = c.matrix()?;
    let b1 = c.matrix()?;
    let w2 = c.matrix()?;
    let b2 = c.matrix()?;
    let w3 = c.matrix()?;
    let b3 = c.matrix()?;
    if c.pos != buf.len() {
        return Err(Error::Parse(format!(
            "{} trailing bytes after checkpoint payload",
            buf.len() - c.pos
        )));
    }
    let params = EncoderParams {
        variant,
        hop_proj,
        query_proj,
        w1,
        b1,
        w2,
        b2,
        w3,
        b3,
        dropout,
    };
    params.validate()?;
    Ok(params)
}
