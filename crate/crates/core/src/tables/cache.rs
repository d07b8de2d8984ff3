//! Binary table cache.
//!
//! Little-endian layout:
//!
//! ```text
//! "NLIT" | version u32 | table hash u64 | N u32 | mode u8 | corrections u8
//! | quadrature digest u64
//! | D1 (N f64) | D2, D3, D4 (N×N f64 each, row-major)
//! | error estimates, same layout
//! | metadata length u32 | metadata JSON (quadrature settings, warnings)
//! | checksum u64 (first 8 bytes of SHA-256 over everything before it)
//! ```

use serde::{Deserialize, Serialize};

use super::NliTables;
use crate::config::{digest64, CorrectionMode, ModelMode};
use crate::error::{Error, Result};
use crate::quadrature::QuadratureSpec;

pub const CACHE_MAGIC: &[u8; 4] = b"NLIT";
pub const CACHE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Metadata {
    quadrature: QuadratureSpec,
    warnings: Vec<String>,
}

fn mode_code(m: ModelMode) -> u8 {
    match m {
        ModelMode::Egn => 0,
        ModelMode::Gn => 1,
    }
}

fn corrections_code(c: CorrectionMode) -> u8 {
    match c {
        CorrectionMode::Full => 0,
        CorrectionMode::Dominant => 1,
        CorrectionMode::Off => 2,
    }
}

pub(super) fn encode(t: &NliTables) -> Vec<u8> {
    let n = t.num_channels;
    let mut out = Vec::with_capacity(64 + 8 * 2 * (n + 3 * n * n));
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(&t.table_hash.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.push(mode_code(t.model_mode));
    out.push(corrections_code(t.corrections));
    out.extend_from_slice(&t.quadrature.digest().to_le_bytes());
    for block in [
        &t.d1, &t.d2, &t.d3, &t.d4, &t.err_d1, &t.err_d2, &t.err_d3, &t.err_d4,
    ] {
        for x in block.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    let meta = serde_json::to_vec(&Metadata {
        quadrature: t.quadrature.clone(),
        warnings: t.warnings.clone(),
    })
    .expect("serializable");
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    let sum = digest64(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Cache("file is truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Cache("bad size".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub(super) fn decode(bytes: &[u8]) -> Result<NliTables> {
    if bytes.len() < 8 {
        return Err(Error::Cache("file is truncated".into()));
    }
    let (payload, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    if digest64(payload) != stored {
        return Err(Error::Cache("checksum mismatch (file corrupted)".into()));
    }
    let mut r = Reader { buf: payload, pos: 0 };
    if r.take(4)? != CACHE_MAGIC {
        return Err(Error::Cache("not a table cache (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CACHE_VERSION {
        return Err(Error::Cache(format!("unsupported format version {version}")));
    }
    let table_hash = r.u64()?;
    let n = r.u32()? as usize;
    let model_mode = match r.u8()? {
        0 => ModelMode::Egn,
        1 => ModelMode::Gn,
        x => return Err(Error::Cache(format!("unknown model mode {x}"))),
    };
    let corrections = match r.u8()? {
        0 => CorrectionMode::Full,
        1 => CorrectionMode::Dominant,
        2 => CorrectionMode::Off,
        x => return Err(Error::Cache(format!("unknown correction mode {x}"))),
    };
    let q_digest = r.u64()?;
    let nn = n
        .checked_mul(n)
        .ok_or_else(|| Error::Cache("bad channel count".into()))?;
    let d1 = r.f64s(n)?;
    let d2 = r.f64s(nn)?;
    let d3 = r.f64s(nn)?;
    let d4 = r.f64s(nn)?;
    let err_d1 = r.f64s(n)?;
    let err_d2 = r.f64s(nn)?;
    let err_d3 = r.f64s(nn)?;
    let err_d4 = r.f64s(nn)?;
    let len = r.u32()? as usize;
    let meta: Metadata = serde_json::from_slice(r.take(len)?)
        .map_err(|e| Error::Cache(format!("bad metadata: {e}")))?;
    if r.pos != payload.len() {
        return Err(Error::Cache("trailing bytes".into()));
    }
    if meta.quadrature.digest() != q_digest {
        return Err(Error::Cache("quadrature digest mismatch".into()));
    }
    Ok(NliTables {
        num_channels: n,
        d1,
        d2,
        d3,
        d4,
        err_d1,
        err_d2,
        err_d3,
        err_d4,
        table_hash,
        model_mode,
        corrections,
        quadrature: meta.quadrature,
        warnings: meta.warnings,
    })
}
