//! Little-endian binary pool files.
//!
//! ```text
//! magic "RIPOOL\0" | u8 version | u8 model kind | f64 eps | u32 m | u32 ns | u64 count
//! per entry: u32 id | m x f64 bins | model params (2 or 13 x f64) | 2 x i64 bounds | f64 max_abs_err
//! ```
//!
//! Version 2 appends a `u64` source size to every entry. It is written only
//! when some entry was trained on a set whose size differs from `ns`.

use std::path::Path;

use super::{ModelPool, PoolEntry};
use crate::error::{FormatError, Result};
use crate::models::{ErrorBounds, ModelKind, RankPredictor};

pub const MAGIC: &[u8; 7] = b"RIPOOL\0";
pub const FORMAT_VERSION: u8 = 1;
const SIZED_VERSION: u8 = 2;

pub fn encode_pool(pool: &ModelPool) -> Vec<u8> {
    let sized = pool.entries.iter().any(|e| e.source_len != pool.synthetic_size);
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(if sized { SIZED_VERSION } else { FORMAT_VERSION });
    out.push(pool.kind.tag());
    out.extend_from_slice(&pool.eps.to_le_bytes());
    out.extend_from_slice(&(pool.bins as u32).to_le_bytes());
    out.extend_from_slice(&(pool.synthetic_size as u32).to_le_bytes());
    out.extend_from_slice(&(pool.entries.len() as u64).to_le_bytes());
    for e in &pool.entries {
        out.extend_from_slice(&e.id.to_le_bytes());
        for b in &e.histogram {
            out.extend_from_slice(&b.to_le_bytes());
        }
        for p in e.model.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out.extend_from_slice(&e.bounds.lower.to_le_bytes());
        out.extend_from_slice(&e.bounds.upper.to_le_bytes());
        out.extend_from_slice(&e.max_abs_err.to_le_bytes());
        if sized {
            out.extend_from_slice(&(e.source_len as u64).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let left = self.buf.len() - self.pos;
        if left < n {
            return Err(FormatError::Truncated {
                offset: self.pos,
                needed: n - left,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], FormatError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn i64(&mut self) -> Result<i64, FormatError> {
        Ok(i64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.array()?))
    }
}

pub fn decode_pool(bytes: &[u8]) -> Result<ModelPool, FormatError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(FormatError::BadMagic);
    }
    let version = r.u8()?;
    if version != FORMAT_VERSION && version != SIZED_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let tag = r.u8()?;
    let kind = ModelKind::from_tag(tag).ok_or_else(|| FormatError::Malformed(format!("model kind {tag}")))?;
    let eps = r.f64()?;
    let bins = r.u32()? as usize;
    let synthetic_size = r.u32()? as usize;
    let count = r.u64()?;
    if bins == 0 {
        return Err(FormatError::Malformed("zero bins".into()));
    }
    let per_entry = 4 + 8 * (bins + kind.param_count() + 3) + if version == SIZED_VERSION { 8 } else { 0 };
    let body = (bytes.len() - r.pos) as u64;
    let wanted = count.saturating_mul(per_entry as u64);
    if wanted > body {
        return Err(FormatError::Truncated {
            offset: bytes.len(),
            needed: (wanted - body).min(usize::MAX as u64) as usize,
        });
    }
    let mut entries = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let id = r.u32()?;
        let histogram = (0..bins).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let params = (0..kind.param_count()).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let model = RankPredictor::from_params(kind, &params).expect("parameter count matches kind");
        let bounds = ErrorBounds {
            lower: r.i64()?,
            upper: r.i64()?,
        };
        let max_abs_err = r.f64()?;
        let source_len = if version == SIZED_VERSION {
            r.u64()? as usize
        } else {
            synthetic_size
        };
        entries.push(PoolEntry {
            id,
            histogram,
            model,
            bounds,
            max_abs_err,
            source_len,
        });
    }
    if r.pos != bytes.len() {
        return Err(FormatError::Malformed(format!(
            "{} trailing bytes after {count} entries",
            bytes.len() - r.pos
        )));
    }
    if entries.windows(2).any(|w| w[0].max_abs_err > w[1].max_abs_err) {
        return Err(FormatError::Malformed("entries out of error order".into()));
    }
    Ok(ModelPool::from_parts(kind, eps, bins, synthetic_size, entries))
}

pub fn save_pool(pool: &ModelPool, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_pool(pool)).map_err(FormatError::Io)?;
    Ok(())
}

pub fn load_pool(path: impl AsRef<Path>) -> Result<ModelPool> {
    let bytes = std::fs::read(path).map_err(FormatError::Io)?;
    Ok(decode_pool(&bytes)?)
}
