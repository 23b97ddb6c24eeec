//! SOSD key files: little-endian `u64` count followed by that many sorted
//! `u64` keys.

use std::fs;
use std::io;
use std::path::Path;

use reuse_index::distribution::first_unsorted;
use reuse_index::KeySet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SosdError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("file truncated: header declares {declared} keys but only {available} bytes of keys follow")]
    Truncated { declared: u64, available: u64 },
    #[error("count mismatch: header declares {declared} keys but {trailing} extra bytes follow them")]
    CountMismatch { declared: u64, trailing: u64 },
    #[error("keys not sorted at index {index}")]
    Unsorted { index: usize },
}

pub fn encode(keys: &[u64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 * (keys.len() + 1));
    out.extend_from_slice(&(keys.len() as u64).to_le_bytes());
    for k in keys {
        out.extend_from_slice(&k.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<KeySet, SosdError> {
    let Some(header) = bytes.get(..8) else {
        return Err(SosdError::Truncated {
            declared: 0,
            available: bytes.len() as u64,
        });
    };
    let declared = u64::from_le_bytes(header.try_into().expect("8 bytes"));
    let body = (bytes.len() - 8) as u64;
    let needed = declared.saturating_mul(8);
    if body < needed {
        return Err(SosdError::Truncated {
            declared,
            available: body,
        });
    }
    if body > needed {
        return Err(SosdError::CountMismatch {
            declared,
            trailing: body - needed,
        });
    }
    let keys: Vec<u64> = bytes[8..]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if let Some(index) = first_unsorted(&keys) {
        return Err(SosdError::Unsorted { index });
    }
    Ok(KeySet::new(keys).expect("checked sorted"))
}

pub fn read(path: impl AsRef<Path>) -> Result<KeySet, SosdError> {
    decode(&fs::read(path)?)
}

pub fn write(keys: &[u64], path: impl AsRef<Path>) -> Result<(), SosdError> {
    if let Some(index) = first_unsorted(keys) {
        return Err(SosdError::Unsorted { index });
    }
    fs::write(path, encode(keys))?;
    Ok(())
}
