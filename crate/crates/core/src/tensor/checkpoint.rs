//! Named-tensor checkpoint file.
//!
//! Layout (all integers little-endian):
//! `"EAWT"`, version `u32`, tensor count `u32`, then per tensor: name length
//! `u16`, UTF-8 name, rank `u8`, each dimension `u32`, `f32` payload.

use std::path::Path;

use super::Tensor;
use crate::bytes::{magic_str, ByteReader};
use crate::error::{Error, FormatError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"EAWT";
const VERSION: u32 = 1;

/// Ordered `(name, tensor)` pairs as stored on disk.
pub type Checkpoint = Vec<(String, Tensor<f32>)>;

pub fn encode_checkpoint(entries: &[(String, Tensor<f32>)]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, t) in entries {
        let name_len = u16::try_from(name.len())
            .map_err(|_| Error::Validation(format!("tensor name too long: {name}")))?;
        let rank = u8::try_from(t.shape().len())
            .map_err(|_| Error::Validation(format!("tensor `{name}` rank too large")))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(rank);
        for &d in t.shape() {
            let d = u32::try_from(d).map_err(|_| Error::Validation(format!("dimension {d} too large")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = ByteReader::new(bytes);
    let magic = r.take(4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(FormatError::BadMagic {
            expected: "EAWT".into(),
            found: magic_str(magic),
        }
        .into());
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion {
            format: "checkpoint",
            version,
        }
        .into());
    }
    let count = r.u32("tensor count")? as usize;
    let mut entries = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "tensor name")?)
            .map_err(|_| FormatError::InvalidHeader(format!("tensor {i} name is not UTF-8")))?
            .to_string();
        let rank = r.u8("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("dimension")? as usize);
        }
        let n: usize = shape.iter().product();
        let data = r.f32_vec(n, &format!("payload of `{name}`"))?;
        let t = Tensor::new(shape, data)
            .map_err(|e| FormatError::InvalidHeader(format!("tensor `{name}`: {e}")))?;
        entries.push((name, t));
    }
    if r.remaining() != 0 {
        return Err(FormatError::InvalidHeader(format!("{} trailing bytes", r.remaining())).into());
    }
    Ok(entries)
}

pub fn write_checkpoint(path: impl AsRef<Path>, entries: &[(String, Tensor<f32>)]) -> Result<()> {
    std::fs::write(path, encode_checkpoint(entries)?)?;
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    decode_checkpoint(&std::fs::read(path)?)
}
