//! `TKBK` bank files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "TKBK"
//! 4       4     version (u32) = 1
//! 8       4     dim (u32)
//! 12      8     N (u64)
//! 20      8     seed (u64)
//! 28      1     pooling mode (0 max, 1 mean, 2 first)
//! 29      3     reserved, zero
//! 32      4     source name length L (u32)
//! 36      L     source name, UTF-8
//! 36+L    4·dim·N  rows, f32 LE, row-major
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{MemoryBank, Provenance};
use crate::error::{Error, Result};
use crate::io_util::atomic_write;
use crate::pooling::PoolingMode;

pub const BANK_MAGIC: &[u8; 4] = b"TKBK";
pub const BANK_VERSION: u32 = 1;
const FIXED_HEADER: usize = 36;

fn encode(bank: &MemoryBank) -> Result<Vec<u8>> {
    let source = bank.provenance.source.as_bytes();
    let mut out = Vec::with_capacity(FIXED_HEADER + source.len() + bank.data.len() * 4);
    out.extend_from_slice(BANK_MAGIC);
    out.extend_from_slice(&BANK_VERSION.to_le_bytes());
    let dim = u32::try_from(bank.dim).map_err(|_| Error::schema("dim exceeds u32"))?;
    out.extend_from_slice(&dim.to_le_bytes());
    out.extend_from_slice(&(bank.len() as u64).to_le_bytes());
    out.extend_from_slice(&bank.seed.to_le_bytes());
    out.push(bank.provenance.pooling.code());
    out.extend_from_slice(&[0u8; 3]);
    let len = u32::try_from(source.len()).map_err(|_| Error::schema("source name too long"))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(source);
    for v in &bank.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn u32_at(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(b[off..off + 4].try_into().expect("4 bytes"))
}

fn u64_at(b: &[u8], off: usize) -> u64 {
    u64::from_le_bytes(b[off..off + 8].try_into().expect("8 bytes"))
}

fn decode(bytes: &[u8]) -> Result<MemoryBank> {
    if bytes.len() < 4 {
        return Err(Error::schema(format!("bank file is {} bytes", bytes.len())));
    }
    if &bytes[..4] != BANK_MAGIC {
        return Err(Error::format("bad bank magic"));
    }
    if bytes.len() < FIXED_HEADER {
        return Err(Error::schema(format!(
            "bank file is {} bytes, header needs {FIXED_HEADER}",
            bytes.len()
        )));
    }
    let version = u32_at(bytes, 4);
    if version != BANK_VERSION {
        return Err(Error::format(format!("unsupported bank version {version}")));
    }
    let dim = u32_at(bytes, 8) as usize;
    if dim == 0 {
        return Err(Error::format("bank dim must be > 0"));
    }
    let n = u64_at(bytes, 12);
    if n == 0 {
        return Err(Error::format("bank has no vectors"));
    }
    let seed = u64_at(bytes, 20);
    let pooling = PoolingMode::from_code(bytes[28])
        .ok_or_else(|| Error::format(format!("unknown pooling code {}", bytes[28])))?;
    if bytes[29..32] != [0, 0, 0] {
        return Err(Error::format("reserved header bytes are not zero"));
    }
    let name_len = u32_at(bytes, 32) as usize;
    let rows_off = FIXED_HEADER + name_len;
    let expected = (n as u128) * (dim as u128) * 4 + rows_off as u128;
    if bytes.len() as u128 != expected {
        return Err(Error::schema(format!(
            "bank file is {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let source = std::str::from_utf8(&bytes[FIXED_HEADER..rows_off])
        .map_err(|_| Error::format("source name is not UTF-8"))?
        .to_owned();
    let data: Vec<f32> = bytes[rows_off..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("bank contains a non-finite value"));
    }
    Ok(MemoryBank::from_raw(
        dim,
        data,
        Provenance { source, pooling },
        seed,
    ))
}

pub fn save_bank(bank: &MemoryBank, path: &Path) -> Result<()> {
    let bytes = encode(bank)?;
    atomic_write(path, |w| w.write_all(&bytes))
}

pub fn load_bank(path: &Path) -> Result<MemoryBank> {
    decode(&fs::read(path)?)
}
