//! Binary parameter checkpoints.
//!
//! ```text
//! "KIDC" | version u32
//! per tensor: name_len u32 | name (UTF-8) | rank u32 | dims u32 × rank | values f32 × numel
//! crc32 u32 over the tensor records
//! ```
//!
//! All integers and floats are little-endian.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::config::ModelConfig;
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::numcore::Tensor;

pub const MAGIC: &[u8; 4] = b"KIDC";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode_params(params: &ModelParams<f32>) -> Vec<u8> {
    let mut payload = Vec::with_capacity(params.count() * 4 + params.len() * 64);
    for (name, t) in params.named() {
        payload.extend_from_slice(&(name.len() as u32).to_le_bytes());
        payload.extend_from_slice(name.as_bytes());
        payload.extend_from_slice(&(t.dims().len() as u32).to_le_bytes());
        for &d in t.dims() {
            payload.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.values() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut out = Vec::with_capacity(payload.len() + 12);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated while reading {what} at byte {}", self.pos + 8))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Parses the named tensors without checking them against any config.
pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<(String, Tensor<f32>)>> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Checkpoint("bad magic, not a checkpoint file".into()));
    }
    if bytes.len() < 12 {
        return Err(Error::Checkpoint("truncated header".into()));
    }
    let version = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]);
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {version} is not supported (expected {FORMAT_VERSION})"
        )));
    }
    let (payload, crc) = bytes[8..].split_at(bytes.len() - 12);
    let mut r = Reader { bytes: payload, pos: 0 };
    let mut out = Vec::new();
    while r.pos < payload.len() {
        let n = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(n, "name")?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32("rank")? as usize;
        if rank == 0 || rank > 8 {
            return Err(Error::Checkpoint(format!("tensor {name} has rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32("dims")? as usize);
        }
        let numel = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| {
            Error::Checkpoint(format!("tensor {name} dims {dims:?} overflow"))
        })?;
        let raw = r.take(numel.checked_mul(4).unwrap_or(usize::MAX), "values")?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let t = Tensor::new(dims, values)
            .map_err(|e| Error::Checkpoint(format!("tensor {name}: {e}")))?;
        out.push((name, t));
    }
    let stored = u32::from_le_bytes([crc[0], crc[1], crc[2], crc[3]]);
    if stored != crc32fast::hash(payload) {
        return Err(Error::Checkpoint("CRC mismatch, file is corrupt or truncated".into()));
    }
    Ok(out)
}

pub fn decode_params(bytes: &[u8], config: &ModelConfig) -> Result<ModelParams<f32>> {
    ModelParams::from_named(config, decode_tensors(bytes)?)
}

/// Writes through a temporary sibling and renames, so an interrupted save
/// leaves any previous file at `path` intact.
pub fn save_params(params: &ModelParams<f32>, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_params(params))
}

pub fn load_params(path: impl AsRef<Path>, config: &ModelConfig) -> Result<ModelParams<f32>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_params(&bytes, config)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let result = (|| {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}
