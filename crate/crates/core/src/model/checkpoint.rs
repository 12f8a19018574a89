//! Binary checkpoint container.
//!
//! Layout (little endian): `PAFF`, `u16` version, `u32` metadata length,
//! metadata JSON, `u32` tensor count, then per tensor `u16` name length, name,
//! `u8` rank, `u32` dims, `f64` values; finally a CRC-32 of every preceding
//! byte.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::network::{param_layout, Model};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PAFF";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs_completed: usize,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Metadata {
    tool_version: String,
    config: ModelConfig,
    input_len: usize,
    training: TrainingMeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub training: TrainingMeta,
}

pub fn encode(model: &Model, training: &TrainingMeta) -> Result<Vec<u8>> {
    let meta = Metadata {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config: model.config.clone(),
        input_len: model.input_len,
        training: training.clone(),
    };
    let meta = serde_json::to_vec(&meta).map_err(|e| Error::Format(e.to_string()))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    buf.extend_from_slice(&meta);
    buf.extend_from_slice(&(model.params.len() as u32).to_le_bytes());
    for ((name, _), t) in param_layout(&model.config).iter().zip(&model.params) {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(t.rank() as u8);
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format("checkpoint ends unexpectedly".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Format("not a checkpoint file (bad magic)".into()));
    }
    if bytes.len() < 6 {
        return Err(Error::Format("checkpoint ends unexpectedly".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::Version { found: version, expected: FORMAT_VERSION });
    }
    if bytes.len() < 10 {
        return Err(Error::Format("checkpoint ends unexpectedly".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    let mut r = Reader { buf: body, pos: 6 };
    let meta_len = r.u32()? as usize;
    let meta: Metadata = serde_json::from_slice(r.take(meta_len)?).map_err(|e| Error::Format(e.to_string()))?;
    meta.config.validate()?;
    let layout = param_layout(&meta.config);
    let count = r.u32()? as usize;
    if count != layout.len() {
        return Err(Error::Format(format!("expected {} tensors, found {count}", layout.len())));
    }
    let mut params = Vec::with_capacity(count);
    for (name, shape) in &layout {
        let len = r.u16()? as usize;
        let found = std::str::from_utf8(r.take(len)?).map_err(|e| Error::Format(e.to_string()))?;
        let rank = r.u8()? as usize;
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if found != name || &dims != shape {
            return Err(Error::Format(format!("tensor {found} {dims:?} where {name} {shape:?} was expected")));
        }
        let n = dims.iter().product();
        let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        params.push(Tensor::new(dims, data)?);
    }
    if r.pos != body.len() {
        return Err(Error::Format("trailing bytes after the last tensor".into()));
    }
    let model = Model { config: meta.config, input_len: meta.input_len, params };
    Ok(Checkpoint { model, training: meta.training })
}

/// Writes to a sibling temporary file and renames it over `path`.
pub fn save_checkpoint(model: &Model, training: &TrainingMeta, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(model, training)?;
    let file_name =
        path.file_name().ok_or_else(|| Error::InvalidArgument(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", file_name.to_string_lossy(), std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
