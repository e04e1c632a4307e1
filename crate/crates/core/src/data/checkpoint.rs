//! Trained-parameter container: "SRXC", version, epoch, an embedded config
//! document, then named tensors. Parameter payloads are stored as f64 so a
//! resumed run continues from exactly the state it stopped at; feature
//! files keep their 32-bit storage, checkpoints cannot afford the rounding.

use super::bytes::{ByteReader, ByteWriter};
use crate::error::{Result, SrxError};
use crate::tensor::Tensor;
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SRXC";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointData {
    /// Number of completed training epochs.
    pub epoch: u32,
    /// Run configuration document, stored verbatim.
    pub config: String,
    /// Named parameter tensors in canonical traversal order.
    pub entries: Vec<(String, Tensor)>,
}

pub fn encode_checkpoint(c: &CheckpointData) -> Result<Vec<u8>> {
    let mut w = ByteWriter::new();
    w.bytes(CHECKPOINT_MAGIC);
    w.u16(VERSION);
    w.u32(c.epoch);
    if c.config.len() > u32::MAX as usize {
        return Err(SrxError::contract("config document too large"));
    }
    w.u32(c.config.len() as u32);
    w.bytes(c.config.as_bytes());
    if c.entries.len() > u32::MAX as usize {
        return Err(SrxError::contract("too many parameter tensors"));
    }
    w.u32(c.entries.len() as u32);
    for (name, t) in &c.entries {
        if name.len() > u16::MAX as usize {
            return Err(SrxError::contract(format!("parameter name '{name}' too long")));
        }
        w.u16(name.len() as u16);
        w.bytes(name.as_bytes());
        if t.rank() > u8::MAX as usize {
            return Err(SrxError::contract("tensor rank too large"));
        }
        w.u8(t.rank() as u8);
        for d in t.shape() {
            if *d > u32::MAX as usize {
                return Err(SrxError::contract("tensor dimension too large"));
            }
            w.u32(*d as u32);
        }
        for v in t.data() {
            w.f64(*v);
        }
    }
    Ok(w.into_vec())
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<CheckpointData> {
    let mut r = ByteReader::new(bytes);
    r.magic(CHECKPOINT_MAGIC, "checkpoint")?;
    let at = r.offset();
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(SrxError::format(at, format!("unsupported version {version}")));
    }
    let epoch = r.u32("epoch")?;
    let config_len = r.u32("config length")? as usize;
    let config = r.utf8(config_len, "config document")?;
    let n_entries = r.u32("entry count")? as usize;
    let mut entries = Vec::with_capacity(n_entries.min(4096));
    for _ in 0..n_entries {
        let name_len = r.u16("name length")? as usize;
        let name = r.utf8(name_len, "parameter name")?;
        let rank = r.u8("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        let mut len = 1usize;
        for _ in 0..rank {
            let d = r.u32("dimension")? as usize;
            len = len.checked_mul(d).ok_or_else(|| {
                SrxError::format(r.offset(), "tensor size overflows")
            })?;
            shape.push(d);
        }
        let data = r.f64s(len, "parameter payload")?;
        let tensor = match shape.len() {
            0 => Tensor::scalar(data[0]),
            1 => Tensor::vector(data),
            2 => Tensor::matrix(shape[0], shape[1], data)?,
            n => {
                return Err(SrxError::format(
                    r.offset(),
                    format!("unsupported tensor rank {n}"),
                ))
            }
        };
        entries.push((name, tensor));
    }
    r.finish()?;
    Ok(CheckpointData { epoch, config, entries })
}

pub fn write_checkpoint(path: &Path, c: &CheckpointData) -> Result<()> {
    Ok(std::fs::write(path, encode_checkpoint(c)?)?)
}

pub fn read_checkpoint(path: &Path) -> Result<CheckpointData> {
    decode_checkpoint(&std::fs::read(path)?)
}
