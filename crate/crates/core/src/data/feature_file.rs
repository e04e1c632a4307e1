//! Expert-feature container: "SRXF", version, stream tag, rows, cols,
//! then row-major little-endian f32 values. Storage is 32-bit; compute
//! promotes to 64-bit on load.

use super::bytes::{ByteReader, ByteWriter};
use crate::error::{Result, SrxError};
use crate::tensor::Tensor;
use crate::visual_encoder::Stream;
use std::path::Path;

pub const FEATURE_MAGIC: &[u8; 4] = b"SRXF";
const VERSION: u16 = 1;

fn tag_byte(s: Stream) -> u8 {
    match s {
        Stream::Spatial => b'S',
        Stream::Temporal => b'T',
        Stream::Object => b'O',
    }
}

fn tag_stream(b: u8, offset: usize) -> Result<Stream> {
    match b {
        b'S' => Ok(Stream::Spatial),
        b'T' => Ok(Stream::Temporal),
        b'O' => Ok(Stream::Object),
        other => Err(SrxError::format(
            offset,
            format!("unknown stream tag 0x{other:02x}"),
        )),
    }
}

pub fn encode_feature(stream: Stream, t: &Tensor) -> Result<Vec<u8>> {
    let (rows, cols) = t.dims2()?;
    if rows > u32::MAX as usize || cols > u32::MAX as usize {
        return Err(SrxError::contract("feature matrix too large for the format"));
    }
    let mut w = ByteWriter::new();
    w.bytes(FEATURE_MAGIC);
    w.u16(VERSION);
    w.u8(tag_byte(stream));
    w.u32(rows as u32);
    w.u32(cols as u32);
    for v in t.data() {
        w.f32(*v as f32);
    }
    Ok(w.into_vec())
}

pub fn decode_feature(bytes: &[u8]) -> Result<(Stream, Tensor)> {
    let mut r = ByteReader::new(bytes);
    r.magic(FEATURE_MAGIC, "feature")?;
    let at = r.offset();
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(SrxError::format(at, format!("unsupported version {version}")));
    }
    let tag_at = r.offset();
    let tag = r.u8("stream tag")?;
    let stream = tag_stream(tag, tag_at)?;
    let rows = r.u32("row count")? as usize;
    let cols = r.u32("column count")? as usize;
    let n = rows.checked_mul(cols).ok_or_else(|| {
        SrxError::format(r.offset(), "row x column count overflows")
    })?;
    let data = r.f32s(n, "feature payload")?;
    r.finish()?;
    Ok((stream, Tensor::matrix(rows, cols, data)?))
}

pub fn write_feature_file(path: &Path, stream: Stream, t: &Tensor) -> Result<()> {
    Ok(std::fs::write(path, encode_feature(stream, t)?)?)
}

pub fn read_feature_file(path: &Path) -> Result<(Stream, Tensor)> {
    decode_feature(&std::fs::read(path)?)
}
