//! Word-vector table storage: "SRXW", version, vocab, dim, then vocab
//! rows of little-endian f32. A manifest can either point at a table file
//! or request a reproducible random table with `seeded-random:<dim>` (an
//! optional `:<seed>` suffix overrides the default seed 0).

use super::bytes::{ByteReader, ByteWriter};
use crate::error::{Result, SrxError};
use crate::tensor::Tensor;
use crate::text_encoder::WordTable;
use std::path::Path;

pub const WORD_MAGIC: &[u8; 4] = b"SRXW";
const VERSION: u16 = 1;

pub fn encode_word_table(t: &WordTable) -> Result<Vec<u8>> {
    let (vocab, dim) = (t.vocab(), t.dim());
    if vocab > u32::MAX as usize || dim > u32::MAX as usize {
        return Err(SrxError::contract("word table too large for the format"));
    }
    let mut w = ByteWriter::new();
    w.bytes(WORD_MAGIC);
    w.u16(VERSION);
    w.u32(vocab as u32);
    w.u32(dim as u32);
    for v in t.vectors().data() {
        w.f32(*v as f32);
    }
    Ok(w.into_vec())
}

pub fn decode_word_table(bytes: &[u8]) -> Result<WordTable> {
    let mut r = ByteReader::new(bytes);
    r.magic(WORD_MAGIC, "word-vector")?;
    let at = r.offset();
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(SrxError::format(at, format!("unsupported version {version}")));
    }
    let vocab = r.u32("vocabulary size")? as usize;
    let dim = r.u32("vector dimension")? as usize;
    let n = vocab.checked_mul(dim).ok_or_else(|| {
        SrxError::format(r.offset(), "vocabulary x dimension overflows")
    })?;
    let data = r.f32s(n, "word-vector payload")?;
    r.finish()?;
    WordTable::new(Tensor::matrix(vocab, dim, data)?)
}

pub fn write_word_table(path: &Path, t: &WordTable) -> Result<()> {
    Ok(std::fs::write(path, encode_word_table(t)?)?)
}

pub fn read_word_table(path: &Path) -> Result<WordTable> {
    decode_word_table(&std::fs::read(path)?)
}

/// Where a dataset's word vectors come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WordSource {
    File(String),
    SeededRandom { dim: usize, seed: u64 },
}

impl WordSource {
    pub fn parse(s: &str) -> Result<WordSource> {
        match s.strip_prefix("seeded-random:") {
            None => {
                if s.is_empty() {
                    return Err(SrxError::config("empty word-vector source"));
                }
                Ok(WordSource::File(s.to_string()))
            }
            Some(rest) => {
                let mut parts = rest.split(':');
                let dim: usize = parts
                    .next()
                    .unwrap_or("")
                    .parse()
                    .map_err(|_| SrxError::config(format!("bad seeded-random dim in '{s}'")))?;
                if dim == 0 {
                    return Err(SrxError::config("seeded-random dim must be positive"));
                }
                let seed = match parts.next() {
                    None => 0,
                    Some(t) => t.parse().map_err(|_| {
                        SrxError::config(format!("bad seeded-random seed in '{s}'"))
                    })?,
                };
                if parts.next().is_some() {
                    return Err(SrxError::config(format!("malformed word source '{s}'")));
                }
                Ok(WordSource::SeededRandom { dim, seed })
            }
        }
    }

    pub fn to_string_form(&self) -> String {
        match self {
            WordSource::File(p) => p.clone(),
            WordSource::SeededRandom { dim, seed: 0 } => format!("seeded-random:{dim}"),
            WordSource::SeededRandom { dim, seed } => format!("seeded-random:{dim}:{seed}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_round_trips() {
        let t = WordTable::seeded_random(7, 5, 3);
        let bytes = encode_word_table(&t).unwrap();
        let back = decode_word_table(&bytes).unwrap();
        assert_eq!(back.vocab(), 7);
        assert_eq!(back.dim(), 5);
        assert_eq!(encode_word_table(&back).unwrap(), bytes);
    }

    #[test]
    fn corrupt_header_is_a_format_error() {
        let t = WordTable::seeded_random(2, 2, 0);
        let mut bytes = encode_word_table(&t).unwrap();
        bytes[1] = b'?';
        assert!(matches!(decode_word_table(&bytes), Err(SrxError::Format { .. })));
    }

    #[test]
    fn source_parsing() {
        assert_eq!(
            WordSource::parse("words.srxw").unwrap(),
            WordSource::File("words.srxw".into())
        );
        assert_eq!(
            WordSource::parse("seeded-random:300").unwrap(),
            WordSource::SeededRandom { dim: 300, seed: 0 }
        );
        assert_eq!(
            WordSource::parse("seeded-random:48:9").unwrap(),
            WordSource::SeededRandom { dim: 48, seed: 9 }
        );
        assert!(WordSource::parse("seeded-random:x").is_err());
        assert!(WordSource::parse("seeded-random:0").is_err());
        assert!(WordSource::parse("seeded-random:4:5:6").is_err());
        assert!(WordSource::parse("").is_err());
        for s in ["words.srxw", "seeded-random:300", "seeded-random:48:9"] {
            assert_eq!(WordSource::parse(s).unwrap().to_string_form(), s);
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.srxw");
        let t = WordTable::seeded_random(4, 3, 1);
        write_word_table(&path, &t).unwrap();
        let back = read_word_table(&path).unwrap();
        assert_eq!(back.vocab(), 4);
    }
}
