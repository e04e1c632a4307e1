//! Dataset manifest, a TOML document tying the artifact files together.
//!
//! ```toml
//! name = "synth-32"
//! width = 64
//! relations = 3
//! word_vectors = "words.srxw"    # or "seeded-random:<dim>[:<seed>]"
//!
//! [[clips]]
//! id = "clip0000"
//! spatial = "features/clip0000_spatial.srxf"
//! temporal = "features/clip0000_temporal.srxf"
//! object = "features/clip0000_object.srxf"
//! lengths = [4, 3, 5]
//!
//! [[captions]]
//! id = "cap0000"
//! clip = "clip0000"
//! graph = "graphs/cap0000.graph"
//! ```
//!
//! All paths are relative to the manifest's directory.

use crate::error::{Result, SrxError};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipEntry {
    pub id: String,
    pub spatial: String,
    pub temporal: String,
    pub object: String,
    /// Declared sequence lengths, stream order spatial/temporal/object.
    pub lengths: [u32; 3],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionEntry {
    pub id: String,
    pub clip: String,
    pub graph: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub width: usize,
    pub relations: usize,
    pub word_vectors: String,
    #[serde(default)]
    pub clips: Vec<ClipEntry>,
    #[serde(default)]
    pub captions: Vec<CaptionEntry>,
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 {
            return Err(SrxError::validation("manifest width must be positive"));
        }
        if self.relations == 0 {
            return Err(SrxError::validation("manifest relation count must be positive"));
        }
        let mut clip_ids = HashSet::new();
        for c in &self.clips {
            if !clip_ids.insert(c.id.as_str()) {
                return Err(SrxError::validation(format!("duplicate clip id '{}'", c.id)));
            }
        }
        let mut caption_ids = HashSet::new();
        for c in &self.captions {
            if !caption_ids.insert(c.id.as_str()) {
                return Err(SrxError::validation(format!(
                    "duplicate caption id '{}'",
                    c.id
                )));
            }
            if !clip_ids.contains(c.clip.as_str()) {
                return Err(SrxError::validation(format!(
                    "caption '{}' references unknown clip '{}'",
                    c.id, c.clip
                )));
            }
        }
        Ok(())
    }
}

pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let m: Manifest = toml::from_str(text).map_err(|e| {
        SrxError::format(e.span().map(|s| s.start).unwrap_or(0), e.message().to_string())
    })?;
    m.validate()?;
    Ok(m)
}

pub fn encode_manifest(m: &Manifest) -> Result<String> {
    toml::to_string_pretty(m).map_err(|e| SrxError::config(e.to_string()))
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    parse_manifest(&String::from_utf8_lossy(&std::fs::read(path)?))
}

pub fn write_manifest(path: &Path, m: &Manifest) -> Result<()> {
    m.validate()?;
    Ok(std::fs::write(path, encode_manifest(m)?)?)
}
