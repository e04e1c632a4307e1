//! Artifact formats and dataset assembly.
//!
//! Binary formats share a little-endian layout with magic bytes and a
//! version; text formats (manifest, role graphs) stay human-editable.
//! `load_dataset` ties them together and fully validates the result, so
//! downstream code never sees a half-loaded dataset.

mod bytes;
pub mod checkpoint;
pub mod feature_file;
pub mod graph_file;
pub mod manifest;
pub mod synth;
pub mod word_file;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointData};
pub use feature_file::{read_feature_file, write_feature_file};
pub use graph_file::{read_role_graph, write_role_graph};
pub use manifest::{read_manifest, write_manifest, Manifest};
pub use synth::{synth_dataset, SynthConfig, SynthOutput};
pub use word_file::{read_word_table, write_word_table, WordSource};

use crate::error::{Result, SrxError};
use crate::text_encoder::{RoleGraph, WordTable};
use crate::visual_encoder::{ExpertFeatures, Stream};
use std::collections::HashMap;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct ClipRecord {
    pub id: String,
    pub features: ExpertFeatures,
}

#[derive(Debug, Clone)]
pub struct CaptionRecord {
    pub id: String,
    pub clip_id: String,
    pub graph: RoleGraph,
}

/// A fully loaded and validated dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub width: usize,
    pub n_relations: usize,
    pub words: WordTable,
    pub clips: Vec<ClipRecord>,
    pub captions: Vec<CaptionRecord>,
}

impl Dataset {
    pub fn ground_truth(&self) -> HashMap<String, String> {
        self.captions.iter().map(|c| (c.id.clone(), c.clip_id.clone())).collect()
    }

    pub fn caption(&self, id: &str) -> Option<&CaptionRecord> {
        self.captions.iter().find(|c| c.id == id)
    }
}

pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let m = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let mut captions = Vec::with_capacity(m.captions.len());
    let mut max_token: Option<u32> = None;
    for cap in &m.captions {
        let graph = read_role_graph(&base.join(&cap.graph))?;
        if graph.n_relations != m.relations {
            return Err(SrxError::validation(format!(
                "caption '{}' declares {} relations, manifest declares {}",
                cap.id, graph.n_relations, m.relations
            )));
        }
        for node in &graph.nodes {
            for t in &node.tokens {
                max_token = Some(max_token.map_or(*t, |m| m.max(*t)));
            }
        }
        captions.push(CaptionRecord {
            id: cap.id.clone(),
            clip_id: cap.clip.clone(),
            graph,
        });
    }

    let words = match WordSource::parse(&m.word_vectors)? {
        WordSource::File(p) => read_word_table(&base.join(p))?,
        WordSource::SeededRandom { dim, seed } => {
            let vocab = max_token.map_or(1, |t| t as usize + 1);
            WordTable::seeded_random(vocab, dim, seed)
        }
    };
    for cap in &captions {
        for node in &cap.graph.nodes {
            for t in &node.tokens {
                if *t as usize >= words.vocab() {
                    return Err(SrxError::validation(format!(
                        "caption '{}' uses token {} outside vocabulary of {}",
                        cap.id,
                        t,
                        words.vocab()
                    )));
                }
            }
        }
    }

    let mut clips = Vec::with_capacity(m.clips.len());
    for clip in &m.clips {
        let mut streams = Vec::with_capacity(3);
        for (slot, path, declared) in [
            (Stream::Spatial, &clip.spatial, clip.lengths[0]),
            (Stream::Temporal, &clip.temporal, clip.lengths[1]),
            (Stream::Object, &clip.object, clip.lengths[2]),
        ] {
            let (tag, t) = read_feature_file(&base.join(path))?;
            if tag != slot {
                return Err(SrxError::validation(format!(
                    "clip '{}': file {} is tagged {}, expected {}",
                    clip.id,
                    path,
                    tag.as_str(),
                    slot.as_str()
                )));
            }
            let (rows, cols) = t.dims2()?;
            if cols != m.width {
                return Err(SrxError::validation(format!(
                    "clip '{}' {} width {} vs manifest width {}",
                    clip.id,
                    slot.as_str(),
                    cols,
                    m.width
                )));
            }
            if rows != declared as usize {
                return Err(SrxError::validation(format!(
                    "clip '{}' {} has {} rows, manifest declares {}",
                    clip.id,
                    slot.as_str(),
                    rows,
                    declared
                )));
            }
            streams.push(t);
        }
        let object = streams.pop().unwrap();
        let temporal = streams.pop().unwrap();
        let spatial = streams.pop().unwrap();
        let features = ExpertFeatures { f_s: spatial, f_t: temporal, f_o: object };
        features.validate(m.width)?;
        clips.push(ClipRecord { id: clip.id.clone(), features });
    }

    Ok(Dataset {
        name: m.name,
        width: m.width,
        n_relations: m.relations,
        words,
        clips,
        captions,
    })
}
