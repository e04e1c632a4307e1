//! Synthetic dataset generator.
//!
//! Every clip gets a unit latent vector; its three feature streams are
//! noisy linear views of that latent, and the caption's word vectors are
//! noisy views of the same latent through role-specific mixers. Captions
//! therefore carry real signal about their clip: nearest-neighbor matching
//! on the underlying latents is exact, and a trained model can reach
//! perfect retrieval on the generated pairs. Everything derives from the
//! seed, so two runs produce byte-identical files.
//!
//! Decoupled mode severs that tie: captions draw their own independent
//! latents, leaving no mutual information between the modalities. Use it
//! to calibrate chance-level retrieval.

use super::feature_file::write_feature_file;
use super::graph_file::write_role_graph;
use super::manifest::{write_manifest, CaptionEntry, ClipEntry, Manifest};
use super::word_file::write_word_table;
use crate::error::{Result, SrxError};
use crate::rng;
use crate::tensor::Tensor;
use crate::text_encoder::{GraphEdge, GraphNode, Role, RoleGraph, WordTable};
use crate::visual_encoder::Stream;
use rand::Rng;
use std::path::{Path, PathBuf};

const FEATURE_NOISE: f64 = 0.05;
const WORD_NOISE: f64 = 0.05;
const CAPTION_LATENT_NOISE: f64 = 0.02;
/// Token slots per clip: one event, two actions, three entities.
const SLOTS: usize = 6;
const N_RELATIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_clips: usize,
    pub width: usize,
    pub word_dim: usize,
    pub latent_dim: usize,
    /// When false, captions get latents independent of their clips.
    pub coupled: bool,
}

impl SynthConfig {
    pub fn new(seed: u64, n_clips: usize) -> Self {
        SynthConfig { seed, n_clips, width: 64, word_dim: 48, latent_dim: 8, coupled: true }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_clips < 2 {
            return Err(SrxError::validation(format!(
                "need at least 2 clips, got {}",
                self.n_clips
            )));
        }
        if self.width == 0 || self.word_dim == 0 || self.latent_dim == 0 {
            return Err(SrxError::validation("synthetic dimensions must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub manifest_path: PathBuf,
    /// Per-clip generating latents, unit norm.
    pub clip_latents: Vec<Vec<f64>>,
    /// Per-caption latents plus small noise; shared with the paired clip
    /// only in coupled mode.
    pub caption_latents: Vec<Vec<f64>>,
    pub files_written: usize,
}

fn unit_latent(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-9);
    v.into_iter().map(|x| x / n).collect()
}

fn mixed_row(latent: &[f64], mixer: &Tensor, noise: &mut impl Rng, scale: f64) -> Vec<f64> {
    let (_, cols) = mixer.dims2().expect("mixer is a matrix");
    (0..cols)
        .map(|c| {
            let signal: f64 = latent.iter().enumerate().map(|(l, z)| z * mixer.at(l, c)).sum();
            signal + scale * noise.gen_range(-1.0..1.0)
        })
        .collect()
}

fn token(clip: usize, slot: usize) -> u32 {
    (clip * SLOTS + slot) as u32
}

pub fn synth_dataset(cfg: &SynthConfig, out_dir: &Path) -> Result<SynthOutput> {
    cfg.validate()?;
    let features_dir = out_dir.join("features");
    let graphs_dir = out_dir.join("graphs");
    std::fs::create_dir_all(&features_dir)?;
    std::fs::create_dir_all(&graphs_dir)?;

    let l = cfg.latent_dim;
    let mixer_for = |label: &str| {
        Tensor::uniform(&[l, cfg.width], -1.0, 1.0, &mut rng::labeled_stream(cfg.seed, label))
    };
    let word_mixer_for = |label: &str| {
        Tensor::uniform(&[l, cfg.word_dim], -1.0, 1.0, &mut rng::labeled_stream(cfg.seed, label))
    };
    let mixers = [
        mixer_for("mix-spatial"),
        mixer_for("mix-temporal"),
        mixer_for("mix-object"),
    ];
    let word_mixers = [
        word_mixer_for("mix-words-event"),
        word_mixer_for("mix-words-action"),
        word_mixer_for("mix-words-entity"),
    ];
    let mut latent_rng = rng::labeled_stream(cfg.seed, "latents");
    let mut layout_rng = rng::labeled_stream(cfg.seed, "layout");
    let mut feat_noise = rng::labeled_stream(cfg.seed, "feat-noise");
    let mut word_noise = rng::labeled_stream(cfg.seed, "word-noise");
    let mut caption_noise = rng::labeled_stream(cfg.seed, "caption-latents");

    let clip_latents: Vec<Vec<f64>> =
        (0..cfg.n_clips).map(|_| unit_latent(&mut latent_rng, l)).collect();
    let text_latents: Vec<Vec<f64>> = if cfg.coupled {
        clip_latents.clone()
    } else {
        let mut decoupled = rng::labeled_stream(cfg.seed, "decoupled-latents");
        (0..cfg.n_clips).map(|_| unit_latent(&mut decoupled, l)).collect()
    };

    let mut files_written = 0usize;
    let mut clips = Vec::with_capacity(cfg.n_clips);
    let mut captions = Vec::with_capacity(cfg.n_clips);
    let mut caption_latents = Vec::with_capacity(cfg.n_clips);

    // word table rows in token order: slot 0 event, 1-2 actions, 3-5 entities
    let mut word_rows = Vec::with_capacity(cfg.n_clips * SLOTS);
    for z in &text_latents {
        for slot in 0..SLOTS {
            let role_mixer = match slot {
                0 => &word_mixers[0],
                1 | 2 => &word_mixers[1],
                _ => &word_mixers[2],
            };
            word_rows.push(mixed_row(z, role_mixer, &mut word_noise, WORD_NOISE));
        }
    }
    let words = WordTable::new(Tensor::from_rows(&word_rows)?)?;
    write_word_table(&out_dir.join("words.srxw"), &words)?;
    files_written += 1;

    for (i, z) in clip_latents.iter().enumerate() {
        let clip_id = format!("clip{i:04}");
        let mut lengths = [0u32; 3];
        let mut paths = [String::new(), String::new(), String::new()];
        for (s, stream) in [Stream::Spatial, Stream::Temporal, Stream::Object]
            .into_iter()
            .enumerate()
        {
            let n_rows = layout_rng.gen_range(2..=5usize);
            let rows: Vec<Vec<f64>> = (0..n_rows)
                .map(|_| mixed_row(z, &mixers[s], &mut feat_noise, FEATURE_NOISE))
                .collect();
            let rel = format!("features/{clip_id}_{}.srxf", stream.as_str());
            write_feature_file(&out_dir.join(&rel), stream, &Tensor::from_rows(&rows)?)?;
            files_written += 1;
            lengths[s] = n_rows as u32;
            paths[s] = rel;
        }
        let [spatial, temporal, object] = paths;
        clips.push(ClipEntry { id: clip_id, spatial, temporal, object, lengths });

        let cap_id = format!("cap{i:04}");
        let n_act = layout_rng.gen_range(1..=2usize);
        let n_ent = layout_rng.gen_range(1..=3usize);
        let mut nodes = vec![GraphNode { role: Role::Event, tokens: vec![token(i, 0)] }];
        let mut edges = Vec::new();
        for k in 0..n_act {
            nodes.push(GraphNode { role: Role::Action, tokens: vec![token(i, 1 + k)] });
            edges.push(GraphEdge { src: 1 + k, dst: 0, relation: 0 });
        }
        for k in 0..n_ent {
            nodes.push(GraphNode { role: Role::Entity, tokens: vec![token(i, 3 + k)] });
            edges.push(GraphEdge {
                src: 1 + n_act + k,
                dst: 1 + (k % n_act),
                relation: 1 + (k % 2),
            });
        }
        let graph = RoleGraph { nodes, edges, n_relations: N_RELATIONS };
        let rel = format!("graphs/{cap_id}.graph");
        write_role_graph(&out_dir.join(&rel), &graph)?;
        files_written += 1;
        captions.push(CaptionEntry { id: cap_id, clip: format!("clip{i:04}"), graph: rel });

        let noisy: Vec<f64> = text_latents[i]
            .iter()
            .map(|v| v + CAPTION_LATENT_NOISE * caption_noise.gen_range(-1.0..1.0))
            .collect();
        caption_latents.push(noisy);
    }

    let manifest = Manifest {
        name: format!(
            "synth-{}-{}{}",
            cfg.n_clips,
            cfg.seed,
            if cfg.coupled { "" } else { "-decoupled" }
        ),
        width: cfg.width,
        relations: N_RELATIONS,
        word_vectors: "words.srxw".into(),
        clips,
        captions,
    };
    let manifest_path = out_dir.join("manifest.toml");
    write_manifest(&manifest_path, &manifest)?;
    files_written += 1;

    Ok(SynthOutput { manifest_path, clip_latents, caption_latents, files_written })
}
