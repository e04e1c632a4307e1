//! The full caption/clip model: graph text encoder plus three-level clip
//! encoder, with one canonical parameter ordering used for binding,
//! updates, and checkpoints. `for_each`, `for_each_mut`, and `bind` all
//! traverse parameters in the same order; serialization depends on it.

use crate::data::checkpoint::CheckpointData;
use crate::error::{Result, SrxError};
use crate::matching::{snapshot_text, snapshot_visual, TextVectors, VisualVectors};
use crate::rng;
use crate::tensor::{Gradients, Tape, Tensor, TensorId};
use crate::text_encoder::{encode_text, GcnIds, GcnParams, RoleGraph, TextEmbeddings, WordTable};
use crate::visual_encoder::{
    encode_visual, ExpertFeatures, LevelConfig, VisualEmbeddings, VisualIds, VisualParams,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub d_model: usize,
    pub heads: usize,
    pub gcn_layers: usize,
    pub word_dim: usize,
    /// Expert feature width before level assembly.
    pub width: usize,
    pub n_relations: usize,
    pub levels: LevelConfig,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.heads == 0 || self.word_dim == 0 || self.width == 0 {
            return Err(SrxError::config("model dimensions must be positive"));
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(SrxError::config(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if self.n_relations == 0 {
            return Err(SrxError::config("relation vocabulary must be non-empty"));
        }
        self.levels.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrxModel {
    pub cfg: ModelConfig,
    pub text: GcnParams,
    pub visual: VisualParams,
}

#[derive(Debug, Clone)]
pub struct ModelIds {
    pub text: GcnIds,
    pub visual: VisualIds,
}

impl ModelIds {
    pub fn for_each(&self, f: &mut dyn FnMut(TensorId)) {
        self.text.for_each(f);
        self.visual.for_each(f);
    }

    pub fn list(&self) -> Vec<TensorId> {
        let mut out = Vec::new();
        self.for_each(&mut |id| out.push(id));
        out
    }
}

impl SrxModel {
    pub fn init(cfg: ModelConfig, seed: u64) -> Result<SrxModel> {
        cfg.validate()?;
        let mut r = rng::labeled_stream(seed, "model-init");
        let text = GcnParams::init(
            cfg.word_dim,
            cfg.d_model,
            cfg.n_relations,
            cfg.gcn_layers,
            &mut r,
        );
        let visual = VisualParams::init(&cfg.levels, cfg.width, cfg.d_model, cfg.heads, &mut r)?;
        Ok(SrxModel { cfg, text, visual })
    }

    pub fn bind(&self, tape: &mut Tape) -> ModelIds {
        ModelIds {
            text: self.text.bind(tape),
            visual: self.visual.bind(tape),
        }
    }

    pub fn for_each(&self, f: &mut dyn FnMut(String, &Tensor)) {
        self.text.for_each("text", f);
        self.visual.for_each("visual", f);
    }

    pub fn for_each_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor)) {
        self.text.for_each_mut("text", f);
        self.visual.for_each_mut("visual", f);
    }

    pub fn n_params(&self) -> usize {
        let mut n = 0;
        self.for_each(&mut |_, t| n += t.len());
        n
    }

    pub fn encode_caption(
        &self,
        tape: &mut Tape,
        ids: &ModelIds,
        graph: &RoleGraph,
        words: &WordTable,
    ) -> Result<TextEmbeddings> {
        encode_text(tape, graph, words, &ids.text)
    }

    pub fn encode_clip(
        &self,
        tape: &mut Tape,
        ids: &ModelIds,
        features: &ExpertFeatures,
    ) -> Result<VisualEmbeddings> {
        encode_visual(tape, features, &self.cfg.levels, &ids.visual)
    }

    /// Forward-only caption embedding on a private tape.
    pub fn caption_vectors(&self, graph: &RoleGraph, words: &WordTable) -> Result<TextVectors> {
        let mut tape = Tape::new();
        let ids = self.bind(&mut tape);
        let emb = self.encode_caption(&mut tape, &ids, graph, words)?;
        Ok(snapshot_text(&tape, &emb))
    }

    /// Forward-only clip embedding on a private tape.
    pub fn clip_vectors(&self, features: &ExpertFeatures) -> Result<VisualVectors> {
        let mut tape = Tape::new();
        let ids = self.bind(&mut tape);
        let emb = self.encode_clip(&mut tape, &ids, features)?;
        Ok(snapshot_visual(&tape, &emb))
    }

    pub fn to_checkpoint(&self, epoch: u32, config: String) -> CheckpointData {
        let mut entries = Vec::new();
        self.for_each(&mut |name, t| entries.push((name, t.clone())));
        CheckpointData { epoch, config, entries }
    }

    /// Restore parameters from a checkpoint into a freshly shaped model.
    pub fn from_checkpoint(cfg: ModelConfig, data: &CheckpointData) -> Result<SrxModel> {
        let mut model = SrxModel::init(cfg, 0)?;
        let mut by_name: std::collections::HashMap<&str, &Tensor> =
            data.entries.iter().map(|(n, t)| (n.as_str(), t)).collect();
        let mut err: Option<SrxError> = None;
        let mut used = 0usize;
        model.for_each_mut(&mut |name, t| {
            if err.is_some() {
                return;
            }
            match by_name.remove(name.as_str()) {
                None => {
                    err = Some(SrxError::validation(format!(
                        "checkpoint is missing parameter '{name}'"
                    )));
                }
                Some(stored) => {
                    if stored.shape() != t.shape() {
                        err = Some(SrxError::validation(format!(
                            "parameter '{name}' has shape {:?} in checkpoint, model expects {:?}",
                            stored.shape(),
                            t.shape()
                        )));
                    } else {
                        *t = stored.clone();
                        used += 1;
                    }
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if used != data.entries.len() {
            let extra: Vec<&str> = by_name.keys().copied().collect();
            return Err(SrxError::validation(format!(
                "checkpoint has {} unknown parameters (e.g. {:?})",
                data.entries.len() - used,
                extra.first()
            )));
        }
        Ok(model)
    }
}

/// One plain gradient-descent update over every parameter.
pub fn sgd_step(
    model: &mut SrxModel,
    ids: &ModelIds,
    grads: &Gradients,
    lr: f64,
) -> Result<()> {
    if lr.is_nan() || lr < 0.0 {
        return Err(SrxError::config(format!("learning rate {lr} must be non-negative")));
    }
    let id_list = ids.list();
    let mut k = 0usize;
    let mut err: Option<SrxError> = None;
    model.for_each_mut(&mut |name, t| {
        if err.is_some() {
            return;
        }
        if let Some(g) = grads.get(id_list[k]) {
            if g.shape() != t.shape() {
                err = Some(SrxError::shape(format!(
                    "gradient for '{name}' has shape {:?}, parameter {:?}",
                    g.shape(),
                    t.shape()
                )));
            } else {
                for (p, gv) in t.data_mut().iter_mut().zip(g.data()) {
                    *p -= lr * gv;
                }
            }
        }
        k += 1;
    });
    err.map_or(Ok(()), Err)
}
