//! Mini-batch training driver and full-dataset evaluation.
//!
//! Batches are fixed-order slices of the caption list; nothing is
//! shuffled and no randomness is drawn after model init, so a run is a
//! pure function of (initial parameters, dataset, options). That is what
//! makes interrupted-and-resumed training replay exactly.

use crate::batch::{caption_snapshots, clip_snapshots};
use crate::data::Dataset;
use crate::error::{Result, SrxError};
use crate::matching::{batch_scores, contrastive_loss, MatchConfig, SimilarityMatrix};
use crate::metrics::{ranks, report, RetrievalReport};
use crate::model::{sgd_step, ModelIds, SrxModel};
use crate::tensor::Tape;
use std::collections::HashMap;
use std::ops::Range;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub epochs: u32,
    pub batch_size: usize,
    pub lr: f64,
    pub match_cfg: MatchConfig,
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(SrxError::config(format!(
                "batch size {} cannot form contrastive pairs",
                self.batch_size
            )));
        }
        if self.lr.is_nan() || self.lr < 0.0 {
            return Err(SrxError::config(format!("learning rate {} is invalid", self.lr)));
        }
        self.match_cfg.validate()
    }
}

/// Fixed batch partition; a trailing slice of one caption is dropped
/// because it cannot pay a contrastive term.
pub fn batch_ranges(n: usize, batch_size: usize) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + batch_size).min(n);
        if end - start >= 2 {
            out.push(start..end);
        } else {
            log::debug!("dropping trailing batch of {} caption(s)", end - start);
        }
        start = end;
    }
    out
}

fn clip_index(data: &Dataset) -> HashMap<&str, usize> {
    data.clips.iter().enumerate().map(|(i, c)| (c.id.as_str(), i)).collect()
}

fn batch_loss(
    model: &SrxModel,
    tape: &mut Tape,
    ids: &ModelIds,
    data: &Dataset,
    clips_by_id: &HashMap<&str, usize>,
    range: Range<usize>,
    cfg: &MatchConfig,
) -> Result<crate::tensor::TensorId> {
    let mut texts = Vec::with_capacity(range.len());
    let mut clips = Vec::with_capacity(range.len());
    for cap in &data.captions[range] {
        let clip_i = *clips_by_id.get(cap.clip_id.as_str()).ok_or_else(|| {
            SrxError::validation(format!(
                "caption '{}' references unknown clip '{}'",
                cap.id, cap.clip_id
            ))
        })?;
        texts.push(model.encode_caption(tape, ids, &cap.graph, &data.words)?);
        clips.push(model.encode_clip(tape, ids, &data.clips[clip_i].features)?);
    }
    let grid = batch_scores(tape, &texts, &clips, cfg)?;
    contrastive_loss(tape, &grid, cfg)
}

/// One pass over the dataset; returns the mean batch loss.
pub fn train_epoch(model: &mut SrxModel, data: &Dataset, opts: &TrainOptions) -> Result<f64> {
    opts.validate()?;
    let batches = batch_ranges(data.captions.len(), opts.batch_size);
    if batches.is_empty() {
        return Err(SrxError::contract("dataset has no trainable batch"));
    }
    let clips_by_id = clip_index(data);
    let mut total = 0.0;
    for range in &batches {
        let mut tape = Tape::new();
        let ids = model.bind(&mut tape);
        let loss =
            batch_loss(model, &mut tape, &ids, data, &clips_by_id, range.clone(), &opts.match_cfg)?;
        let value = tape.value(loss).as_scalar()?;
        if !value.is_finite() {
            return Err(SrxError::numerical(format!("non-finite batch loss {value}")));
        }
        let grads = tape.backward(loss)?;
        sgd_step(model, &ids, &grads, opts.lr)?;
        total += value;
    }
    Ok(total / batches.len() as f64)
}

/// Run `opts.epochs` epochs, invoking the callback after each with the
/// 1-based epoch index within this run and its mean loss.
pub fn train(
    model: &mut SrxModel,
    data: &Dataset,
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(u32, f64) -> Result<()>,
) -> Result<Vec<f64>> {
    opts.validate()?;
    let mut history = Vec::with_capacity(opts.epochs as usize);
    for e in 1..=opts.epochs {
        let loss = train_epoch(model, data, opts)?;
        history.push(loss);
        on_epoch(e, loss)?;
    }
    Ok(history)
}

/// Score the whole dataset and rank every caption's true clip.
pub fn evaluate(
    model: &SrxModel,
    data: &Dataset,
    cfg: &MatchConfig,
    ks: &[usize],
) -> Result<(SimilarityMatrix, Vec<usize>, RetrievalReport)> {
    let captions = caption_snapshots(model, data)?;
    let clips = clip_snapshots(model, data)?;
    let matrix = SimilarityMatrix::compute(&captions, &clips, cfg)?;
    let truth = data.ground_truth();
    let rk = ranks(&matrix, &truth)?;
    let rep = report(&rk, data.clips.len(), ks)?;
    Ok((matrix, rk, rep))
}
