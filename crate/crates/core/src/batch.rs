//! Forward-only embedding of whole caption/clip sets.
//!
//! Each item is encoded on its own private tape, so items are independent
//! and the parallel versions are bit-identical to the sequential ones.

use crate::data::Dataset;
use crate::error::Result;
use crate::matching::{TextVectors, VisualVectors};
use crate::model::SrxModel;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub fn caption_snapshots_seq(
    model: &SrxModel,
    data: &Dataset,
) -> Result<Vec<(String, TextVectors)>> {
    data.captions
        .iter()
        .map(|c| Ok((c.id.clone(), model.caption_vectors(&c.graph, &data.words)?)))
        .collect()
}

pub fn clip_snapshots_seq(
    model: &SrxModel,
    data: &Dataset,
) -> Result<Vec<(String, VisualVectors)>> {
    data.clips
        .iter()
        .map(|c| Ok((c.id.clone(), model.clip_vectors(&c.features)?)))
        .collect()
}

#[cfg(feature = "parallel")]
pub fn caption_snapshots(
    model: &SrxModel,
    data: &Dataset,
) -> Result<Vec<(String, TextVectors)>> {
    data.captions
        .par_iter()
        .map(|c| Ok((c.id.clone(), model.caption_vectors(&c.graph, &data.words)?)))
        .collect()
}

#[cfg(not(feature = "parallel"))]
pub fn caption_snapshots(
    model: &SrxModel,
    data: &Dataset,
) -> Result<Vec<(String, TextVectors)>> {
    caption_snapshots_seq(model, data)
}

#[cfg(feature = "parallel")]
pub fn clip_snapshots(model: &SrxModel, data: &Dataset) -> Result<Vec<(String, VisualVectors)>> {
    data.clips
        .par_iter()
        .map(|c| Ok((c.id.clone(), model.clip_vectors(&c.features)?)))
        .collect()
}

#[cfg(not(feature = "parallel"))]
pub fn clip_snapshots(model: &SrxModel, data: &Dataset) -> Result<Vec<(String, VisualVectors)>> {
    clip_snapshots_seq(model, data)
}
