//! Caption-clip scoring and the ranking loss.
//!
//! A caption's role embeddings are paired one-to-one with the clip's level
//! embeddings; the pair score is the mean of the three cosine similarities,
//! with multi-phrase roles averaged first. Training uses a margin hinge over
//! in-batch negatives, either the hardest one or all of them.

use crate::error::{Result, SrxError};
use crate::tensor::{Tape, Tensor, TensorId};
use crate::text_encoder::TextEmbeddings;
use crate::visual_encoder::{Stream, VisualEmbeddings};
#[cfg(feature = "parallel")]
use rayon::prelude::*;

const ZERO_NORM_EPS: f64 = 1e-12;

/// Role-to-level assignment. Must be a bijection onto the three levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pairing {
    pub event: Stream,
    pub actions: Stream,
    pub entities: Stream,
}

impl Default for Pairing {
    fn default() -> Self {
        Pairing {
            event: Stream::Spatial,
            actions: Stream::Temporal,
            entities: Stream::Object,
        }
    }
}

impl Pairing {
    pub fn validate(&self) -> Result<()> {
        let mut seen = [false; 3];
        for s in [self.event, self.actions, self.entities] {
            if seen[s.idx()] {
                return Err(SrxError::config(format!(
                    "pairing maps two roles to level {}",
                    s.as_str()
                )));
            }
            seen[s.idx()] = true;
        }
        Ok(())
    }

    /// Three level names in role order (event, actions, entities).
    pub fn parse(s: &str) -> Result<Pairing> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(SrxError::config(format!(
                "pairing '{s}' must list three levels (event,actions,entities)"
            )));
        }
        let p = Pairing {
            event: Stream::parse(parts[0])?,
            actions: Stream::parse(parts[1])?,
            entities: Stream::parse(parts[2])?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn to_string_form(&self) -> String {
        format!(
            "{},{},{}",
            self.event.as_str(),
            self.actions.as_str(),
            self.entities.as_str()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mining {
    HardestInBatch,
    SumOverBatch,
}

impl Mining {
    pub fn as_str(self) -> &'static str {
        match self {
            Mining::HardestInBatch => "hardest",
            Mining::SumOverBatch => "sum",
        }
    }

    pub fn parse(s: &str) -> Result<Mining> {
        match s {
            "hardest" => Ok(Mining::HardestInBatch),
            "sum" => Ok(Mining::SumOverBatch),
            other => Err(SrxError::config(format!(
                "unknown mining mode '{other}' (hardest, sum)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    pub margin: f64,
    pub pairing: Pairing,
    pub mining: Mining,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            margin: 0.2,
            pairing: Pairing::default(),
            mining: Mining::HardestInBatch,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.margin.is_nan() || self.margin < 0.0 {
            return Err(SrxError::config(format!(
                "margin must be non-negative, got {}",
                self.margin
            )));
        }
        self.pairing.validate()
    }
}

fn check_nonzero_vectors(tape: &Tape, a: TensorId, b: TensorId) -> Result<()> {
    for id in [a, b] {
        let v = tape.value(id);
        if v.rank() != 1 {
            return Err(SrxError::shape(format!(
                "cosine expects vectors, got rank {}",
                v.rank()
            )));
        }
        let sq: f64 = v.data().iter().map(|x| x * x).sum();
        if sq.sqrt() < ZERO_NORM_EPS {
            return Err(SrxError::contract("cosine of a zero vector"));
        }
    }
    let (la, lb) = (tape.value(a).len(), tape.value(b).len());
    if la != lb {
        return Err(SrxError::shape(format!("cosine dims {la} vs {lb}")));
    }
    Ok(())
}

/// Cosine similarity of two nonzero vectors as a tape scalar.
pub fn cosine_sim(tape: &mut Tape, a: TensorId, b: TensorId) -> Result<TensorId> {
    check_nonzero_vectors(tape, a, b)?;
    let an = tape.l2_normalize(a)?;
    let bn = tape.l2_normalize(b)?;
    let prod = tape.mul(an, bn)?;
    Ok(tape.sum(prod))
}

fn mean_of_scalars(tape: &mut Tape, scalars: &[TensorId]) -> Result<TensorId> {
    let mut acc = scalars[0];
    for s in &scalars[1..] {
        acc = tape.add(acc, *s)?;
    }
    Ok(tape.scale(acc, 1.0 / scalars.len() as f64))
}

fn role_score(
    tape: &mut Tape,
    phrases: &[TensorId],
    level: TensorId,
    role: &str,
) -> Result<TensorId> {
    if phrases.is_empty() {
        return Err(SrxError::validation(format!("caption has no {role} phrases")));
    }
    let cosines: Vec<TensorId> = phrases
        .iter()
        .map(|p| cosine_sim(tape, *p, level))
        .collect::<Result<_>>()?;
    mean_of_scalars(tape, &cosines)
}

/// Caption-clip score: mean over the three role/level cosine scores.
pub fn pair_similarity(
    tape: &mut Tape,
    text: &TextEmbeddings,
    vis: &VisualEmbeddings,
    cfg: &MatchConfig,
) -> Result<TensorId> {
    cfg.validate()?;
    let p = cfg.pairing;
    let ev = cosine_sim(tape, text.event, vis.pooled(p.event))?;
    let ac = role_score(tape, &text.actions, vis.pooled(p.actions), "action")?;
    let en = role_score(tape, &text.entities, vis.pooled(p.entities), "entity")?;
    mean_of_scalars(tape, &[ev, ac, en])
}

/// All caption-clip scores for one batch, kept on tape for the loss.
/// `scores[i][j]` scores caption `i` against clip `j`.
pub struct ScoreGrid {
    pub scores: Vec<Vec<TensorId>>,
}

pub fn batch_scores(
    tape: &mut Tape,
    texts: &[TextEmbeddings],
    clips: &[VisualEmbeddings],
    cfg: &MatchConfig,
) -> Result<ScoreGrid> {
    if texts.len() != clips.len() {
        return Err(SrxError::contract(format!(
            "batch with {} captions vs {} clips",
            texts.len(),
            clips.len()
        )));
    }
    let mut scores = Vec::with_capacity(texts.len());
    for t in texts {
        let mut row = Vec::with_capacity(clips.len());
        for c in clips {
            row.push(pair_similarity(tape, t, c, cfg)?);
        }
        scores.push(row);
    }
    Ok(ScoreGrid { scores })
}

fn hinge(tape: &mut Tape, neg: TensorId, pos: TensorId, margin: f64) -> Result<TensorId> {
    let diff = tape.sub(neg, pos)?;
    let shifted = tape.add_scalar(diff, margin);
    Ok(tape.relu(shifted))
}

fn hardest(tape: &Tape, cands: &[(usize, TensorId)]) -> TensorId {
    // ties keep the lowest batch index
    let mut best = cands[0].1;
    let mut best_val = tape.value(best).data()[0];
    for (_, id) in &cands[1..] {
        let v = tape.value(*id).data()[0];
        if v > best_val {
            best_val = v;
            best = *id;
        }
    }
    best
}

/// Margin ranking loss over a square in-batch score grid with aligned
/// positives on the diagonal. Mean over positives; each positive pays a
/// hinge against negative captions and one against negative clips.
pub fn contrastive_loss(tape: &mut Tape, grid: &ScoreGrid, cfg: &MatchConfig) -> Result<TensorId> {
    cfg.validate()?;
    let b = grid.scores.len();
    if b < 2 {
        return Err(SrxError::contract(format!("contrastive batch of {b}, need at least 2")));
    }
    if grid.scores.iter().any(|r| r.len() != b) {
        return Err(SrxError::shape("score grid is not square"));
    }
    let mut terms = Vec::with_capacity(b);
    for p in 0..b {
        let pos = grid.scores[p][p];
        let cap_negs: Vec<(usize, TensorId)> =
            (0..b).filter(|n| *n != p).map(|n| (n, grid.scores[n][p])).collect();
        let clip_negs: Vec<(usize, TensorId)> =
            (0..b).filter(|n| *n != p).map(|n| (n, grid.scores[p][n])).collect();
        let term = match cfg.mining {
            Mining::HardestInBatch => {
                let hc = hardest(tape, &cap_negs);
                let hv = hardest(tape, &clip_negs);
                let a = hinge(tape, hc, pos, cfg.margin)?;
                let bh = hinge(tape, hv, pos, cfg.margin)?;
                tape.add(a, bh)?
            }
            Mining::SumOverBatch => {
                let mut acc: Option<TensorId> = None;
                for (_, n) in cap_negs.iter().chain(clip_negs.iter()) {
                    let h = hinge(tape, *n, pos, cfg.margin)?;
                    acc = Some(match acc {
                        None => h,
                        Some(a) => tape.add(a, h)?,
                    });
                }
                acc.unwrap()
            }
        };
        terms.push(term);
    }
    mean_of_scalars(tape, &terms)
}

/// Value-level caption embedding snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct TextVectors {
    pub event: Tensor,
    pub actions: Vec<Tensor>,
    pub entities: Vec<Tensor>,
}

/// Value-level clip embedding snapshot (pooled levels only).
#[derive(Debug, Clone, PartialEq)]
pub struct VisualVectors {
    pub e_s: Tensor,
    pub e_t: Tensor,
    pub e_o: Tensor,
}

impl VisualVectors {
    pub fn pooled(&self, s: Stream) -> &Tensor {
        match s {
            Stream::Spatial => &self.e_s,
            Stream::Temporal => &self.e_t,
            Stream::Object => &self.e_o,
        }
    }
}

pub fn snapshot_text(tape: &Tape, t: &TextEmbeddings) -> TextVectors {
    TextVectors {
        event: tape.value(t.event).clone(),
        actions: t.actions.iter().map(|id| tape.value(*id).clone()).collect(),
        entities: t.entities.iter().map(|id| tape.value(*id).clone()).collect(),
    }
}

pub fn snapshot_visual(tape: &Tape, v: &VisualEmbeddings) -> VisualVectors {
    VisualVectors {
        e_s: tape.value(v.e_s).clone(),
        e_t: tape.value(v.e_t).clone(),
        e_o: tape.value(v.e_o).clone(),
    }
}

/// Plain-value cosine; mirrors `cosine_sim` for forward-only scoring.
pub fn cosine_value(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.rank() != 1 || b.rank() != 1 || a.len() != b.len() {
        return Err(SrxError::shape("cosine expects equal-length vectors"));
    }
    let na: f64 = a.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    if na < ZERO_NORM_EPS || nb < ZERO_NORM_EPS {
        return Err(SrxError::contract("cosine of a zero vector"));
    }
    let dot: f64 = a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum();
    Ok(dot / (na * nb))
}

pub fn pair_similarity_value(
    text: &TextVectors,
    vis: &VisualVectors,
    cfg: &MatchConfig,
) -> Result<f64> {
    cfg.validate()?;
    let p = cfg.pairing;
    let role_mean = |phrases: &[Tensor], level: &Tensor, role: &str| -> Result<f64> {
        if phrases.is_empty() {
            return Err(SrxError::validation(format!("caption has no {role} phrases")));
        }
        let mut acc = 0.0;
        for ph in phrases {
            acc += cosine_value(ph, level)?;
        }
        Ok(acc / phrases.len() as f64)
    };
    let ev = cosine_value(&text.event, vis.pooled(p.event))?;
    let ac = role_mean(&text.actions, vis.pooled(p.actions), "action")?;
    let en = role_mean(&text.entities, vis.pooled(p.entities), "entity")?;
    Ok((ev + ac + en) / 3.0)
}

/// Dense caption-by-clip score table with the ids that label the axes.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub scores: Tensor,
    pub caption_ids: Vec<String>,
    pub clip_ids: Vec<String>,
}

fn score_row(
    text: &TextVectors,
    clips: &[(String, VisualVectors)],
    cfg: &MatchConfig,
) -> Result<Vec<f64>> {
    clips
        .iter()
        .map(|(_, v)| pair_similarity_value(text, v, cfg).map(|s| s.clamp(-1.0, 1.0)))
        .collect()
}

fn assemble_matrix(
    rows: Vec<Vec<f64>>,
    captions: &[(String, TextVectors)],
    clips: &[(String, VisualVectors)],
) -> Result<SimilarityMatrix> {
    Ok(SimilarityMatrix {
        scores: Tensor::from_rows(&rows)?,
        caption_ids: captions.iter().map(|(id, _)| id.clone()).collect(),
        clip_ids: clips.iter().map(|(id, _)| id.clone()).collect(),
    })
}

impl SimilarityMatrix {
    /// Score every caption against every clip, rows in parallel when the
    /// feature is on. Row results are independent, so the parallel path is
    /// bit-identical to [`SimilarityMatrix::compute_seq`].
    pub fn compute(
        captions: &[(String, TextVectors)],
        clips: &[(String, VisualVectors)],
        cfg: &MatchConfig,
    ) -> Result<SimilarityMatrix> {
        if captions.is_empty() || clips.is_empty() {
            return Err(SrxError::contract("empty caption or clip set"));
        }
        #[cfg(feature = "parallel")]
        let rows: Vec<Vec<f64>> = captions
            .par_iter()
            .map(|(_, t)| score_row(t, clips, cfg))
            .collect::<Result<_>>()?;
        #[cfg(not(feature = "parallel"))]
        let rows: Vec<Vec<f64>> = captions
            .iter()
            .map(|(_, t)| score_row(t, clips, cfg))
            .collect::<Result<_>>()?;
        assemble_matrix(rows, captions, clips)
    }

    pub fn compute_seq(
        captions: &[(String, TextVectors)],
        clips: &[(String, VisualVectors)],
        cfg: &MatchConfig,
    ) -> Result<SimilarityMatrix> {
        if captions.is_empty() || clips.is_empty() {
            return Err(SrxError::contract("empty caption or clip set"));
        }
        let rows: Vec<Vec<f64>> = captions
            .iter()
            .map(|(_, t)| score_row(t, clips, cfg))
            .collect::<Result<_>>()?;
        assemble_matrix(rows, captions, clips)
    }

    pub fn n_captions(&self) -> usize {
        self.caption_ids.len()
    }

    pub fn n_clips(&self) -> usize {
        self.clip_ids.len()
    }

    pub fn at(&self, caption: usize, clip: usize) -> f64 {
        self.scores.at(caption, clip)
    }
}
