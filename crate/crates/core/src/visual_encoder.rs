//! Clip-side encoder.
//!
//! Three expert streams come in per clip: 2D frame features (spatial), 3D
//! clip features (temporal) and RoI features (object). Each level projects
//! its stream, self-encodes the other two as context, and folds them in
//! through a cross-modal block; the resulting sequence is mean-pooled into
//! one unit vector per level. Which streams feed which level is configurable
//! to cover the feature-combination ablations.

use crate::attention::{
    cross_modal_block, encoder_block, BlockIds, BlockParams, CrossModalIds, CrossModalParams,
};
use crate::error::{Result, SrxError};
use crate::tensor::{Tape, Tensor, TensorId};
use rand::Rng;

/// The three expert stream labels, also used to name the three levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    /// 2D frame features.
    Spatial,
    /// 3D clip features.
    Temporal,
    /// Region-of-interest features.
    Object,
}

pub const STREAMS: [Stream; 3] = [Stream::Spatial, Stream::Temporal, Stream::Object];

impl Stream {
    pub fn idx(self) -> usize {
        match self {
            Stream::Spatial => 0,
            Stream::Temporal => 1,
            Stream::Object => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stream::Spatial => "spatial",
            Stream::Temporal => "temporal",
            Stream::Object => "object",
        }
    }

    pub fn parse(s: &str) -> Result<Stream> {
        match s {
            "spatial" => Ok(Stream::Spatial),
            "temporal" => Ok(Stream::Temporal),
            "object" => Ok(Stream::Object),
            other => Err(SrxError::config(format!("unknown stream '{other}'"))),
        }
    }
}

/// Raw per-clip features, one matrix per expert stream, equal widths.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertFeatures {
    pub f_s: Tensor,
    pub f_t: Tensor,
    pub f_o: Tensor,
}

impl ExpertFeatures {
    pub fn stream(&self, s: Stream) -> &Tensor {
        match s {
            Stream::Spatial => &self.f_s,
            Stream::Temporal => &self.f_t,
            Stream::Object => &self.f_o,
        }
    }

    pub fn validate(&self, width: usize) -> Result<()> {
        for s in STREAMS {
            let (rows, cols) = self.stream(s).dims2()?;
            if rows == 0 {
                return Err(SrxError::validation(format!("{} stream is empty", s.as_str())));
            }
            if cols != width {
                return Err(SrxError::config(format!(
                    "{} stream width {cols}, expected {width}",
                    s.as_str()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConcatAxis {
    Sequence,
    Feature,
}

/// Which expert streams one level consumes and how they are combined.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSpec {
    pub sources: Vec<Stream>,
    pub axis: ConcatAxis,
}

impl StreamSpec {
    pub fn single(s: Stream) -> Self {
        StreamSpec { sources: vec![s], axis: ConcatAxis::Sequence }
    }

    pub fn width(&self, base: usize) -> usize {
        match self.axis {
            ConcatAxis::Sequence => base,
            ConcatAxis::Feature => base * self.sources.len(),
        }
    }
}

/// Per-level input wiring for the whole encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelConfig {
    pub spatial: StreamSpec,
    pub temporal: StreamSpec,
    pub object: StreamSpec,
}

impl LevelConfig {
    /// Each level reads its own expert stream.
    pub fn full() -> Self {
        LevelConfig {
            spatial: StreamSpec::single(Stream::Spatial),
            temporal: StreamSpec::single(Stream::Temporal),
            object: StreamSpec::single(Stream::Object),
        }
    }

    /// 2D frame features everywhere.
    pub fn spatial_only() -> Self {
        LevelConfig {
            spatial: StreamSpec::single(Stream::Spatial),
            temporal: StreamSpec::single(Stream::Spatial),
            object: StreamSpec::single(Stream::Spatial),
        }
    }

    /// 2D and 3D features appended along the sequence axis on every level.
    pub fn combined_sequence() -> Self {
        let spec = StreamSpec {
            sources: vec![Stream::Spatial, Stream::Temporal],
            axis: ConcatAxis::Sequence,
        };
        LevelConfig { spatial: spec.clone(), temporal: spec.clone(), object: spec }
    }

    /// 2D and 3D features appended along the feature axis (doubled width).
    pub fn combined_feature() -> Self {
        let spec = StreamSpec {
            sources: vec![Stream::Spatial, Stream::Temporal],
            axis: ConcatAxis::Feature,
        };
        LevelConfig { spatial: spec.clone(), temporal: spec.clone(), object: spec }
    }

    pub fn from_mode(mode: &str) -> Result<Self> {
        match mode {
            "full" => Ok(LevelConfig::full()),
            "2d" => Ok(LevelConfig::spatial_only()),
            "2d3d-seq" => Ok(LevelConfig::combined_sequence()),
            "2d3d-feat" => Ok(LevelConfig::combined_feature()),
            other => Err(SrxError::config(format!(
                "unknown features mode '{other}' (full, 2d, 2d3d-seq, 2d3d-feat)"
            ))),
        }
    }

    pub fn mode_name(&self) -> &'static str {
        if *self == LevelConfig::full() {
            "full"
        } else if *self == LevelConfig::spatial_only() {
            "2d"
        } else if *self == LevelConfig::combined_sequence() {
            "2d3d-seq"
        } else if *self == LevelConfig::combined_feature() {
            "2d3d-feat"
        } else {
            "custom"
        }
    }

    pub fn spec(&self, level: Stream) -> &StreamSpec {
        match level {
            Stream::Spatial => &self.spatial,
            Stream::Temporal => &self.temporal,
            Stream::Object => &self.object,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for level in STREAMS {
            if self.spec(level).sources.is_empty() {
                return Err(SrxError::config(format!(
                    "level {} has no source streams",
                    level.as_str()
                )));
            }
        }
        Ok(())
    }
}

/// Combine a level's source streams into its input matrix.
///
/// Feature-axis combination needs aligned sequence lengths; longer streams
/// are truncated to the shortest with a logged warning.
pub fn assemble_level(f: &ExpertFeatures, spec: &StreamSpec) -> Result<Tensor> {
    if spec.sources.is_empty() {
        return Err(SrxError::config("level has no source streams"));
    }
    let parts: Vec<&Tensor> = spec.sources.iter().map(|s| f.stream(*s)).collect();
    match spec.axis {
        ConcatAxis::Sequence => {
            let cols = parts[0].shape()[1];
            if parts.iter().any(|p| p.shape()[1] != cols) {
                return Err(SrxError::shape("sequence concat with unequal widths"));
            }
            let rows: Vec<Vec<f64>> = parts
                .iter()
                .flat_map(|p| (0..p.shape()[0]).map(|i| p.row(i).to_vec()))
                .collect();
            Tensor::from_rows(&rows)
        }
        ConcatAxis::Feature => {
            let shortest = parts.iter().map(|p| p.shape()[0]).min().unwrap();
            if parts.iter().any(|p| p.shape()[0] != shortest) {
                log::warn!("feature-axis combine: truncating streams to {shortest} rows");
            }
            let rows: Vec<Vec<f64>> = (0..shortest)
                .map(|i| parts.iter().flat_map(|p| p.row(i).iter().copied()).collect())
                .collect();
            Tensor::from_rows(&rows)
        }
    }
}

/// One level's parameters: input projection plus its two blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelParams {
    pub proj_w: Tensor,
    pub proj_b: Tensor,
    pub encoder: BlockParams,
    pub cross: CrossModalParams,
}

#[derive(Debug, Clone)]
pub struct LevelIds {
    pub proj_w: TensorId,
    pub proj_b: TensorId,
    pub encoder: BlockIds,
    pub cross: CrossModalIds,
}

impl LevelParams {
    pub fn init(
        in_width: usize,
        d_model: usize,
        heads: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(LevelParams {
            proj_w: Tensor::fan_in_uniform(in_width, d_model, rng),
            proj_b: Tensor::zeros(&[d_model]),
            encoder: BlockParams::init(d_model, heads, 2 * d_model, rng)?,
            cross: CrossModalParams::init(d_model, heads, 2 * d_model, rng)?,
        })
    }

    pub fn bind(&self, tape: &mut Tape) -> LevelIds {
        LevelIds {
            proj_w: tape.input(self.proj_w.clone()),
            proj_b: tape.input(self.proj_b.clone()),
            encoder: self.encoder.bind(tape),
            cross: self.cross.bind(tape),
        }
    }

    pub fn for_each(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor)) {
        f(format!("{prefix}.proj_w"), &self.proj_w);
        f(format!("{prefix}.proj_b"), &self.proj_b);
        self.encoder.for_each(&format!("{prefix}.enc"), f);
        self.cross.for_each(&format!("{prefix}.cross"), f);
    }

    pub fn for_each_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        f(format!("{prefix}.proj_w"), &mut self.proj_w);
        f(format!("{prefix}.proj_b"), &mut self.proj_b);
        self.encoder.for_each_mut(&format!("{prefix}.enc"), f);
        self.cross.for_each_mut(&format!("{prefix}.cross"), f);
    }
}

impl LevelIds {
    pub fn for_each(&self, f: &mut dyn FnMut(TensorId)) {
        f(self.proj_w);
        f(self.proj_b);
        self.encoder.for_each(f);
        self.cross.for_each(f);
    }
}

/// All three levels; no weight sharing between them.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualParams {
    pub spatial: LevelParams,
    pub temporal: LevelParams,
    pub object: LevelParams,
}

#[derive(Debug, Clone)]
pub struct VisualIds {
    pub spatial: LevelIds,
    pub temporal: LevelIds,
    pub object: LevelIds,
}

impl VisualParams {
    pub fn init(
        cfg: &LevelConfig,
        base_width: usize,
        d_model: usize,
        heads: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        Ok(VisualParams {
            spatial: LevelParams::init(cfg.spatial.width(base_width), d_model, heads, rng)?,
            temporal: LevelParams::init(cfg.temporal.width(base_width), d_model, heads, rng)?,
            object: LevelParams::init(cfg.object.width(base_width), d_model, heads, rng)?,
        })
    }

    pub fn level(&self, s: Stream) -> &LevelParams {
        match s {
            Stream::Spatial => &self.spatial,
            Stream::Temporal => &self.temporal,
            Stream::Object => &self.object,
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> VisualIds {
        VisualIds {
            spatial: self.spatial.bind(tape),
            temporal: self.temporal.bind(tape),
            object: self.object.bind(tape),
        }
    }

    pub fn for_each(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor)) {
        self.spatial.for_each(&format!("{prefix}.spatial"), f);
        self.temporal.for_each(&format!("{prefix}.temporal"), f);
        self.object.for_each(&format!("{prefix}.object"), f);
    }

    pub fn for_each_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        self.spatial.for_each_mut(&format!("{prefix}.spatial"), f);
        self.temporal.for_each_mut(&format!("{prefix}.temporal"), f);
        self.object.for_each_mut(&format!("{prefix}.object"), f);
    }
}

impl VisualIds {
    pub fn level(&self, s: Stream) -> &LevelIds {
        match s {
            Stream::Spatial => &self.spatial,
            Stream::Temporal => &self.temporal,
            Stream::Object => &self.object,
        }
    }

    pub fn for_each(&self, f: &mut dyn FnMut(TensorId)) {
        self.spatial.for_each(f);
        self.temporal.for_each(f);
        self.object.for_each(f);
    }
}

/// Pooled unit vectors per level plus the sequences they came from.
#[derive(Debug, Clone)]
pub struct VisualEmbeddings {
    pub e_s: TensorId,
    pub e_t: TensorId,
    pub e_o: TensorId,
    pub seq_s: TensorId,
    pub seq_t: TensorId,
    pub seq_o: TensorId,
}

impl VisualEmbeddings {
    pub fn pooled(&self, s: Stream) -> TensorId {
        match s {
            Stream::Spatial => self.e_s,
            Stream::Temporal => self.e_t,
            Stream::Object => self.e_o,
        }
    }

    pub fn sequence(&self, s: Stream) -> TensorId {
        match s {
            Stream::Spatial => self.seq_s,
            Stream::Temporal => self.seq_t,
            Stream::Object => self.seq_o,
        }
    }
}

/// Affine-map each assembled level stream into model space.
pub fn project_experts(
    tape: &mut Tape,
    streams: &[TensorId; 3],
    params: &VisualIds,
) -> Result<[TensorId; 3]> {
    let mut out = [streams[0]; 3];
    for level in STREAMS {
        let x = streams[level.idx()];
        let ids = params.level(level);
        let (_, w) = tape.value(x).dims2()?;
        let (rows, _) = tape.value(ids.proj_w).dims2()?;
        if w != rows {
            return Err(SrxError::config(format!(
                "{} level: stream width {w} vs projection input {rows}",
                level.as_str()
            )));
        }
        let projected = tape.matmul(x, ids.proj_w)?;
        out[level.idx()] = tape.add_bias(projected, ids.proj_b)?;
    }
    Ok(out)
}

/// One level: self-encode the other two projected streams, then fold them
/// into this level's own stream. Returns the un-pooled sequence.
pub fn encode_level(
    tape: &mut Tape,
    level: Stream,
    projected: &[TensorId; 3],
    params: &VisualIds,
) -> Result<TensorId> {
    let ids = params.level(level);
    let own = projected[level.idx()];
    let others: Vec<TensorId> = STREAMS
        .iter()
        .filter(|s| **s != level)
        .map(|s| projected[s.idx()])
        .collect();
    let context = tape.concat(&others, 0)?;
    let s_e = encoder_block(tape, &ids.encoder, context)?;
    cross_modal_block(tape, &ids.cross, s_e, own)
}

/// Full clip pass: assemble, project, encode all three levels, pool each to
/// a unit vector.
pub fn encode_visual(
    tape: &mut Tape,
    f: &ExpertFeatures,
    cfg: &LevelConfig,
    params: &VisualIds,
) -> Result<VisualEmbeddings> {
    cfg.validate()?;
    let assembled = [
        assemble_level(f, &cfg.spatial)?,
        assemble_level(f, &cfg.temporal)?,
        assemble_level(f, &cfg.object)?,
    ];
    let stream_ids = [
        tape.constant(assembled[0].clone()),
        tape.constant(assembled[1].clone()),
        tape.constant(assembled[2].clone()),
    ];
    let projected = project_experts(tape, &stream_ids, params)?;
    let mut pooled = [stream_ids[0]; 3];
    let mut seqs = [stream_ids[0]; 3];
    for level in STREAMS {
        let seq = encode_level(tape, level, &projected, params)?;
        let mean = tape.mean_pool(seq, 0)?;
        pooled[level.idx()] = tape.l2_normalize(mean)?;
        seqs[level.idx()] = seq;
    }
    Ok(VisualEmbeddings {
        e_s: pooled[0],
        e_t: pooled[1],
        e_o: pooled[2],
        seq_s: seqs[0],
        seq_t: seqs[1],
        seq_o: seqs[2],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::tensor::max_abs_diff;

    const W: usize = 12;
    const D: usize = 8;

    fn toy_features(seed: u64, n_s: usize, n_t: usize, n_o: usize) -> ExpertFeatures {
        let mut r = rng::stream(seed, 0);
        ExpertFeatures {
            f_s: Tensor::uniform(&[n_s, W], -1.0, 1.0, &mut r),
            f_t: Tensor::uniform(&[n_t, W], -1.0, 1.0, &mut r),
            f_o: Tensor::uniform(&[n_o, W], -1.0, 1.0, &mut r),
        }
    }

    fn toy_params(cfg: &LevelConfig, seed: u64) -> VisualParams {
        VisualParams::init(cfg, W, D, 2, &mut rng::stream(seed, 1)).unwrap()
    }

    #[test]
    fn identity_projection_passes_streams_through() {
        let cfg = LevelConfig::full();
        let mut params = toy_params(&cfg, 1);
        params.spatial.proj_w = Tensor::eye(W);
        params.spatial.proj_b = Tensor::zeros(&[W]);
        let f = toy_features(2, 3, 2, 4);
        let mut tape = Tape::new();
        let ids = params.bind(&mut tape);
        let streams = [
            tape.constant(f.f_s.clone()),
            tape.constant(f.f_t.clone()),
            tape.constant(f.f_o.clone()),
        ];
        let out = project_experts(&mut tape, &streams, &ids).unwrap();
        assert_eq!(max_abs_diff(tape.value(out[0]), &f.f_s), 0.0);
    }

    #[test]
    fn projection_shape_and_hand_oracle() {
        let cfg = LevelConfig::full();
        let params = toy_params(&cfg, 3);
        let f = toy_features(4, 7, 2, 2);
        let mut tape = Tape::new();
        let ids = params.bind(&mut tape);
        let streams = [
            tape.constant(f.f_s.clone()),
            tape.constant(f.f_t.clone()),
            tape.constant(f.f_o.clone()),
        ];
        let out = project_experts(&mut tape, &streams, &ids).unwrap();
        let got = tape.value(out[0]);
        assert_eq!(got.shape(), &[7, D]);
        for i in 0..7 {
            for c in 0..D {
                let want: f64 = (0..W)
                    .map(|k| f.f_s.at(i, k) * params.spatial.proj_w.at(k, c))
                    .sum::<f64>()
                    + params.spatial.proj_b.data()[c];
                assert!((got.at(i, c) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projection_width_mismatch_is_config_error() {
        let cfg = LevelConfig::full();
        let params = toy_params(&cfg, 5);
        let mut tape = Tape::new();
        let ids = params.bind(&mut tape);
        let bad = tape.constant(Tensor::zeros(&[3, W + 1]));
        let ok = tape.constant(Tensor::zeros(&[3, W]));
        let err = project_experts(&mut tape, &[bad, ok, ok], &ids).unwrap_err();
        assert!(matches!(err, SrxError::Config(_)));
    }

    #[test]
    fn degenerate_single_row_streams() {
        let cfg = LevelConfig::full();
        let params = toy_params(&cfg, 6);
        let f = toy_features(7, 1, 1, 1);
        let mut tape = Tape::new();
        let ids = params.bind(&mut tape);
        let out = encode_visual(&mut tape, &f, &cfg, &ids).unwrap();
        for level in STREAMS {
            assert_eq!(tape.value(out.sequence(level)).shape(), &[1, D]);
            assert_eq!(tape.value(out.pooled(level)).shape(), &[D]);
        }
    }

    #[test]
    fn spatial_level_equals_manual_composition() {
        let cfg = LevelConfig::full();
        let params = toy_params(&cfg, 8);
        let f = toy_features(9, 3, 2, 4);
        let mut tape = Tape::new();
        let ids = params.bind(&mut tape);
        let streams = [
            tape.constant(f.f_s.clone()),
            tape.constant(f.f_t.clone()),
            tape.constant(f.f_o.clone()),
        ];
        let projected = project_experts(&mut tape, &streams, &ids).unwrap();
        let got = encode_level(&mut tape, Stream::Spatial, &projected, &ids).unwrap();

        let cat = tape.concat(&[projected[1], projected[2]], 0).unwrap();
        let s_e = encoder_block(&mut tape, &ids.spatial.encoder, cat).unwrap();
        let want = cross_modal_block(&mut tape, &ids.spatial.cross, s_e, projected[0]).unwrap();
        assert_eq!(max_abs_diff(tape.value(got), tape.value(want)), 0.0);
    }

    #[test]
    fn complement_streams_influence_each_level() {
        let cfg = LevelConfig::full();
        let params = toy_params(&cfg, 10);
        let f = toy_features(11, 3, 2, 2);
        let zeroed = ExpertFeatures {
            f_s: f.f_s.clone(),
            f_t: Tensor::zeros(&[2, W]),
            f_o: Tensor::zeros(&[2, W]),
        };
        let mut tape = Tape::new();
        let ids = params.bind(&mut tape);
        let a = encode_visual(&mut tape, &f, &cfg, &ids).unwrap();
        let b = encode_visual(&mut tape, &zeroed, &cfg, &ids).unwrap();
        let diff = max_abs_diff(tape.value(a.e_s), tape.value(b.e_s));
        assert!(diff > 1e-9, "complement pathway is dead: {diff}");
    }

    #[test]
    fn identical_rows_pool_to_the_row_path() {
        let cfg = LevelConfig::full();
        let params = toy_params(&cfg, 12);
        let mut r = rng::stream(13, 0);
        let row_s: Vec<f64> = (0..W).map(|_| r.gen_range(-1.0..1.0)).collect();
        let row_t: Vec<f64> = (0..W).map(|_| r.gen_range(-1.0..1.0)).collect();
        let row_o: Vec<f64> = (0..W).map(|_| r.gen_range(-1.0..1.0)).collect();
        let f = ExpertFeatures {
            f_s: Tensor::from_rows(&vec![row_s.clone(); 4]).unwrap(),
            f_t: Tensor::from_rows(&vec![row_t.clone(); 3]).unwrap(),
            f_o: Tensor::from_rows(&vec![row_o.clone(); 2]).unwrap(),
        };
        let single = ExpertFeatures {
            f_s: Tensor::from_rows(&[row_s]).unwrap(),
            f_t: Tensor::from_rows(&[row_t]).unwrap(),
            f_o: Tensor::from_rows(&[row_o]).unwrap(),
        };
        let mut tape = Tape::new();
        let ids = params.bind(&mut tape);
        let a = encode_visual(&mut tape, &f, &cfg, &ids).unwrap();
        let b = encode_visual(&mut tape, &single, &cfg, &ids).unwrap();
        for level in STREAMS {
            let diff = max_abs_diff(tape.value(a.pooled(level)), tape.value(b.pooled(level)));
            assert!(diff < 1e-9, "{}: {diff}", level.as_str());
        }
    }

    #[test]
    fn pooled_outputs_are_unit_norm() {
        let cfg = LevelConfig::full();
        let params = toy_params(&cfg, 14);
        let f = toy_features(15, 4, 3, 2);
        let mut tape = Tape::new();
        let ids = params.bind(&mut tape);
        let out = encode_visual(&mut tape, &f, &cfg, &ids).unwrap();
        for level in STREAMS {
            let v = tape.value(out.pooled(level));
            let norm: f64 = v.data().iter().map(|x| x * x).sum();
            assert!((norm - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn permuting_rows_within_one_stream_leaves_pooled_output() {
        let cfg = LevelConfig::full();
        let params = toy_params(&cfg, 16);
        let f = toy_features(17, 4, 3, 5);
        let perm = [4usize, 1, 3, 0, 2];
        let permuted = ExpertFeatures {
            f_s: f.f_s.clone(),
            f_t: f.f_t.clone(),
            f_o: Tensor::from_rows(
                &perm.iter().map(|&i| f.f_o.row(i).to_vec()).collect::<Vec<_>>(),
            )
            .unwrap(),
        };
        let mut tape = Tape::new();
        let ids = params.bind(&mut tape);
        let a = encode_visual(&mut tape, &f, &cfg, &ids).unwrap();
        let b = encode_visual(&mut tape, &permuted, &cfg, &ids).unwrap();
        for level in STREAMS {
            let diff = max_abs_diff(tape.value(a.pooled(level)), tape.value(b.pooled(level)));
            assert!(diff < 1e-9, "{}: {diff}", level.as_str());
        }
    }

    #[test]
    fn all_ablation_modes_run_forward_and_backward() {
        for mode in ["full", "2d", "2d3d-seq", "2d3d-feat"] {
            let cfg = LevelConfig::from_mode(mode).unwrap();
            let params = toy_params(&cfg, 18);
            let f = toy_features(19, 3, 4, 2);
            let mut tape = Tape::new();
            let ids = params.bind(&mut tape);
            let out = encode_visual(&mut tape, &f, &cfg, &ids).unwrap();
            let stacked = tape
                .stack(&[out.e_s, out.e_t, out.e_o])
                .unwrap();
            let w = tape.constant(Tensor::uniform(&[3, D], -1.0, 1.0, &mut rng::stream(20, 0)));
            let p = tape.mul(stacked, w).unwrap();
            let root = tape.sum(p);
            assert!(tape.value(root).as_scalar().unwrap().is_finite(), "{mode}");
            let grads = tape.backward(root).unwrap();
            ids.for_each(&mut |id| {
                assert!(grads.get(id).is_some(), "{mode}: parameter without gradient");
            });
        }
    }

    #[test]
    fn feature_axis_assembly_truncates_to_shortest() {
        let f = toy_features(21, 3, 5, 2);
        let spec = StreamSpec {
            sources: vec![Stream::Spatial, Stream::Temporal],
            axis: ConcatAxis::Feature,
        };
        let out = assemble_level(&f, &spec).unwrap();
        assert_eq!(out.shape(), &[3, 2 * W]);
        assert_eq!(&out.row(1)[..W], f.f_s.row(1));
        assert_eq!(&out.row(1)[W..], f.f_t.row(1));

        let seq = StreamSpec {
            sources: vec![Stream::Spatial, Stream::Temporal],
            axis: ConcatAxis::Sequence,
        };
        let out2 = assemble_level(&f, &seq).unwrap();
        assert_eq!(out2.shape(), &[8, W]);
        assert_eq!(out2.row(3), f.f_t.row(0));
    }

    #[test]
    fn mode_names_round_trip() {
        for mode in ["full", "2d", "2d3d-seq", "2d3d-feat"] {
            assert_eq!(LevelConfig::from_mode(mode).unwrap().mode_name(), mode);
        }
        assert!(LevelConfig::from_mode("nope").is_err());
    }
}
