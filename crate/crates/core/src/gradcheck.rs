//! Finite-difference verification of every differentiable pathway.
//!
//! Primitive tape operations get full central-difference checks over all
//! input coordinates. Composite pathways (attention blocks, both encoders,
//! scoring, and the training loss) are checked against sampled parameter
//! coordinates, since full differencing over thousands of parameters would
//! dominate the runtime without adding coverage. A corruption hook bumps
//! one analytic gradient so the negative control can prove the harness
//! actually fails when gradients are wrong.

use crate::attention::{
    cross_modal_block, encoder_block, multi_head, scaled_dot_attention, BlockParams,
    CrossModalParams, MultiHeadParams,
};
use crate::error::{Result, SrxError};
use crate::matching::{batch_scores, contrastive_loss, pair_similarity, MatchConfig};
use crate::model::{ModelConfig, SrxModel};
use crate::rng;
use crate::tensor::{finite_diff_grad, rel_err, Tape, Tensor, TensorId};
use crate::text_encoder::{
    encode_text, GcnParams, GraphEdge, GraphNode, Role, RoleGraph, WordTable,
};
use crate::visual_encoder::{encode_visual, ExpertFeatures, LevelConfig, VisualParams};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Every op and pathway the suite verifies, in report order.
pub const REGISTERED_OPS: &[&str] = &[
    "matmul",
    "matvec",
    "add",
    "sub",
    "mul",
    "add_bias",
    "add_scalar",
    "scale",
    "relu",
    "softmax",
    "layer_norm",
    "concat",
    "stack",
    "transpose",
    "mean_pool",
    "max_pool",
    "l2_normalize",
    "sum",
    "select_row",
    "attention",
    "multi_head",
    "encoder_block",
    "cross_modal_block",
    "text_encoder",
    "visual_encoder",
    "pair_similarity",
    "contrastive_loss",
];

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOptions {
    pub seeds: u64,
    pub step: f64,
    pub tolerance: f64,
    /// Parameter coordinates sampled per seed in composite cases.
    pub sampled_coords: usize,
    /// Test hook: name of a case whose analytic gradient gets corrupted.
    pub corrupt: Option<String>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            seeds: 10,
            step: 1e-5,
            tolerance: 1e-4,
            sampled_coords: 12,
            corrupt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub name: String,
    pub max_rel_err: f64,
    pub coords_checked: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub cases: Vec<CaseResult>,
}

impl GradcheckReport {
    pub fn all_passed(&self) -> bool {
        self.cases.iter().all(|c| c.passed)
    }

    pub fn lines(&self) -> Vec<String> {
        self.cases
            .iter()
            .map(|c| {
                format!(
                    "op {}: {} (max rel err {:.3e} over {} coords)",
                    c.name,
                    if c.passed { "PASS" } else { "FAIL" },
                    c.max_rel_err,
                    c.coords_checked
                )
            })
            .collect()
    }
}

fn readout(tape: &mut Tape, out: TensorId, seed: u64, label: &str) -> Result<TensorId> {
    let shape = tape.value(out).shape().to_vec();
    let w = tape.constant(Tensor::uniform(
        &shape,
        -1.0,
        1.0,
        &mut rng::labeled_stream(seed, label),
    ));
    let weighted = tape.mul(out, w)?;
    Ok(tape.sum(weighted))
}

fn uniform(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor {
    Tensor::uniform(shape, -1.0, 1.0, r)
}

/// Values bounded away from zero, safe around the relu kink at step 1e-5.
fn offset_uniform(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let sign = if r.gen_bool(0.5) { 1.0 } else { -1.0 };
        sign * r.gen_range(0.2..1.0)
    })
}

/// Distinct values so max-pool selections stay stable under the step.
fn distinct_uniform(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |i| r.gen_range(-1.0..1.0) + i as f64 * 1e-3)
}

struct OpCase {
    name: &'static str,
    make: fn(&mut ChaCha8Rng) -> Vec<Tensor>,
    build: fn(&mut Tape, &[TensorId], u64) -> Result<TensorId>,
}

fn op_cases() -> Vec<OpCase> {
    vec![
        OpCase {
            name: "matmul",
            make: |r| vec![uniform(&[3, 4], r), uniform(&[4, 2], r)],
            build: |t, ids, s| {
                let m = t.matmul(ids[0], ids[1])?;
                readout(t, m, s, "matmul")
            },
        },
        OpCase {
            name: "matvec",
            make: |r| vec![uniform(&[3, 4], r), uniform(&[4], r)],
            build: |t, ids, s| {
                let m = t.matvec(ids[0], ids[1])?;
                readout(t, m, s, "matvec")
            },
        },
        OpCase {
            name: "add",
            make: |r| vec![uniform(&[3, 4], r), uniform(&[3, 4], r)],
            build: |t, ids, s| {
                let m = t.add(ids[0], ids[1])?;
                readout(t, m, s, "add")
            },
        },
        OpCase {
            name: "sub",
            make: |r| vec![uniform(&[3, 4], r), uniform(&[3, 4], r)],
            build: |t, ids, s| {
                let m = t.sub(ids[0], ids[1])?;
                readout(t, m, s, "sub")
            },
        },
        OpCase {
            name: "mul",
            make: |r| vec![uniform(&[3, 4], r), uniform(&[3, 4], r)],
            build: |t, ids, s| {
                let m = t.mul(ids[0], ids[1])?;
                readout(t, m, s, "mul")
            },
        },
        OpCase {
            name: "add_bias",
            make: |r| vec![uniform(&[3, 4], r), uniform(&[4], r)],
            build: |t, ids, s| {
                let m = t.add_bias(ids[0], ids[1])?;
                readout(t, m, s, "add_bias")
            },
        },
        OpCase {
            name: "add_scalar",
            make: |r| vec![uniform(&[3, 4], r)],
            build: |t, ids, s| {
                let m = t.add_scalar(ids[0], 0.7);
                readout(t, m, s, "add_scalar")
            },
        },
        OpCase {
            name: "scale",
            make: |r| vec![uniform(&[3, 4], r)],
            build: |t, ids, s| {
                let m = t.scale(ids[0], -1.3);
                readout(t, m, s, "scale")
            },
        },
        OpCase {
            name: "relu",
            make: |r| vec![offset_uniform(&[3, 4], r)],
            build: |t, ids, s| {
                let m = t.relu(ids[0]);
                readout(t, m, s, "relu")
            },
        },
        OpCase {
            name: "softmax",
            make: |r| vec![uniform(&[3, 4], r)],
            build: |t, ids, s| {
                let rows = t.softmax(ids[0], 1)?;
                let cols = t.softmax(ids[0], 0)?;
                let a = readout(t, rows, s, "softmax-rows")?;
                let b = readout(t, cols, s, "softmax-cols")?;
                t.add(a, b)
            },
        },
        OpCase {
            name: "layer_norm",
            make: |r| vec![uniform(&[3, 4], r), uniform(&[4], r), uniform(&[4], r)],
            build: |t, ids, s| {
                let m = t.layer_norm(ids[0], ids[1], ids[2])?;
                readout(t, m, s, "layer_norm")
            },
        },
        OpCase {
            name: "concat",
            make: |r| vec![uniform(&[2, 3], r), uniform(&[3, 3], r), uniform(&[2, 2], r)],
            build: |t, ids, s| {
                let rows = t.concat(&[ids[0], ids[1]], 0)?;
                let cols = t.concat(&[ids[0], ids[2]], 1)?;
                let a = readout(t, rows, s, "concat-rows")?;
                let b = readout(t, cols, s, "concat-cols")?;
                t.add(a, b)
            },
        },
        OpCase {
            name: "stack",
            make: |r| vec![uniform(&[4], r), uniform(&[4], r), uniform(&[4], r)],
            build: |t, ids, s| {
                let m = t.stack(&[ids[0], ids[1], ids[2]])?;
                readout(t, m, s, "stack")
            },
        },
        OpCase {
            name: "transpose",
            make: |r| vec![uniform(&[3, 4], r)],
            build: |t, ids, s| {
                let m = t.transpose(ids[0])?;
                readout(t, m, s, "transpose")
            },
        },
        OpCase {
            name: "mean_pool",
            make: |r| vec![uniform(&[3, 4], r)],
            build: |t, ids, s| {
                let rows = t.mean_pool(ids[0], 0)?;
                let cols = t.mean_pool(ids[0], 1)?;
                let a = readout(t, rows, s, "mean-pool-rows")?;
                let b = readout(t, cols, s, "mean-pool-cols")?;
                t.add(a, b)
            },
        },
        OpCase {
            name: "max_pool",
            make: |r| vec![distinct_uniform(&[3, 4], r)],
            build: |t, ids, s| {
                let rows = t.max_pool(ids[0], 0)?;
                let cols = t.max_pool(ids[0], 1)?;
                let a = readout(t, rows, s, "max-pool-rows")?;
                let b = readout(t, cols, s, "max-pool-cols")?;
                t.add(a, b)
            },
        },
        OpCase {
            name: "l2_normalize",
            make: |r| vec![offset_uniform(&[3, 4], r)],
            build: |t, ids, s| {
                let m = t.l2_normalize(ids[0])?;
                readout(t, m, s, "l2_normalize")
            },
        },
        OpCase {
            name: "sum",
            make: |r| vec![uniform(&[3, 4], r)],
            build: |t, ids, _| Ok(t.sum(ids[0])),
        },
        OpCase {
            name: "select_row",
            make: |r| vec![uniform(&[4, 3], r)],
            build: |t, ids, s| {
                let m = t.select_row(ids[0], 2)?;
                readout(t, m, s, "select_row")
            },
        },
        OpCase {
            name: "attention",
            make: |r| vec![uniform(&[3, 4], r), uniform(&[5, 4], r), uniform(&[5, 4], r)],
            build: |t, ids, s| {
                let m = scaled_dot_attention(t, ids[0], ids[1], ids[2])?;
                readout(t, m, s, "attention")
            },
        },
    ]
}

fn run_op_case(case: &OpCase, opts: &CheckOptions) -> Result<CaseResult> {
    let corrupt = opts.corrupt.as_deref() == Some(case.name);
    let mut max_rel: f64 = 0.0;
    let mut coords = 0usize;
    for seed in 0..opts.seeds {
        let mut r = rng::labeled_stream(seed, case.name);
        let inputs = (case.make)(&mut r);
        let build = |t: &mut Tape, ids: &[TensorId]| (case.build)(t, ids, seed);

        let mut tape = Tape::new();
        let ids: Vec<TensorId> = inputs.iter().map(|t| tape.input(t.clone())).collect();
        let root = build(&mut tape, &ids)?;
        let grads = tape.backward(root)?;
        let mut analytic: Vec<Tensor> = ids
            .iter()
            .zip(&inputs)
            .map(|(id, input)| {
                grads.get(*id).cloned().unwrap_or_else(|| Tensor::zeros(input.shape()))
            })
            .collect();
        if corrupt && seed == 0 {
            analytic[0].data_mut()[0] += 1e-2;
        }
        let numeric = finite_diff_grad(&inputs, opts.step, build)?;
        for (a, n) in analytic.iter().zip(&numeric) {
            for (av, nv) in a.data().iter().zip(n.data()) {
                max_rel = max_rel.max(rel_err(*av, *nv));
                coords += 1;
            }
        }
    }
    Ok(CaseResult {
        name: case.name.to_string(),
        max_rel_err: max_rel,
        coords_checked: coords,
        passed: max_rel.is_finite() && max_rel < opts.tolerance,
    })
}

type Visitor<P> = dyn Fn(&P, &mut dyn FnMut(&Tensor));
type VisitorMut<P> = dyn Fn(&mut P, &mut dyn FnMut(&mut Tensor));

/// Sampled central differences over a parameter pack.
#[allow(clippy::too_many_arguments)]
fn sampled_fd<P: Clone>(
    base: &P,
    visit: &Visitor<P>,
    visit_mut: &VisitorMut<P>,
    forward: &dyn Fn(&P) -> Result<f64>,
    analytic: &[Tensor],
    r: &mut ChaCha8Rng,
    opts: &CheckOptions,
    corrupt: bool,
) -> Result<(f64, usize)> {
    let mut lens = Vec::new();
    visit(base, &mut |t| lens.push(t.len()));
    let total: usize = lens.iter().sum();
    let mut analytic = analytic.to_vec();
    if corrupt {
        analytic[0].data_mut()[0] += 1e-2;
    }
    let mut coords: Vec<(usize, usize)> = if corrupt { vec![(0, 0)] } else { Vec::new() };
    for _ in 0..opts.sampled_coords {
        let mut flat = r.gen_range(0..total);
        let mut ti = 0;
        while flat >= lens[ti] {
            flat -= lens[ti];
            ti += 1;
        }
        coords.push((ti, flat));
    }
    let bump = |p: &mut P, ti: usize, ci: usize, d: f64| {
        let mut k = 0usize;
        visit_mut(p, &mut |t| {
            if k == ti {
                t.data_mut()[ci] += d;
            }
            k += 1;
        });
    };
    let mut max_rel: f64 = 0.0;
    for (ti, ci) in &coords {
        let mut plus = base.clone();
        bump(&mut plus, *ti, *ci, opts.step);
        let fp = forward(&plus)?;
        let mut minus = base.clone();
        bump(&mut minus, *ti, *ci, -opts.step);
        let fm = forward(&minus)?;
        let numeric = (fp - fm) / (2.0 * opts.step);
        max_rel = max_rel.max(rel_err(analytic[*ti].data()[*ci], numeric));
    }
    Ok((max_rel, coords.len()))
}

fn grads_in_order(
    tape: &Tape,
    grads: &crate::tensor::Gradients,
    ids: &[TensorId],
) -> Vec<Tensor> {
    ids.iter()
        .map(|id| {
            grads
                .get(*id)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(tape.value(*id).shape()))
        })
        .collect()
}

struct SampledCase {
    name: &'static str,
    run: fn(u64, &CheckOptions, bool) -> Result<(f64, usize)>,
}

fn run_multi_head(seed: u64, opts: &CheckOptions, corrupt: bool) -> Result<(f64, usize)> {
    let mut r = rng::labeled_stream(seed, "case-multi-head");
    let params = MultiHeadParams::init(8, 2, &mut r)?;
    let q = uniform(&[3, 8], &mut r);
    let k = uniform(&[4, 8], &mut r);
    let v = uniform(&[4, 8], &mut r);
    let build = |p: &MultiHeadParams, tape: &mut Tape| -> Result<(TensorId, Vec<TensorId>)> {
        let ids = p.bind(tape);
        let qi = tape.constant(q.clone());
        let ki = tape.constant(k.clone());
        let vi = tape.constant(v.clone());
        let out = multi_head(tape, &ids, qi, ki, vi)?;
        let root = readout(tape, out, seed, "ro-multi-head")?;
        let mut list = Vec::new();
        ids.for_each(&mut |id| list.push(id));
        Ok((root, list))
    };
    let mut tape = Tape::new();
    let (root, id_list) = build(&params, &mut tape)?;
    let grads = tape.backward(root)?;
    let analytic = grads_in_order(&tape, &grads, &id_list);
    sampled_fd(
        &params,
        &|p, f| p.for_each("", &mut |_, t| f(t)),
        &|p, f| p.for_each_mut("", &mut |_, t| f(t)),
        &|p| {
            let mut t = Tape::new();
            let (root, _) = build(p, &mut t)?;
            t.value(root).as_scalar()
        },
        &analytic,
        &mut rng::labeled_stream(seed, "coords-multi-head"),
        opts,
        corrupt,
    )
}

fn run_encoder_block(seed: u64, opts: &CheckOptions, corrupt: bool) -> Result<(f64, usize)> {
    let mut r = rng::labeled_stream(seed, "case-encoder-block");
    let params = BlockParams::init(8, 2, 16, &mut r)?;
    let f_in = uniform(&[4, 8], &mut r);
    let build = |p: &BlockParams, tape: &mut Tape| -> Result<(TensorId, Vec<TensorId>)> {
        let ids = p.bind(tape);
        let x = tape.constant(f_in.clone());
        let out = encoder_block(tape, &ids, x)?;
        let root = readout(tape, out, seed, "ro-encoder-block")?;
        let mut list = Vec::new();
        ids.for_each(&mut |id| list.push(id));
        Ok((root, list))
    };
    let mut tape = Tape::new();
    let (root, id_list) = build(&params, &mut tape)?;
    let grads = tape.backward(root)?;
    let analytic = grads_in_order(&tape, &grads, &id_list);
    sampled_fd(
        &params,
        &|p, f| p.for_each("", &mut |_, t| f(t)),
        &|p, f| p.for_each_mut("", &mut |_, t| f(t)),
        &|p| {
            let mut t = Tape::new();
            let (root, _) = build(p, &mut t)?;
            t.value(root).as_scalar()
        },
        &analytic,
        &mut rng::labeled_stream(seed, "coords-encoder-block"),
        opts,
        corrupt,
    )
}

fn run_cross_modal(seed: u64, opts: &CheckOptions, corrupt: bool) -> Result<(f64, usize)> {
    let mut r = rng::labeled_stream(seed, "case-cross-modal");
    let params = CrossModalParams::init(8, 2, 16, &mut r)?;
    let query = uniform(&[3, 8], &mut r);
    let context = uniform(&[4, 8], &mut r);
    let build = |p: &CrossModalParams, tape: &mut Tape| -> Result<(TensorId, Vec<TensorId>)> {
        let ids = p.bind(tape);
        let qi = tape.constant(query.clone());
        let ci = tape.constant(context.clone());
        let out = cross_modal_block(tape, &ids, qi, ci)?;
        let root = readout(tape, out, seed, "ro-cross-modal")?;
        let mut list = Vec::new();
        ids.for_each(&mut |id| list.push(id));
        Ok((root, list))
    };
    let mut tape = Tape::new();
    let (root, id_list) = build(&params, &mut tape)?;
    let grads = tape.backward(root)?;
    let analytic = grads_in_order(&tape, &grads, &id_list);
    sampled_fd(
        &params,
        &|p, f| p.for_each("", &mut |_, t| f(t)),
        &|p, f| p.for_each_mut("", &mut |_, t| f(t)),
        &|p| {
            let mut t = Tape::new();
            let (root, _) = build(p, &mut t)?;
            t.value(root).as_scalar()
        },
        &analytic,
        &mut rng::labeled_stream(seed, "coords-cross-modal"),
        opts,
        corrupt,
    )
}

fn check_graph(salt: u32) -> RoleGraph {
    RoleGraph {
        nodes: vec![
            GraphNode { role: Role::Event, tokens: vec![salt * 4] },
            GraphNode { role: Role::Action, tokens: vec![salt * 4 + 1] },
            GraphNode { role: Role::Action, tokens: vec![salt * 4 + 2] },
            GraphNode { role: Role::Entity, tokens: vec![salt * 4 + 3] },
        ],
        edges: vec![
            GraphEdge { src: 1, dst: 0, relation: 0 },
            GraphEdge { src: 2, dst: 0, relation: 0 },
            GraphEdge { src: 3, dst: 1, relation: 1 },
        ],
        n_relations: 3,
    }
}

fn run_text_encoder(seed: u64, opts: &CheckOptions, corrupt: bool) -> Result<(f64, usize)> {
    let mut r = rng::labeled_stream(seed, "case-text-encoder");
    let params = GcnParams::init(6, 8, 3, 2, &mut r);
    let words = WordTable::seeded_random(4, 6, seed);
    let graph = check_graph(0);
    let build = |p: &GcnParams, tape: &mut Tape| -> Result<(TensorId, Vec<TensorId>)> {
        let ids = p.bind(tape);
        let emb = encode_text(tape, &graph, &words, &ids)?;
        let mut all = vec![emb.event];
        all.extend(emb.actions.iter().copied());
        all.extend(emb.entities.iter().copied());
        let stacked = tape.stack(&all)?;
        let root = readout(tape, stacked, seed, "ro-text-encoder")?;
        let mut list = Vec::new();
        ids.for_each(&mut |id| list.push(id));
        Ok((root, list))
    };
    let mut tape = Tape::new();
    let (root, id_list) = build(&params, &mut tape)?;
    let grads = tape.backward(root)?;
    let analytic = grads_in_order(&tape, &grads, &id_list);
    sampled_fd(
        &params,
        &|p, f| p.for_each("", &mut |_, t| f(t)),
        &|p, f| p.for_each_mut("", &mut |_, t| f(t)),
        &|p| {
            let mut t = Tape::new();
            let (root, _) = build(p, &mut t)?;
            t.value(root).as_scalar()
        },
        &analytic,
        &mut rng::labeled_stream(seed, "coords-text-encoder"),
        opts,
        corrupt,
    )
}

fn check_features(r: &mut ChaCha8Rng) -> ExpertFeatures {
    ExpertFeatures {
        f_s: uniform(&[3, 10], r),
        f_t: uniform(&[2, 10], r),
        f_o: uniform(&[4, 10], r),
    }
}

fn run_visual_encoder(seed: u64, opts: &CheckOptions, corrupt: bool) -> Result<(f64, usize)> {
    let mut r = rng::labeled_stream(seed, "case-visual-encoder");
    let levels = LevelConfig::full();
    let params = VisualParams::init(&levels, 10, 8, 2, &mut r)?;
    let features = check_features(&mut r);
    let build = |p: &VisualParams, tape: &mut Tape| -> Result<(TensorId, Vec<TensorId>)> {
        let ids = p.bind(tape);
        let emb = encode_visual(tape, &features, &levels, &ids)?;
        let stacked = tape.stack(&[emb.e_s, emb.e_t, emb.e_o])?;
        let root = readout(tape, stacked, seed, "ro-visual-encoder")?;
        let mut list = Vec::new();
        ids.for_each(&mut |id| list.push(id));
        Ok((root, list))
    };
    let mut tape = Tape::new();
    let (root, id_list) = build(&params, &mut tape)?;
    let grads = tape.backward(root)?;
    let analytic = grads_in_order(&tape, &grads, &id_list);
    sampled_fd(
        &params,
        &|p, f| p.for_each("", &mut |_, t| f(t)),
        &|p, f| p.for_each_mut("", &mut |_, t| f(t)),
        &|p| {
            let mut t = Tape::new();
            let (root, _) = build(p, &mut t)?;
            t.value(root).as_scalar()
        },
        &analytic,
        &mut rng::labeled_stream(seed, "coords-visual-encoder"),
        opts,
        corrupt,
    )
}

fn check_model(seed: u64) -> Result<SrxModel> {
    SrxModel::init(
        ModelConfig {
            d_model: 8,
            heads: 2,
            gcn_layers: 1,
            word_dim: 6,
            width: 10,
            n_relations: 3,
            levels: LevelConfig::full(),
        },
        seed,
    )
}

fn run_pair_similarity(seed: u64, opts: &CheckOptions, corrupt: bool) -> Result<(f64, usize)> {
    let model = check_model(seed)?;
    let words = WordTable::seeded_random(4, 6, seed);
    let graph = check_graph(0);
    let mut r = rng::labeled_stream(seed, "case-pair-similarity");
    let features = check_features(&mut r);
    let cfg = MatchConfig::default();
    let build = |m: &SrxModel, tape: &mut Tape| -> Result<(TensorId, Vec<TensorId>)> {
        let ids = m.bind(tape);
        let text = m.encode_caption(tape, &ids, &graph, &words)?;
        let clip = m.encode_clip(tape, &ids, &features)?;
        let root = pair_similarity(tape, &text, &clip, &cfg)?;
        Ok((root, ids.list()))
    };
    let mut tape = Tape::new();
    let (root, id_list) = build(&model, &mut tape)?;
    let grads = tape.backward(root)?;
    let analytic = grads_in_order(&tape, &grads, &id_list);
    sampled_fd(
        &model,
        &|m, f| m.for_each(&mut |_, t| f(t)),
        &|m, f| m.for_each_mut(&mut |_, t| f(t)),
        &|m| {
            let mut t = Tape::new();
            let (root, _) = build(m, &mut t)?;
            t.value(root).as_scalar()
        },
        &analytic,
        &mut rng::labeled_stream(seed, "coords-pair-similarity"),
        opts,
        corrupt,
    )
}

fn run_loss(seed: u64, opts: &CheckOptions, corrupt: bool) -> Result<(f64, usize)> {
    let model = check_model(seed)?;
    let words = WordTable::seeded_random(12, 6, seed);
    let graphs = [check_graph(0), check_graph(1), check_graph(2)];
    let mut r = rng::labeled_stream(seed, "case-loss");
    let features = [check_features(&mut r), check_features(&mut r), check_features(&mut r)];
    let cfg = MatchConfig::default();
    let build = |m: &SrxModel, tape: &mut Tape| -> Result<(TensorId, Vec<TensorId>)> {
        let ids = m.bind(tape);
        let mut texts = Vec::new();
        let mut clips = Vec::new();
        for (g, f) in graphs.iter().zip(&features) {
            texts.push(m.encode_caption(tape, &ids, g, &words)?);
            clips.push(m.encode_clip(tape, &ids, f)?);
        }
        let grid = batch_scores(tape, &texts, &clips, &cfg)?;
        let root = contrastive_loss(tape, &grid, &cfg)?;
        Ok((root, ids.list()))
    };
    let mut tape = Tape::new();
    let (root, id_list) = build(&model, &mut tape)?;
    let grads = tape.backward(root)?;
    let analytic = grads_in_order(&tape, &grads, &id_list);
    sampled_fd(
        &model,
        &|m, f| m.for_each(&mut |_, t| f(t)),
        &|m, f| m.for_each_mut(&mut |_, t| f(t)),
        &|m| {
            let mut t = Tape::new();
            let (root, _) = build(m, &mut t)?;
            t.value(root).as_scalar()
        },
        &analytic,
        &mut rng::labeled_stream(seed, "coords-loss"),
        opts,
        corrupt,
    )
}

fn sampled_cases() -> Vec<SampledCase> {
    vec![
        SampledCase { name: "multi_head", run: run_multi_head },
        SampledCase { name: "encoder_block", run: run_encoder_block },
        SampledCase { name: "cross_modal_block", run: run_cross_modal },
        SampledCase { name: "text_encoder", run: run_text_encoder },
        SampledCase { name: "visual_encoder", run: run_visual_encoder },
        SampledCase { name: "pair_similarity", run: run_pair_similarity },
        SampledCase { name: "contrastive_loss", run: run_loss },
    ]
}

fn run_sampled_case(case: &SampledCase, opts: &CheckOptions) -> Result<CaseResult> {
    let corrupt = opts.corrupt.as_deref() == Some(case.name);
    let mut max_rel: f64 = 0.0;
    let mut coords = 0usize;
    for seed in 0..opts.seeds {
        let (rel, n) = (case.run)(seed, opts, corrupt && seed == 0)?;
        max_rel = max_rel.max(rel);
        coords += n;
    }
    Ok(CaseResult {
        name: case.name.to_string(),
        max_rel_err: max_rel,
        coords_checked: coords,
        passed: max_rel.is_finite() && max_rel < opts.tolerance,
    })
}

pub fn run_suite(opts: &CheckOptions) -> Result<GradcheckReport> {
    if opts.seeds == 0 {
        return Err(SrxError::config("gradient check needs at least one seed"));
    }
    if opts.step.is_nan() || opts.step <= 0.0 || opts.tolerance.is_nan() || opts.tolerance <= 0.0 {
        return Err(SrxError::config("step and tolerance must be positive"));
    }
    let mut cases = Vec::new();
    for case in op_cases() {
        cases.push(run_op_case(&case, opts)?);
    }
    for case in sampled_cases() {
        cases.push(run_sampled_case(&case, opts)?);
    }
    Ok(GradcheckReport { tolerance: opts.tolerance, cases })
}
