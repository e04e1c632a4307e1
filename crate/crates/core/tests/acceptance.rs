//! Acceptance gate: one test per release criterion, each printing a single
//! PASS/FAIL line (run with `--nocapture` to see them). Oracles here are
//! deliberately independent reimplementations: plain-loop attention, a
//! direct graph-convolution pass, and closed-form rank statistics.

// Explicit index loops are the point of the oracles here.
#![allow(clippy::needless_range_loop)]

use srx_core::attention::{multi_head, scaled_dot_attention, MultiHeadParams};
use srx_core::data::{
    load_dataset, read_checkpoint, read_feature_file, read_role_graph, synth_dataset,
    write_checkpoint, write_feature_file, write_role_graph, SynthConfig,
};
use srx_core::gradcheck::{run_suite, CheckOptions, REGISTERED_OPS};
use srx_core::matching::{batch_scores, contrastive_loss, MatchConfig, SimilarityMatrix};
use srx_core::metrics::{ranks, report, RetrievalReport, DEFAULT_KS};
use srx_core::model::{ModelConfig, SrxModel};
use srx_core::rng;
use srx_core::text_encoder::{
    encode_text, GcnParams, GraphEdge, GraphNode, Role, RoleGraph, WordTable,
};
use srx_core::train::{evaluate, train_epoch, TrainOptions};
use srx_core::visual_encoder::{ExpertFeatures, LevelConfig, Stream};
use srx_core::{Tape, Tensor};
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::HashMap;
use std::time::Instant;

fn criterion(name: &str, run: impl FnOnce() -> Result<String, String>) {
    match run() {
        Ok(detail) => println!("ACCEPTANCE {name}: PASS ({detail})"),
        Err(msg) => {
            println!("ACCEPTANCE {name}: FAIL ({msg})");
            panic!("{name}: {msg}");
        }
    }
}

#[test]
fn gradient_suite_matches_finite_differences() {
    criterion("gradient suite", || {
        let start = Instant::now();
        let opts = CheckOptions::default();
        assert_eq!((opts.seeds, opts.step, opts.tolerance), (10, 1e-5, 1e-4));
        let rep = run_suite(&opts).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed().as_secs_f64();
        for line in rep.lines() {
            println!("  {line}");
        }
        let names: Vec<&str> = rep.cases.iter().map(|c| c.name.as_str()).collect();
        if names != REGISTERED_OPS {
            return Err("coverage mismatch".into());
        }
        if !rep.all_passed() {
            return Err("at least one case exceeded tolerance".into());
        }
        if elapsed >= 120.0 {
            return Err(format!("took {elapsed:.1} s, budget 120 s"));
        }
        let worst = rep.cases.iter().map(|c| c.max_rel_err).fold(0.0, f64::max);
        Ok(format!("{} cases, worst rel err {worst:.2e}, {elapsed:.2} s", names.len()))
    });
}

/// Plain-loop attention with an unshifted softmax.
fn loop_attention(q: &Tensor, k: &Tensor, v: &Tensor) -> Vec<Vec<f64>> {
    let (m, d) = (q.shape()[0], q.shape()[1]);
    let (n, dv) = (k.shape()[0], v.shape()[1]);
    let mut out = vec![vec![0.0; dv]; m];
    for i in 0..m {
        let mut weights = vec![0.0; n];
        for (j, w) in weights.iter_mut().enumerate() {
            let mut dot = 0.0;
            for t in 0..d {
                dot += q.at(i, t) * k.at(j, t);
            }
            *w = (dot / (d as f64).sqrt()).exp();
        }
        let total: f64 = weights.iter().sum();
        for j in 0..n {
            for t in 0..dv {
                out[i][t] += weights[j] / total * v.at(j, t);
            }
        }
    }
    out
}

fn loop_project(x: &Tensor, w: &Tensor) -> Tensor {
    let (m, k) = (x.shape()[0], x.shape()[1]);
    let n = w.shape()[1];
    Tensor::from_fn(&[m, n], |flat| {
        let (i, j) = (flat / n, flat % n);
        (0..k).map(|t| x.at(i, t) * w.at(t, j)).sum()
    })
}

fn max_gap(got: &Tensor, want: &[Vec<f64>]) -> f64 {
    let cols = want[0].len();
    want.iter()
        .enumerate()
        .flat_map(|(i, row)| {
            row.iter().enumerate().map(move |(j, w)| (got.at(i, j) - w).abs())
        })
        .fold(0.0, f64::max)
        .max(if got.len() == want.len() * cols { 0.0 } else { f64::INFINITY })
}

#[test]
fn attention_matches_brute_force_oracle() {
    criterion("attention oracle", || {
        let mut worst: f64 = 0.0;
        for case in 0..50u64 {
            let mut r = rng::labeled_stream(case, "attention-oracle");
            let (m, n) = (r.gen_range(1..=6), r.gen_range(1..=7));
            let d = r.gen_range(2..=12);
            let dv = r.gen_range(1..=9);
            let q = Tensor::uniform(&[m, d], -1.5, 1.5, &mut r);
            let k = Tensor::uniform(&[n, d], -1.5, 1.5, &mut r);
            let v = Tensor::uniform(&[n, dv], -1.5, 1.5, &mut r);
            let mut tape = Tape::new();
            let (qi, ki, vi) =
                (tape.constant(q.clone()), tape.constant(k.clone()), tape.constant(v.clone()));
            let out = scaled_dot_attention(&mut tape, qi, ki, vi).map_err(|e| e.to_string())?;
            let gap = max_gap(tape.value(out), &loop_attention(&q, &k, &v));
            worst = worst.max(gap);
            if gap >= 1e-10 {
                return Err(format!("plain attention case {case}: gap {gap:.2e}"));
            }
        }
        for case in 0..50u64 {
            let mut r = rng::labeled_stream(case, "multi-head-oracle");
            let d_model = 2 * r.gen_range(1..=5);
            let heads = if d_model % 4 == 0 && r.gen_bool(0.5) { 4 } else { 2 };
            let params = MultiHeadParams::init(d_model, heads, &mut r).map_err(|e| e.to_string())?;
            let (m, n) = (r.gen_range(1..=5), r.gen_range(1..=6));
            let q = Tensor::uniform(&[m, d_model], -1.0, 1.0, &mut r);
            let kv = Tensor::uniform(&[n, d_model], -1.0, 1.0, &mut r);

            let mut tape = Tape::new();
            let ids = params.bind(&mut tape);
            let (qi, ki) = (tape.constant(q.clone()), tape.constant(kv.clone()));
            let out = multi_head(&mut tape, &ids, qi, ki, ki).map_err(|e| e.to_string())?;

            let d_head = d_model / heads;
            let mut concat = vec![vec![0.0; d_model]; m];
            for (h, hp) in params.heads.iter().enumerate() {
                let head_out = loop_attention(
                    &loop_project(&q, &hp.w_q),
                    &loop_project(&kv, &hp.w_k),
                    &loop_project(&kv, &hp.w_v),
                );
                for i in 0..m {
                    for t in 0..d_head {
                        concat[i][h * d_head + t] = head_out[i][t];
                    }
                }
            }
            let want: Vec<Vec<f64>> = (0..m)
                .map(|i| {
                    (0..d_model)
                        .map(|j| (0..d_model).map(|t| concat[i][t] * params.w_o.at(t, j)).sum())
                        .collect()
                })
                .collect();
            let gap = max_gap(tape.value(out), &want);
            worst = worst.max(gap);
            if gap >= 1e-10 {
                return Err(format!("multi-head case {case}: gap {gap:.2e}"));
            }
        }
        Ok(format!("50 plain + 50 multi-head cases, worst gap {worst:.2e}"))
    });
}

/// Direct dense reimplementation of the two-layer text encoder.
fn direct_text_encode(graph: &RoleGraph, words: &WordTable, p: &GcnParams) -> Vec<Vec<f64>> {
    let n = graph.nodes.len();
    let word_dim = words.dim();
    let d = p.init_b.len();
    let mut g: Vec<Vec<f64>> = Vec::with_capacity(n);
    for node in &graph.nodes {
        let mut mean = vec![0.0; word_dim];
        for tok in &node.tokens {
            for (m, v) in mean.iter_mut().zip(words.get(*tok).unwrap()) {
                *m += v / node.tokens.len() as f64;
            }
        }
        let row: Vec<f64> = (0..d)
            .map(|j| {
                (0..word_dim).map(|t| mean[t] * p.init_w.at(t, j)).sum::<f64>()
                    + p.init_b.data()[j]
            })
            .collect();
        g.push(row);
    }

    let mut hoods: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for e in &graph.edges {
        hoods[e.src].push((e.dst, e.relation));
        if e.src != e.dst {
            hoods[e.dst].push((e.src, e.relation));
        }
    }

    for layer in 0..p.w_t.len() {
        let w_t = &p.w_t[layer];
        let apply = |m: &Tensor, row: &[f64]| -> Vec<f64> {
            (0..d).map(|a| (0..d).map(|b| m.at(a, b) * row[b]).sum()).collect()
        };
        let scored: Vec<Vec<f64>> = g.iter().map(|row| apply(&p.u, row)).collect();
        let transformed: Vec<Vec<f64>> = g.iter().map(|row| apply(w_t, row)).collect();
        let mut next = Vec::with_capacity(n);
        for i in 0..n {
            if hoods[i].is_empty() {
                next.push(g[i].clone());
                continue;
            }
            let weights: Vec<f64> = hoods[i]
                .iter()
                .map(|(j, _)| {
                    let dot: f64 =
                        scored[i].iter().zip(&scored[*j]).map(|(a, b)| a * b).sum();
                    (dot / (d as f64).sqrt()).exp()
                })
                .collect();
            let total: f64 = weights.iter().sum();
            let mut row = g[i].clone();
            for ((j, rel), w) in hoods[i].iter().zip(&weights) {
                for a in 0..d {
                    row[a] += w / total * p.w_r.at(*rel, a) * transformed[*j][a];
                }
            }
            next.push(row);
        }
        g = next;
    }

    g.into_iter()
        .map(|row| {
            let norm = (row.iter().map(|x| x * x).sum::<f64>() + 1e-12).sqrt();
            row.into_iter().map(|x| x / norm).collect()
        })
        .collect()
}

fn five_node_graphs() -> Vec<RoleGraph> {
    let node = |role, tokens: Vec<u32>| GraphNode { role, tokens };
    let edge = |src, dst, relation| GraphEdge { src, dst, relation };
    vec![
        RoleGraph {
            nodes: vec![
                node(Role::Event, vec![0, 7]),
                node(Role::Action, vec![1]),
                node(Role::Action, vec![2, 9]),
                node(Role::Entity, vec![3]),
                node(Role::Entity, vec![4]),
            ],
            edges: vec![edge(1, 0, 0), edge(2, 0, 0), edge(3, 1, 1), edge(4, 2, 2)],
            n_relations: 3,
        },
        RoleGraph {
            nodes: vec![
                node(Role::Event, vec![5]),
                node(Role::Action, vec![6]),
                node(Role::Entity, vec![7]),
                node(Role::Entity, vec![8]),
                node(Role::Entity, vec![9, 0, 1]),
            ],
            edges: vec![edge(1, 0, 0), edge(2, 1, 1), edge(3, 1, 2), edge(4, 1, 1)],
            n_relations: 3,
        },
        RoleGraph {
            nodes: vec![
                node(Role::Action, vec![2]),
                node(Role::Entity, vec![3]),
                node(Role::Event, vec![4]),
                node(Role::Entity, vec![5]),
                node(Role::Action, vec![6]),
            ],
            edges: vec![edge(0, 2, 0), edge(4, 2, 1), edge(1, 0, 2), edge(3, 4, 0)],
            n_relations: 3,
        },
    ]
}

#[test]
fn text_encoder_matches_direct_reference() {
    criterion("text encoder oracle", || {
        let words = WordTable::seeded_random(10, 6, 123);
        let params = GcnParams::init(6, 8, 3, 2, &mut rng::labeled_stream(77, "gcn-oracle"));
        let mut worst: f64 = 0.0;
        for (gi, graph) in five_node_graphs().iter().enumerate() {
            let want = direct_text_encode(graph, &words, &params);
            let mut tape = Tape::new();
            let ids = params.bind(&mut tape);
            let emb = encode_text(&mut tape, graph, &words, &ids).map_err(|e| e.to_string())?;
            let mut check = |node_idx: usize, id| {
                let got = tape.value(id);
                let gap = got
                    .data()
                    .iter()
                    .zip(&want[node_idx])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                worst = worst.max(gap);
                gap
            };
            let mut role_nodes: Vec<(usize, _)> = Vec::new();
            role_nodes.push((graph.role_indices(Role::Event)[0], emb.event));
            for (k, idx) in graph.role_indices(Role::Action).into_iter().enumerate() {
                role_nodes.push((idx, emb.actions[k]));
            }
            for (k, idx) in graph.role_indices(Role::Entity).into_iter().enumerate() {
                role_nodes.push((idx, emb.entities[k]));
            }
            for (idx, id) in role_nodes {
                let gap = check(idx, id);
                if gap >= 1e-10 {
                    return Err(format!("graph {gi} node {idx}: gap {gap:.2e}"));
                }
            }
        }
        Ok(format!("3 fixed graphs, worst gap {worst:.2e}"))
    });
}

#[test]
fn small_dataset_overfits_to_perfect_recall() {
    criterion("overfit trainability", || {
        let start = Instant::now();
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let out = synth_dataset(&SynthConfig::new(42, 32), dir.path())
            .map_err(|e| e.to_string())?;
        let data = load_dataset(&out.manifest_path).map_err(|e| e.to_string())?;
        let cfg = ModelConfig {
            d_model: 32,
            heads: 4,
            gcn_layers: 2,
            word_dim: data.words.dim(),
            width: data.width,
            n_relations: data.n_relations,
            levels: LevelConfig::full(),
        };
        let mut model = SrxModel::init(cfg, 42).map_err(|e| e.to_string())?;
        let match_cfg = MatchConfig::default();
        assert_eq!(match_cfg.margin, 0.2);
        let opts = TrainOptions {
            epochs: 200,
            batch_size: 32,
            lr: 0.1,
            match_cfg,
        };
        let mut loss = f64::INFINITY;
        let mut epochs_used = 0;
        for epoch in 1..=200 {
            loss = train_epoch(&mut model, &data, &opts).map_err(|e| e.to_string())?;
            epochs_used = epoch;
            if loss < 0.01 {
                break;
            }
        }
        if loss >= 0.01 {
            return Err(format!("loss {loss:.4} after {epochs_used} epochs"));
        }
        let (_, _, rep) =
            evaluate(&model, &data, &match_cfg, &DEFAULT_KS).map_err(|e| e.to_string())?;
        if rep.r_at[&1] != 1.0 {
            return Err(format!("R@1 {} after overfitting", rep.r_at[&1]));
        }
        let elapsed = start.elapsed().as_secs_f64();
        if elapsed >= 300.0 {
            return Err(format!("took {elapsed:.1} s, budget 300 s"));
        }
        Ok(format!(
            "loss {loss:.2e} after {epochs_used} epochs, R@1 = 1, {elapsed:.1} s"
        ))
    });
}

#[test]
fn random_scores_calibrate_to_chance() {
    criterion("random-baseline calibration", || {
        let start = Instant::now();
        let n = 3350usize;
        let seeds = 20u64;
        let mut r1_sum = 0.0;
        let mut medr_sum = 0.0;
        for seed in 0..seeds {
            let mut r = rng::labeled_stream(seed, "random-baseline");
            let mut rks = Vec::with_capacity(n);
            for q in 0..n {
                let row: Vec<f64> = (0..n).map(|_| r.gen::<f64>()).collect();
                let own = row[q];
                let beaten = row
                    .iter()
                    .enumerate()
                    .filter(|(j, s)| *j != q && **s >= own)
                    .count();
                rks.push(1 + beaten);
            }
            let rep = report(&rks, n, &[1]).map_err(|e| e.to_string())?;
            r1_sum += rep.r_at[&1];
            medr_sum += rep.med_r;
        }
        let mean_r1 = r1_sum / seeds as f64;
        let mean_medr = medr_sum / seeds as f64;
        let p = 1.0 / n as f64;
        let se = (p * (1.0 - p) / (seeds as f64 * n as f64)).sqrt();
        let elapsed = start.elapsed().as_secs_f64();
        if (mean_r1 - p).abs() >= 3.0 * se {
            return Err(format!("mean R@1 {mean_r1:.3e} vs {p:.3e} +- {:.1e}", 3.0 * se));
        }
        if !(0.45 * n as f64..=0.55 * n as f64).contains(&mean_medr) {
            return Err(format!("mean MedR {mean_medr:.1} outside chance band"));
        }
        if elapsed >= 60.0 {
            return Err(format!("took {elapsed:.1} s, budget 60 s"));
        }
        Ok(format!(
            "mean R@1 {mean_r1:.3e} (chance {p:.3e} +- {:.1e}), mean MedR {mean_medr:.1}, {elapsed:.1} s",
            3.0 * se
        ))
    });
}

fn random_matrix(seed: u64, n: usize) -> (SimilarityMatrix, HashMap<String, String>) {
    let mut r = rng::labeled_stream(seed, "metric-invariance");
    let m = SimilarityMatrix {
        scores: Tensor::uniform(&[n, n], -1.0, 1.0, &mut r),
        caption_ids: (0..n).map(|i| format!("c{i}")).collect(),
        clip_ids: (0..n).map(|j| format!("v{j}")).collect(),
    };
    let truth = (0..n).map(|i| (format!("c{i}"), format!("v{i}"))).collect();
    (m, truth)
}

#[test]
fn metric_invariances_hold_exhaustively() {
    criterion("metric invariances", || {
        let n = 20;
        let ks = [1, 5, 10];
        for seed in 0..100u64 {
            let (m, truth) = random_matrix(seed, n);
            let base_ranks = ranks(&m, &truth).map_err(|e| e.to_string())?;
            let base = report(&base_ranks, n, &ks).map_err(|e| e.to_string())?;

            // strictly increasing transform
            let with = |f: &dyn Fn(f64) -> f64| SimilarityMatrix {
                scores: Tensor::from_fn(&[n, n], |i| f(m.scores.data()[i])),
                caption_ids: m.caption_ids.clone(),
                clip_ids: m.clip_ids.clone(),
            };
            let warped = with(&|v| 0.9 * v.powi(3) + 1.1 * v + 0.4);
            let warped_ranks = ranks(&warped, &truth).map_err(|e| e.to_string())?;
            if warped_ranks != base_ranks {
                return Err(format!("seed {seed}: increasing transform moved ranks"));
            }
            if report(&warped_ranks, n, &ks).map_err(|e| e.to_string())? != base {
                return Err(format!("seed {seed}: transform changed the report"));
            }

            // recall monotone in cutoff
            if !(base.r_at[&1] <= base.r_at[&5] && base.r_at[&5] <= base.r_at[&10]) {
                return Err(format!("seed {seed}: recall not monotone"));
            }

            // consistent permutation of candidates with relabeling
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng::labeled_stream(seed, "perm"));
            let permuted = SimilarityMatrix {
                scores: Tensor::from_fn(&[n, n], |flat| {
                    let (i, j) = (flat / n, flat % n);
                    m.scores.data()[i * n + perm[j]]
                }),
                caption_ids: m.caption_ids.clone(),
                clip_ids: perm.iter().map(|j| format!("v{j}")).collect(),
            };
            let permuted_ranks = ranks(&permuted, &truth).map_err(|e| e.to_string())?;
            if permuted_ranks != base_ranks {
                return Err(format!("seed {seed}: candidate permutation moved ranks"));
            }

            // reordering queries with their labels permutes ranks identically
            let reordered = SimilarityMatrix {
                scores: Tensor::from_fn(&[n, n], |flat| {
                    let (i, j) = (flat / n, flat % n);
                    m.scores.data()[perm[i] * n + j]
                }),
                caption_ids: perm.iter().map(|i| format!("c{i}")).collect(),
                clip_ids: m.clip_ids.clone(),
            };
            let reordered_ranks = ranks(&reordered, &truth).map_err(|e| e.to_string())?;
            let expect: Vec<usize> = perm.iter().map(|&i| base_ranks[i]).collect();
            if reordered_ranks != expect {
                return Err(format!("seed {seed}: query permutation broke ranks"));
            }
            if report(&reordered_ranks, n, &ks).map_err(|e| e.to_string())? != base {
                return Err(format!("seed {seed}: query permutation changed the report"));
            }
        }
        Ok("100 random 20x20 matrices, all invariances hold".into())
    });
}

fn toy_graph(salt: u32) -> RoleGraph {
    RoleGraph {
        nodes: vec![
            GraphNode { role: Role::Event, tokens: vec![salt * 3] },
            GraphNode { role: Role::Action, tokens: vec![salt * 3 + 1] },
            GraphNode { role: Role::Entity, tokens: vec![salt * 3 + 2] },
        ],
        edges: vec![
            GraphEdge { src: 1, dst: 0, relation: 0 },
            GraphEdge { src: 2, dst: 1, relation: 1 },
        ],
        n_relations: 2,
    }
}

#[test]
fn all_feature_modes_train_one_step() {
    criterion("feature-combination coverage", || {
        let mut details = Vec::new();
        for mode in ["full", "2d", "2d3d-seq", "2d3d-feat"] {
            let levels = LevelConfig::from_mode(mode).map_err(|e| e.to_string())?;
            let cfg = ModelConfig {
                d_model: 8,
                heads: 2,
                gcn_layers: 1,
                word_dim: 6,
                width: 10,
                n_relations: 2,
                levels,
            };
            let model = SrxModel::init(cfg, 7).map_err(|e| e.to_string())?;
            let words = WordTable::seeded_random(9, 6, 7);
            let mut r = rng::labeled_stream(7, mode);
            let features: Vec<ExpertFeatures> = (0..3)
                .map(|_| ExpertFeatures {
                    f_s: Tensor::uniform(&[3, 10], -1.0, 1.0, &mut r),
                    f_t: Tensor::uniform(&[2, 10], -1.0, 1.0, &mut r),
                    f_o: Tensor::uniform(&[4, 10], -1.0, 1.0, &mut r),
                })
                .collect();

            let mut tape = Tape::new();
            let ids = model.bind(&mut tape);
            let mut texts = Vec::new();
            let mut clips = Vec::new();
            for (i, f) in features.iter().enumerate() {
                texts.push(
                    model
                        .encode_caption(&mut tape, &ids, &toy_graph(i as u32), &words)
                        .map_err(|e| e.to_string())?,
                );
                clips.push(model.encode_clip(&mut tape, &ids, f).map_err(|e| e.to_string())?);
            }
            let grid = batch_scores(&mut tape, &texts, &clips, &MatchConfig::default())
                .map_err(|e| e.to_string())?;
            let loss_id = contrastive_loss(&mut tape, &grid, &MatchConfig::default())
                .map_err(|e| e.to_string())?;
            let loss = tape
                .value(loss_id)
                .as_scalar()
                .map_err(|e| e.to_string())?;
            if !loss.is_finite() {
                return Err(format!("mode {mode}: loss {loss}"));
            }
            let grads = tape.backward(loss_id).map_err(|e| e.to_string())?;
            let mut live = 0usize;
            ids.for_each(&mut |id| {
                if grads.get(id).is_some() {
                    live += 1;
                }
            });
            if live == 0 {
                return Err(format!("mode {mode}: no parameter gradients"));
            }
            details.push(format!("{mode} loss {loss:.3}"));
        }
        Ok(details.join(", "))
    });
}

#[test]
fn file_formats_round_trip_byte_identically() {
    criterion("format round-trips", || {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut r = rng::labeled_stream(3, "round-trip");

        let feat = dir.path().join("a.srxf");
        let feat2 = dir.path().join("b.srxf");
        write_feature_file(&feat, Stream::Temporal, &Tensor::uniform(&[4, 6], -2.0, 2.0, &mut r))
            .map_err(|e| e.to_string())?;
        let (stream, tensor) = read_feature_file(&feat).map_err(|e| e.to_string())?;
        write_feature_file(&feat2, stream, &tensor).map_err(|e| e.to_string())?;
        if std::fs::read(&feat).unwrap() != std::fs::read(&feat2).unwrap() {
            return Err("feature file bytes changed".into());
        }

        let graph_path = dir.path().join("a.graph");
        let graph2 = dir.path().join("b.graph");
        write_role_graph(&graph_path, &five_node_graphs()[0]).map_err(|e| e.to_string())?;
        let parsed = read_role_graph(&graph_path).map_err(|e| e.to_string())?;
        write_role_graph(&graph2, &parsed).map_err(|e| e.to_string())?;
        if std::fs::read(&graph_path).unwrap() != std::fs::read(&graph2).unwrap() {
            return Err("role-graph bytes changed".into());
        }

        let cfg = ModelConfig {
            d_model: 8,
            heads: 2,
            gcn_layers: 1,
            word_dim: 6,
            width: 10,
            n_relations: 2,
            levels: LevelConfig::full(),
        };
        let model = SrxModel::init(cfg, 11).map_err(|e| e.to_string())?;
        let ck = dir.path().join("a.srxc");
        let ck2 = dir.path().join("b.srxc");
        write_checkpoint(&ck, &model.to_checkpoint(7, "margin = 0.2\n".into()))
            .map_err(|e| e.to_string())?;
        let decoded = read_checkpoint(&ck).map_err(|e| e.to_string())?;
        write_checkpoint(&ck2, &decoded).map_err(|e| e.to_string())?;
        if std::fs::read(&ck).unwrap() != std::fs::read(&ck2).unwrap() {
            return Err("checkpoint bytes changed".into());
        }

        let rep = report(&[1, 3, 3, 8, 2], 9, &DEFAULT_KS).map_err(|e| e.to_string())?;
        for (name, render, parse) in [
            (
                "kv report",
                rep.to_kv(),
                RetrievalReport::from_kv as fn(&str) -> srx_core::Result<RetrievalReport>,
            ),
            ("text report", rep.to_text(), RetrievalReport::from_text),
        ] {
            let path = dir.path().join("report");
            std::fs::write(&path, &render).unwrap();
            let text = std::fs::read_to_string(&path).unwrap();
            let back = parse(&text).map_err(|e| e.to_string())?;
            let again = if name == "kv report" { back.to_kv() } else { back.to_text() };
            if again != render {
                return Err(format!("{name} bytes changed"));
            }
        }
        Ok("feature, graph, checkpoint, and report files stable".into())
    });
}
