//! End-to-end tests of the `srx` binary: every subcommand, the exit-code
//! contract, and the determinism guarantees for on-disk outputs.

use srx_core::metrics::RetrievalReport;
use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

fn srx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srx"))
        .args(args)
        .output()
        .expect("spawn srx")
}

fn ok(args: &[&str]) -> String {
    let out = srx(args);
    assert!(
        out.status.success(),
        "srx {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf8 stdout")
}

fn fails_with(args: &[&str], code: i32) -> String {
    let out = srx(args);
    assert_eq!(
        out.status.code(),
        Some(code),
        "srx {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stderr).expect("utf8 stderr")
}

fn tree_bytes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let key = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(key, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn synth_small(dir: &Path, clips: usize, seed: u64) -> String {
    let out = dir.join("ds");
    ok(&[
        "synth",
        "--out",
        out.to_str().unwrap(),
        "--clips",
        &clips.to_string(),
        "--seed",
        &seed.to_string(),
        "--width",
        "16",
        "--word-dim",
        "12",
        "--latent-dim",
        "4",
    ]);
    out.join("manifest.toml").to_string_lossy().into_owned()
}

const SMALL_MODEL: &[&str] = &["--d-model", "16", "--heads", "2", "--gcn-layers", "1"];

#[test]
fn synth_is_deterministic_and_counts_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let stdout = ok(&[
            "synth", "--out", out.to_str().unwrap(), "--clips", "4", "--seed", "9",
        ]);
        assert!(stdout.contains("manifest"), "{stdout}");
    }
    let files = tree_bytes(&a);
    // 3 feature files and 1 graph per clip, plus word table and manifest
    assert_eq!(files.len(), 4 * 4 + 2);
    assert_eq!(files, tree_bytes(&b));
}

#[test]
fn synth_rejects_a_single_clip() {
    let dir = tempfile::tempdir().unwrap();
    let stderr = fails_with(
        &["synth", "--out", dir.path().to_str().unwrap(), "--clips", "1"],
        2,
    );
    assert!(stderr.contains("2"), "{stderr}");
}

#[test]
fn missing_manifest_is_an_io_failure() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent/manifest.toml");
    fails_with(
        &[
            "train",
            "--data",
            missing.to_str().unwrap(),
            "--out",
            dir.path().join("run").to_str().unwrap(),
        ],
        3,
    );
}

#[test]
fn zero_learning_rate_freezes_the_loss_history() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_small(dir.path(), 4, 2);
    let run = dir.path().join("run");
    let out = Command::new(env!("CARGO_BIN_EXE_srx"))
        .args([
            "train", "--data", &manifest, "--out", run.to_str().unwrap(),
            "--epochs", "3", "--lr", "0", "--batch-size", "2",
        ])
        .args(SMALL_MODEL)
        .env("SRX_LOG", "info")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("epoch 1"),
        "SRX_LOG=info should log per-epoch progress"
    );
    let history = std::fs::read_to_string(run.join("history.txt")).unwrap();
    let losses: Vec<&str> = history
        .lines()
        .map(|l| l.rsplit_once(' ').unwrap().1)
        .collect();
    assert_eq!(losses.len(), 3);
    let first: f64 = losses[0].parse().unwrap();
    for v in &losses {
        let v: f64 = v.parse().unwrap();
        assert!((v - first).abs() < 1e-12, "history moved: {history}");
    }
}

#[test]
fn resumed_training_replays_the_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_small(dir.path(), 6, 4);
    let split = dir.path().join("split");
    let whole = dir.path().join("whole");
    let base: Vec<&str> = ["--batch-size", "3", "--lr", "0.05"]
        .iter()
        .chain(SMALL_MODEL)
        .copied()
        .collect();

    ok(&[
        &["train", "--data", &manifest, "--out", split.to_str().unwrap(), "--epochs", "1"],
        base.as_slice(),
    ]
    .concat());
    ok(&[
        &[
            "train", "--data", &manifest, "--out", split.to_str().unwrap(),
            "--epochs", "3", "--resume",
        ],
        base.as_slice(),
    ]
    .concat());
    ok(&[
        &["train", "--data", &manifest, "--out", whole.to_str().unwrap(), "--epochs", "3"],
        base.as_slice(),
    ]
    .concat());

    assert_eq!(tree_bytes(&split), tree_bytes(&whole));
    assert_eq!(
        std::fs::read_to_string(split.join("history.txt")).unwrap().lines().count(),
        3
    );
}

#[test]
fn resume_under_a_different_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_small(dir.path(), 4, 5);
    let run = dir.path().join("run");
    let mut train: Vec<&str> =
        vec!["train", "--data", &manifest, "--out", run.to_str().unwrap(), "--epochs", "1"];
    train.extend_from_slice(SMALL_MODEL);
    ok(&train);
    let mut resumed: Vec<&str> = vec![
        "train", "--data", &manifest, "--out", run.to_str().unwrap(),
        "--epochs", "2", "--resume", "--margin", "0.3",
    ];
    resumed.extend_from_slice(SMALL_MODEL);
    let stderr = fails_with(&resumed, 2);
    assert!(stderr.contains("configuration"), "{stderr}");
}

#[test]
fn eval_reports_are_deterministic_and_parse_back() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_small(dir.path(), 5, 6);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let mut args: Vec<&str> =
            vec!["eval", "--data", &manifest, "--out", out.to_str().unwrap(), "--seed", "8"];
        args.extend_from_slice(SMALL_MODEL);
        ok(&args);
    }
    assert_eq!(tree_bytes(&a), tree_bytes(&b));

    let kv = std::fs::read_to_string(a.join("report.kv")).unwrap();
    let parsed = RetrievalReport::from_kv(&kv).unwrap();
    assert_eq!(parsed.to_kv(), kv);
    assert_eq!(parsed.n_queries, 5);
    assert_eq!(parsed.n_candidates, 5);
    let txt = std::fs::read_to_string(a.join("report.txt")).unwrap();
    let parsed_txt = RetrievalReport::from_text(&txt).unwrap();
    assert_eq!(parsed_txt.to_text(), txt);
    assert_eq!(parsed_txt, parsed);
}

#[test]
fn trained_model_reaches_perfect_recall_and_retrieve_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ds");
    ok(&["synth", "--out", out.to_str().unwrap(), "--clips", "8", "--seed", "3"]);
    let manifest = out.join("manifest.toml");
    let manifest = manifest.to_str().unwrap();
    let run = dir.path().join("run");
    let ckpt = run.join("checkpoint.srxc");
    let model: &[&str] = &["--d-model", "16", "--heads", "2"];

    let mut train: Vec<&str> = vec![
        "train", "--data", manifest, "--out", run.to_str().unwrap(),
        "--epochs", "60", "--lr", "0.1",
    ];
    train.extend_from_slice(model);
    ok(&train);

    let evl = dir.path().join("evl");
    let mut eval: Vec<&str> = vec![
        "eval", "--data", manifest, "--out", evl.to_str().unwrap(),
        "--checkpoint", ckpt.to_str().unwrap(),
    ];
    eval.extend_from_slice(model);
    ok(&eval);
    let report =
        RetrievalReport::from_kv(&std::fs::read_to_string(evl.join("report.kv")).unwrap())
            .unwrap();
    assert_eq!(report.r_at[&1], 1.0, "overfit run should retrieve perfectly");
    assert_eq!(report.med_r, 1.0);

    // top-1 for each caption is its own clip
    for cap in ["cap0000", "cap0005"] {
        let mut retrieve: Vec<&str> = vec![
            "retrieve", "--data", manifest, "--caption", cap,
            "--checkpoint", ckpt.to_str().unwrap(), "--top", "1",
        ];
        retrieve.extend_from_slice(model);
        let line = ok(&retrieve);
        let clip = cap.replace("cap", "clip");
        assert!(line.starts_with(&clip), "{cap} retrieved {line}");
    }

    // full ranking matches the eval matrix row, descending with id ties
    let matrix = std::fs::read_to_string(evl.join("matrix.tsv")).unwrap();
    let mut lines = matrix.lines();
    let clip_ids: Vec<&str> = lines.next().unwrap().split('\t').skip(1).collect();
    let row = lines.find(|l| l.starts_with("cap0002")).unwrap();
    let mut expected: Vec<(&str, &str)> = clip_ids
        .iter()
        .zip(row.split('\t').skip(1))
        .map(|(id, s)| (*id, s))
        .collect();
    expected.sort_by(|a, b| {
        let (x, y): (f64, f64) = (a.1.parse().unwrap(), b.1.parse().unwrap());
        y.partial_cmp(&x).unwrap().then_with(|| a.0.cmp(b.0))
    });

    let mut retrieve: Vec<&str> = vec![
        "retrieve", "--data", manifest, "--caption", "cap0002",
        "--checkpoint", ckpt.to_str().unwrap(), "--top", "99",
    ];
    retrieve.extend_from_slice(model);
    let stdout = ok(&retrieve);
    let got: Vec<(&str, &str)> = stdout
        .lines()
        .map(|l| l.split_once('\t').unwrap())
        .collect();
    assert_eq!(got.len(), 8, "--top beyond n_clips returns the full ranking");
    assert_eq!(got, expected);
    let scores: Vec<f64> = got.iter().map(|(_, s)| s.parse().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]), "not descending: {scores:?}");
}

#[test]
fn unknown_caption_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_small(dir.path(), 4, 7);
    let mut args: Vec<&str> = vec!["retrieve", "--data", &manifest, "--caption", "cap9999"];
    args.extend_from_slice(SMALL_MODEL);
    let stderr = fails_with(&args, 2);
    assert!(stderr.contains("cap9999"), "{stderr}");
}

#[test]
fn untrained_models_score_at_chance_on_decoupled_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ds");
    ok(&[
        "synth", "--out", out.to_str().unwrap(), "--clips", "100", "--seed", "1",
        "--decoupled",
    ]);
    let manifest = out.join("manifest.toml");
    for seed in 0..10u64 {
        let evl = dir.path().join(format!("e{seed}"));
        let seed = seed.to_string();
        let mut args: Vec<&str> = vec![
            "eval", "--data", manifest.to_str().unwrap(), "--out", evl.to_str().unwrap(),
            "--seed", &seed,
        ];
        args.extend_from_slice(SMALL_MODEL);
        ok(&args);
        let report =
            RetrievalReport::from_kv(&std::fs::read_to_string(evl.join("report.kv")).unwrap())
                .unwrap();
        assert_eq!(report.n_candidates, 100);
        assert!(
            (35.0..=65.0).contains(&report.med_r),
            "seed {seed}: MedR {} outside the chance band",
            report.med_r
        );
    }
}

#[test]
fn gradcheck_reports_coverage_and_the_corruption_hook_fails() {
    let stdout = ok(&["gradcheck", "--seeds", "1", "--coords", "2"]);
    assert!(stdout.contains("gradient check: PASS"), "{stdout}");
    assert!(stdout.contains("coverage: 27 ops"), "{stdout}");
    assert!(stdout.contains("op contrastive_loss: PASS"), "{stdout}");

    let out = srx(&["gradcheck", "--seeds", "1", "--coords", "2", "--corrupt", "matmul"]);
    assert_eq!(out.status.code(), Some(4));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("op matmul: FAIL"), "{stdout}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("matmul"));
}
