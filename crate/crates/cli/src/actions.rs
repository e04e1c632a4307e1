//! Subcommand bodies. Every output file is written deterministically:
//! the same dataset, configuration, and seed reproduce identical bytes.

use crate::config::ConfigArgs;
use srx_core::batch;
use srx_core::data::{
    load_dataset, read_checkpoint, synth_dataset, write_checkpoint, Dataset, SynthConfig,
};
use srx_core::error::{Result, SrxError};
use srx_core::gradcheck::{run_suite, CheckOptions, REGISTERED_OPS};
use srx_core::matching::SimilarityMatrix;
use srx_core::metrics::DEFAULT_KS;
use srx_core::model::SrxModel;
use srx_core::train::{evaluate, train_epoch};
use std::cmp::Ordering;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;

#[derive(clap::Args, Debug)]
pub struct SynthArgs {
    /// Directory the dataset is written into.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Number of clips (each with one caption).
    #[arg(long)]
    pub clips: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Expert feature width.
    #[arg(long)]
    pub width: Option<usize>,
    /// Word vector dimension.
    #[arg(long)]
    pub word_dim: Option<usize>,
    /// Shared latent dimension tying clips to their captions.
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Give captions independent latents (chance-level retrieval data).
    #[arg(long)]
    pub decoupled: bool,
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let mut cfg = SynthConfig::new(args.seed, args.clips);
    cfg.coupled = !args.decoupled;
    if let Some(w) = args.width {
        cfg.width = w;
    }
    if let Some(d) = args.word_dim {
        cfg.word_dim = d;
    }
    if let Some(l) = args.latent_dim {
        cfg.latent_dim = l;
    }
    let out = synth_dataset(&cfg, &args.out)?;
    println!(
        "wrote {} files for {} clips under {}",
        out.files_written,
        args.clips,
        args.out.display()
    );
    println!("manifest: {}", out.manifest_path.display());
    Ok(())
}

#[derive(clap::Args, Debug)]
pub struct TrainArgs {
    /// Dataset manifest.
    #[arg(long, value_name = "MANIFEST")]
    pub data: PathBuf,
    /// Directory for checkpoint and loss history.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Continue from an existing checkpoint in the output directory.
    #[arg(long)]
    pub resume: bool,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let cfg = args.cfg.resolve()?;
    let data = load_dataset(&args.data)?;
    let model_cfg = cfg.model_config(&data)?;
    let opts = cfg.train_options()?;
    fs::create_dir_all(&args.out)?;
    let ckpt_path = args.out.join("checkpoint.srxc");
    let hist_path = args.out.join("history.txt");

    let (mut model, start) = if args.resume && ckpt_path.exists() {
        let ck = read_checkpoint(&ckpt_path)?;
        if ck.config != cfg.identity() {
            return Err(SrxError::validation(
                "checkpoint was trained under a different configuration; \
                 refusing to resume",
            ));
        }
        log::info!("resuming from epoch {}", ck.epoch);
        (SrxModel::from_checkpoint(model_cfg, &ck)?, ck.epoch)
    } else {
        fs::write(&hist_path, "")?;
        (SrxModel::init(model_cfg, cfg.seed)?, 0)
    };

    if start >= cfg.epochs {
        println!(
            "checkpoint already covers {} of {} epochs; nothing to train",
            start, cfg.epochs
        );
        return Ok(());
    }

    let mut history = fs::OpenOptions::new().append(true).open(&hist_path)?;
    let mut last = f64::NAN;
    for epoch in start + 1..=cfg.epochs {
        let loss = train_epoch(&mut model, &data, &opts)?;
        writeln!(history, "epoch {epoch} loss {loss}")?;
        write_checkpoint(&ckpt_path, &model.to_checkpoint(epoch, cfg.identity()))?;
        log::info!("epoch {epoch}: loss {loss}");
        last = loss;
    }
    println!(
        "trained epochs {}..={} (final loss {last}); checkpoint: {}",
        start + 1,
        cfg.epochs,
        ckpt_path.display()
    );
    Ok(())
}

#[derive(clap::Args, Debug)]
pub struct EvalArgs {
    /// Dataset manifest.
    #[arg(long, value_name = "MANIFEST")]
    pub data: PathBuf,
    /// Directory for report files.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Trained weights; omitted means a freshly initialized model.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

fn build_model(
    cfg: &crate::config::RunConfig,
    data: &Dataset,
    checkpoint: &Option<PathBuf>,
) -> Result<SrxModel> {
    let model_cfg = cfg.model_config(data)?;
    match checkpoint {
        Some(path) => SrxModel::from_checkpoint(model_cfg, &read_checkpoint(path)?),
        None => SrxModel::init(model_cfg, cfg.seed),
    }
}

fn render_matrix(m: &SimilarityMatrix) -> String {
    let mut out = String::from("caption");
    for id in &m.clip_ids {
        out.push('\t');
        out.push_str(id);
    }
    out.push('\n');
    for (i, cap) in m.caption_ids.iter().enumerate() {
        out.push_str(cap);
        for j in 0..m.n_clips() {
            let _ = write!(out, "\t{}", m.at(i, j));
        }
        out.push('\n');
    }
    out
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let cfg = args.cfg.resolve()?;
    let data = load_dataset(&args.data)?;
    let model = build_model(&cfg, &data, &args.checkpoint)?;
    let (matrix, _, report) = evaluate(&model, &data, &cfg.match_config()?, &DEFAULT_KS)?;
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("report.txt"), report.to_text())?;
    fs::write(args.out.join("report.kv"), report.to_kv())?;
    fs::write(args.out.join("matrix.tsv"), render_matrix(&matrix))?;
    print!("{}", report.to_text());
    println!("reports written to {}", args.out.display());
    Ok(())
}

#[derive(clap::Args, Debug)]
pub struct RetrieveArgs {
    /// Dataset manifest.
    #[arg(long, value_name = "MANIFEST")]
    pub data: PathBuf,
    /// Caption id to rank clips for.
    #[arg(long)]
    pub caption: String,
    /// Trained weights; omitted means a freshly initialized model.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Print only the best K clips.
    #[arg(long)]
    pub top: Option<usize>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

pub fn cmd_retrieve(args: &RetrieveArgs) -> Result<()> {
    let cfg = args.cfg.resolve()?;
    let data = load_dataset(&args.data)?;
    let record = data.caption(&args.caption).ok_or_else(|| {
        SrxError::validation(format!("caption '{}' is not in the dataset", args.caption))
    })?;
    let model = build_model(&cfg, &data, &args.checkpoint)?;
    let text = model.caption_vectors(&record.graph, &data.words)?;
    let clips = batch::clip_snapshots(&model, &data)?;
    let matrix = SimilarityMatrix::compute(
        &[(args.caption.clone(), text)],
        &clips,
        &cfg.match_config()?,
    )?;
    let mut ranked: Vec<(&str, f64)> = matrix
        .clip_ids
        .iter()
        .enumerate()
        .map(|(j, id)| (id.as_str(), matrix.at(0, j)))
        .collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(b.0))
    });
    let n = args.top.unwrap_or(ranked.len()).min(ranked.len());
    for (id, score) in &ranked[..n] {
        println!("{id}\t{score}");
    }
    Ok(())
}

#[derive(clap::Args, Debug)]
pub struct GradcheckArgs {
    /// Random seeds per case.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// Parameter coordinates sampled per seed in composite cases.
    #[arg(long, default_value_t = 12)]
    pub coords: usize,
    /// Deliberately corrupt one case's analytic gradient (self-test).
    #[arg(long, value_name = "OP", hide = true)]
    pub corrupt: Option<String>,
}

pub fn cmd_gradcheck(args: &GradcheckArgs) -> Result<()> {
    let opts = CheckOptions {
        seeds: args.seeds,
        step: args.step,
        tolerance: args.tolerance,
        sampled_coords: args.coords,
        corrupt: args.corrupt.clone(),
    };
    let report = run_suite(&opts)?;
    for line in report.lines() {
        println!("{line}");
    }
    println!("coverage: {} ops: {}", REGISTERED_OPS.len(), REGISTERED_OPS.join(", "));
    if report.all_passed() {
        println!("gradient check: PASS");
        Ok(())
    } else {
        let failed: Vec<&str> = report
            .cases
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect();
        Err(SrxError::numerical(format!(
            "gradient check failed for: {}",
            failed.join(", ")
        )))
    }
}
