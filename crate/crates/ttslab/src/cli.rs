//! Command-line surface: simulate, preprocess, train, generate, wcoh,
//! visualize, casestudy. Every run writes its fully resolved configuration
//! next to its outputs so it can be replayed bit-identically.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::coherence::{wcoh_set, CwtSpec};
use crate::error::{Error, Result};
use crate::eval::classifier::{run_case_study, CaseStudyParams, FitParams};
use crate::eval::flatten_features;
use crate::eval::fusion::fusion_map;
use crate::eval::projection::{pca_2d, tsne_2d, Projection2D, TsneParams};
use crate::model::{load_checkpoint, EmbedStrategy};
use crate::plot;
use crate::signal::{
    crop_window, import_csv, load_signal_set, normalize_channels, resample_balanced,
    save_signal_set, simulate_sine, SignalSet, SineParams,
};
use crate::train::{generate, train, Objective, TrainConfig, Trainer};

#[derive(Parser)]
#[command(
    name = "ttslab",
    about = "Transformer GANs for multichannel time-series: train, generate, evaluate",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a sinusoidal dataset.
    Simulate(SimulateArgs),
    /// Import/normalize/crop/rebalance an existing dataset.
    Preprocess(PreprocessArgs),
    /// Train a GAN on a signal container.
    Train(TrainArgs),
    /// Sample synthetic signals from a checkpoint.
    Generate(GenerateArgs),
    /// Wavelet-coherence similarity between two signal sets.
    Wcoh(WcohArgs),
    /// 2-D projections and fusion maps of real versus synthetic data.
    Visualize(VisualizeArgs),
    /// Train the reference classifier on four real/synthetic compositions.
    Casestudy(CasestudyArgs),
}

/// Seed resolution: explicit flag, then config value, then `TTSLAB_SEED`,
/// then 0.
fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> u64 {
    flag.or(config)
        .or_else(|| std::env::var("TTSLAB_SEED").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(0)
}

fn load_config_file<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Usage(format!("bad config file: {e}")))
}

fn write_resolved<T: Serialize>(dir: &Path, resolved: &T) -> Result<()> {
    fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(resolved)?;
    fs::write(dir.join("config.resolved.json"), text)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Args)]
struct SimulateArgs {
    /// JSON file holding a previously resolved simulate config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of samples.
    #[arg(long)]
    n: Option<usize>,
    /// Window length W.
    #[arg(long)]
    w: Option<usize>,
    /// Channels C.
    #[arg(long)]
    c: Option<usize>,
    #[arg(long)]
    freq_lo: Option<f64>,
    #[arg(long)]
    freq_hi: Option<f64>,
    #[arg(long)]
    phase_lo: Option<f64>,
    #[arg(long)]
    phase_hi: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn run_simulate(a: SimulateArgs) -> Result<()> {
    let mut p: SineParams = match &a.config {
        Some(path) => load_config_file(path)?,
        None => SineParams::default(),
    };
    let config_seed = a.config.as_ref().map(|_| p.seed);
    if let Some(n) = a.n {
        p.n_samples = n;
    }
    if let Some(w) = a.w {
        p.length_w = w;
    }
    if let Some(c) = a.c {
        p.channels = c;
    }
    if let Some(v) = a.freq_lo {
        p.freq_range.0 = v;
    }
    if let Some(v) = a.freq_hi {
        p.freq_range.1 = v;
    }
    if let Some(v) = a.phase_lo {
        p.phase_range.0 = v;
    }
    if let Some(v) = a.phase_hi {
        p.phase_range.1 = v;
    }
    p.seed = resolve_seed(a.seed, config_seed);
    let set = simulate_sine(&p)?;
    write_resolved(&a.out, &p)?;
    save_signal_set(&set, &a.out.join("signals"))?;
    println!(
        "wrote {} samples ({} ch x {}) to {}",
        set.n(),
        set.channels(),
        set.width(),
        a.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// preprocess
// ---------------------------------------------------------------------------

#[derive(Args, Serialize, Deserialize, Clone)]
struct PreprocessOps {
    /// Z-normalize each channel.
    #[arg(long)]
    #[serde(default)]
    normalize: bool,
    /// Crop to [crop_start, crop_end) along W.
    #[arg(long)]
    crop_start: Option<usize>,
    #[arg(long)]
    crop_end: Option<usize>,
    /// Rebalance classes to this many samples per class.
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PreprocessArgs {
    /// Input container prefix/directory, or a CSV file.
    #[arg(long)]
    input: PathBuf,
    /// Treat the last CSV column as a class label.
    #[arg(long)]
    labeled: bool,
    #[command(flatten)]
    ops: PreprocessOps,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct PreprocessResolved<'a> {
    input: &'a Path,
    labeled: bool,
    #[serde(flatten)]
    ops: PreprocessOps,
}

fn run_preprocess(a: PreprocessArgs) -> Result<()> {
    let mut set = if a.input.extension().is_some_and(|e| e == "csv") {
        import_csv(&a.input, a.labeled)?
    } else {
        load_signal_set(&a.input)?
    };
    let mut ops = a.ops.clone();
    ops.seed = Some(resolve_seed(ops.seed, None));
    if let (Some(s), Some(e)) = (ops.crop_start, ops.crop_end) {
        set = crop_window(&set, s, e)?;
    } else if ops.crop_start.is_some() || ops.crop_end.is_some() {
        return Err(Error::Usage("--crop-start and --crop-end must be given together".into()));
    }
    if ops.normalize {
        set = normalize_channels(&set)?;
    }
    if let Some(k) = ops.per_class {
        set = resample_balanced(&set, k, ops.seed.unwrap_or(0))?;
    }
    write_resolved(&a.out, &PreprocessResolved { input: &a.input, labeled: a.labeled, ops })?;
    save_signal_set(&set, &a.out.join("signals"))?;
    println!("wrote {} samples to {}", set.n(), a.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Args)]
struct TrainArgs {
    /// Training data container.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// JSON file holding a previously resolved train config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Resume from this checkpoint file.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    objective: Option<Objective>,
    /// Number of classes (0 = unconditional).
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    patch_len: Option<usize>,
    #[arg(long)]
    label_embed_dim: Option<usize>,
    #[arg(long)]
    embed_strategy: Option<EmbedStrategy>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    lr_g: Option<f64>,
    #[arg(long)]
    lr_d: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lambda_cls: Option<f64>,
    #[arg(long)]
    lambda_gp: Option<f64>,
    #[arg(long)]
    d_steps_per_g: Option<usize>,
    #[arg(long)]
    flip_labels: Option<bool>,
    #[arg(long)]
    real_label: Option<f64>,
    #[arg(long)]
    fake_label: Option<f64>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    log_every: Option<u64>,
    #[arg(long)]
    ckpt_every: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

fn resolve_train_config(a: &TrainArgs, data: &SignalSet) -> Result<TrainConfig> {
    let mut cfg: TrainConfig = match &a.config {
        Some(path) => load_config_file(path)?,
        None => TrainConfig::default(),
    };
    let config_seed = a.config.as_ref().map(|_| cfg.seed);
    if a.config.is_none() {
        // Infer data-dependent model dims unless a config pinned them.
        cfg.model.channels = data.channels();
        cfg.model.seq_len = data.width();
        cfg.model.num_classes = data.num_classes.unwrap_or(0);
        cfg.model.patch_len = default_patch_len(data.width());
    }
    let m = &mut cfg.model;
    if let Some(v) = a.classes {
        m.num_classes = v;
    }
    if let Some(v) = a.latent_dim {
        m.latent_dim = v;
    }
    if let Some(v) = a.hidden_dim {
        m.hidden_dim = v;
    }
    if let Some(v) = a.depth {
        m.depth = v;
    }
    if let Some(v) = a.heads {
        m.heads = v;
    }
    if let Some(v) = a.patch_len {
        m.patch_len = v;
    }
    if let Some(v) = a.label_embed_dim {
        m.label_embed_dim = v;
    }
    if let Some(v) = a.embed_strategy {
        m.embed_strategy = v;
    }
    if let Some(v) = a.dropout {
        m.dropout = v;
    }
    if let Some(v) = a.objective {
        cfg.objective = v;
    }
    if let Some(v) = a.lr_g {
        cfg.lr_g = v;
    }
    if let Some(v) = a.lr_d {
        cfg.lr_d = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.lambda_cls {
        cfg.lambda_cls = v;
    }
    if let Some(v) = a.lambda_gp {
        cfg.lambda_gp = v;
    }
    if let Some(v) = a.d_steps_per_g {
        cfg.d_steps_per_g = v;
    }
    if let Some(v) = a.flip_labels {
        cfg.flip_labels = v;
    }
    if let Some(v) = a.real_label {
        cfg.real_label = v;
    }
    if let Some(v) = a.fake_label {
        cfg.fake_label = v;
    }
    if let Some(v) = a.max_steps {
        cfg.max_steps = v;
    }
    if let Some(v) = a.log_every {
        cfg.log_every = v;
    }
    if let Some(v) = a.ckpt_every {
        cfg.ckpt_every = v;
    }
    cfg.seed = resolve_seed(a.seed, config_seed);
    cfg.validate()?;
    Ok(cfg)
}

/// Largest divisor of `w` not exceeding 15, so tokens stay manageable.
fn default_patch_len(w: usize) -> usize {
    (1..=15.min(w)).rev().find(|p| w % p == 0).unwrap_or(1)
}

fn run_train(a: TrainArgs) -> Result<()> {
    let data = load_signal_set(&a.data)?;
    let mut trainer = match &a.resume {
        Some(path) => Trainer::from_checkpoint(load_checkpoint(path)?)?,
        None => Trainer::new(resolve_train_config(&a, &data)?)?,
    };
    write_resolved(&a.out, &trainer.cfg)?;
    let summary = train(&mut trainer, &data, &a.out, |row| {
        println!(
            "step {:>6}  L_D {:>10.4}  L_G {:>10.4}  L_adv {:>10.4}  GP {:>8.4}",
            row.step, row.l_d, row.l_g, row.l_adv, row.gp
        );
    })?;
    println!(
        "finished at step {} ({} checkpoints) in {}",
        summary.final_step,
        summary.checkpoints.len(),
        a.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

#[derive(Args)]
struct GenerateArgs {
    /// Checkpoint file to sample from.
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    n: usize,
    /// "balanced" or a comma-separated label list (conditional models).
    #[arg(long)]
    labels: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct GenerateResolved<'a> {
    ckpt: &'a Path,
    n: usize,
    labels: Option<&'a String>,
    seed: u64,
}

fn parse_labels(spec: &str, n: usize, num_classes: usize) -> Result<Option<Vec<u32>>> {
    if spec == "balanced" {
        if num_classes == 0 {
            return Err(Error::Usage("--labels given for an unconditional model".into()));
        }
        return Ok(Some((0..n).map(|i| (i % num_classes) as u32).collect()));
    }
    let parsed: std::result::Result<Vec<u32>, _> =
        spec.split(',').map(|s| s.trim().parse::<u32>()).collect();
    let labels = parsed.map_err(|_| Error::Usage(format!("cannot parse labels: {spec}")))?;
    Ok(Some(labels))
}

fn run_generate(a: GenerateArgs) -> Result<()> {
    let seed = resolve_seed(a.seed, None);
    let ckpt = load_checkpoint(&a.ckpt)?;
    let labels = match &a.labels {
        Some(spec) => parse_labels(spec, a.n, ckpt.spec.num_classes)?,
        None => None,
    };
    let set = generate(&a.ckpt, a.n, labels, seed)?;
    write_resolved(&a.out, &GenerateResolved { ckpt: &a.ckpt, n: a.n, labels: a.labels.as_ref(), seed })?;
    save_signal_set(&set, &a.out.join("signals"))?;
    println!("wrote {} synthetic samples to {}", set.n(), a.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// wcoh
// ---------------------------------------------------------------------------

#[derive(Args)]
struct WcohArgs {
    /// First signal set.
    #[arg(long)]
    a: PathBuf,
    /// Second signal set.
    #[arg(long)]
    b: PathBuf,
    /// Use only the first N samples from each set.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    omega0: Option<f64>,
    #[arg(long)]
    voices: Option<usize>,
    #[arg(long)]
    min_period: Option<f64>,
    #[arg(long)]
    max_period: Option<f64>,
    /// Also dump the full pairwise score matrix as CSV.
    #[arg(long)]
    matrix: bool,
    /// Optional artifact directory for report.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct WcohResolved<'x> {
    a: &'x Path,
    b: &'x Path,
    n: Option<usize>,
    cwt: CwtSpec,
}

fn run_wcoh(args: WcohArgs) -> Result<()> {
    let mut spec = CwtSpec::default();
    if let Some(v) = args.omega0 {
        spec.omega0 = v;
    }
    if let Some(v) = args.voices {
        spec.voices = v;
    }
    if let Some(v) = args.min_period {
        spec.min_period = v;
    }
    if let Some(v) = args.max_period {
        spec.max_period = Some(v);
    }
    let mut a = load_signal_set(&args.a)?;
    let mut b = load_signal_set(&args.b)?;
    if let Some(n) = args.n {
        if n == 0 || n > a.n() || n > b.n() {
            return Err(Error::Usage(format!(
                "--n {n} exceeds set sizes ({}, {})",
                a.n(),
                b.n()
            )));
        }
        let idx: Vec<usize> = (0..n).collect();
        a = a.select(&idx);
        b = b.select(&idx);
    }
    let score = wcoh_set(&a, &b, &spec)?;
    println!("wcoh_set = {score:.6}");
    if let Some(out) = &args.out {
        write_resolved(out, &WcohResolved { a: &args.a, b: &args.b, n: args.n, cwt: spec })?;
        // Per-pair statistics (and optionally the full matrix) for the report.
        use rayon::prelude::*;
        let pairs: Vec<(usize, usize)> =
            (0..a.n()).flat_map(|i| (0..b.n()).map(move |j| (i, j))).collect();
        let scores: Vec<f64> = pairs
            .par_iter()
            .map(|&(i, j)| crate::coherence::wcoh_s(&a, i, &b, j, &spec))
            .collect::<Result<_>>()?;
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / scores.len() as f64;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &s in &scores {
            lo = lo.min(s);
            hi = hi.max(s);
        }
        let report = serde_json::json!({
            "wcoh_set": score,
            "n": [a.n(), b.n()],
            "spec": spec,
            "per_pair_stats": { "min": lo, "max": hi, "mean": mean, "std": var.sqrt() },
        });
        fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
        if args.matrix {
            let mut w = csv::Writer::from_path(out.join("matrix.csv"))?;
            for i in 0..a.n() {
                let row: Vec<String> =
                    (0..b.n()).map(|j| scores[i * b.n() + j].to_string()).collect();
                w.write_record(&row)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// visualize
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[clap(rename_all = "kebab-case")]
enum ProjectionMethod {
    Pca,
    Tsne,
}

#[derive(Args)]
struct VisualizeArgs {
    /// Real signal set.
    #[arg(long)]
    real: PathBuf,
    /// Synthetic signal set.
    #[arg(long)]
    syn: PathBuf,
    #[arg(long, value_enum, default_value = "pca")]
    method: ProjectionMethod,
    #[arg(long)]
    perplexity: Option<f64>,
    #[arg(long)]
    tsne_iters: Option<usize>,
    /// Channel for the fusion maps.
    #[arg(long, default_value_t = 0)]
    fusion_channel: usize,
    #[arg(long, default_value_t = 100)]
    value_bins: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct VisualizeResolved<'a> {
    real: &'a Path,
    syn: &'a Path,
    method: ProjectionMethod,
    perplexity: f64,
    tsne_iters: usize,
    fusion_channel: usize,
    value_bins: usize,
    seed: u64,
}

fn write_projection_csv(
    path: &Path,
    real: &Projection2D,
    syn: &Projection2D,
    real_labels: Option<&Vec<u32>>,
    syn_labels: Option<&Vec<u32>>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "origin", "label"])?;
    for (i, &(x, y)) in real.points.iter().enumerate() {
        let label = real_labels.map(|l| l[i].to_string()).unwrap_or_default();
        w.write_record([x.to_string(), y.to_string(), "real".into(), label])?;
    }
    for (i, &(x, y)) in syn.points.iter().enumerate() {
        let label = syn_labels.map(|l| l[i].to_string()).unwrap_or_default();
        w.write_record([x.to_string(), y.to_string(), "synthetic".into(), label])?;
    }
    w.flush()?;
    Ok(())
}

fn run_visualize(a: VisualizeArgs) -> Result<()> {
    let real = load_signal_set(&a.real)?;
    let syn = load_signal_set(&a.syn)?;
    if real.channels() != syn.channels() || real.width() != syn.width() {
        return Err(Error::Usage("real and synthetic sets are not comparable".into()));
    }
    if real.n() + syn.n() < 3 {
        return Err(Error::Usage("need at least 3 samples to project".into()));
    }
    let seed = resolve_seed(a.seed, None);
    let perplexity = a.perplexity.unwrap_or(30.0);
    let tsne_iters = a.tsne_iters.unwrap_or(1000);
    write_resolved(
        &a.out,
        &VisualizeResolved {
            real: &a.real,
            syn: &a.syn,
            method: a.method,
            perplexity,
            tsne_iters,
            fusion_channel: a.fusion_channel,
            value_bins: a.value_bins,
            seed,
        },
    )?;

    // Project the union, then split back into the two clouds.
    let mut rows = flatten_features(&real);
    rows.extend(flatten_features(&syn));
    let proj = match a.method {
        ProjectionMethod::Pca => pca_2d(&rows)?,
        ProjectionMethod::Tsne => tsne_2d(
            &rows,
            &TsneParams { perplexity, iterations: tsne_iters, seed, ..Default::default() },
        )?,
    };
    let (rp, sp) = proj.points.split_at(real.n());
    let real_proj = Projection2D { points: rp.to_vec() };
    let syn_proj = Projection2D { points: sp.to_vec() };
    write_projection_csv(
        &a.out.join("projection.csv"),
        &real_proj,
        &syn_proj,
        real.labels.as_ref(),
        syn.labels.as_ref(),
    )?;
    plot::scatter_png(
        &[
            (real_proj.points.as_slice(), plot::REAL_COLOR),
            (syn_proj.points.as_slice(), plot::SYN_COLOR),
        ],
        &a.out.join("projection.png"),
    )?;

    // Fusion maps for each set on its own empirical range.
    for (name, set) in [("real", &real), ("synthetic", &syn)] {
        let map = fusion_map(set, a.fusion_channel, None, a.value_bins, None)?;
        let mut w = csv::Writer::from_path(a.out.join(format!("fusion_{name}.csv")))?;
        w.write_record(["value_bin", "time_bin", "count"])?;
        for vb in 0..map.value_bins {
            for tb in 0..map.time_bins {
                w.write_record([vb.to_string(), tb.to_string(), map.at(vb, tb).to_string()])?;
            }
        }
        w.flush()?;
        plot::fusion_png(&map, &a.out.join(format!("fusion_{name}.png")))?;
    }

    // One example trace from each set.
    for (name, set) in [("real", &real), ("synthetic", &syn)] {
        let channels: Vec<Vec<f64>> = (0..set.channels())
            .map(|c| (0..set.width()).map(|t| set.values[[0, c, 0, t]] as f64).collect())
            .collect();
        plot::signal_png(&channels, &a.out.join(format!("sample_{name}.png")))?;
    }
    println!("wrote visualization artifacts to {}", a.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// casestudy
// ---------------------------------------------------------------------------

#[derive(Args)]
struct CasestudyArgs {
    /// Labeled real training set.
    #[arg(long)]
    real_train: PathBuf,
    /// Labeled synthetic set.
    #[arg(long)]
    syn: PathBuf,
    /// Labeled held-out real test set.
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value_t = 1000)]
    per_class_full: usize,
    #[arg(long, default_value_t = 200)]
    per_class_reduced: usize,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct CasestudyResolved<'a> {
    real_train: &'a Path,
    syn: &'a Path,
    test: &'a Path,
    #[serde(flatten)]
    params: CaseStudyParams,
}

fn run_casestudy(a: CasestudyArgs) -> Result<()> {
    let real_train = load_signal_set(&a.real_train)?;
    let syn = load_signal_set(&a.syn)?;
    let test = load_signal_set(&a.test)?;
    let num_classes = real_train
        .num_classes
        .unwrap_or(0)
        .max(syn.num_classes.unwrap_or(0))
        .max(test.num_classes.unwrap_or(0));
    if num_classes < 2 {
        return Err(Error::Usage("case study needs labeled sets with >= 2 classes".into()));
    }
    let params = CaseStudyParams {
        per_class_full: a.per_class_full,
        per_class_reduced: a.per_class_reduced,
        fit: FitParams {
            epochs: a.epochs,
            batch_size: a.batch_size,
            lr: a.lr,
            seed: resolve_seed(a.seed, None),
        },
    };
    write_resolved(
        &a.out,
        &CasestudyResolved { real_train: &a.real_train, syn: &a.syn, test: &a.test, params },
    )?;
    let report = run_case_study(&real_train, &syn, &test, num_classes, &params)?;
    fs::write(a.out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    for e in &report.entries {
        println!(
            "{:<28} train_size {:>6}  accuracy {:.4}  macro_f1 {:.4}",
            format!("{:?}", e.mode),
            e.train_size,
            e.metrics.accuracy,
            e.metrics.macro_f1
        );
    }
    println!("wrote report.json to {}", a.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// entry point
// ---------------------------------------------------------------------------

/// Parses `argv` and runs; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are successful exits.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => run_simulate(a),
        Command::Preprocess(a) => run_preprocess(a),
        Command::Train(a) => run_train(a),
        Command::Generate(a) => run_generate(a),
        Command::Wcoh(a) => run_wcoh(a),
        Command::Visualize(a) => run_visualize(a),
        Command::Casestudy(a) => run_casestudy(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) | Error::Config(_) => 1,
                _ => 2,
            }
        }
    }
}
