//! Command-line entry point.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::dataset::{
    build_dataset, discover, load_detections, load_image, load_pairs, manifest_root, plan, save_image,
    BitDepth, Manifest, PipelineConfig, Split, SplitSpec,
};
use crate::error::{Error, Result};
use crate::gradcheck::{format_table, run_suite};
use crate::haze::{synthesize_variants, synthetic_depth, synthetic_scene, DepthKind, Image};
use crate::metrics::{evaluate_detections, format_db, fsim, psnr, ssim, QualityReport};
use crate::model::{checkpoint, dehaze, train_loop, AdamConfig, ModelConfig, Pair, TrainConfig, TrainOutputs, Trainer};

#[derive(Debug, Parser)]
#[command(name = "hazelab", version, about = "Haze synthesis, dehazing GAN training and quality metrics")]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, env = "HAZELAB_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Directory that relative paths resolve against.
    #[arg(long, global = true, default_value = ".")]
    pub root: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a hazy dataset and manifest from clear images and depth maps.
    Synth(SynthArgs),
    /// Train the GAN on a manifest.
    Train(TrainArgs),
    /// Run a checkpoint over a directory of PNGs.
    Dehaze(DehazeArgs),
    /// PSNR/SSIM (and optionally FSIM) between same-named PNGs of two directories.
    Eval(EvalArgs),
    /// mAP and mean IoU of a detection file against ground truth.
    Detmetrics(DetArgs),
    /// Finite-difference gradient checks of every op.
    Gradcheck,
    /// Throughput of synthesis and metrics.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 640)]
    pub width: usize,
    #[arg(long, default_value_t = 480)]
    pub height: usize,
    /// Explicit split counts `train/val/test`.
    #[arg(long)]
    pub splits: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    pub val_frac: f64,
    #[arg(long, default_value_t = 0.05)]
    pub test_frac: f64,
    /// Scale for 16-bit depth PNGs.
    #[arg(long)]
    pub depth_scale: Option<f64>,
    #[arg(long)]
    pub allow_partial: bool,
    /// Print the dataset sizes without writing anything.
    #[arg(long)]
    pub dry_run: bool,
    /// Clear-image count for a dry run without an input directory.
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 4)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 64)]
    pub base_width: usize,
    #[arg(long, default_value_t = 4)]
    pub stages: usize,
    #[arg(long, default_value_t = 2e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 100.0)]
    pub lambda: f64,
    /// Resize every pair to `N`×`N` before training.
    #[arg(long)]
    pub resize: Option<usize>,
    /// Continue from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DehazeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub batch_size: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub fsim: bool,
    /// Also write the report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    #[arg(long, default_value_t = 5)]
    pub iters: usize,
}

fn resolve(root: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() { p.to_path_buf() } else { root.join(p) }
}

fn parse_counts(s: &str) -> Result<SplitSpec> {
    let parts: Vec<&str> = s.split('/').collect();
    let nums = parts
        .iter()
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::Config(format!("--splits expects train/val/test counts, got {s}")))?;
    match nums[..] {
        [train, val, test] => Ok(SplitSpec::Counts { train, val, test }),
        _ => Err(Error::Config(format!("--splits expects three counts, got {s}"))),
    }
}

fn out_line(out: &mut dyn Write, line: impl AsRef<str>) -> Result<()> {
    writeln!(out, "{}", line.as_ref()).map_err(|e| Error::io("<stdout>", e))
}

fn synth(cli: &Cli, a: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let splits = match &a.splits {
        Some(s) => parse_counts(s)?,
        None => SplitSpec::Fractions {
            val: a.val_frac,
            test: a.test_frac,
        },
    };
    if a.dry_run {
        let n = match (a.count, &a.input) {
            (Some(n), _) => n,
            (None, Some(dir)) => discover(&resolve(&cli.root, dir))?.pairs.len(),
            (None, None) => return Err(Error::Config("--dry-run needs --count or --in".into())),
        };
        let p = plan(n, a.k, &splits)?;
        out_line(out, format!("clear images: {}", p.clear))?;
        out_line(out, format!("variants per image: {}", p.k))?;
        out_line(out, format!("hazy images: {}", p.hazy))?;
        let [ct, cv, cs] = p.clear_per_split;
        let [ht, hv, hs] = p.hazy_per_split;
        out_line(out, format!("train: {ct} clear / {ht} hazy"))?;
        out_line(out, format!("val: {cv} clear / {hv} hazy"))?;
        return out_line(out, format!("test: {cs} clear / {hs} hazy"));
    }
    let (Some(input), Some(output)) = (&a.input, &a.out) else {
        return Err(Error::Config("synth needs --in and --out".into()));
    };
    let cfg = PipelineConfig {
        input_dir: resolve(&cli.root, input),
        output_dir: resolve(&cli.root, output),
        k: a.k,
        seed: cli.seed,
        splits,
        width: a.width,
        height: a.height,
        depth_scale: a.depth_scale,
        allow_partial: a.allow_partial,
    };
    let m = build_dataset(&cfg)?;
    let [t, v, s] = m.split_sizes();
    out_line(
        out,
        format!(
            "wrote {} clear images, {} hazy images (train {t} / val {v} / test {s}) to {}",
            m.records.len(),
            m.hazy_count(),
            cfg.output_dir.display()
        ),
    )
}

fn resize_pairs(pairs: Vec<Pair>, size: Option<usize>) -> Result<Vec<Pair>> {
    let Some(n) = size else { return Ok(pairs) };
    pairs
        .into_iter()
        .map(|(h, c)| Ok((h.resize_bilinear(n, n)?, c.resize_bilinear(n, n)?)))
        .collect()
}

fn train(cli: &Cli, a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let manifest_path = resolve(&cli.root, &a.manifest);
    let manifest = Manifest::load(&manifest_path)?;
    let root = manifest_root(&manifest_path);
    manifest.validate(&root)?;
    let train_set = resize_pairs(load_pairs(&manifest, &root, Split::Train)?, a.resize)?;
    let val_set = resize_pairs(load_pairs(&manifest, &root, Split::Val)?, a.resize)?;
    let out_dir = resolve(&cli.root, &a.out);
    let trainer = match &a.resume {
        Some(p) => {
            let mut tr = checkpoint::load::<f32>(&resolve(&cli.root, p))?;
            tr.cfg.epochs = a.epochs;
            tr
        }
        None => {
            let model = ModelConfig::with_width(a.base_width, a.stages)?;
            let cfg = TrainConfig {
                epochs: a.epochs,
                batch_size: a.batch_size,
                lambda_l1: a.lambda,
                adam: AdamConfig {
                    lr: a.lr,
                    ..AdamConfig::default()
                },
                seed: cli.seed,
            };
            Trainer::new(model, cfg)?
        }
    };
    let outputs = TrainOutputs {
        checkpoint_dir: Some(out_dir.clone()),
        metrics_log: Some(out_dir.join("metrics.jsonl")),
    };
    let outcome = train_loop(trainer, &train_set, &val_set, &outputs)?;
    for r in &outcome.log {
        let fmt_opt = |v: Option<f64>, f: fn(f64) -> String| v.map(f).unwrap_or_else(|| "-".into());
        out_line(
            out,
            format!(
                "epoch {:>3}  g_total {:.5}  g_adv {:.5}  g_l1 {:.5}  d_loss {:.5}  val_ssim {}  val_psnr {}",
                r.epoch,
                r.g_total,
                r.g_adv,
                r.g_l1,
                r.d_loss,
                fmt_opt(r.val_ssim, |v| format!("{v:.4}")),
                fmt_opt(r.val_psnr, format_db),
            ),
        )?;
    }
    out_line(out, format!("checkpoints in {}", out_dir.display()))
}

fn png_names(dir: &Path) -> Result<Vec<String>> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .filter_map(|e| e.file_name().to_str().map(str::to_owned))
        .filter(|n| n.ends_with(".png"))
        .collect();
    names.sort();
    Ok(names)
}

fn dehaze_cmd(cli: &Cli, a: &DehazeArgs, out: &mut dyn Write) -> Result<()> {
    let tr = checkpoint::load::<f32>(&resolve(&cli.root, &a.checkpoint))?;
    let (input, output) = (resolve(&cli.root, &a.input), resolve(&cli.root, &a.out));
    fs::create_dir_all(&output).map_err(|e| Error::io(&output, e))?;
    let names = png_names(&input)?;
    for name in &names {
        let img = load_image(&input.join(name))?;
        let restored = dehaze(&tr.params, &tr.model.generator, &[&img], a.batch_size)?;
        save_image(&restored[0], &output.join(name), BitDepth::Eight)?;
    }
    out_line(out, format!("dehazed {} image(s) into {}", names.len(), output.display()))
}

fn eval(cli: &Cli, a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let (pred, reference) = (resolve(&cli.root, &a.pred), resolve(&cli.root, &a.reference));
    let names = png_names(&pred)?;
    let missing: Vec<&String> = names.iter().filter(|n| !reference.join(n).is_file()).collect();
    if !missing.is_empty() {
        return Err(Error::Validation(format!(
            "{} prediction(s) without a reference in {}: {:?}",
            missing.len(),
            reference.display(),
            missing
        )));
    }
    if names.is_empty() {
        return Err(Error::Validation(format!("no PNG files in {}", pred.display())));
    }
    let triples = names
        .iter()
        .map(|n| Ok((n.clone(), load_image(&pred.join(n))?, load_image(&reference.join(n))?)))
        .collect::<Result<Vec<_>>>()?;
    let report = QualityReport::evaluate(&triples, a.fsim)?;
    for p in &report.pairs {
        let f = p.fsim.map(|v| format!("  FSIM {v:.6}")).unwrap_or_default();
        out_line(out, format!("{}  PSNR {}  SSIM {:.6}{f}", p.name, format_db(p.psnr), p.ssim))?;
    }
    let f = report.mean_fsim.map(|v| format!("  FSIM {v:.6}")).unwrap_or_default();
    out_line(
        out,
        format!(
            "mean over {} pair(s)  PSNR {} ({} infinite)  SSIM {:.6}{f}",
            report.count,
            format_db(report.mean_psnr),
            report.infinite_psnr,
            report.mean_ssim
        ),
    )?;
    if let Some(j) = &a.json {
        let path = resolve(&cli.root, j);
        let text = serde_json::to_string_pretty(&report).map_err(|e| Error::format(&path, e.to_string()))?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn detmetrics(cli: &Cli, a: &DetArgs, out: &mut dyn Write) -> Result<()> {
    let preds = load_detections(&resolve(&cli.root, &a.pred), true)?;
    let gts = load_detections(&resolve(&cli.root, &a.gt), false)?;
    let s = evaluate_detections(&preds, &gts, a.iou)?;
    for c in &s.per_class {
        out_line(
            out,
            format!(
                "class {:>3}  AP {:.6}  gt {}  pred {}  tp {}",
                c.class_id, c.ap, c.ground_truths, c.predictions, c.true_positives
            ),
        )?;
    }
    out_line(out, format!("mAP@{:.2} {:.6}  mIoU {:.6}", a.iou, s.map, s.miou))
}

fn gradcheck(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let rows = run_suite(cli.seed)?;
    write!(out, "{}", format_table(&rows)).map_err(|e| Error::io("<stdout>", e))?;
    let failed: Vec<&str> = rows.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Undefined(format!("gradient checks failed: {}", failed.join(", "))))
    }
}

fn bench(cli: &Cli, a: &BenchArgs, out: &mut dyn Write) -> Result<()> {
    let n = a.size;
    let iters = a.iters.max(1);
    let clear = synthetic_scene(n, n, cli.seed)?;
    let depth = synthetic_depth(n, n, DepthKind::Blobs, cli.seed)?;
    let hazy: Image = synthesize_variants(&clear, &depth, 1, cli.seed)?.remove(0).image;
    let mpix = (n * n) as f64 / 1e6;
    let backend = if crate::par::is_parallel() { "rayon" } else { "sequential" };
    out_line(out, format!("{n}×{n} images, {iters} iteration(s), {backend} backend"))?;
    let mut time = |name: &str, f: &mut dyn FnMut() -> Result<()>| -> Result<()> {
        f()?;
        let t0 = Instant::now();
        for _ in 0..iters {
            f()?;
        }
        let ms = t0.elapsed().as_secs_f64() * 1e3 / iters as f64;
        out_line(out, format!("{name:<22} {ms:>10.3} ms/image {:>10.2} MPix/s", mpix / (ms / 1e3)))
    };
    time("synthesis (k=3)", &mut || synthesize_variants(&clear, &depth, 3, cli.seed).map(drop))?;
    time("psnr", &mut || psnr(&hazy, &clear, 1.0).map(drop))?;
    time("ssim", &mut || ssim(&hazy, &clear).map(drop))?;
    time("fsim", &mut || fsim(&hazy, &clear).map(drop))?;
    Ok(())
}

/// Runs the command line, writing results to `out`. Returns the exit
/// code: 0 on success, 1 for invalid input, 2 for internal failures.
pub fn run_with<I, S>(argv: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Synth(a) => synth(&cli, a, out),
        Command::Train(a) => train(&cli, a, out),
        Command::Dehaze(a) => dehaze_cmd(&cli, a, out),
        Command::Eval(a) => eval(&cli, a, out),
        Command::Detmetrics(a) => detmetrics(&cli, a, out),
        Command::Gradcheck => gradcheck(&cli, out),
        Command::Bench(a) => bench(&cli, a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() { 1 } else { 2 }
        }
    }
}

pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout())
}
