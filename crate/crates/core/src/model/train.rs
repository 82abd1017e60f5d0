use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::haze::Image;
use crate::metrics::QualityReport;
use crate::rng::RngStream;
use crate::tensor::{Scalar, Tape, Tensor, Var};

use super::adam::{Adam, AdamConfig};
use super::discriminator::{discriminator_forward, DiscriminatorConfig};
use super::generator::{generator_forward, GeneratorConfig};
use super::loss::{discriminator_loss, generator_loss, LAMBDA_L1};
use super::params::{Bound, ModelParams};

/// Stream tag of the per-epoch shuffle.
const SHUFFLE_STREAM: u64 = 0x5348_5546;
/// Stream tag of parameter initialization.
const INIT_STREAM: u64 = 0x494e_4954;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ModelConfig {
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
}

impl ModelConfig {
    /// Generator and discriminator sharing one base width.
    pub fn with_width(base_width: usize, num_stages: usize) -> Result<Self> {
        Ok(Self {
            generator: GeneratorConfig::new(base_width, num_stages)?,
            discriminator: DiscriminatorConfig::with_width(base_width),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.discriminator.validate()
    }

    /// Freshly initialized parameters and running statistics.
    pub fn init_params<T: Scalar>(&self, seed: u64) -> Result<ModelParams<T>> {
        self.validate()?;
        let mut specs = self.generator.param_specs();
        specs.extend(self.discriminator.param_specs());
        let init_seed = RngStream::derive(seed, &[INIT_STREAM]).next_u64();
        let mut p = ModelParams::init(&specs, init_seed)?;
        p.norms = self.discriminator.norm_states();
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda_l1: f64,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 4,
            lambda_l1: LAMBDA_L1,
            adam: AdamConfig::default(),
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lambda_l1.is_finite() && self.lambda_l1 >= 0.0) {
            return Err(Error::Config(format!("lambda_l1 must be finite and ≥ 0, got {}", self.lambda_l1)));
        }
        let a = self.adam;
        if !(a.lr > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(Error::Config(format!("invalid optimizer settings {a:?}")));
        }
        Ok(())
    }
}

/// Loss components and gradient norms of one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: u64,
    pub d_loss: f64,
    pub g_total: f64,
    pub g_adv: f64,
    pub g_l1: f64,
    pub d_grad_norm: f64,
    pub g_grad_norm: f64,
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    pub g_total: f64,
    pub g_adv: f64,
    pub g_l1: f64,
    pub d_loss: f64,
    pub val_ssim: Option<f64>,
    pub val_psnr: Option<f64>,
}

/// A `(hazy, clear)` training pair.
pub type Pair = (Image, Image);

/// Parameters, optimizer state and progress counters of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainer<T> {
    pub model: ModelConfig,
    pub cfg: TrainConfig,
    pub params: ModelParams<T>,
    pub gen_opt: Adam<T>,
    pub disc_opt: Adam<T>,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed steps.
    pub step: u64,
}

fn collect_grads<T: Scalar>(tape: &Tape<T>, bound: &Bound) -> Result<(BTreeMap<String, Vec<T>>, f64)> {
    let mut grads = BTreeMap::new();
    let mut sq = 0.0;
    for (name, &v) in &bound.vars {
        let g = match tape.grad(v) {
            Some(g) => g.to_vec(),
            None => vec![T::zero(); tape.value(v).len()],
        };
        if let Some(i) = g.iter().position(|x| !x.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite gradient at {name}[{i}]"
            )));
        }
        sq += g.iter().map(|x| x.as_f64().powi(2)).sum::<f64>();
        grads.insert(name.clone(), g);
    }
    Ok((grads, sq.sqrt()))
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: ModelConfig, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            params: model.init_params(cfg.seed)?,
            model,
            cfg,
            gen_opt: Adam::new(cfg.adam),
            disc_opt: Adam::new(cfg.adam),
            epoch: 0,
            step: 0,
        })
    }

    /// Generator output for `hazy: [N, 3, H, W]` without recording gradients.
    pub fn generate(&self, hazy: &Tensor<T>) -> Result<Tensor<T>> {
        generate(&self.params, &self.model.generator, hazy)
    }

    /// One discriminator update followed by one generator update.
    pub fn train_step(&mut self, hazy: &Tensor<T>, clear: &Tensor<T>) -> Result<StepReport> {
        if hazy.shape() != clear.shape() {
            return Err(crate::error::shape_err!(
                "hazy {:?} and clear {:?} batches differ",
                hazy.shape(),
                clear.shape()
            ));
        }
        let model = self.model;
        let fake = self.generate(hazy)?;

        // Discriminator update on a detached generator output.
        let mut tape = Tape::new();
        let d_vars = self.params.bind(&mut tape, "disc.", true);
        let real = tape.constant(clear.clone());
        let fake_c = tape.constant(fake);
        let d_real = discriminator_forward(&mut tape, &d_vars, &mut self.params.norms, &model.discriminator, real)?;
        let d_fake = discriminator_forward(&mut tape, &d_vars, &mut self.params.norms, &model.discriminator, fake_c)?;
        let d_loss_var = discriminator_loss(&mut tape, d_real, d_fake)?;
        tape.ensure_finite()?;
        tape.backward(d_loss_var)?;
        let d_loss = tape.value(d_loss_var).item().as_f64();
        let (d_grads, d_grad_norm) = collect_grads(&tape, &d_vars)?;
        drop(tape);
        self.disc_opt.step(&mut self.params.tensors, &d_grads)?;

        // Generator update through a frozen discriminator. Batch statistics
        // are used, but the running estimates are left untouched.
        let mut tape = Tape::new();
        let g_vars = self.params.bind(&mut tape, "gen.", true);
        let frozen = self.params.bind(&mut tape, "disc.", false);
        let mut scratch_norms = self.params.norms.clone();
        let x = tape.constant(hazy.clone());
        let target = tape.constant(clear.clone());
        let fake = generator_forward(&mut tape, &g_vars, &model.generator, x)?;
        let d_fake = discriminator_forward(&mut tape, &frozen, &mut scratch_norms, &model.discriminator, fake)?;
        let g = generator_loss(&mut tape, d_fake, fake, target, self.cfg.lambda_l1)?;
        tape.ensure_finite()?;
        tape.backward(g.total)?;
        let (g_grads, g_grad_norm) = collect_grads(&tape, &g_vars)?;
        let value = |v: Var| tape.value(v).item().as_f64();
        let (g_total, g_adv, g_l1) = (value(g.total), value(g.adv), value(g.l1));
        drop(tape);
        self.gen_opt.step(&mut self.params.tensors, &g_grads)?;

        self.step += 1;
        Ok(StepReport {
            step: self.step,
            d_loss,
            g_total,
            g_adv,
            g_l1,
            d_grad_norm,
            g_grad_norm,
        })
    }

    /// Visit order of `n` pairs in epoch `epoch`.
    pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        RngStream::derive(seed, &[SHUFFLE_STREAM, epoch as u64]).shuffle(&mut order);
        order
    }

    /// One pass over `train` in `batch_size` chunks (the last may be short),
    /// then validation on `val`.
    pub fn run_epoch(&mut self, train: &[Pair], val: &[Pair]) -> Result<(EpochRecord, Vec<StepReport>)> {
        if train.is_empty() {
            return Err(Error::Config("training set is empty".into()));
        }
        let order = Self::epoch_order(self.cfg.seed, self.epoch, train.len());
        let mut reports = Vec::new();
        for chunk in order.chunks(self.cfg.batch_size) {
            let hazy: Vec<&Image> = chunk.iter().map(|&i| &train[i].0).collect();
            let clear: Vec<&Image> = chunk.iter().map(|&i| &train[i].1).collect();
            let (h, c) = (Image::batch_to_tensor(&hazy)?, Image::batch_to_tensor(&clear)?);
            reports.push(self.train_step(&h, &c)?);
        }
        self.epoch += 1;
        let mean = |f: fn(&StepReport) -> f64| reports.iter().map(f).sum::<f64>() / reports.len() as f64;
        let (val_ssim, val_psnr) = if val.is_empty() {
            (None, None)
        } else {
            let r = self.validate(val)?;
            (Some(r.mean_ssim), Some(r.mean_psnr))
        };
        let record = EpochRecord {
            epoch: self.epoch,
            steps: reports.len(),
            g_total: mean(|r| r.g_total),
            g_adv: mean(|r| r.g_adv),
            g_l1: mean(|r| r.g_l1),
            d_loss: mean(|r| r.d_loss),
            val_ssim,
            val_psnr,
        };
        Ok((record, reports))
    }

    /// PSNR/SSIM of the generator output against the clear image of each pair.
    pub fn validate(&self, pairs: &[Pair]) -> Result<QualityReport> {
        let hazy: Vec<&Image> = pairs.iter().map(|p| &p.0).collect();
        let out = dehaze(&self.params, &self.model.generator, &hazy, self.cfg.batch_size)?;
        let triples: Vec<(String, Image, Image)> = out
            .into_iter()
            .zip(pairs)
            .enumerate()
            .map(|(i, (o, p))| (i.to_string(), o, p.1.clone()))
            .collect();
        QualityReport::evaluate(&triples, false)
    }
}

/// Generator output for a batch tensor, without recording gradients.
pub fn generate<T: Scalar>(params: &ModelParams<T>, cfg: &GeneratorConfig, hazy: &Tensor<T>) -> Result<Tensor<T>> {
    let mut tape = Tape::no_grad();
    let vars = params.bind(&mut tape, "gen.", false);
    let x = tape.constant(hazy.clone());
    let y = generator_forward(&mut tape, &vars, cfg, x)?;
    tape.ensure_finite()?;
    Ok(tape.take_value(y))
}

/// Runs the generator over `images` in batches of `batch_size`.
pub fn dehaze<T: Scalar>(
    params: &ModelParams<T>,
    cfg: &GeneratorConfig,
    images: &[&Image],
    batch_size: usize,
) -> Result<Vec<Image>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(batch_size.max(1)) {
        let x = Image::batch_to_tensor::<T>(chunk)?;
        out.extend(Image::batch_from_tensor(&generate(params, cfg, &x)?)?);
    }
    Ok(out)
}

/// Result of [`train_loop`].
#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub trainer: Trainer<T>,
    pub log: Vec<EpochRecord>,
}

/// Where [`train_loop`] writes per-epoch artifacts.
#[derive(Debug, Clone, Default)]
pub struct TrainOutputs {
    pub checkpoint_dir: Option<PathBuf>,
    pub metrics_log: Option<PathBuf>,
}

pub fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("epoch-{epoch:04}.ckpt"))
}

/// Trains until `trainer.cfg.epochs` epochs are complete, continuing from
/// `trainer.epoch`. Writes a checkpoint and appends a log line per epoch.
pub fn train_loop<T: Scalar>(
    mut trainer: Trainer<T>,
    train: &[Pair],
    val: &[Pair],
    outputs: &TrainOutputs,
) -> Result<TrainOutcome<T>> {
    if train.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if let Some(dir) = &outputs.checkpoint_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut log = Vec::new();
    while trainer.epoch < trainer.cfg.epochs {
        let (record, _) = trainer.run_epoch(train, val)?;
        if let Some(dir) = &outputs.checkpoint_dir {
            super::checkpoint::save(&checkpoint_path(dir, trainer.epoch), &trainer)?;
        }
        if let Some(path) = &outputs.metrics_log {
            append_record(path, &record)?;
        }
        log.push(record);
    }
    Ok(TrainOutcome { trainer, log })
}

fn append_record(path: &Path, record: &EpochRecord) -> Result<()> {
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let line = serde_json::to_string(record).map_err(|e| Error::format(path, e.to_string()))?;
    writeln!(f, "{line}").map_err(|e| Error::io(path, e))
}
