//! Rate-distortion training loop with checkpoint/resume.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use frelic_core::metrics::psnr_from_mse;
use frelic_core::optim::{lr_schedule, Adam, BASE_LR, FINAL_LR};
use frelic_core::{Error, FfnVariant, Graph, Model, ModelConfig, ParamSet, Tensor};
use log::{error, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, RngState};
use crate::dataset::{load_training_set, sample_batch, NamedImage};
use crate::error::{AppError, AppResult};

pub const LOG_HEADER: &str = "step,loss,bpp,mse,psnr,lr";
/// ChaCha stream used for crops and quantization noise; stream 0 initializes weights.
const DATA_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    /// Stored in stream headers.
    pub lambda_index: u8,
    pub batch_size: usize,
    pub crop_size: usize,
    pub steps: u64,
    pub base_lr: f64,
    pub final_lr: f64,
    pub seed: u64,
    pub log_every: u64,
    /// Zero writes only the final checkpoint.
    pub checkpoint_every: u64,
    /// `tiny` or `default`.
    pub preset: String,
    pub lf_enabled: bool,
    pub hf_enabled: bool,
    pub casa_enabled: bool,
    pub ffn: String,
    /// Further model fields by name, e.g. `embed_channels = 16`.
    pub model: BTreeMap<String, toml::Value>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.013,
            lambda_index: 0,
            batch_size: 4,
            crop_size: 64,
            steps: 2000,
            base_lr: BASE_LR,
            final_lr: FINAL_LR,
            seed: 0,
            log_every: 1,
            checkpoint_every: 0,
            preset: "tiny".into(),
            lf_enabled: true,
            hf_enabled: true,
            casa_enabled: true,
            ffn: FfnVariant::Mlgffn.as_str().into(),
            model: BTreeMap::new(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> AppResult<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| AppError::Usage(format!("train config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> AppResult<()> {
        let bad = |m: String| Err(AppError::Usage(format!("train config: {m}")));
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if self.crop_size == 0
            || !self
                .crop_size
                .is_multiple_of(frelic_core::codec::PAD_MULTIPLE)
        {
            return bad(format!(
                "crop_size {} must be a positive multiple of 64",
                self.crop_size
            ));
        }
        if self.batch_size == 0 || self.steps == 0 {
            return bad("batch_size and steps must be positive".into());
        }
        if self.seed > i64::MAX as u64 {
            return bad(format!("seed {} exceeds {}", self.seed, i64::MAX));
        }
        if !(self.base_lr > 0.0 && self.final_lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        self.model_config().map(|_| ())
    }

    pub fn model_config(&self) -> AppResult<ModelConfig> {
        let mut c = match self.preset.as_str() {
            "tiny" => ModelConfig::tiny(),
            "default" => ModelConfig::default(),
            p => return Err(AppError::Usage(format!("unknown preset {p:?}"))),
        };
        c.lf_enabled = self.lf_enabled;
        c.hf_enabled = self.hf_enabled;
        c.casa_enabled = self.casa_enabled;
        c.ffn = self.ffn.parse()?;
        let mut chunks_set = false;
        for (k, v) in &self.model {
            let text = match v {
                toml::Value::String(s) => s.clone(),
                toml::Value::Array(a) => a
                    .iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
                other => other.to_string(),
            };
            c.set(k, &text)?;
            chunks_set |= k == "chunks";
        }
        if self.model.contains_key("latent_channels") && !chunks_set {
            c.chunks = frelic_core::config::default_chunks(c.latent_channels);
        }
        c.validate()?;
        Ok(c)
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub step: u64,
    pub loss: f64,
    pub bpp: f64,
    pub mse: f64,
    pub lr: f64,
}

impl StepLog {
    pub fn csv_row(&self) -> String {
        let psnr = psnr_from_mse(self.mse).map_or_else(|| "inf".to_string(), |p| format!("{p:.4}"));
        format!(
            "{},{:.6},{:.6},{:.8},{psnr},{:.3e}",
            self.step, self.loss, self.bpp, self.mse, self.lr
        )
    }
}

pub struct Trainer {
    pub config: TrainConfig,
    pub model: Model<f32>,
    pub opt: Adam<f32>,
    /// Completed updates.
    pub step: u64,
    rng: ChaCha8Rng,
    images: Vec<NamedImage>,
}

impl Trainer {
    pub fn new(config: TrainConfig, images: Vec<NamedImage>) -> AppResult<Self> {
        config.validate()?;
        check_images(&images, config.crop_size)?;
        let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut model = Model::new(config.model_config()?, &mut init_rng)?;
        model.lambda_index = config.lambda_index;
        let opt = Adam::new(&model.params);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(DATA_STREAM);
        Ok(Self {
            config,
            model,
            opt,
            step: 0,
            rng,
            images,
        })
    }

    /// Continues from a checkpoint written by [`Trainer::checkpoint`].
    pub fn resume(ck: &Checkpoint, images: Vec<NamedImage>) -> AppResult<Self> {
        let config = TrainConfig::from_toml(&ck.train_config)?;
        check_images(&images, config.crop_size)?;
        let model = ck.model()?;
        let opt = ck.adam.clone().ok_or_else(|| {
            AppError::Usage("checkpoint has no optimizer state to resume from".into())
        })?;
        let rng = ck
            .rng
            .ok_or_else(|| AppError::Usage("checkpoint has no RNG state to resume from".into()))?
            .restore();
        Ok(Self {
            config,
            model,
            opt,
            step: ck.step,
            rng,
            images,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model_config: self.model.config.clone(),
            lambda: self.config.lambda,
            lambda_index: self.config.lambda_index,
            train_config: self.config.to_toml(),
            step: self.step,
            rng: Some(RngState::capture(&self.rng)),
            params: self.model.params.clone(),
            adam: Some(self.opt.clone()),
        }
    }

    pub fn images(&self) -> &[NamedImage] {
        &self.images
    }

    /// One forward/backward/update on a fresh batch.
    pub fn step_once(&mut self) -> AppResult<StepLog> {
        let lr = lr_schedule(
            self.step,
            self.config.steps,
            self.config.base_lr,
            self.config.final_lr,
        );
        let batch = sample_batch(
            &self.images,
            self.config.batch_size,
            self.config.crop_size,
            &mut self.rng,
        );
        let mut g = Graph::new();
        let out = match self
            .model
            .forward_train(&mut g, &batch, self.config.lambda, &mut self.rng)
        {
            Ok(o) => o,
            Err(Error::NonFinite(op)) => {
                return Err(self.abort(&format!("non-finite value produced by {op}"), &batch))
            }
            Err(e) => return Err(e.into()),
        };
        if !out.loss_value.is_finite() {
            return Err(self.abort("non-finite loss", &batch));
        }
        self.model.params.zero_grad();
        g.backward(out.loss, &mut self.model.params)?;
        if self.model.params.iter().any(|p| !p.grad.all_finite()) {
            return Err(self.abort("non-finite gradient", &batch));
        }
        self.opt.step(&mut self.model.params, lr)?;
        self.step += 1;
        Ok(StepLog {
            step: self.step,
            loss: out.loss_value,
            bpp: out.bpp,
            mse: out.mse,
            lr,
        })
    }

    fn abort(&self, what: &str, batch: &Tensor<f32>) -> AppError {
        let mut dump = format!("training aborted at step {}: {what}\n", self.step + 1);
        let _ = writeln!(dump, "  batch: {}", stats(batch));
        dump_tensors(&mut dump, &self.model.params);
        error!("{dump}");
        AppError::Training(
            dump.lines().next().unwrap_or(what).to_string() + &diagnostic_tail(&self.model.params),
        )
    }

    /// Runs until `config.steps`, writing CSV rows to `log` and calling
    /// `on_checkpoint` every `checkpoint_every` steps.
    pub fn run(
        &mut self,
        mut log: Option<&mut dyn Write>,
        mut on_checkpoint: impl FnMut(&Self) -> AppResult<()>,
    ) -> AppResult<Vec<StepLog>> {
        if self.step == 0 {
            if let Some(w) = log.as_deref_mut() {
                writeln!(w, "{LOG_HEADER}").map_err(|e| AppError::io("training log", e))?;
            }
        }
        let mut history = Vec::new();
        while self.step < self.config.steps {
            let row = self.step_once()?;
            if self.config.log_every > 0
                && (row.step % self.config.log_every == 0 || row.step == self.config.steps)
            {
                if let Some(w) = log.as_deref_mut() {
                    writeln!(w, "{}", row.csv_row())
                        .map_err(|e| AppError::io("training log", e))?;
                }
                info!("{}", row.csv_row());
            }
            history.push(row);
            let every = self.config.checkpoint_every;
            if every > 0 && row.step % every == 0 && row.step < self.config.steps {
                on_checkpoint(self)?;
            }
        }
        on_checkpoint(self)?;
        Ok(history)
    }
}

fn check_images(images: &[NamedImage], crop: usize) -> AppResult<()> {
    if images.is_empty() {
        return Err(AppError::Usage("no training images".into()));
    }
    for im in images {
        let (h, w) = im.dims();
        if h < crop || w < crop {
            return Err(AppError::Usage(format!(
                "{} is {h}x{w}, smaller than the {crop} crop",
                im.name
            )));
        }
    }
    Ok(())
}

fn stats(t: &Tensor<f32>) -> String {
    let bad = t.data().iter().filter(|v| !v.is_finite()).count();
    let (lo, hi) = t
        .data()
        .iter()
        .filter(|v| v.is_finite())
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    format!(
        "shape {:?} non-finite {bad} range [{lo:e}, {hi:e}]",
        t.shape()
    )
}

fn dump_tensors(out: &mut String, ps: &ParamSet<f32>) {
    for p in ps.iter() {
        if !p.value.all_finite() || !p.grad.all_finite() {
            let _ = writeln!(
                out,
                "  {} value {} grad {}",
                p.name,
                stats(&p.value),
                stats(&p.grad)
            );
        }
    }
}

fn diagnostic_tail(ps: &ParamSet<f32>) -> String {
    let bad: Vec<&str> = ps
        .iter()
        .filter(|p| !p.value.all_finite() || !p.grad.all_finite())
        .map(|p| p.name.as_str())
        .collect();
    if bad.is_empty() {
        String::new()
    } else {
        format!(" (offending tensors: {})", bad.join(", "))
    }
}

/// Loads the data directory, trains, and writes the final checkpoint to `out`.
pub fn train_from_dir(
    config: TrainConfig,
    data: &Path,
    out: &Path,
    log_path: Option<&Path>,
    resume: Option<&Path>,
) -> AppResult<Checkpoint> {
    let images = load_training_set(data, config.crop_size)?;
    let mut trainer = match resume {
        Some(p) => Trainer::resume(&Checkpoint::load(p)?, images)?,
        None => Trainer::new(config, images)?,
    };
    let mut file = match log_path {
        Some(p) => {
            let f = std::fs::OpenOptions::new()
                .create(true)
                .append(trainer.step > 0)
                .write(true)
                .truncate(trainer.step == 0)
                .open(p)
                .map_err(|e| AppError::io(p, e))?;
            Some(std::io::BufWriter::new(f))
        }
        None => None,
    };
    trainer.run(file.as_mut().map(|f| f as &mut dyn Write), |t| {
        t.checkpoint().save(out)
    })?;
    if let Some(f) = file.as_mut() {
        f.flush().map_err(|e| AppError::io("training log", e))?;
    }
    Ok(trainer.checkpoint())
}
