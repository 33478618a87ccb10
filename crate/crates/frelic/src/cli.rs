//! Command-line surface.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use frelic_core::coder::Bitstream;
use log::info;

use crate::checkpoint::Checkpoint;
use crate::error::{AppError, AppResult};
use crate::eval::{evaluate, format_psnr, load_eval_set, rd_csv, rd_curve, rd_svg};
use crate::image_io::{read_image, write_image};
use crate::trainer::{train_from_dir, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "frelic", version, about = "Learned image codec")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a directory of PPM/PNG images.
    Train {
        /// TOML file of `key = value` training settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint to write.
        #[arg(long)]
        out: PathBuf,
        /// CSV training log.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Continue from this checkpoint instead of starting fresh.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Compress an image to a bitstream.
    Compress {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct an image (PPM, or PNG by extension) from a bitstream.
    Decompress {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-image bpp and PSNR over a directory.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Mean (bpp, PSNR) per checkpoint as CSV and SVG.
    RdCurve {
        /// Comma-separated checkpoints.
        #[arg(long, value_delimiter = ',', required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Writes `<out>.csv` and `<out>.svg`.
        #[arg(long)]
        out: PathBuf,
    },
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> AppResult<()> {
    std::fs::write(path, bytes).map_err(|e| AppError::io(path, e))
}

fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

pub fn run(cli: Cli) -> AppResult<()> {
    match cli.command {
        Command::Train {
            config,
            data,
            out,
            log,
            resume,
        } => {
            let cfg = match &config {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| AppError::io(p, e))?;
                    TrainConfig::from_toml(&text)?
                }
                None => TrainConfig::default(),
            };
            let ck = train_from_dir(cfg, &data, &out, log.as_deref(), resume.as_deref())?;
            info!("wrote {} after {} steps", out.display(), ck.step);
        }
        Command::Compress { model, input, out } => {
            let m = Checkpoint::load(&model)?.model()?;
            let img = read_image(&input)?;
            let bs = m.compress(&img)?;
            let bytes = bs.to_bytes();
            let (h, w) = (img.shape()[1], img.shape()[2]);
            write(&out, &bytes)?;
            println!(
                "{} bytes, {:.4} bpp",
                bytes.len(),
                frelic_core::metrics::bpp(bytes.len(), h, w)
            );
        }
        Command::Decompress { model, input, out } => {
            let m = Checkpoint::load(&model)?.model()?;
            let bytes = std::fs::read(&input).map_err(|e| AppError::io(&input, e))?;
            let header = Bitstream::peek_header(&bytes)
                .map_err(|e| AppError::data(&input, e.to_string()))?;
            if header.model_id != m.model_id() {
                return Err(AppError::Mismatch(format!(
                    "{}: stream was produced by model {:016x}, not {:016x}",
                    input.display(),
                    header.model_id,
                    m.model_id()
                )));
            }
            let img = m
                .decompress(&bytes)
                .map_err(|e| AppError::data(&input, e.to_string()))?;
            write_image(&out, &img)?;
        }
        Command::Eval {
            model,
            data,
            report,
        } => {
            let m = Checkpoint::load(&model)?.model()?;
            let images = load_eval_set(&data)?;
            let r = evaluate(&m, &images)?;
            write(&report, r.to_csv())?;
            println!(
                "{} images, mean {:.4} bpp, {} dB",
                r.images.len(),
                r.mean_bpp,
                format_psnr(r.mean_psnr_db)
            );
        }
        Command::RdCurve { models, data, out } => {
            let images = load_eval_set(&data)?;
            let points = rd_curve(&models, &images)?;
            write(&with_suffix(&out, ".csv"), rd_csv(&points))?;
            write(&with_suffix(&out, ".svg"), rd_svg(&points))?;
        }
    }
    Ok(())
}
