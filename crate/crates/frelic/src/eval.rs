//! Per-image rate/distortion evaluation and RD curves.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use frelic_core::metrics::{bpp, psnr};
use frelic_core::Model;

use crate::checkpoint::Checkpoint;
use crate::dataset::{list_images, NamedImage};
use crate::error::{AppError, AppResult};
use crate::image_io::{quantized, read_image};

pub const RD_HEADER: &str = "lambda,mean_bpp,mean_psnr_db";

#[derive(Debug, Clone, PartialEq)]
pub struct ImageResult {
    pub name: String,
    pub bytes: usize,
    pub bpp: f64,
    /// `None` for a lossless reconstruction.
    pub psnr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub images: Vec<ImageResult>,
    pub mean_bpp: f64,
    /// Mean over images with finite PSNR; `None` if every image is identical.
    pub mean_psnr_db: Option<f64>,
}

pub fn format_psnr(p: Option<f64>) -> String {
    p.map_or_else(|| "inf".into(), |v| format!("{v:.4}"))
}

/// Compresses, decompresses and scores one image against its 8-bit source.
pub fn evaluate_image(model: &Model<f32>, img: &NamedImage) -> AppResult<ImageResult> {
    let (h, w) = img.dims();
    let bytes = model.compress(&img.pixels)?.to_bytes();
    let recon = quantized(&model.decompress(&bytes)?);
    Ok(ImageResult {
        name: img.name.clone(),
        bytes: bytes.len(),
        bpp: bpp(bytes.len(), h, w),
        psnr_db: psnr(&img.pixels, &recon)?,
    })
}

pub fn evaluate(model: &Model<f32>, images: &[NamedImage]) -> AppResult<EvalReport> {
    let results = images
        .iter()
        .map(|im| evaluate_image(model, im))
        .collect::<AppResult<Vec<_>>>()?;
    Ok(EvalReport::from_results(results))
}

impl EvalReport {
    /// Aggregates in name order so the means do not depend on input order.
    pub fn from_results(mut images: Vec<ImageResult>) -> Self {
        images.sort_by(|a, b| a.name.cmp(&b.name));
        let n = images.len().max(1) as f64;
        let mean_bpp = images.iter().map(|r| r.bpp).sum::<f64>() / n;
        let finite: Vec<f64> = images.iter().filter_map(|r| r.psnr_db).collect();
        let mean_psnr_db =
            (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64);
        Self {
            images,
            mean_bpp,
            mean_psnr_db,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,bytes,bpp,psnr_db\n");
        for r in &self.images {
            let _ = writeln!(
                s,
                "{},{},{:.6},{}",
                r.name,
                r.bytes,
                r.bpp,
                format_psnr(r.psnr_db)
            );
        }
        let _ = writeln!(
            s,
            "mean,,{:.6},{}",
            self.mean_bpp,
            format_psnr(self.mean_psnr_db)
        );
        s
    }
}

/// Every image in `dir`, in name order. Unreadable files are data errors.
pub fn load_eval_set(dir: &Path) -> AppResult<Vec<NamedImage>> {
    let paths = list_images(dir)?;
    if paths.is_empty() {
        return Err(AppError::data(dir, "no images found"));
    }
    paths
        .iter()
        .map(|p| {
            Ok(NamedImage {
                name: p
                    .file_name()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned(),
                pixels: read_image(p)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdPoint {
    pub lambda: f64,
    pub mean_bpp: f64,
    pub mean_psnr_db: Option<f64>,
}

/// One point per checkpoint, sorted by rate.
pub fn rd_curve(checkpoints: &[PathBuf], images: &[NamedImage]) -> AppResult<Vec<RdPoint>> {
    if checkpoints.len() < 2 {
        return Err(AppError::Usage(
            "rd-curve needs at least two checkpoints".into(),
        ));
    }
    let mut points = Vec::with_capacity(checkpoints.len());
    for p in checkpoints {
        let ck = Checkpoint::load(p)?;
        let report = evaluate(&ck.model()?, images)?;
        points.push(RdPoint {
            lambda: ck.lambda,
            mean_bpp: report.mean_bpp,
            mean_psnr_db: report.mean_psnr_db,
        });
    }
    points.sort_by(|a, b| a.mean_bpp.total_cmp(&b.mean_bpp));
    Ok(points)
}

pub fn rd_csv(points: &[RdPoint]) -> String {
    let mut s = format!("{RD_HEADER}\n");
    for p in points {
        let _ = writeln!(
            s,
            "{},{:.6},{}",
            p.lambda,
            p.mean_bpp,
            format_psnr(p.mean_psnr_db)
        );
    }
    s
}

/// A self-contained SVG line plot of PSNR against bpp.
pub fn rd_svg(points: &[RdPoint]) -> String {
    let (w, h, m) = (480.0, 360.0, 48.0);
    let pts: Vec<(f64, f64, f64)> = points
        .iter()
        .filter_map(|p| p.mean_psnr_db.map(|q| (p.mean_bpp, q, p.lambda)))
        .collect();
    let span = |v: Vec<f64>| {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, lo + 0.5)
        }
    };
    let (x0, x1) = span(pts.iter().map(|p| p.0).collect());
    let (y0, y1) = span(pts.iter().map(|p| p.1).collect());
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{m} {m} V{b} H{r}" fill="none" stroke="black"/>"#,
        b = h - m,
        r = w - m
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">bpp</text>"#,
        w / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">PSNR (dB)</text>"#,
        h / 2.0,
        h / 2.0
    );
    for (v, x) in [(x0, sx(x0)), (x1, sx(x1))] {
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{}" text-anchor="middle">{v:.3}</text>"#,
            h - m + 14.0
        );
    }
    for (v, y) in [(y0, sy(y0)), (y1, sy(y1))] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{y:.1}" text-anchor="end">{v:.2}</text>"#,
            m - 4.0
        );
    }
    let line: Vec<String> = pts
        .iter()
        .map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1)))
        .collect();
    let _ = writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
        line.join(" ")
    );
    for p in &pts {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="steelblue"><title>lambda {}</title></circle>"#,
            sx(p.0),
            sy(p.1),
            p.2
        );
    }
    s.push_str("</svg>\n");
    s
}
