//! 8-bit RGB images as `[1, H, W, 3]` tensors in `[0, 1]`.

use std::path::Path;

use frelic_core::Tensor;
use image::{ImageFormat, RgbImage};

use crate::error::{AppError, AppResult};

pub fn read_image(path: &Path) -> AppResult<Tensor<f32>> {
    let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    decode_image(&bytes).map_err(|msg| AppError::data(path, msg))
}

/// Decodes PPM (P6) or PNG by content.
pub fn decode_image(bytes: &[u8]) -> Result<Tensor<f32>, String> {
    let format = image::guess_format(bytes).map_err(|e| e.to_string())?;
    if !matches!(format, ImageFormat::Pnm | ImageFormat::Png) {
        return Err(format!("unsupported image format {format:?}"));
    }
    let img = image::load_from_memory_with_format(bytes, format)
        .map_err(|e| e.to_string())?
        .to_rgb8();
    Ok(from_rgb(&img))
}

pub fn from_rgb(img: &RgbImage) -> Tensor<f32> {
    let (w, h) = img.dimensions();
    let data = img.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
    Tensor::new(vec![1, h as usize, w as usize, 3], data).expect("rgb buffer matches dimensions")
}

/// Rounds to the nearest 8-bit level after clamping to `[0, 1]`.
pub fn to_rgb(t: &Tensor<f32>) -> AppResult<RgbImage> {
    let [b, h, w, c] = t.dims4()?;
    if b != 1 || c != 3 {
        return Err(AppError::Usage(format!(
            "expected [1, H, W, 3], got {:?}",
            t.shape()
        )));
    }
    let data = t.data().iter().map(|&v| quantize8(v)).collect();
    Ok(RgbImage::from_raw(w as u32, h as u32, data).expect("dimensions match"))
}

pub fn quantize8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes binary PPM (P6).
pub fn write_ppm(path: &Path, t: &Tensor<f32>) -> AppResult<()> {
    let img = to_rgb(t)?;
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.as_raw());
    std::fs::write(path, out).map_err(|e| AppError::io(path, e))
}

/// Writes PNG when the extension says so, PPM otherwise.
pub fn write_image(path: &Path, t: &Tensor<f32>) -> AppResult<()> {
    let png = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if png {
        to_rgb(t)?
            .save_with_format(path, ImageFormat::Png)
            .map_err(|e| AppError::data(path, e.to_string()))
    } else {
        write_ppm(path, t)
    }
}

/// The image as it survives an 8-bit round trip.
pub fn quantized(t: &Tensor<f32>) -> Tensor<f32> {
    t.map(|v| quantize8(v) as f32 / 255.0)
}
