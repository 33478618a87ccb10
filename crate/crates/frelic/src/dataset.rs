//! Training images and seeded random crops.

use std::path::{Path, PathBuf};

use frelic_core::Tensor;
use log::warn;
use rand::Rng;

use crate::error::{AppError, AppResult};
use crate::image_io::read_image;

#[derive(Debug, Clone)]
pub struct NamedImage {
    pub name: String,
    pub pixels: Tensor<f32>,
}

impl NamedImage {
    pub fn dims(&self) -> (usize, usize) {
        let s = self.pixels.shape();
        (s[1], s[2])
    }
}

fn is_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "ppm" | "pnm" | "png"))
}

/// Image files of a directory in name order.
pub fn list_images(dir: &Path) -> AppResult<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| AppError::io(dir, e))?;
    let mut paths = Vec::new();
    for e in entries {
        let p = e.map_err(|e| AppError::io(dir, e))?.path();
        if p.is_file() && is_image(&p) {
            paths.push(p);
        }
    }
    paths.sort();
    Ok(paths)
}

/// Loads every readable image with both sides at least `min_side`.
/// Unreadable or undersized files are skipped with a warning.
pub fn load_training_set(dir: &Path, min_side: usize) -> AppResult<Vec<NamedImage>> {
    let mut out = Vec::new();
    for p in list_images(dir)? {
        match read_image(&p) {
            Ok(pixels) => {
                let (h, w) = (pixels.shape()[1], pixels.shape()[2]);
                if h < min_side || w < min_side {
                    warn!(
                        "skipping {}: {h}x{w} is smaller than {min_side}",
                        p.display()
                    );
                    continue;
                }
                let name = p
                    .file_name()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned();
                out.push(NamedImage { name, pixels });
            }
            Err(e) => warn!("skipping {e}"),
        }
    }
    if out.is_empty() {
        return Err(AppError::data(
            dir,
            format!("no usable images of at least {min_side}x{min_side}"),
        ));
    }
    Ok(out)
}

/// Top-left offset of a `size × size` crop, uniform over valid positions.
pub fn crop_offset<R: Rng>(h: usize, w: usize, size: usize, rng: &mut R) -> (usize, usize) {
    (
        rng.random_range(0..=h - size),
        rng.random_range(0..=w - size),
    )
}

pub fn crop_at(img: &Tensor<f32>, top: usize, left: usize, size: usize) -> Tensor<f32> {
    let w = img.shape()[2];
    let mut data = Vec::with_capacity(size * size * 3);
    for y in top..top + size {
        let o = (y * w + left) * 3;
        data.extend_from_slice(&img.data()[o..o + size * 3]);
    }
    Tensor::new(vec![1, size, size, 3], data).expect("crop extents")
}

pub fn random_crop<R: Rng>(img: &Tensor<f32>, size: usize, rng: &mut R) -> Tensor<f32> {
    let (h, w) = (img.shape()[1], img.shape()[2]);
    let (top, left) = crop_offset(h, w, size, rng);
    crop_at(img, top, left, size)
}

/// A batch of crops: image index then offset, drawn in order from `rng`.
pub fn sample_batch<R: Rng>(
    images: &[NamedImage],
    batch: usize,
    size: usize,
    rng: &mut R,
) -> Tensor<f32> {
    let crops: Vec<Tensor<f32>> = (0..batch)
        .map(|_| {
            let i = rng.random_range(0..images.len());
            random_crop(&images[i].pixels, size, rng)
        })
        .collect();
    Tensor::stack_batch(&crops).expect("crops share a shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_image_gives_constant_crop() {
        let img = Tensor::full(&[1, 20, 30, 3], 0.25f32);
        let c = random_crop(&img, 8, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(c.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn crop_picks_the_right_pixels() {
        let img = Tensor::from_fn(&[1, 6, 7, 3], |i| i as f32);
        let c = crop_at(&img, 2, 3, 2);
        assert_eq!(c.data()[0], ((2 * 7 + 3) * 3) as f32);
        assert_eq!(c.data()[2 * 3], ((3 * 7 + 3) * 3) as f32);
    }
}
