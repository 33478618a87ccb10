//! Procedural RGB images for smoke training and experiments: smooth color
//! fields, flat shapes with hard edges, a periodic texture and mild grain.

use std::f32::consts::PI;
use std::path::Path;

use frelic_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::NamedImage;
use crate::error::AppResult;
use crate::image_io::{quantized, write_ppm};

fn color<R: Rng>(rng: &mut R) -> [f32; 3] {
    [rng.random(), rng.random(), rng.random()]
}

/// One `size × size` image, already on the 8-bit grid.
pub fn scene(size: usize, seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c0, c1, c2) = (color(&mut rng), color(&mut rng), color(&mut rng));
    let angle = rng.random::<f32>() * 2.0 * PI;
    let freq = 1.0 + rng.random::<f32>() * 2.0;
    let tex_amp = 0.03 + 0.05 * rng.random::<f32>();
    let shapes: Vec<(bool, f32, f32, f32, f32, [f32; 3])> = (0..rng.random_range(2..6))
        .map(|_| {
            (
                rng.random::<bool>(),
                rng.random::<f32>(),
                rng.random::<f32>(),
                0.08 + 0.25 * rng.random::<f32>(),
                0.08 + 0.25 * rng.random::<f32>(),
                color(&mut rng),
            )
        })
        .collect();
    let n = size as f32;
    let mut px = vec![0.0f32; size * size * 3];
    for y in 0..size {
        for x in 0..size {
            let (u, v) = (x as f32 / n, y as f32 / n);
            let t = (u * angle.cos() + v * angle.sin()).clamp(-1.0, 1.0) * 0.5 + 0.5;
            let r = ((u - 0.5).powi(2) + (v - 0.5).powi(2)).sqrt();
            let mut c = [0.0; 3];
            for k in 0..3 {
                c[k] = c0[k] * (1.0 - t) + c1[k] * t + (c2[k] - 0.5) * 0.3 * (1.0 - r);
            }
            for &(round, cx, cy, a, b, col) in &shapes {
                let inside = if round {
                    ((u - cx) / a).powi(2) + ((v - cy) / b).powi(2) <= 1.0
                } else {
                    (u - cx).abs() <= a * 0.7 && (v - cy).abs() <= b * 0.7
                };
                if inside {
                    c = col;
                }
            }
            let wave = tex_amp * (2.0 * PI * freq * (u * angle.sin() - v * angle.cos())).sin();
            for k in 0..3 {
                let grain = (rng.random::<f32>() - 0.5) * 0.03;
                px[(y * size + x) * 3 + k] = (c[k] + wave + grain).clamp(0.0, 1.0);
            }
        }
    }
    quantized(&Tensor::new(vec![1, size, size, 3], px).expect("scene dimensions"))
}

pub fn scenes(count: usize, size: usize, seed: u64) -> Vec<NamedImage> {
    (0..count)
        .map(|i| NamedImage {
            name: format!("scene{i:03}.ppm"),
            pixels: scene(size, seed.wrapping_mul(1000).wrapping_add(i as u64)),
        })
        .collect()
}

/// Writes `scenes(count, size, seed)` as PPM files into `dir`.
pub fn write_scenes(dir: &Path, count: usize, size: usize, seed: u64) -> AppResult<()> {
    for im in scenes(count, size, seed) {
        write_ppm(&dir.join(&im.name), &im.pixels)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenes_are_deterministic_and_varied() {
        let a = scenes(3, 32, 1);
        let b = scenes(3, 32, 1);
        assert_eq!(a[2].pixels, b[2].pixels);
        assert_ne!(a[0].pixels, a[1].pixels);
        assert!(a[0].pixels.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
