//! Distortion and rate metrics on the `[0, 1]` pixel scale.

use crate::error::Result;
use crate::real::Real;
use crate::tensor::{check_same, Tensor};

/// PSNR in dB, or `None` when the images are identical.
pub fn psnr<T: Real>(x: &Tensor<T>, x_hat: &Tensor<T>) -> Result<Option<f64>> {
    let mse = mse(x, x_hat)?;
    Ok(psnr_from_mse(mse))
}

pub fn psnr_from_mse(mse: f64) -> Option<f64> {
    if mse > 0.0 {
        Some(10.0 * libm::log10(1.0 / mse))
    } else {
        None
    }
}

pub fn mse<T: Real>(x: &Tensor<T>, x_hat: &Tensor<T>) -> Result<f64> {
    check_same("mse", x.shape(), x_hat.shape())?;
    let n = x.len().max(1) as f64;
    let s: f64 = x
        .data()
        .iter()
        .zip(x_hat.data())
        .map(|(&a, &b)| {
            let d = a.to_f64() - b.to_f64();
            d * d
        })
        .sum();
    Ok(s / n)
}

/// Bits per pixel of a `bytes`-long stream for an `h × w` image.
pub fn bpp(bytes: usize, h: usize, w: usize) -> f64 {
    8.0 * bytes as f64 / (h * w) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(v: f64) -> Tensor<f64> {
        Tensor::full(&[1, 4, 4, 3], v)
    }

    #[test]
    fn closed_forms() {
        let p = psnr(&img(0.5), &img(0.5 + 1.0 / 255.0)).unwrap().unwrap();
        assert!((p - 48.1308).abs() < 1e-4);
        let p = psnr(&img(0.0), &img(0.5)).unwrap().unwrap();
        assert!((p - 6.0206).abs() < 1e-4);
        assert_eq!(psnr(&img(0.3), &img(0.3)).unwrap(), None);
        assert!((bpp(1000, 100, 100) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        assert!(psnr(&img(0.0), &Tensor::zeros(&[1, 4, 4, 1])).is_err());
    }
}
