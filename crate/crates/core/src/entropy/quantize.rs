use rand_core::RngCore;

use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantMode {
    /// Additive `U(−½, ½)` noise (training proxy).
    Noise,
    /// Mean-shifted rounding `round(y − μ) + μ`, half away from zero.
    Round,
}

/// One uniform draw in `[−½, ½)` from 24 random bits.
#[inline]
pub fn uniform_noise<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u32() >> 8) as f64 / (1u32 << 24) as f64 - 0.5
}

/// A tensor of `U(−½, ½)` samples drawn in element order.
pub fn noise_like<T: Real, R: RngCore>(shape: &[usize], rng: &mut R) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::from_f64(uniform_noise(rng)))
}

/// Quantizes `y` around `mu` (pass zeros for plain rounding).
pub fn quantize<T: Real, R: RngCore>(
    y: &Tensor<T>,
    mu: &Tensor<T>,
    mode: QuantMode,
    rng: &mut R,
) -> Tensor<T> {
    match mode {
        QuantMode::Noise => {
            let n: Tensor<T> = noise_like(y.shape(), rng);
            y.zip_map(&n, |a, b| a + b)
        }
        QuantMode::Round => y.zip_map(mu, |a, m| (a - m).round() + m),
    }
}
