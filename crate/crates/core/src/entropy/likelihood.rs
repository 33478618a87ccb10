//! Discretized continuous densities: mass of a unit-width bin.

use crate::graph::PROB_FLOOR;
use crate::real::{normal_cdf, normal_pdf, sigmoid, Real};

/// `Φ((v+½)/σ) − Φ((v−½)/σ)` where `v = ŷ − μ`, floored at 1e-9.
#[inline]
pub fn gaussian_mass<T: Real>(v: T, sigma: T) -> T {
    let half = T::from_f64(0.5);
    let a = v.abs();
    // evaluate in the lower tail where erfc keeps relative precision
    let p = normal_cdf((half - a) / sigma) - normal_cdf((-half - a) / sigma);
    p.max(T::from_f64(PROB_FLOOR))
}

/// `(∂p/∂v, ∂p/∂σ)`; zero where the floor is active.
#[inline]
pub fn gaussian_mass_grad<T: Real>(v: T, sigma: T) -> (T, T) {
    let half = T::from_f64(0.5);
    let a = v.abs();
    let p = normal_cdf((half - a) / sigma) - normal_cdf((-half - a) / sigma);
    if p < T::from_f64(PROB_FLOOR) {
        return (T::ZERO, T::ZERO);
    }
    let u = (v + half) / sigma;
    let l = (v - half) / sigma;
    let (pu, pl) = (normal_pdf(u), normal_pdf(l));
    ((pu - pl) / sigma, -(pu * u - pl * l) / sigma)
}

#[inline]
fn logistic_pdf<T: Real>(x: T) -> T {
    let s = sigmoid(x);
    s * (T::ONE - s)
}

/// `F((d+½)/s) − F((d−½)/s)` with `F` the logistic CDF, floored at 1e-9.
#[inline]
pub fn logistic_mass<T: Real>(d: T, scale: T) -> T {
    let half = T::from_f64(0.5);
    let a = d.abs();
    let p = sigmoid((half - a) / scale) - sigmoid((-half - a) / scale);
    p.max(T::from_f64(PROB_FLOOR))
}

/// `(∂p/∂d, ∂p/∂s)`; zero where the floor is active.
#[inline]
pub fn logistic_mass_grad<T: Real>(d: T, scale: T) -> (T, T) {
    let half = T::from_f64(0.5);
    let a = d.abs();
    let p = sigmoid((half - a) / scale) - sigmoid((-half - a) / scale);
    if p < T::from_f64(PROB_FLOOR) {
        return (T::ZERO, T::ZERO);
    }
    let hi = (d + half) / scale;
    let lo = (d - half) / scale;
    let (fh, fl) = (logistic_pdf(hi), logistic_pdf(lo));
    ((fh - fl) / scale, -(fh * hi - fl * lo) / scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    // independent oracle: Φ via a Taylor series of erf summed in f64
    fn phi_series(x: f64) -> f64 {
        let z = x / core::f64::consts::SQRT_2;
        let mut term = z;
        let mut sum = z;
        let mut n = 0.0;
        while term.abs() > 1e-18 {
            n += 1.0;
            term *= -z * z / n;
            sum += term / (2.0 * n + 1.0);
        }
        0.5 * (1.0 + 2.0 / core::f64::consts::PI.sqrt() * sum)
    }

    #[test]
    fn unit_sigma_mass_at_mean() {
        let oracle = phi_series(0.5) - phi_series(-0.5);
        assert!((oracle - 0.382_924_9).abs() < 1e-7);
        assert!((gaussian_mass(0.0f64, 1.0) - oracle).abs() < 1e-12);
        assert!((gaussian_mass(0.0f32, 1.0) as f64 - 0.382_924_9).abs() < 1e-6);
    }

    #[test]
    fn gaussian_symmetric_and_monotone() {
        for s in [0.04, 0.3, 1.0, 7.0] {
            let mut prev = f64::INFINITY;
            for i in 0..40 {
                let d = i as f64 * 0.25;
                let p = gaussian_mass(d, s);
                assert_eq!(p, gaussian_mass(-d, s));
                assert!(p <= prev);
                prev = p;
            }
        }
    }

    #[test]
    fn logistic_unit_scale_at_zero() {
        // 2·sigmoid(0.5) − 1
        let expect = 2.0 / (1.0 + (-0.5f64).exp()) - 1.0;
        assert!((expect - 0.244_919).abs() < 1e-6);
        assert!((logistic_mass(0.0f64, 1.0) - expect).abs() < 1e-14);
    }

    #[test]
    fn mass_grad_matches_difference_quotient() {
        let h = 1e-6;
        for &(v, s) in &[(0.3f64, 0.7f64), (-1.2, 2.0), (2.5, 0.9), (0.0, 0.2)] {
            let (gv, gs) = gaussian_mass_grad(v, s);
            let nv = (gaussian_mass(v + h, s) - gaussian_mass(v - h, s)) / (2.0 * h);
            let ns = (gaussian_mass(v, s + h) - gaussian_mass(v, s - h)) / (2.0 * h);
            assert!((gv - nv).abs() < 1e-7, "{gv} {nv}");
            assert!((gs - ns).abs() < 1e-7, "{gs} {ns}");
            let (gv, gs) = logistic_mass_grad(v, s);
            let nv = (logistic_mass(v + h, s) - logistic_mass(v - h, s)) / (2.0 * h);
            let ns = (logistic_mass(v, s + h) - logistic_mass(v, s - h)) / (2.0 * h);
            assert!((gv - nv).abs() < 1e-7);
            assert!((gs - ns).abs() < 1e-7);
        }
    }
}
