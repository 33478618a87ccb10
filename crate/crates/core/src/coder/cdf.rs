//! 16-bit quantized cumulative frequency tables.
//!
//! Table construction uses only 64-bit float arithmetic with a fixed
//! rational approximation of the normal CDF and `libm`'s software `exp`, so
//! the same `(σ, L)` yields the same table on every platform.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const PRECISION_BITS: u32 = 16;
pub const TOTAL: u32 = 1 << PRECISION_BITS;
/// Half-width of the latent symbol alphabet.
pub const ALPHABET_HALF_WIDTH: i32 = 255;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedCdf {
    /// `cum[0] = 0`, `cum[n] = TOTAL`, strictly increasing.
    cum: Vec<u32>,
}

impl QuantizedCdf {
    pub fn from_frequencies(freqs: &[u32]) -> Result<Self> {
        if freqs.is_empty() || freqs.contains(&0) {
            return Err(Error::Corrupt("frequency table needs positive entries"));
        }
        let mut cum = Vec::with_capacity(freqs.len() + 1);
        let mut acc = 0u32;
        cum.push(0);
        for &f in freqs {
            acc = acc
                .checked_add(f)
                .ok_or(Error::Corrupt("frequency overflow"))?;
            cum.push(acc);
        }
        if acc != TOTAL {
            return Err(Error::Corrupt("frequencies must sum to 2^16"));
        }
        Ok(Self { cum })
    }

    /// Scales non-negative masses to frequencies summing to `2^16`.
    ///
    /// Each symbol gets `max(1, ⌊p·2^16⌋)`; the sum is then corrected one count
    /// at a time by largest remainder (adding) or smallest remainder
    /// (removing, only from entries above one). Ties go to the lower index.
    pub fn from_masses(masses: &[f64]) -> Self {
        let n = masses.len();
        assert!(n > 0 && n <= TOTAL as usize);
        let total: f64 = masses.iter().map(|m| m.max(0.0)).sum();
        let mut freqs = vec![0u32; n];
        let mut fracs: Vec<(f64, usize)> = Vec::with_capacity(n);
        let mut sum = 0i64;
        for (i, &m) in masses.iter().enumerate() {
            let raw = if total > 0.0 {
                m.max(0.0) / total * TOTAL as f64
            } else {
                TOTAL as f64 / n as f64
            };
            let whole = libm::floor(raw);
            freqs[i] = (whole as u32).max(1);
            sum += freqs[i] as i64;
            fracs.push((raw - whole, i));
        }
        let target = TOTAL as i64;
        if sum < target {
            fracs.sort_unstable_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let mut k = 0;
            while sum < target {
                freqs[fracs[k % n].1] += 1;
                sum += 1;
                k += 1;
            }
        } else if sum > target {
            fracs.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            while sum > target {
                for &(_, i) in &fracs {
                    if sum == target {
                        break;
                    }
                    if freqs[i] > 1 {
                        freqs[i] -= 1;
                        sum -= 1;
                    }
                }
            }
        }
        Self::from_frequencies(&freqs).expect("construction keeps the invariants")
    }

    /// Zero-centered discretized Gaussian over `[−L, L]` plus a final
    /// escape symbol holding both tails.
    pub fn gaussian(sigma: f64, half_width: i32) -> Self {
        let l = half_width;
        let mut masses = Vec::with_capacity(2 * l as usize + 2);
        for k in -l..=l {
            masses.push(gaussian_bin(k as f64, sigma));
        }
        let tail = approx_normal_cdf((-(l as f64) - 0.5) / sigma);
        masses.push(2.0 * tail);
        Self::from_masses(&masses)
    }

    /// Logistic with location `loc` and scale `scale` over `[−L, L]` plus escape.
    pub fn logistic(loc: f64, scale: f64, half_width: i32) -> Self {
        let l = half_width;
        let mut masses = Vec::with_capacity(2 * l as usize + 2);
        for k in -l..=l {
            masses.push(logistic_bin(k as f64 - loc, scale));
        }
        let lo = logistic_cdf((-(l as f64) - 0.5 - loc) / scale);
        let hi = logistic_cdf((-(l as f64) - 0.5 + loc) / scale);
        masses.push(lo + hi);
        Self::from_masses(&masses)
    }

    pub fn num_symbols(&self) -> usize {
        self.cum.len() - 1
    }
    #[inline]
    pub fn start(&self, s: usize) -> u32 {
        self.cum[s]
    }
    #[inline]
    pub fn freq(&self, s: usize) -> u32 {
        self.cum[s + 1] - self.cum[s]
    }
    pub fn cumulative(&self) -> &[u32] {
        &self.cum
    }

    /// Symbol whose interval contains `target` (`0 ≤ target < 2^16`).
    #[inline]
    pub fn lookup(&self, target: u32) -> usize {
        // last index with cum[i] <= target
        self.cum.partition_point(|&c| c <= target) - 1
    }
}

/// Gaussian tables cover `±⌈6σ⌉` symbols around zero, capped at the alphabet
/// half-width; anything outside goes through the escape symbol.
pub const TAIL_SIGMAS: f64 = 6.0;

pub fn gaussian_support(sigma: f64, max_half_width: i32) -> i32 {
    let k = libm::ceil(TAIL_SIGMAS * sigma);
    if k >= max_half_width as f64 {
        max_half_width
    } else {
        (k as i32).max(1)
    }
}

/// Logistic tables cover `|loc| + 20·scale` (tail mass below 1e-8).
pub const TAIL_SCALES: f64 = 20.0;

pub fn logistic_support(loc: f64, scale: f64, max_half_width: i32) -> i32 {
    let k = libm::ceil(libm::fabs(loc) + TAIL_SCALES * scale);
    if k >= max_half_width as f64 {
        max_half_width
    } else {
        (k as i32).max(1)
    }
}

/// A zero-centered table: value `v ∈ [−L, L]` is index `v + L`, and index
/// `2L + 1` is the escape symbol followed by a raw 16-bit value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolTable {
    pub cdf: QuantizedCdf,
    pub half_width: i32,
}

impl SymbolTable {
    pub fn gaussian(sigma: f64, max_half_width: i32) -> Self {
        let half_width = gaussian_support(sigma, max_half_width);
        Self {
            cdf: QuantizedCdf::gaussian(sigma, half_width),
            half_width,
        }
    }

    pub fn logistic(loc: f64, scale: f64, max_half_width: i32) -> Self {
        let half_width = logistic_support(loc, scale, max_half_width);
        Self {
            cdf: QuantizedCdf::logistic(loc, scale, half_width),
            half_width,
        }
    }

    #[inline]
    pub fn escape(&self) -> usize {
        (2 * self.half_width + 1) as usize
    }

    #[inline]
    pub fn index_of(&self, v: i32) -> Option<usize> {
        if v.abs() <= self.half_width {
            Some((v + self.half_width) as usize)
        } else {
            None
        }
    }

    /// Probability the table assigns to value `v` (escape mass if outside).
    pub fn probability(&self, v: i32) -> f64 {
        let i = self.index_of(v).unwrap_or(self.escape());
        self.cdf.freq(i) as f64 / TOTAL as f64
    }
}

/// Normal CDF through the 5-term rational erfc approximation
/// (absolute error below 1.5e-7), evaluated in the lower tail.
pub fn approx_normal_cdf(x: f64) -> f64 {
    const P: f64 = 0.327_591_1;
    const A: [f64; 5] = [
        0.254_829_592,
        -0.284_496_736,
        1.421_413_741,
        -1.453_152_027,
        1.061_405_429,
    ];
    let z = libm::fabs(x) * core::f64::consts::FRAC_1_SQRT_2;
    let t = 1.0 / (1.0 + P * z);
    let poly = t * (A[0] + t * (A[1] + t * (A[2] + t * (A[3] + t * A[4]))));
    let lower = 0.5 * poly * libm::exp(-z * z);
    if x < 0.0 {
        lower
    } else {
        1.0 - lower
    }
}

fn gaussian_bin(k: f64, sigma: f64) -> f64 {
    let a = libm::fabs(k);
    (approx_normal_cdf((0.5 - a) / sigma) - approx_normal_cdf((-0.5 - a) / sigma)).max(0.0)
}

fn logistic_cdf(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn logistic_bin(d: f64, scale: f64) -> f64 {
    let a = libm::fabs(d);
    (logistic_cdf((0.5 - a) / scale) - logistic_cdf((-0.5 - a) / scale)).max(0.0)
}
