//! Dense row-major tensors.
//!
//! Feature maps use `batch × height × width × channels` layout throughout.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(shape_err(
                "tensor",
                format!("shape {:?} needs {} values, got {}", shape, n, data.len()),
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::ZERO)
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![v; n],
        }
    }

    pub fn scalar(v: T) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }
    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }
    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
    pub fn into_data(self) -> Vec<T> {
        self.data
    }
    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    #[inline]
    pub fn rank(&self) -> usize {
        self.shape.len()
    }
    /// Size of the last axis.
    #[inline]
    pub fn channels(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(shape_err(
                "reshape",
                format!("{:?} -> {:?}", self.shape, shape),
            ));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, o: &Self, f: impl Fn(T, T) -> T) -> Self {
        debug_assert_eq!(self.shape, o.shape);
        Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&o.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, o: &Self) {
        debug_assert_eq!(self.data.len(), o.data.len());
        for (a, &b) in self.data.iter_mut().zip(&o.data) {
            *a += b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }

    /// Sum of element-wise products, accumulated in 64 bits.
    pub fn dot(&self, o: &Self) -> f64 {
        self.data
            .iter()
            .zip(&o.data)
            .map(|(a, b)| a.to_f64() * b.to_f64())
            .sum()
    }

    pub fn max_abs_diff(&self, o: &Self) -> f64 {
        self.data
            .iter()
            .zip(&o.data)
            .map(|(a, b)| (a.to_f64() - b.to_f64()).abs())
            .fold(0.0, f64::max)
    }

    /// Interprets the tensor as `[B, H, W, C]`.
    pub fn dims4(&self) -> Result<[usize; 4]> {
        match self.shape[..] {
            [b, h, w, c] => Ok([b, h, w, c]),
            _ => Err(shape_err(
                "feature map",
                format!("expected rank 4 (B,H,W,C), got {:?}", self.shape),
            )),
        }
    }

    /// `[B, H, W, C]` slice of a single batch item.
    pub fn batch_item(&self, b: usize) -> Result<Self> {
        let [_, h, w, c] = self.dims4()?;
        let n = h * w * c;
        Ok(Self {
            shape: vec![1, h, w, c],
            data: self.data[b * n..(b + 1) * n].to_vec(),
        })
    }

    pub fn stack_batch(items: &[Self]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| shape_err("stack", "empty".into()))?;
        let [_, h, w, c] = first.dims4()?;
        let mut data = Vec::with_capacity(items.len() * h * w * c);
        let mut total = 0;
        for it in items {
            let [b, ih, iw, ic] = it.dims4()?;
            if (ih, iw, ic) != (h, w, c) {
                return Err(shape_err(
                    "stack",
                    format!("{:?} vs {:?}", it.shape, first.shape),
                ));
            }
            total += b;
            data.extend_from_slice(&it.data);
        }
        Self::new(vec![total, h, w, c], data)
    }

    /// Channel range `[start, start+len)` of the last axis.
    pub fn channel_slice(&self, start: usize, len: usize) -> Self {
        let c = self.channels();
        let outer = self.len() / c;
        let mut data = Vec::with_capacity(outer * len);
        for o in 0..outer {
            data.extend_from_slice(&self.data[o * c + start..o * c + start + len]);
        }
        let mut shape = self.shape.clone();
        *shape.last_mut().unwrap() = len;
        Self { shape, data }
    }

    /// Reflect-pads bottom/right edges of a `[B,H,W,C]` map to `(ph, pw)`.
    pub fn reflect_pad(&self, ph: usize, pw: usize) -> Result<Self> {
        let [b, h, w, c] = self.dims4()?;
        if ph < h || pw < w {
            return Err(shape_err("reflect_pad", format!("{h}x{w} -> {ph}x{pw}")));
        }
        if (ph > h && h == 0) || (pw > w && w == 0) {
            return Err(shape_err(
                "reflect_pad",
                "cannot pad an empty extent".into(),
            ));
        }
        let reflect = |i: usize, n: usize| -> usize {
            // period 2(n-1): 0..n-1, n-2..1
            let p = 2 * (n - 1);
            let m = i % p;
            if m < n {
                m
            } else {
                p - m
            }
        };
        let mut data = Vec::with_capacity(b * ph * pw * c);
        for bi in 0..b {
            for y in 0..ph {
                let sy = if h == 1 { 0 } else { reflect(y, h) };
                for x in 0..pw {
                    let sx = if w == 1 { 0 } else { reflect(x, w) };
                    let o = ((bi * h + sy) * w + sx) * c;
                    data.extend_from_slice(&self.data[o..o + c]);
                }
            }
        }
        Self::new(vec![b, ph, pw, c], data)
    }

    /// Top-left crop of a `[B,H,W,C]` map.
    pub fn crop(&self, oh: usize, ow: usize) -> Result<Self> {
        let [b, h, w, c] = self.dims4()?;
        if oh > h || ow > w {
            return Err(shape_err("crop", format!("{h}x{w} -> {oh}x{ow}")));
        }
        let mut data = Vec::with_capacity(b * oh * ow * c);
        for bi in 0..b {
            for y in 0..oh {
                let o = ((bi * h + y) * w) * c;
                data.extend_from_slice(&self.data[o..o + ow * c]);
            }
        }
        Self::new(vec![b, oh, ow, c], data)
    }

    pub fn concat_channels(parts: &[&Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| shape_err("concat", "empty".into()))?;
        let lead = &first.shape[..first.rank() - 1];
        let outer: usize = lead.iter().product();
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            if &p.shape[..p.rank() - 1] != lead {
                return Err(shape_err(
                    "concat",
                    format!("{:?} vs {:?}", p.shape, first.shape),
                ));
            }
            widths.push(p.channels());
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(outer * total);
        for o in 0..outer {
            for (p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&p.data[o * w..(o + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        Self::new(shape, data)
    }
}

impl Tensor<f32> {
    pub fn clamp01(&self) -> Self {
        self.map(|v| v.clamp(0.0, 1.0))
    }
}

pub(crate) fn check_same(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::Shape {
            op,
            detail: format!("{a:?} vs {b:?}"),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_checks_element_count() {
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn reflect_pad_mirrors_without_edge_repeat() {
        let t = Tensor::<f32>::new(vec![1, 1, 3, 1], vec![1.0, 2.0, 3.0]).unwrap();
        let p = t.reflect_pad(1, 6).unwrap();
        assert_eq!(p.data(), &[1.0, 2.0, 3.0, 2.0, 1.0, 2.0]);
        assert_eq!(p.crop(1, 3).unwrap(), t);
    }
}
