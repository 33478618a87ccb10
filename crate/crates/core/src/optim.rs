//! Adam and the learning-rate schedule.

use alloc::vec::Vec;

use crate::error::{shape_err, Result};
use crate::params::ParamSet;
use crate::real::Real;
use crate::tensor::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;
pub const BASE_LR: f64 = 1e-4;
pub const FINAL_LR: f64 = 1e-5;
/// Fraction of training spent at the base rate.
pub const DECAY_START: f64 = 0.875;

/// First and second moments per parameter tensor, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(params: &ParamSet<T>) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|p| Tensor::zeros(p.value.shape()))
                .collect()
        };
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    /// One bias-corrected update from the gradients held in `params`.
    pub fn step(&mut self, params: &mut ParamSet<T>, lr: f64) -> Result<()> {
        if self.m.len() != params.len() {
            return Err(shape_err(
                "adam",
                alloc::format!("{} moments for {} params", self.m.len(), params.len()),
            ));
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - libm::pow(BETA1, t as f64);
        let c2 = 1.0 - libm::pow(BETA2, t as f64);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if m.shape() != p.value.shape() {
                return Err(shape_err(
                    "adam",
                    alloc::format!("moment shape for {}", p.name),
                ));
            }
            let (md, vd) = (m.data_mut(), v.data_mut());
            let gd = p.grad.data();
            for (i, x) in p.value.data_mut().iter_mut().enumerate() {
                let g = gd[i].to_f64();
                let mi = BETA1 * md[i].to_f64() + (1.0 - BETA1) * g;
                let vi = BETA2 * vd[i].to_f64() + (1.0 - BETA2) * g * g;
                md[i] = T::from_f64(mi);
                vd[i] = T::from_f64(vi);
                let upd = lr * (mi / c1) / (libm::sqrt(vi / c2) + EPS);
                *x = T::from_f64(x.to_f64() - upd);
            }
        }
        Ok(())
    }
}

/// Constant `base` for the first 87.5% of `total` steps, then linear to `fin`.
pub fn lr_schedule(step: u64, total: u64, base: f64, fin: f64) -> f64 {
    if total == 0 {
        return base;
    }
    let knee = DECAY_START * total as f64;
    let s = step.min(total) as f64;
    if s <= knee {
        base
    } else {
        base + (fin - base) * (s - knee) / (total as f64 - knee)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(v: f64) -> ParamSet<f64> {
        let mut ps = ParamSet::new();
        ps.add("w", Tensor::full(&[1], v)).unwrap();
        ps
    }

    #[test]
    fn schedule_points() {
        assert_eq!(lr_schedule(0, 1000, BASE_LR, FINAL_LR), 1e-4);
        assert_eq!(lr_schedule(875, 1000, BASE_LR, FINAL_LR), 1e-4);
        assert!((lr_schedule(1000, 1000, BASE_LR, FINAL_LR) - 1e-5).abs() < 1e-18);
        let mid = lr_schedule(937, 1000, BASE_LR, FINAL_LR);
        assert!(mid < 1e-4 && mid > 1e-5);
    }

    #[test]
    fn zero_gradient_keeps_params_and_decays_moments() {
        let mut ps = one(2.0);
        let mut opt = Adam::new(&ps);
        opt.m[0] = Tensor::full(&[1], 1.0);
        opt.v[0] = Tensor::full(&[1], 1.0);
        opt.step(&mut ps, 0.0).unwrap();
        assert_eq!(ps.iter().next().unwrap().value.data()[0], 2.0);
        assert!((opt.m[0].data()[0] - 0.9).abs() < 1e-15);
        assert!((opt.v[0].data()[0] - 0.999).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_moves_by_lr() {
        let mut ps = one(0.0);
        let mut opt = Adam::new(&ps);
        let id = ps.ids().next().unwrap();
        let mut last = 0.0;
        for _ in 0..200 {
            ps.get_mut(id).grad = Tensor::full(&[1], 3.0);
            opt.step(&mut ps, 0.01).unwrap();
            let x = ps.value(id).data()[0];
            let d = last - x;
            assert!((d - 0.01).abs() < 1e-6);
            last = x;
        }
    }
}
