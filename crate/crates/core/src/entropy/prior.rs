//! Learned per-channel logistic prior for the hyper-latent.

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::params::{ParamId, ParamSet};
use crate::real::{softplus, Real};
use crate::tensor::Tensor;

/// Smallest logistic scale.
pub const PRIOR_SCALE_MIN: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct FactorizedPrior {
    pub loc: ParamId,
    pub raw_scale: ParamId,
}

impl FactorizedPrior {
    pub fn new<T: Real>(ps: &mut ParamSet<T>, channels: usize) -> Result<Self> {
        // softplus(0.5413) ≈ 1
        Ok(Self {
            loc: ps.add("prior.loc", Tensor::zeros(&[channels]))?,
            raw_scale: ps.add(
                "prior.raw_scale",
                Tensor::full(&[channels], T::from_f64(0.5413)),
            )?,
        })
    }

    /// `(loc, scale)` per channel as plain values.
    pub fn values<T: Real>(&self, ps: &ParamSet<T>) -> (Tensor<T>, Tensor<T>) {
        let loc = ps.value(self.loc).clone();
        let scale = ps
            .value(self.raw_scale)
            .map(|r| softplus(r) + T::from_f64(PRIOR_SCALE_MIN));
        (loc, scale)
    }

    /// Per-element likelihood of `z` (integer-valued at inference).
    pub fn likelihood<T: Real>(&self, g: &mut Graph<T>, ps: &ParamSet<T>, z: Var) -> Result<Var> {
        let loc = g.param(ps, self.loc);
        let raw = g.param(ps, self.raw_scale);
        let s = g.softplus(raw)?;
        let scale = g.affine(s, T::ONE, T::from_f64(PRIOR_SCALE_MIN))?;
        g.logistic_likelihood(z, loc, scale)
    }
}
