//! Hyperprior, channel-conditional context and likelihoods for the rate term.

pub mod context;
pub mod hyper;
pub mod likelihood;
pub mod prior;
pub mod quantize;

use alloc::format;
use alloc::vec::Vec;

use rand_core::RngCore;

pub use context::{ChannelContext, EntropyParameters};
pub use hyper::{HyperAnalysis, HyperSynthesis, HYPER_FACTOR};
pub use prior::FactorizedPrior;
pub use quantize::{quantize, QuantMode};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::params::{Init, ParamSet};
use crate::real::Real;
use crate::tensor::Tensor;

/// Lower bound on predicted scales.
pub const SIGMA_MIN: f64 = 0.04;

/// Ordered channel chunk sizes over the latent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkSchedule(Vec<usize>);

impl ChunkSchedule {
    pub fn new(sizes: Vec<usize>, total: usize) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) || sizes.iter().sum::<usize>() != total {
            return Err(Error::Config(format!(
                "chunk sizes {sizes:?} must be positive and sum to {total}"
            )));
        }
        Ok(Self(sizes))
    }
    pub fn sizes(&self) -> &[usize] {
        &self.0
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    /// First channel of chunk `i`.
    pub fn offset(&self, i: usize) -> usize {
        self.0[..i].iter().sum()
    }
}

/// Per-element Gaussian parameters of one chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyParams<T> {
    pub mu: Tensor<T>,
    pub sigma: Tensor<T>,
}

/// Everything behind the rate term.
#[derive(Debug, Clone)]
pub struct EntropyModel {
    pub hyper_analysis: HyperAnalysis,
    pub hyper_synthesis: HyperSynthesis,
    pub prior: FactorizedPrior,
    pub contexts: Vec<ChannelContext>,
    pub params: Vec<EntropyParameters>,
    pub schedule: ChunkSchedule,
}

impl EntropyModel {
    pub fn new<T: Real, R: RngCore>(
        ps: &mut ParamSet<T>,
        init: &mut Init<'_, R>,
        cfg: &ModelConfig,
    ) -> Result<Self> {
        let m = cfg.latent_channels;
        let schedule = ChunkSchedule::new(cfg.chunks.clone(), m)?;
        let hyper_analysis = HyperAnalysis::new(ps, init, m, cfg.hyper_channels)?;
        let hyper_synthesis = HyperSynthesis::new(ps, init, cfg.hyper_channels, 2 * m)?;
        let prior = FactorizedPrior::new(ps, cfg.hyper_channels)?;
        let mut contexts = Vec::with_capacity(schedule.len());
        let mut params = Vec::with_capacity(schedule.len());
        for (i, &w) in schedule.sizes().iter().enumerate() {
            contexts.push(ChannelContext::new(
                ps,
                init,
                &format!("ctx{i}"),
                schedule.offset(i),
                cfg.context_channels,
            )?);
            params.push(EntropyParameters::new(
                ps,
                init,
                &format!("epm{i}"),
                cfg.context_channels + 2 * m,
                cfg.epm_hidden,
                w,
            )?);
        }
        Ok(Self {
            hyper_analysis,
            hyper_synthesis,
            prior,
            contexts,
            params,
            schedule,
        })
    }

    /// `(μ, σ)` vars for chunk `i` given the already decoded chunks `< i`.
    pub fn chunk_params<T: Real>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamSet<T>,
        decoded: &[Var],
        hyper: Var,
        i: usize,
    ) -> Result<(Var, Var)> {
        if decoded.len() != i || i >= self.schedule.len() {
            return Err(Error::ChunkOrder {
                expected: i,
                got: decoded.len(),
            });
        }
        for (j, &d) in decoded.iter().enumerate() {
            let c = g.value(d).channels();
            if c != self.schedule.sizes()[j] {
                return Err(crate::error::shape_err(
                    "channel context",
                    format!(
                        "chunk {j} has {c} channels, schedule says {}",
                        self.schedule.sizes()[j]
                    ),
                ));
            }
        }
        let [b, h, w, _] = g.value(hyper).dims4()?;
        let ctx = self.contexts[i].forward(g, ps, decoded, (b, h, w))?;
        self.params[i].forward(g, ps, ctx, hyper)
    }
}

/// Total information content, `Σ −log₂ p`, in bits.
pub fn rate_estimate<T: Real>(likelihoods: &[&Tensor<T>]) -> Result<f64> {
    let mut bits = 0.0f64;
    for t in likelihoods {
        for &p in t.data() {
            let p = p.to_f64();
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::NonFinite(
                    "rate_estimate: probability outside (0, 1]",
                ));
            }
            bits -= libm::log2(p);
        }
    }
    Ok(bits)
}
