//! Channel-conditional context and the entropy-parameter network.

use alloc::format;

use rand_core::RngCore;

use crate::entropy::SIGMA_MIN;
use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::params::{Init, ParamId, ParamSet};
use crate::real::Real;
use crate::tensor::Tensor;
use crate::transforms::layers::{Conv, Linear};

/// Context features for one chunk from all earlier chunks.
#[derive(Debug, Clone)]
pub enum ChannelContext {
    /// First chunk: a learned per-channel constant.
    Constant(ParamId),
    /// Two 3×3 convs with GELU between over the concatenated earlier chunks.
    Conv { conv1: Conv, conv2: Conv },
}

impl ChannelContext {
    pub fn new<T: Real, R: RngCore>(
        ps: &mut ParamSet<T>,
        init: &mut Init<'_, R>,
        name: &str,
        prefix_channels: usize,
        out: usize,
    ) -> Result<Self> {
        if prefix_channels == 0 {
            return Ok(ChannelContext::Constant(
                ps.add(format!("{name}.const"), Tensor::zeros(&[out]))?,
            ));
        }
        Ok(ChannelContext::Conv {
            conv1: Conv::new(
                ps,
                init,
                &format!("{name}.conv1"),
                prefix_channels,
                out,
                3,
                1,
                1,
            )?,
            conv2: Conv::new(ps, init, &format!("{name}.conv2"), out, out, 3, 1, 1)?,
        })
    }

    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamSet<T>,
        decoded: &[Var],
        (b, h, w): (usize, usize, usize),
    ) -> Result<Var> {
        match self {
            ChannelContext::Constant(p) => {
                let c = g.param(ps, *p);
                g.broadcast_spatial(c, b, h, w)
            }
            ChannelContext::Conv { conv1, conv2 } => {
                let x = if decoded.len() == 1 {
                    decoded[0]
                } else {
                    g.concat(decoded, 3)?
                };
                let x = conv1.forward(g, ps, x)?;
                let x = g.gelu(x)?;
                conv2.forward(g, ps, x)
            }
        }
    }
}

/// `concat(context, hyper)` → 1×1 → GELU → 1×1 → `(μ, softplus(·) + σ_min)`.
#[derive(Debug, Clone)]
pub struct EntropyParameters {
    fc1: Linear,
    fc2: Linear,
    width: usize,
}

impl EntropyParameters {
    pub fn new<T: Real, R: RngCore>(
        ps: &mut ParamSet<T>,
        init: &mut Init<'_, R>,
        name: &str,
        cin: usize,
        hidden: usize,
        width: usize,
    ) -> Result<Self> {
        Ok(Self {
            fc1: Linear::new(ps, init, &format!("{name}.fc1"), cin, hidden, true)?,
            fc2: Linear::new(ps, init, &format!("{name}.fc2"), hidden, 2 * width, true)?,
            width,
        })
    }

    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamSet<T>,
        ctx: Var,
        hyper: Var,
    ) -> Result<(Var, Var)> {
        let x = g.concat(&[ctx, hyper], 3)?;
        let x = self.fc1.forward(g, ps, x)?;
        let x = g.gelu(x)?;
        let x = self.fc2.forward(g, ps, x)?;
        let parts = g.split(x, 3, &[self.width, self.width])?;
        let s = g.softplus(parts[1])?;
        let sigma = g.affine(s, T::ONE, T::from_f64(SIGMA_MIN))?;
        Ok((parts[0], sigma))
    }
}
