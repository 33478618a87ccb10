//! Spatial-aware self-attention.
//!
//! Channels are split between two paths. The high-frequency path runs
//! multi-head attention inside non-overlapping windows. The low-frequency
//! path lets every full-resolution query attend to one average-pooled
//! key/value token per window, across the whole map. Each path has its own
//! output projection and the results are concatenated along channels.

use alloc::format;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::error::{Error, Result};
use crate::graph::{Graph, PoolRegion, Var};
use crate::params::{Init, ParamSet};
use crate::real::Real;
use crate::transforms::layers::Linear;

#[derive(Debug, Clone)]
struct Path {
    q: Linear,
    k: Linear,
    v: Linear,
    proj: Linear,
    channels: usize,
    heads: usize,
}

impl Path {
    fn new<T: Real, R: RngCore>(
        ps: &mut ParamSet<T>,
        init: &mut Init<'_, R>,
        name: &str,
        c: usize,
        branch: usize,
        heads: usize,
    ) -> Result<Self> {
        Ok(Self {
            q: Linear::new(ps, init, &format!("{name}.q"), c, branch, false)?,
            k: Linear::new(ps, init, &format!("{name}.k"), c, branch, false)?,
            v: Linear::new(ps, init, &format!("{name}.v"), c, branch, false)?,
            proj: Linear::new(ps, init, &format!("{name}.proj"), branch, branch, false)?,
            channels: branch,
            heads,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Sasa {
    high: Option<Path>,
    low: Option<Path>,
    channels: usize,
}

impl Sasa {
    /// `high`/`low` are `(channels, heads)` for each path; zero channels
    /// disables a path.
    pub fn new<T: Real, R: RngCore>(
        ps: &mut ParamSet<T>,
        init: &mut Init<'_, R>,
        name: &str,
        c: usize,
        high: (usize, usize),
        low: (usize, usize),
    ) -> Result<Self> {
        if high.0 + low.0 != c {
            return Err(Error::Config(format!(
                "attention split {} + {} != {c}",
                high.0, low.0
            )));
        }
        if high.0 == 0 && low.0 == 0 {
            return Err(Error::Config("both attention paths disabled".into()));
        }
        for (ch, h) in [high, low] {
            if ch > 0 && (h == 0 || ch % h != 0) {
                return Err(Error::Config(format!(
                    "{ch} channels not divisible into {h} heads"
                )));
            }
        }
        let high = if high.0 > 0 {
            Some(Path::new(
                ps,
                init,
                &format!("{name}.high"),
                c,
                high.0,
                high.1,
            )?)
        } else {
            None
        };
        let low = if low.0 > 0 {
            Some(Path::new(
                ps,
                init,
                &format!("{name}.low"),
                c,
                low.0,
                low.1,
            )?)
        } else {
            None
        };
        Ok(Self {
            high,
            low,
            channels: c,
        })
    }

    pub fn high_channels(&self) -> usize {
        self.high.as_ref().map_or(0, |p| p.channels)
    }

    pub fn low_channels(&self) -> usize {
        self.low.as_ref().map_or(0, |p| p.channels)
    }

    /// `x: [B, H, W, C]`, windows of `win × win` tokens.
    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamSet<T>,
        x: Var,
        win: usize,
    ) -> Result<Var> {
        let [b, h, w, c] = g.value(x).dims4()?;
        if c != self.channels {
            return Err(crate::error::shape_err(
                "sasa",
                format!("expected {} channels, got {c}", self.channels),
            ));
        }
        for e in [h, w] {
            if win == 0 || e % win != 0 {
                return Err(Error::Divisibility {
                    op: "sasa",
                    extent: e,
                    divisor: win,
                    hint: alloc::string::String::new(),
                });
            }
        }
        let mut outs = Vec::with_capacity(2);
        if let Some(p) = &self.high {
            let q = p.q.forward(g, ps, x)?;
            let k = p.k.forward(g, ps, x)?;
            let v = p.v.forward(g, ps, x)?;
            let q = g.window_partition(q, win)?;
            let k = g.window_partition(k, win)?;
            let v = g.window_partition(v, win)?;
            let o = g.attention(q, k, v, p.heads)?;
            let o = g.window_merge(o, b, h, w, win)?;
            outs.push(p.proj.forward(g, ps, o)?);
        }
        if let Some(p) = &self.low {
            let (ph, pw) = (h / win, w / win);
            let q = p.q.forward(g, ps, x)?;
            let q = g.reshape(q, &[b, h * w, p.channels])?;
            let pooled = g.global_avg_pool(x, PoolRegion::Window(win))?;
            let k = p.k.forward(g, ps, pooled)?;
            let k = g.reshape(k, &[b, ph * pw, p.channels])?;
            let v = p.v.forward(g, ps, pooled)?;
            let v = g.reshape(v, &[b, ph * pw, p.channels])?;
            let o = g.attention(q, k, v, p.heads)?;
            let o = g.reshape(o, &[b, h, w, p.channels])?;
            outs.push(p.proj.forward(g, ps, o)?);
        }
        if outs.len() == 1 {
            Ok(outs[0])
        } else {
            g.concat(&outs, 3)
        }
    }
}
