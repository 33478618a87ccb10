//! The hybrid spatial/channel attention transformer block.

use alloc::format;

use rand_core::RngCore;

use crate::config::{FfnVariant, ModelConfig};
use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::params::{Init, ParamSet};
use crate::real::Real;
use crate::transforms::casa::Casa;
use crate::transforms::ffn::Ffn;
use crate::transforms::layers::LayerNorm;
use crate::transforms::sasa::Sasa;

/// Per-stage settings.
#[derive(Debug, Clone, PartialEq)]
pub struct StageConfig {
    pub channels: usize,
    pub num_blocks: usize,
    pub window_base: usize,
    pub lf_enabled: bool,
    pub hf_enabled: bool,
    pub casa_enabled: bool,
    pub ffn_variant: FfnVariant,
}

impl StageConfig {
    pub fn from_model(cfg: &ModelConfig, channels: usize, num_blocks: usize) -> Self {
        Self {
            channels,
            num_blocks,
            window_base: cfg.window_base,
            lf_enabled: cfg.lf_enabled,
            hf_enabled: cfg.hf_enabled,
            casa_enabled: cfg.casa_enabled,
            ffn_variant: cfg.ffn,
        }
    }

    /// Attention window for an `h × w` map: `2s` when it divides both
    /// extents, otherwise the largest common divisor below it.
    pub fn window(&self, h: usize, w: usize) -> usize {
        gcd(gcd(h, w), 2 * self.window_base)
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `Y = X + SaSA(LN(X))`, `Z = Y + CaSA(LN(Y))`, output `FFN(Z)` (the FFN
/// carries its own norm and residual).
#[derive(Debug, Clone)]
pub struct Hscatb {
    norm1: LayerNorm,
    sasa: Sasa,
    casa: Option<(LayerNorm, Casa)>,
    ffn: Ffn,
    stage: StageConfig,
}

impl Hscatb {
    pub fn new<T: Real, R: RngCore>(
        ps: &mut ParamSet<T>,
        init: &mut Init<'_, R>,
        name: &str,
        cfg: &ModelConfig,
        stage: StageConfig,
    ) -> Result<Self> {
        let c = stage.channels;
        let split_cfg = ModelConfig {
            lf_enabled: stage.lf_enabled,
            hf_enabled: stage.hf_enabled,
            ..cfg.clone()
        };
        let (c1, c2) = split_cfg.attention_split(c);
        let sasa = Sasa::new(
            ps,
            init,
            &format!("{name}.sasa"),
            c,
            (c1, if c1 > 0 { cfg.heads_for(c1) } else { 0 }),
            (c2, if c2 > 0 { cfg.heads_for(c2) } else { 0 }),
        )?;
        let norm1 = LayerNorm::new(ps, &format!("{name}.ln1"), c)?;
        let casa = if stage.casa_enabled {
            Some((
                LayerNorm::new(ps, &format!("{name}.ln2"), c)?,
                Casa::new(ps, init, &format!("{name}.casa"), c, cfg.casa_shrink)?,
            ))
        } else {
            None
        };
        let ffn = Ffn::new(ps, init, &format!("{name}.ffn"), c, stage.ffn_variant)?;
        Ok(Self {
            norm1,
            sasa,
            casa,
            ffn,
            stage,
        })
    }

    pub fn sasa(&self) -> &Sasa {
        &self.sasa
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, ps: &ParamSet<T>, x: Var) -> Result<Var> {
        let [_, h, w, _] = g.value(x).dims4()?;
        let win = self.stage.window(h, w);
        let xn = self.norm1.forward(g, ps, x)?;
        let a = self.sasa.forward(g, ps, xn, win)?;
        let mut y = g.add(x, a)?;
        if let Some((norm, casa)) = &self.casa {
            let yn = norm.forward(g, ps, y)?;
            let c = casa.forward(g, ps, yn)?;
            y = g.add(y, c)?;
        }
        self.ffn.forward(g, ps, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_falls_back_below_base() {
        let s = StageConfig::from_model(&ModelConfig::default(), 40, 1);
        assert_eq!(s.window(32, 32), 8);
        assert_eq!(s.window(4, 4), 4);
        assert_eq!(s.window(12, 16), 4);
        assert_eq!(s.window(48, 32), 8);
    }
}
