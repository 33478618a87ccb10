use rand_core::RngCore;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::params::{Init, ParamSet};
use crate::real::Real;
use crate::transforms::layers::{Conv, ConvTranspose};

/// Spatial reduction from latent to hyper-latent.
pub const HYPER_FACTOR: usize = 4;

/// `h_a`: two stride-2 3×3 convs with GELU between.
#[derive(Debug, Clone)]
pub struct HyperAnalysis {
    conv1: Conv,
    conv2: Conv,
}

impl HyperAnalysis {
    pub fn new<T: Real, R: RngCore>(
        ps: &mut ParamSet<T>,
        init: &mut Init<'_, R>,
        m: usize,
        n: usize,
    ) -> Result<Self> {
        Ok(Self {
            conv1: Conv::new(ps, init, "h_a.conv1", m, n, 3, 2, 1)?,
            conv2: Conv::new(ps, init, "h_a.conv2", n, n, 3, 2, 1)?,
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, ps: &ParamSet<T>, y: Var) -> Result<Var> {
        let [_, h, w, _] = g.value(y).dims4()?;
        for e in [h, w] {
            if e == 0 || e % HYPER_FACTOR != 0 {
                return Err(Error::Divisibility {
                    op: "hyper analysis",
                    extent: e,
                    divisor: HYPER_FACTOR,
                    hint: alloc::string::String::new(),
                });
            }
        }
        let z = self.conv1.forward(g, ps, y)?;
        let z = g.gelu(z)?;
        self.conv2.forward(g, ps, z)
    }
}

/// `h_s`: mirror of [`HyperAnalysis`] with transposed convs, `2M` outputs.
#[derive(Debug, Clone)]
pub struct HyperSynthesis {
    up1: ConvTranspose,
    up2: ConvTranspose,
}

impl HyperSynthesis {
    pub fn new<T: Real, R: RngCore>(
        ps: &mut ParamSet<T>,
        init: &mut Init<'_, R>,
        n: usize,
        out: usize,
    ) -> Result<Self> {
        Ok(Self {
            up1: ConvTranspose::new(ps, init, "h_s.up1", n, n, 3, 2)?,
            up2: ConvTranspose::new(ps, init, "h_s.up2", n, out, 3, 2)?,
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, ps: &ParamSet<T>, z: Var) -> Result<Var> {
        let h = self.up1.forward(g, ps, z)?;
        let h = g.gelu(h)?;
        self.up2.forward(g, ps, h)
    }
}
