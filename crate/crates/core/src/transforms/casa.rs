//! Channel-aware attention: a squeeze-style per-channel gate.

use alloc::format;

use rand_core::RngCore;

use crate::error::{Error, Result};
use crate::graph::{Graph, PoolRegion, Var};
use crate::params::{Init, ParamSet};
use crate::real::Real;
use crate::transforms::layers::Linear;

#[derive(Debug, Clone)]
pub struct Casa {
    pub squeeze: Linear,
    pub excite: Linear,
}

impl Casa {
    pub fn new<T: Real, R: RngCore>(
        ps: &mut ParamSet<T>,
        init: &mut Init<'_, R>,
        name: &str,
        c: usize,
        shrink: usize,
    ) -> Result<Self> {
        if shrink == 0 || !c.is_multiple_of(shrink) {
            return Err(Error::Config(format!(
                "{c} channels not divisible by shrink {shrink}"
            )));
        }
        Ok(Self {
            squeeze: Linear::new(ps, init, &format!("{name}.w1"), c, c / shrink, false)?,
            excite: Linear::new(ps, init, &format!("{name}.w2"), c / shrink, c, false)?,
        })
    }

    /// The gate in `(0, 1)^C`, shape `[B, 1, 1, C]`.
    pub fn gate<T: Real>(&self, g: &mut Graph<T>, ps: &ParamSet<T>, x: Var) -> Result<Var> {
        let pooled = g.global_avg_pool(x, PoolRegion::Whole)?;
        let h = self.squeeze.forward(g, ps, pooled)?;
        let h = g.relu(h)?;
        let h = self.excite.forward(g, ps, h)?;
        g.sigmoid(h)
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, ps: &ParamSet<T>, x: Var) -> Result<Var> {
        let gate = self.gate(g, ps, x)?;
        g.mul_channel(x, gate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_halve_the_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut init = Init::new(&mut rng);
        let mut ps = ParamSet::<f32>::new();
        let casa = Casa::new(&mut ps, &mut init, "ca", 8, 4).unwrap();
        for id in [casa.squeeze.weight, casa.excite.weight] {
            let z = Tensor::zeros(ps.value(id).shape());
            ps.set_value(id, z).unwrap();
        }
        let mut g = Graph::inference();
        let xt = Tensor::from_fn(&[1, 4, 4, 8], |i| i as f32 * 0.01 - 0.5);
        let x = g.constant(xt.clone());
        let y = casa.forward(&mut g, &ps, x).unwrap();
        assert_eq!(g.value(y), &xt.map(|v| v * 0.5));
    }

    #[test]
    fn rejects_indivisible_shrink() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut init = Init::new(&mut rng);
        let mut ps = ParamSet::<f32>::new();
        assert!(Casa::new(&mut ps, &mut init, "ca", 10, 4).is_err());
    }
}
