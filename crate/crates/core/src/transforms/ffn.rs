//! Feed-forward bodies: the mixed local/global network and its ablations.

use alloc::format;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::config::FfnVariant;
use crate::error::{Error, Result};
use crate::graph::{Graph, PoolRegion, Var};
use crate::params::{Init, ParamSet};
use crate::real::Real;
use crate::transforms::layers::{Conv, LayerNorm, Linear};

pub const PLAIN_EXPANSION: usize = 4;

/// Pointwise conv then depthwise `k×k` conv, self-gated as `GELU(u) * u`.
#[derive(Debug, Clone)]
struct LocalPath {
    pointwise: Linear,
    depthwise: Conv,
}

impl LocalPath {
    fn new<T: Real, R: RngCore>(
        ps: &mut ParamSet<T>,
        init: &mut Init<'_, R>,
        name: &str,
        c: usize,
        k: usize,
    ) -> Result<Self> {
        Ok(Self {
            pointwise: Linear::new(ps, init, &format!("{name}.pw"), c, c, true)?,
            depthwise: Conv::new(ps, init, &format!("{name}.dw{k}"), c, c, k, 1, c)?,
        })
    }

    fn forward<T: Real>(&self, g: &mut Graph<T>, ps: &ParamSet<T>, x: Var) -> Result<Var> {
        let u = self.pointwise.forward(g, ps, x)?;
        let u = self.depthwise.forward(g, ps, u)?;
        let a = g.gelu(u)?;
        g.mul(a, u)
    }
}

#[derive(Debug, Clone)]
enum Body {
    Mixed {
        local3: Option<LocalPath>,
        local5: Option<LocalPath>,
        /// Channels entering the local paths (0 when only the global branch runs).
        local: usize,
        global: usize,
    },
    Plain {
        up: Linear,
        down: Linear,
    },
}

#[derive(Debug, Clone)]
pub struct Ffn {
    norm: LayerNorm,
    body: Body,
    channels: usize,
}

impl Ffn {
    pub fn new<T: Real, R: RngCore>(
        ps: &mut ParamSet<T>,
        init: &mut Init<'_, R>,
        name: &str,
        c: usize,
        variant: FfnVariant,
    ) -> Result<Self> {
        if !c.is_multiple_of(4) {
            return Err(Error::Divisibility {
                op: "mlgffn",
                extent: c,
                divisor: 4,
                hint: alloc::string::String::new(),
            });
        }
        let norm = LayerNorm::new(ps, &format!("{name}.ln"), c)?;
        let (local, global) = match variant {
            FfnVariant::Mlgffn => (c / 2, c / 2),
            FfnVariant::MlgffnNoLocal => (0, c),
            FfnVariant::MlgffnNoGlobal => (c, 0),
            FfnVariant::Plain => {
                let hidden = c * PLAIN_EXPANSION;
                let body = Body::Plain {
                    up: Linear::new(ps, init, &format!("{name}.fc1"), c, hidden, true)?,
                    down: Linear::new(ps, init, &format!("{name}.fc2"), hidden, c, true)?,
                };
                return Ok(Self {
                    norm,
                    body,
                    channels: c,
                });
            }
        };
        let (local3, local5) = if local > 0 {
            (
                Some(LocalPath::new(
                    ps,
                    init,
                    &format!("{name}.local3"),
                    local / 2,
                    3,
                )?),
                Some(LocalPath::new(
                    ps,
                    init,
                    &format!("{name}.local5"),
                    local / 2,
                    5,
                )?),
            )
        } else {
            (None, None)
        };
        Ok(Self {
            norm,
            body: Body::Mixed {
                local3,
                local5,
                local,
                global,
            },
            channels: c,
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, ps: &ParamSet<T>, x: Var) -> Result<Var> {
        let c = g.value(x).channels();
        if c != self.channels {
            return Err(crate::error::shape_err(
                "ffn",
                format!("expected {} channels, got {c}", self.channels),
            ));
        }
        let xn = self.norm.forward(g, ps, x)?;
        let body = match &self.body {
            Body::Plain { up, down } => {
                let h = up.forward(g, ps, xn)?;
                let h = g.gelu(h)?;
                down.forward(g, ps, h)?
            }
            Body::Mixed {
                local3,
                local5,
                local,
                global,
            } => {
                let (xl, xg) = match (*local, *global) {
                    (0, _) => (None, Some(xn)),
                    (_, 0) => (Some(xn), None),
                    (l, gl) => {
                        let parts = g.split(xn, 3, &[l, gl])?;
                        (Some(parts[0]), Some(parts[1]))
                    }
                };
                let mut outs = Vec::with_capacity(3);
                if let Some(xg) = xg {
                    let pooled = g.global_avg_pool(xg, PoolRegion::Whole)?;
                    let gate = g.gelu(pooled)?;
                    outs.push(g.mul_channel(xg, gate)?);
                }
                if let (Some(xl), Some(p3), Some(p5)) = (xl, local3, local5) {
                    let q = *local / 2;
                    let parts = g.split(xl, 3, &[q, q])?;
                    outs.push(p3.forward(g, ps, parts[0])?);
                    outs.push(p5.forward(g, ps, parts[1])?);
                }
                if outs.len() == 1 {
                    outs[0]
                } else {
                    g.concat(&outs, 3)?
                }
            }
        };
        g.add(x, body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn build(c: usize, v: FfnVariant) -> (ParamSet<f64>, Ffn) {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut init = Init::new(&mut rng);
        let mut ps = ParamSet::new();
        let f = Ffn::new(&mut ps, &mut init, "ffn", c, v).unwrap();
        (ps, f)
    }

    #[test]
    fn zero_input_maps_to_zero() {
        for v in [
            FfnVariant::Mlgffn,
            FfnVariant::MlgffnNoLocal,
            FfnVariant::MlgffnNoGlobal,
        ] {
            let (mut ps, f) = build(8, v);
            // biases are zero-initialized; LN of a zero token is zero
            let mut g = Graph::inference();
            let x = g.constant(Tensor::zeros(&[1, 6, 6, 8]));
            let y = f.forward(&mut g, &ps, x).unwrap();
            assert!(g.value(y).data().iter().all(|&v| v == 0.0));
            ps.zero_grad();
        }
    }

    #[test]
    fn plain_variant_matches_token_mlp() {
        let (ps, f) = build(4, FfnVariant::Plain);
        let xt = Tensor::from_fn(&[1, 3, 3, 4], |i| ((i * 13) % 7) as f64 * 0.3 - 0.9);
        let mut g = Graph::inference();
        let x = g.constant(xt.clone());
        let y = f.forward(&mut g, &ps, x).unwrap();
        let w1 = ps.value(ps.find("ffn.fc1.weight").unwrap()).data().to_vec();
        let b1 = ps.value(ps.find("ffn.fc1.bias").unwrap()).data().to_vec();
        let w2 = ps.value(ps.find("ffn.fc2.weight").unwrap()).data().to_vec();
        let b2 = ps.value(ps.find("ffn.fc2.bias").unwrap()).data().to_vec();
        for (t, tok) in xt.data().chunks(4).enumerate() {
            let mean = tok.iter().sum::<f64>() / 4.0;
            let var = tok.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
            let xn: Vec<f64> = tok
                .iter()
                .map(|v| (v - mean) / (var + 1e-6).sqrt())
                .collect();
            let mut hid = [0.0; 16];
            for (j, h) in hid.iter_mut().enumerate() {
                let s: f64 = (0..4).map(|i| xn[i] * w1[i * 16 + j]).sum::<f64>() + b1[j];
                *h = 0.5 * s * (1.0 + libm::erf(s / core::f64::consts::SQRT_2));
            }
            for o in 0..4 {
                let s: f64 = (0..16).map(|j| hid[j] * w2[j * 4 + o]).sum::<f64>() + b2[o];
                let got = g.value(y).data()[t * 4 + o];
                assert!((got - (tok[o] + s)).abs() < 1e-12);
            }
        }
    }
}
