//! Central finite-difference checks of tape gradients.
//!
//! Every case reduces its output to a scalar through a fixed random
//! weighting, so all output elements contribute.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_core::{RngCore, SeedableRng};

use crate::codec::Model;
use crate::error::Result;
use crate::graph::{Graph, Padding, PoolRegion, Var};
use crate::params::{Init, ParamId, ParamSet};
use crate::tensor::Tensor;

pub const STEP: f64 = 1e-3;
/// Gradient norms below this are compared absolutely: difference quotients of
/// a loss of order 10 carry roundoff near 1e-10.
pub const MODEL_FLOOR: f64 = 1e-6;

type Builder = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var>>;

/// One differentiable expression over leaf tensors.
pub struct OpCase {
    pub name: String,
    pub inputs: Vec<Tensor<f64>>,
    pub build: Builder,
}

impl OpCase {
    pub fn new(
        name: &str,
        inputs: Vec<Tensor<f64>>,
        build: impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var> + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            inputs,
            build: Box::new(build),
        }
    }
}

/// `‖a − n‖ / max(‖a‖, ‖n‖, floor)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    let mut diff = 0.0;
    let mut na = 0.0;
    let mut nn = 0.0;
    for (&a, &n) in analytic.iter().zip(numeric) {
        diff += (a - n) * (a - n);
        na += a * a;
        nn += n * n;
    }
    libm::sqrt(diff) / libm::sqrt(na).max(libm::sqrt(nn)).max(floor)
}

fn weighted_loss(g: &mut Graph<f64>, out: Var, weights: &Tensor<f64>) -> Result<Var> {
    if g.value(out).len() == 1 {
        return Ok(out);
    }
    let w = g.constant(weights.clone().reshape(g.shape(out))?);
    let m = g.mul(out, w)?;
    g.sum(m)
}

/// Largest per-input relative error of `case`.
pub fn check_case<R: RngCore>(case: &OpCase, rng: &mut R) -> Result<f64> {
    let mut ps = ParamSet::new();
    let ids: Vec<ParamId> = case
        .inputs
        .iter()
        .enumerate()
        .map(|(i, t)| ps.add(format!("in{i}"), t.clone()))
        .collect::<Result<_>>()?;

    let eval = |ps: &ParamSet<f64>, weights: &Tensor<f64>, g: &mut Graph<f64>| -> Result<Var> {
        let vars: Vec<Var> = ids.iter().map(|&id| g.param(ps, id)).collect();
        let out = (case.build)(g, &vars)?;
        weighted_loss(g, out, weights)
    };

    let mut probe = Graph::inference();
    let vars: Vec<Var> = ids.iter().map(|&id| probe.param(&ps, id)).collect();
    let out = (case.build)(&mut probe, &vars)?;
    let n_out = probe.value(out).len();
    let mut init = Init::new(rng);
    let weights = Tensor::from_fn(&[n_out], |_| {
        let u = init.unit();
        if u < 0.0 {
            u - 0.5
        } else {
            u + 0.5
        }
    });

    let mut g = Graph::new();
    let loss = eval(&ps, &weights, &mut g)?;
    ps.zero_grad();
    g.backward(loss, &mut ps)?;

    let mut worst = 0.0f64;
    for &id in &ids {
        let analytic: Vec<f64> = ps.grad(id).data().to_vec();
        let mut numeric = Vec::with_capacity(analytic.len());
        for j in 0..analytic.len() {
            numeric.push(central_difference(&mut ps, id, j, |ps| {
                let mut g = Graph::inference();
                let l = eval(ps, &weights, &mut g)?;
                Ok(g.value(l).data()[0])
            })?);
        }
        worst = worst.max(relative_error(&analytic, &numeric, 1e-12));
    }
    Ok(worst)
}

fn central_difference(
    ps: &mut ParamSet<f64>,
    id: ParamId,
    j: usize,
    mut f: impl FnMut(&ParamSet<f64>) -> Result<f64>,
) -> Result<f64> {
    let x0 = ps.value(id).data()[j];
    ps.get_mut(id).value.data_mut()[j] = x0 + STEP;
    let fp = f(ps)?;
    ps.get_mut(id).value.data_mut()[j] = x0 - STEP;
    let fm = f(ps)?;
    ps.get_mut(id).value.data_mut()[j] = x0;
    Ok((fp - fm) / (2.0 * STEP))
}

/// Per-tensor result of a full-model check.
#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub relative_error: f64,
}

/// Checks `forward_train` gradients for up to `per_tensor` entries of every
/// parameter tensor, always including its largest-magnitude entry. Noise is replayed from `seed` on every evaluation.
pub fn check_model<R: RngCore + SeedableRng>(
    model: &mut Model<f64>,
    x: &Tensor<f64>,
    lambda: f64,
    seed: u64,
    per_tensor: usize,
) -> Result<Vec<ParamCheck>> {
    let loss_at = |m: &Model<f64>| -> Result<f64> {
        let mut g = Graph::inference();
        let out = m.forward_train(&mut g, x, lambda, &mut R::seed_from_u64(seed))?;
        Ok(g.value(out.loss).data()[0])
    };
    let mut g = Graph::new();
    let mut rng = R::seed_from_u64(seed);
    let out = model.forward_train(&mut g, x, lambda, &mut rng)?;
    model.params.zero_grad();
    g.backward(out.loss, &mut model.params)?;

    let ids: Vec<ParamId> = model.params.ids().collect();
    let mut report = Vec::with_capacity(ids.len());
    for id in ids {
        let n = model.params.value(id).len();
        let picks: Vec<usize> = if n <= per_tensor {
            (0..n).collect()
        } else {
            let grad = model.params.grad(id).data();
            let largest = (0..n).fold(0, |b, j| if grad[j].abs() > grad[b].abs() { j } else { b });
            let mut p: Vec<usize> = (1..per_tensor).map(|k| (k * 7919 + 13) % n).collect();
            p.retain(|&j| j != largest);
            p.insert(0, largest);
            p
        };
        let analytic: Vec<f64> = picks
            .iter()
            .map(|&j| model.params.grad(id).data()[j])
            .collect();
        let mut numeric = Vec::with_capacity(picks.len());
        for &j in &picks {
            let x0 = model.params.value(id).data()[j];
            model.params.get_mut(id).value.data_mut()[j] = x0 + STEP;
            let fp = loss_at(model)?;
            model.params.get_mut(id).value.data_mut()[j] = x0 - STEP;
            let fm = loss_at(model)?;
            model.params.get_mut(id).value.data_mut()[j] = x0;
            numeric.push((fp - fm) / (2.0 * STEP));
        }
        report.push(ParamCheck {
            name: model.params.get(id).name.clone(),
            checked: picks.len(),
            relative_error: relative_error(&analytic, &numeric, MODEL_FLOOR),
        });
    }
    Ok(report)
}

fn filled<R: RngCore>(init: &mut Init<'_, R>, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| lo + (hi - lo) * 0.5 * (init.unit() + 1.0))
}

/// Values bounded away from zero so kinked ops stay differentiable.
fn away_from_zero<R: RngCore>(init: &mut Init<'_, R>, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let u = init.unit();
        if u < 0.0 {
            u - 0.2
        } else {
            u + 0.2
        }
    })
}

/// One case per differentiable graph operation.
pub fn op_suite<R: RngCore>(rng: &mut R) -> Vec<OpCase> {
    let mut init = Init::new(rng);
    let mut r = |shape: &[usize]| filled(&mut init, shape, -1.0, 1.0);
    let x4 = r(&[2, 4, 4, 3]);
    let x8 = r(&[1, 8, 8, 4]);
    let mut cases = vec![
        OpCase::new("matmul", vec![r(&[2, 3, 5]), r(&[5, 4])], |g, v| {
            g.matmul(v[0], v[1])
        }),
        OpCase::new("add_bias", vec![x4.clone(), r(&[3])], |g, v| {
            g.add_bias(v[0], v[1])
        }),
        OpCase::new(
            "conv2d_same_s1",
            vec![x4.clone(), r(&[3, 3, 3, 5])],
            |g, v| g.conv2d(v[0], v[1], 1, 1, Padding::Same),
        ),
        OpCase::new(
            "conv2d_same_s2",
            vec![r(&[1, 5, 6, 3]), r(&[3, 3, 3, 4])],
            |g, v| g.conv2d(v[0], v[1], 2, 1, Padding::Same),
        ),
        OpCase::new(
            "conv2d_valid",
            vec![x4.clone(), r(&[2, 3, 3, 2])],
            |g, v| g.conv2d(v[0], v[1], 1, 1, Padding::Valid),
        ),
        OpCase::new(
            "conv2d_depthwise",
            vec![x8.clone(), r(&[5, 5, 1, 4])],
            |g, v| g.conv2d(v[0], v[1], 1, 4, Padding::Same),
        ),
        OpCase::new(
            "conv2d_grouped",
            vec![x8.clone(), r(&[3, 3, 2, 6])],
            |g, v| g.conv2d(v[0], v[1], 1, 2, Padding::Same),
        ),
        OpCase::new(
            "conv_transpose2d",
            vec![r(&[1, 3, 2, 4]), r(&[3, 3, 2, 4])],
            |g, v| g.conv_transpose2d(v[0], v[1], 2),
        ),
        OpCase::new(
            "attention",
            vec![r(&[2, 3, 4]), r(&[2, 5, 4]), r(&[2, 5, 4])],
            |g, v| g.attention(v[0], v[1], v[2], 2),
        ),
        OpCase::new("layer_norm", vec![x4.clone(), r(&[3]), r(&[3])], |g, v| {
            g.layer_norm(v[0], v[1], v[2])
        }),
        OpCase::new("global_avg_pool", vec![x4.clone()], |g, v| {
            g.global_avg_pool(v[0], PoolRegion::Whole)
        }),
        OpCase::new("window_avg_pool", vec![x8.clone()], |g, v| {
            g.global_avg_pool(v[0], PoolRegion::Window(4))
        }),
        OpCase::new("window_partition", vec![x8.clone()], |g, v| {
            g.window_partition(v[0], 4)
        }),
        OpCase::new("window_merge", vec![r(&[4, 16, 4])], |g, v| {
            g.window_merge(v[0], 1, 8, 8, 4)
        }),
        OpCase::new("gelu", vec![r(&[2, 7])], |g, v| g.gelu(v[0])),
        OpCase::new("sigmoid", vec![r(&[2, 7])], |g, v| g.sigmoid(v[0])),
        OpCase::new("softplus", vec![r(&[2, 7])], |g, v| g.softplus(v[0])),
        OpCase::new("softmax", vec![r(&[3, 6])], |g, v| g.softmax(v[0])),
        OpCase::new("add", vec![r(&[2, 5]), r(&[2, 5])], |g, v| {
            g.add(v[0], v[1])
        }),
        OpCase::new("sub", vec![r(&[2, 5]), r(&[2, 5])], |g, v| {
            g.sub(v[0], v[1])
        }),
        OpCase::new("mul", vec![r(&[2, 5]), r(&[2, 5])], |g, v| {
            g.mul(v[0], v[1])
        }),
        OpCase::new("affine", vec![r(&[2, 5])], |g, v| g.affine(v[0], -1.7, 0.3)),
        OpCase::new("scale", vec![r(&[2, 5])], |g, v| g.scale(v[0], 2.5)),
        OpCase::new("mul_channel", vec![x4.clone(), r(&[2, 1, 1, 3])], |g, v| {
            g.mul_channel(v[0], v[1])
        }),
        OpCase::new("broadcast_spatial", vec![r(&[3])], |g, v| {
            g.broadcast_spatial(v[0], 2, 3, 2)
        }),
        OpCase::new("slice", vec![x4.clone()], |g, v| g.slice(v[0], 3, 1, 2)),
        OpCase::new("split", vec![x4.clone()], |g, v| {
            let parts = g.split(v[0], 3, &[1, 2])?;
            let a = g.scale(parts[0], 3.0)?;
            g.concat(&[parts[1], a], 3)
        }),
        OpCase::new("concat", vec![x4.clone(), r(&[2, 4, 4, 2])], |g, v| {
            g.concat(&[v[0], v[1]], 3)
        }),
        OpCase::new(
            "concat_axis1",
            vec![r(&[2, 3, 2]), r(&[2, 1, 2])],
            |g, v| g.concat(&[v[0], v[1]], 1),
        ),
        OpCase::new("reshape", vec![x4.clone()], |g, v| {
            g.reshape(v[0], &[8, 12])
        }),
        OpCase::new("sum", vec![r(&[3, 4])], |g, v| g.sum(v[0])),
        OpCase::new("mse", vec![r(&[2, 6]), r(&[2, 6])], |g, v| {
            g.mse(v[0], v[1])
        }),
    ];
    cases.push(OpCase::new(
        "relu",
        vec![away_from_zero(&mut init, &[2, 7])],
        |g, v| g.relu(v[0]),
    ));
    cases.push(OpCase::new(
        "neg_log2_sum",
        vec![filled(&mut init, &[2, 5], 0.05, 0.95)],
        |g, v| g.neg_log2_sum(v[0]),
    ));
    cases.push(OpCase::new(
        "gaussian_likelihood",
        vec![
            filled(&mut init, &[2, 6], -2.0, 2.0),
            filled(&mut init, &[2, 6], -1.0, 1.0),
            filled(&mut init, &[2, 6], 0.3, 2.0),
        ],
        |g, v| g.gaussian_likelihood(v[0], v[1], v[2]),
    ));
    cases.push(OpCase::new(
        "logistic_likelihood",
        vec![
            filled(&mut init, &[1, 2, 2, 3], -2.0, 2.0),
            filled(&mut init, &[3], -0.5, 0.5),
            filled(&mut init, &[3], 0.3, 1.5),
        ],
        |g, v| g.logistic_likelihood(v[0], v[1], v[2]),
    ));
    cases
}
