//! Define-by-run reverse-mode differentiation.
//!
//! A [`Graph`] records each operation as a node holding its output value and
//! enough context to propagate gradients. Nodes only reference earlier nodes,
//! so the node vector is already a topological order and the backward sweep
//! is a single reverse pass.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::kernels::{self, AttnShape, ConvGeom};
use crate::params::{ParamId, ParamSet};
use crate::real::{self, Real};
use crate::tensor::{check_same, Tensor};

pub const LN_EPS: f64 = 1e-6;
/// Floor applied to likelihoods before taking logs.
pub const PROB_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Same,
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolRegion {
    Whole,
    Window(usize),
}

enum Op<T> {
    Leaf,
    MatMul {
        a: usize,
        b: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    AddBias {
        x: usize,
        b: usize,
    },
    Conv {
        x: usize,
        w: usize,
        geom: ConvGeom,
    },
    ConvT {
        x: usize,
        w: usize,
        geom: ConvGeom,
    },
    Attention {
        q: usize,
        k: usize,
        v: usize,
        shape: AttnShape,
        probs: Vec<T>,
    },
    LayerNorm {
        x: usize,
        g: usize,
        b: usize,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    WindowMean {
        x: usize,
        dims: [usize; 4],
        wh: usize,
        ww: usize,
    },
    Partition {
        x: usize,
        dims: [usize; 4],
        win: usize,
    },
    Merge {
        x: usize,
        dims: [usize; 4],
        win: usize,
    },
    Relu {
        x: usize,
    },
    Gelu {
        x: usize,
    },
    Sigmoid {
        x: usize,
    },
    Softplus {
        x: usize,
    },
    Softmax {
        x: usize,
        n: usize,
    },
    Add {
        a: usize,
        b: usize,
    },
    Sub {
        a: usize,
        b: usize,
    },
    Mul {
        a: usize,
        b: usize,
    },
    Affine {
        x: usize,
        scale: T,
    },
    MulChannel {
        x: usize,
        g: usize,
    },
    Broadcast {
        x: usize,
    },
    Slice {
        x: usize,
        outer: usize,
        axis_len: usize,
        inner: usize,
        start: usize,
        len: usize,
    },
    Concat {
        xs: Vec<usize>,
        outer: usize,
        inner: usize,
        lens: Vec<usize>,
    },
    Reshape {
        x: usize,
    },
    Sum {
        x: usize,
    },
    Mse {
        a: usize,
        b: usize,
    },
    NegLog2Sum {
        x: usize,
    },
    GaussLik {
        y: usize,
        mu: usize,
        sigma: usize,
    },
    LogisticLik {
        z: usize,
        loc: usize,
        scale: usize,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    param: Option<ParamId>,
    requires_grad: bool,
}

/// Computation tape.
pub struct Graph<T: Real> {
    nodes: Vec<Node<T>>,
    record: bool,
    consumed: bool,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    /// A recording graph for training.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            record: true,
            consumed: false,
        }
    }

    /// A forward-only graph; no backward information is kept.
    pub fn inference() -> Self {
        Self {
            nodes: Vec::new(),
            record: false,
            consumed: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.record
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    #[inline]
    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn rg(&self, i: usize) -> bool {
        self.record && self.nodes[i].requires_grad
    }

    fn push(
        &mut self,
        name: &'static str,
        value: Tensor<T>,
        op: Op<T>,
        inputs: &[usize],
    ) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite(name));
        }
        let requires_grad = self.record && inputs.iter().any(|&i| self.nodes[i].requires_grad);
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            op,
            param: None,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            param: None,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, ps: &ParamSet<T>, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: ps.value(id).clone(),
            op: Op::Leaf,
            param: Some(id),
            requires_grad: self.record,
        });
        Var(self.nodes.len() - 1)
    }

    /// Drops stored values of every node except `keep`. Forward-only graphs.
    pub fn release_except(&mut self, keep: &[Var]) {
        self.release_from(0, keep);
    }

    /// Like [`Graph::release_except`] but only for nodes created at or after
    /// position `start` (see [`Graph::len`]).
    pub fn release_from(&mut self, start: usize, keep: &[Var]) {
        if self.record {
            return;
        }
        for (i, n) in self.nodes.iter_mut().enumerate().skip(start) {
            if !keep.iter().any(|k| k.0 == i) {
                n.value = Tensor::zeros(&[0]);
            }
        }
    }

    // ----------------------------------------------------------------- linear

    /// `x[..., k] · w[k, n] -> [..., n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() < 2 || bv.rank() != 2 {
            return Err(shape_err(
                "matmul",
                format!("{:?} x {:?}", av.shape(), bv.shape()),
            ));
        }
        let k = av.channels();
        if bv.shape()[0] != k {
            return Err(shape_err(
                "matmul",
                format!("inner extents differ: {:?} x {:?}", av.shape(), bv.shape()),
            ));
        }
        let n = bv.shape()[1];
        let m = av.len() / k;
        let mut out = vec![T::ZERO; m * n];
        kernels::gemm_nn(av.data(), bv.data(), &mut out, m, k, n);
        let mut shape = av.shape().to_vec();
        *shape.last_mut().unwrap() = n;
        let t = Tensor::new(shape, out)?;
        self.push(
            "matmul",
            t,
            Op::MatMul {
                a: a.0,
                b: b.0,
                m,
                k,
                n,
            },
            &[a.0, b.0],
        )
    }

    /// Adds `b[C]` along the last axis.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        let c = xv.channels();
        if bv.len() != c {
            return Err(shape_err(
                "add_bias",
                format!("{:?} + {:?}", xv.shape(), bv.shape()),
            ));
        }
        let mut t = xv.clone();
        for row in t.data_mut().chunks_mut(c) {
            for (v, &bb) in row.iter_mut().zip(bv.data()) {
                *v += bb;
            }
        }
        self.push("add_bias", t, Op::AddBias { x: x.0, b: b.0 }, &[x.0, b.0])
    }

    // ------------------------------------------------------------ convolution

    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        stride: usize,
        groups: usize,
        padding: Padding,
    ) -> Result<Var> {
        let [b, h, wd, cin] = self.value(x).dims4()?;
        let ks = self.value(w).shape().to_vec();
        let [kh, kw, cin_g, cout] = match ks[..] {
            [a, b2, c, d] => [a, b2, c, d],
            _ => return Err(shape_err("conv2d", format!("kernel rank: {ks:?}"))),
        };
        if stride == 0 || groups == 0 || cin % groups != 0 || cout % groups != 0 {
            return Err(shape_err(
                "conv2d",
                format!(
                    "channels {cin}->{cout} not divisible by groups {groups} (stride {stride})"
                ),
            ));
        }
        if cin_g != cin / groups {
            return Err(shape_err(
                "conv2d",
                format!("kernel {ks:?} for {cin} input channels, {groups} groups"),
            ));
        }
        let (out_h, out_w, pad_top, pad_left) = match padding {
            Padding::Same => {
                let oh = h.div_ceil(stride);
                let ow = wd.div_ceil(stride);
                let ph = ((oh - 1) * stride + kh).saturating_sub(h);
                let pw = ((ow - 1) * stride + kw).saturating_sub(wd);
                (oh, ow, ph / 2, pw / 2)
            }
            Padding::Valid => {
                if kh > h || kw > wd {
                    return Err(shape_err(
                        "conv2d",
                        format!("kernel {kh}x{kw} larger than input {h}x{wd}"),
                    ));
                }
                ((h - kh) / stride + 1, (wd - kw) / stride + 1, 0, 0)
            }
        };
        let geom = ConvGeom {
            batch: b,
            in_h: h,
            in_w: wd,
            cin,
            out_h,
            out_w,
            cout,
            kh,
            kw,
            stride,
            groups,
            pad_top,
            pad_left,
        };
        let out = kernels::conv2d_forward(&geom, self.value(x).data(), self.value(w).data());
        let t = Tensor::new(vec![b, out_h, out_w, cout], out)?;
        self.push(
            "conv2d",
            t,
            Op::Conv {
                x: x.0,
                w: w.0,
                geom,
            },
            &[x.0, w.0],
        )
    }

    /// Transposed convolution: the adjoint of a `same`-padded strided
    /// `conv2d` with kernel `[kh, kw, Cout, Cin]` mapping the
    /// `[B, H·s, W·s, Cout]` output space back onto `[B, H, W, Cin]`.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, stride: usize) -> Result<Var> {
        let [b, h, wd, cin] = self.value(x).dims4()?;
        let ks = self.value(w).shape().to_vec();
        let [kh, kw, cout, kc] = match ks[..] {
            [a, b2, c, d] => [a, b2, c, d],
            _ => {
                return Err(shape_err(
                    "conv_transpose2d",
                    format!("kernel rank: {ks:?}"),
                ))
            }
        };
        if stride == 0 {
            return Err(shape_err("conv_transpose2d", "stride must be >= 1".into()));
        }
        if kc != cin {
            return Err(shape_err(
                "conv_transpose2d",
                format!("kernel {ks:?} does not accept {cin} input channels"),
            ));
        }
        let (oh, ow) = (h * stride, wd * stride);
        let ph = ((h - 1) * stride + kh).saturating_sub(oh);
        let pw = ((wd - 1) * stride + kw).saturating_sub(ow);
        let geom = ConvGeom {
            batch: b,
            in_h: oh,
            in_w: ow,
            cin: cout,
            out_h: h,
            out_w: wd,
            cout: cin,
            kh,
            kw,
            stride,
            groups: 1,
            pad_top: ph / 2,
            pad_left: pw / 2,
        };
        let out = kernels::conv2d_backward_input(&geom, self.value(x).data(), self.value(w).data());
        let t = Tensor::new(vec![b, oh, ow, cout], out)?;
        self.push(
            "conv_transpose2d",
            t,
            Op::ConvT {
                x: x.0,
                w: w.0,
                geom,
            },
            &[x.0, w.0],
        )
    }

    // -------------------------------------------------------------- attention

    /// Multi-head softmax attention. `q: [G, Tq, C]`, `k, v: [G, Tk, C]`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
        let (qs, ks, vs) = (
            self.shape(q).to_vec(),
            self.shape(k).to_vec(),
            self.shape(v).to_vec(),
        );
        let ok = qs.len() == 3
            && ks.len() == 3
            && ks == vs
            && qs[0] == ks[0]
            && qs[2] == ks[2]
            && heads > 0
            && qs[2] % heads == 0;
        if !ok {
            return Err(shape_err(
                "attention",
                format!("q {qs:?} k {ks:?} v {vs:?} heads {heads}"),
            ));
        }
        let shape = AttnShape {
            groups: qs[0],
            tq: qs[1],
            tk: ks[1],
            channels: qs[2],
            heads,
        };
        let keep = self.record && (self.rg(q.0) || self.rg(k.0) || self.rg(v.0));
        let (out, probs) = kernels::attention_forward(
            &shape,
            self.value(q).data(),
            self.value(k).data(),
            self.value(v).data(),
            keep,
        );
        let t = Tensor::new(qs, out)?;
        let op = Op::Attention {
            q: q.0,
            k: k.0,
            v: v.0,
            shape,
            probs: probs.unwrap_or_default(),
        };
        self.push("attention", t, op, &[q.0, k.0, v.0])
    }

    // ---------------------------------------------------------- normalization

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let xv = self.value(x);
        let c = xv.channels();
        if self.value(gain).len() != c || self.value(bias).len() != c {
            return Err(shape_err(
                "layer_norm",
                format!("affine size vs {:?}", xv.shape()),
            ));
        }
        let (y, xhat, rstd) = kernels::layer_norm_forward(
            xv.data(),
            c,
            self.value(gain).data(),
            self.value(bias).data(),
            LN_EPS,
        );
        let t = Tensor::new(xv.shape().to_vec(), y)?;
        let keep = self.record;
        let op = Op::LayerNorm {
            x: x.0,
            g: gain.0,
            b: bias.0,
            xhat: if keep { xhat } else { Vec::new() },
            rstd: if keep { rstd } else { Vec::new() },
        };
        self.push("layer_norm", t, op, &[x.0, gain.0, bias.0])
    }

    // ---------------------------------------------------------------- pooling

    pub fn global_avg_pool(&mut self, x: Var, region: PoolRegion) -> Result<Var> {
        let dims = self.value(x).dims4()?;
        let [b, h, w, c] = dims;
        let (wh, ww) = match region {
            PoolRegion::Whole => (h, w),
            PoolRegion::Window(win) => {
                for e in [h, w] {
                    if win == 0 || e % win != 0 {
                        return Err(Error::Divisibility {
                            op: "global_avg_pool",
                            extent: e,
                            divisor: win,
                            hint: alloc::string::String::new(),
                        });
                    }
                }
                (win, win)
            }
        };
        let out = kernels::window_mean(self.value(x).data(), dims, wh, ww);
        let t = Tensor::new(vec![b, h / wh, w / ww, c], out)?;
        self.push(
            "global_avg_pool",
            t,
            Op::WindowMean {
                x: x.0,
                dims,
                wh,
                ww,
            },
            &[x.0],
        )
    }

    pub fn window_partition(&mut self, x: Var, win: usize) -> Result<Var> {
        let dims = self.value(x).dims4()?;
        let [b, h, w, c] = dims;
        for e in [h, w] {
            if win == 0 || e % win != 0 {
                return Err(Error::Divisibility {
                    op: "window_partition",
                    extent: e,
                    divisor: win,
                    hint: alloc::string::String::new(),
                });
            }
        }
        let out = kernels::window_partition(self.value(x).data(), dims, win);
        let m = (h / win) * (w / win);
        let t = Tensor::new(vec![b * m, win * win, c], out)?;
        self.push(
            "window_partition",
            t,
            Op::Partition { x: x.0, dims, win },
            &[x.0],
        )
    }

    /// Inverse of [`Graph::window_partition`] back to `[b, h, w, C]`.
    pub fn window_merge(
        &mut self,
        x: Var,
        b: usize,
        h: usize,
        w: usize,
        win: usize,
    ) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if win == 0 || !h.is_multiple_of(win) || !w.is_multiple_of(win) || xs.len() != 3 {
            return Err(shape_err(
                "window_merge",
                format!("{xs:?} into {h}x{w} windows of {win}"),
            ));
        }
        let c = xs[2];
        if xs[0] != b * (h / win) * (w / win) || xs[1] != win * win {
            return Err(shape_err(
                "window_merge",
                format!("{xs:?} into {b}x{h}x{w} windows of {win}"),
            ));
        }
        let dims = [b, h, w, c];
        let out = kernels::window_merge(self.value(x).data(), dims, win);
        let t = Tensor::new(dims.to_vec(), out)?;
        self.push("window_merge", t, Op::Merge { x: x.0, dims, win }, &[x.0])
    }

    // ------------------------------------------------------------ elementwise

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x).map(|v| v.max(T::ZERO));
        self.push("relu", t, Op::Relu { x: x.0 }, &[x.0])
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x).map(real::gelu);
        self.push("gelu", t, Op::Gelu { x: x.0 }, &[x.0])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x).map(real::sigmoid);
        self.push("sigmoid", t, Op::Sigmoid { x: x.0 }, &[x.0])
    }

    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x).map(real::softplus);
        self.push("softplus", t, Op::Softplus { x: x.0 }, &[x.0])
    }

    /// Softmax along the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let n = xv.channels();
        let t = Tensor::new(xv.shape().to_vec(), kernels::softmax_rows(xv.data(), n))?;
        self.push("softmax", t, Op::Softmax { x: x.0, n }, &[x.0])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("add", self.shape(a), self.shape(b))?;
        let t = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push("add", t, Op::Add { a: a.0, b: b.0 }, &[a.0, b.0])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("sub", self.shape(a), self.shape(b))?;
        let t = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push("sub", t, Op::Sub { a: a.0, b: b.0 }, &[a.0, b.0])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("mul", self.shape(a), self.shape(b))?;
        let t = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push("mul", t, Op::Mul { a: a.0, b: b.0 }, &[a.0, b.0])
    }

    /// `scale · x + shift`
    pub fn affine(&mut self, x: Var, scale: T, shift: T) -> Result<Var> {
        let t = self.value(x).map(|v| v * scale + shift);
        self.push("affine", t, Op::Affine { x: x.0, scale }, &[x.0])
    }

    pub fn scale(&mut self, x: Var, s: T) -> Result<Var> {
        self.affine(x, s, T::ZERO)
    }

    /// Per-channel multiply: `x[B,H,W,C] * g[B,1,1,C]`.
    pub fn mul_channel(&mut self, x: Var, g: Var) -> Result<Var> {
        let [b, h, w, c] = self.value(x).dims4()?;
        if self.shape(g) != [b, 1, 1, c] {
            return Err(shape_err(
                "mul_channel",
                format!("{:?} * {:?}", self.shape(x), self.shape(g)),
            ));
        }
        let gv = self.value(g).data();
        let mut t = self.value(x).clone();
        let hw = h * w;
        for (p, row) in t.data_mut().chunks_mut(c).enumerate() {
            let gr = &gv[(p / hw) * c..][..c];
            for (v, &gg) in row.iter_mut().zip(gr) {
                *v *= gg;
            }
        }
        self.push(
            "mul_channel",
            t,
            Op::MulChannel { x: x.0, g: g.0 },
            &[x.0, g.0],
        )
    }

    /// Repeats a `[C]` vector over a `[B, H, W, C]` map.
    pub fn broadcast_spatial(&mut self, x: Var, b: usize, h: usize, w: usize) -> Result<Var> {
        let xv = self.value(x);
        let c = xv.len();
        let mut data = Vec::with_capacity(b * h * w * c);
        for _ in 0..b * h * w {
            data.extend_from_slice(xv.data());
        }
        let t = Tensor::new(vec![b, h, w, c], data)?;
        self.push("broadcast_spatial", t, Op::Broadcast { x: x.0 }, &[x.0])
    }

    fn axis_split(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
        if axis >= shape.len() {
            return Err(Error::Axis {
                axis,
                rank: shape.len(),
            });
        }
        let outer = shape[..axis].iter().product();
        let inner = shape[axis + 1..].iter().product();
        Ok((outer, shape[axis], inner))
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (outer, axis_len, inner) = Self::axis_split(&shape, axis)?;
        if start + len > axis_len || len == 0 {
            return Err(shape_err(
                "slice",
                format!("[{start}, {}) of {shape:?} axis {axis}", start + len),
            ));
        }
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            data.extend_from_slice(&src[(o * axis_len + start) * inner..][..len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let t = Tensor::new(out_shape, data)?;
        let op = Op::Slice {
            x: x.0,
            outer,
            axis_len,
            inner,
            start,
            len,
        };
        self.push("slice", t, op, &[x.0])
    }

    pub fn split(&mut self, x: Var, axis: usize, sizes: &[usize]) -> Result<Vec<Var>> {
        let shape = self.shape(x).to_vec();
        let (_, axis_len, _) = Self::axis_split(&shape, axis)?;
        if sizes.iter().sum::<usize>() != axis_len {
            return Err(shape_err(
                "split",
                format!("sizes {sizes:?} do not sum to {axis_len}"),
            ));
        }
        let mut start = 0;
        let mut out = Vec::with_capacity(sizes.len());
        for &s in sizes {
            out.push(self.slice(x, axis, start, s)?);
            start += s;
        }
        Ok(out)
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = xs
            .first()
            .ok_or_else(|| shape_err("concat", "no inputs".into()))?;
        let base = self.shape(*first).to_vec();
        let (outer, _, inner) = Self::axis_split(&base, axis)?;
        let mut lens = Vec::with_capacity(xs.len());
        for &x in xs {
            let s = self.shape(x);
            let same_rank = s.len() == base.len();
            if !same_rank || s[..axis] != base[..axis] || s[axis + 1..] != base[axis + 1..] {
                return Err(shape_err(
                    "concat",
                    format!("{s:?} vs {base:?} on axis {axis}"),
                ));
            }
            lens.push(s[axis]);
        }
        let total: usize = lens.iter().sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (&x, &l) in xs.iter().zip(&lens) {
                data.extend_from_slice(&self.value(x).data()[o * l * inner..][..l * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let t = Tensor::new(shape, data)?;
        let ids: Vec<usize> = xs.iter().map(|v| v.0).collect();
        let op = Op::Concat {
            xs: ids.clone(),
            outer,
            inner,
            lens,
        };
        self.push("concat", t, op, &ids)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        self.push("reshape", t, Op::Reshape { x: x.0 }, &[x.0])
    }

    // ------------------------------------------------------------- reductions

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: f64 = self.value(x).data().iter().map(|v| v.to_f64()).sum();
        self.push(
            "sum",
            Tensor::scalar(T::from_f64(s)),
            Op::Sum { x: x.0 },
            &[x.0],
        )
    }

    /// Mean squared difference.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("mse", self.shape(a), self.shape(b))?;
        let n = self.value(a).len() as f64;
        let s: f64 = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| {
                let d = x.to_f64() - y.to_f64();
                d * d
            })
            .sum();
        self.push(
            "mse",
            Tensor::scalar(T::from_f64(s / n)),
            Op::Mse { a: a.0, b: b.0 },
            &[a.0, b.0],
        )
    }

    /// `Σ −log₂ p`: information content in bits.
    pub fn neg_log2_sum(&mut self, p: Var) -> Result<Var> {
        let mut s = 0.0f64;
        for v in self.value(p).data() {
            let v = v.to_f64();
            if !(v > 0.0 && v <= 1.0 + 1e-6) {
                return Err(Error::NonFinite("neg_log2_sum: probability outside (0, 1]"));
            }
            s -= libm::log2(v);
        }
        self.push(
            "neg_log2_sum",
            Tensor::scalar(T::from_f64(s)),
            Op::NegLog2Sum { x: p.0 },
            &[p.0],
        )
    }

    // ---------------------------------------------------------- likelihoods

    /// Gaussian convolved with a unit uniform, evaluated at `y`.
    pub fn gaussian_likelihood(&mut self, y: Var, mu: Var, sigma: Var) -> Result<Var> {
        check_same("gaussian_likelihood", self.shape(y), self.shape(mu))?;
        check_same("gaussian_likelihood", self.shape(y), self.shape(sigma))?;
        let (yv, mv, sv) = (
            self.value(y).data(),
            self.value(mu).data(),
            self.value(sigma).data(),
        );
        let data: Vec<T> = (0..yv.len())
            .map(|i| crate::entropy::likelihood::gaussian_mass(yv[i] - mv[i], sv[i]))
            .collect();
        let t = Tensor::new(self.shape(y).to_vec(), data)?;
        let op = Op::GaussLik {
            y: y.0,
            mu: mu.0,
            sigma: sigma.0,
        };
        self.push("gaussian_likelihood", t, op, &[y.0, mu.0, sigma.0])
    }

    /// Logistic convolved with a unit uniform; `loc`/`scale` are per channel.
    pub fn logistic_likelihood(&mut self, z: Var, loc: Var, scale: Var) -> Result<Var> {
        let c = self.value(z).channels();
        if self.value(loc).len() != c || self.value(scale).len() != c {
            return Err(shape_err("logistic_likelihood", format!("{} channels", c)));
        }
        let (zv, lv, sv) = (
            self.value(z).data(),
            self.value(loc).data(),
            self.value(scale).data(),
        );
        let data: Vec<T> = zv
            .iter()
            .enumerate()
            .map(|(i, &zz)| crate::entropy::likelihood::logistic_mass(zz - lv[i % c], sv[i % c]))
            .collect();
        let t = Tensor::new(self.shape(z).to_vec(), data)?;
        let op = Op::LogisticLik {
            z: z.0,
            loc: loc.0,
            scale: scale.0,
        };
        self.push("logistic_likelihood", t, op, &[z.0, loc.0, scale.0])
    }

    // --------------------------------------------------------------- backward

    /// Propagates d`loss` to every parameter leaf, accumulating into `params`.
    ///
    /// The tape is consumed: node values are released and a second call
    /// returns [`Error::StaleTape`].
    pub fn backward(&mut self, loss: Var, params: &mut ParamSet<T>) -> Result<()> {
        if self.consumed || !self.record || self.nodes.is_empty() {
            return Err(Error::StaleTape);
        }
        if self.value(loss).len() != 1 {
            return Err(Error::NonScalarLoss(self.shape(loss).to_vec()));
        }
        self.consumed = true;
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Tensor<T>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.shape(loss), T::ONE));
        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else {
                continue;
            };
            if let Some(pid) = self.nodes[i].param {
                params.accumulate(pid, &g);
            }
            let contribs = self.node_backward(i, &g);
            for (j, d) in contribs {
                if !self.nodes[j].requires_grad {
                    continue;
                }
                match &mut grads[j] {
                    Some(acc) => acc.add_assign(&d),
                    slot => *slot = Some(d),
                }
            }
            if self.nodes[i].param.is_none() {
                self.nodes[i].value = Tensor::zeros(&[0]);
            }
        }
        Ok(())
    }

    fn node_backward(&self, i: usize, g: &Tensor<T>) -> Vec<(usize, Tensor<T>)> {
        let val = |j: usize| &self.nodes[j].value;
        let like = |j: usize, data: Vec<T>| {
            Tensor::new(self.nodes[j].value.shape().to_vec(), data).unwrap()
        };
        let gd = g.data();
        let mut out = Vec::new();
        match &self.nodes[i].op {
            Op::Leaf => {}
            &Op::MatMul { a, b, m, k, n } => {
                if self.rg(a) {
                    let mut da = vec![T::ZERO; m * k];
                    kernels::gemm_nt(gd, val(b).data(), &mut da, m, n, k);
                    out.push((a, like(a, da)));
                }
                if self.rg(b) {
                    let mut db = vec![T::ZERO; k * n];
                    kernels::gemm_tn(val(a).data(), gd, &mut db, k, m, n);
                    out.push((b, like(b, db)));
                }
            }
            &Op::AddBias { x, b } => {
                out.push((x, g.clone()));
                if self.rg(b) {
                    let c = val(b).len();
                    let mut acc = vec![0.0f64; c];
                    for row in gd.chunks(c) {
                        for (a, &v) in acc.iter_mut().zip(row) {
                            *a += v.to_f64();
                        }
                    }
                    out.push((b, like(b, acc.into_iter().map(T::from_f64).collect())));
                }
            }
            Op::Conv { x, w, geom } => {
                if self.rg(*x) {
                    out.push((
                        *x,
                        like(*x, kernels::conv2d_backward_input(geom, gd, val(*w).data())),
                    ));
                }
                if self.rg(*w) {
                    out.push((
                        *w,
                        like(
                            *w,
                            kernels::conv2d_backward_kernel(geom, val(*x).data(), gd),
                        ),
                    ));
                }
            }
            Op::ConvT { x, w, geom } => {
                // forward was conv-backward-input; the adjoint of that is the conv itself
                if self.rg(*x) {
                    out.push((
                        *x,
                        like(*x, kernels::conv2d_forward(geom, gd, val(*w).data())),
                    ));
                }
                if self.rg(*w) {
                    out.push((
                        *w,
                        like(
                            *w,
                            kernels::conv2d_backward_kernel(geom, gd, val(*x).data()),
                        ),
                    ));
                }
            }
            Op::Attention {
                q,
                k,
                v,
                shape,
                probs,
            } => {
                let (dq, dk, dv) = kernels::attention_backward(
                    shape,
                    val(*q).data(),
                    val(*k).data(),
                    val(*v).data(),
                    probs,
                    gd,
                );
                out.push((*q, like(*q, dq)));
                out.push((*k, like(*k, dk)));
                out.push((*v, like(*v, dv)));
            }
            Op::LayerNorm {
                x,
                g: gain,
                b,
                xhat,
                rstd,
            } => {
                let c = val(*x).channels();
                let (dx, dg, db) =
                    kernels::layer_norm_backward(gd, xhat, rstd, val(*gain).data(), c);
                out.push((*x, like(*x, dx)));
                out.push((*gain, like(*gain, dg)));
                out.push((*b, like(*b, db)));
            }
            &Op::WindowMean { x, dims, wh, ww } => {
                out.push((x, like(x, kernels::window_mean_backward(gd, dims, wh, ww))));
            }
            &Op::Partition { x, dims, win } => {
                out.push((x, like(x, kernels::window_merge(gd, dims, win))));
            }
            &Op::Merge { x, dims, win } => {
                out.push((x, like(x, kernels::window_partition(gd, dims, win))));
            }
            &Op::Relu { x } => {
                let d = val(x)
                    .data()
                    .iter()
                    .zip(gd)
                    .map(|(&v, &gg)| if v > T::ZERO { gg } else { T::ZERO });
                out.push((x, like(x, d.collect())));
            }
            &Op::Gelu { x } => {
                let d = val(x)
                    .data()
                    .iter()
                    .zip(gd)
                    .map(|(&v, &gg)| gg * real::gelu_grad(v));
                out.push((x, like(x, d.collect())));
            }
            &Op::Sigmoid { x } => {
                let y = &self.nodes[i].value;
                let d = y
                    .data()
                    .iter()
                    .zip(gd)
                    .map(|(&s, &gg)| gg * s * (T::ONE - s));
                out.push((x, like(x, d.collect())));
            }
            &Op::Softplus { x } => {
                let d = val(x)
                    .data()
                    .iter()
                    .zip(gd)
                    .map(|(&v, &gg)| gg * real::sigmoid(v));
                out.push((x, like(x, d.collect())));
            }
            &Op::Softmax { x, n } => {
                let y = self.nodes[i].value.data();
                let mut d = vec![T::ZERO; y.len()];
                for ((yr, gr), dr) in y.chunks(n).zip(gd.chunks(n)).zip(d.chunks_mut(n)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| (*a * *b).to_f64()).sum();
                    let dot = T::from_f64(dot);
                    for ((dv, &yv), &gv) in dr.iter_mut().zip(yr).zip(gr) {
                        *dv = yv * (gv - dot);
                    }
                }
                out.push((x, like(x, d)));
            }
            &Op::Add { a, b } => {
                out.push((a, g.clone()));
                out.push((b, g.clone()));
            }
            &Op::Sub { a, b } => {
                out.push((a, g.clone()));
                out.push((b, g.map(|v| -v)));
            }
            &Op::Mul { a, b } => {
                if self.rg(a) {
                    out.push((a, g.zip_map(val(b), |x, y| x * y)));
                }
                if self.rg(b) {
                    out.push((b, g.zip_map(val(a), |x, y| x * y)));
                }
            }
            &Op::Affine { x, scale } => out.push((x, g.map(|v| v * scale))),
            &Op::MulChannel { x, g: gate } => {
                let [_, h, w, c] = val(x).dims4().unwrap();
                let hw = h * w;
                let gv = val(gate).data();
                if self.rg(x) {
                    let mut dx = g.clone();
                    for (p, row) in dx.data_mut().chunks_mut(c).enumerate() {
                        for (v, &gg) in row.iter_mut().zip(&gv[(p / hw) * c..][..c]) {
                            *v *= gg;
                        }
                    }
                    out.push((x, dx));
                }
                if self.rg(gate) {
                    let mut acc = vec![0.0f64; gv.len()];
                    for (p, (row, xr)) in gd.chunks(c).zip(val(x).data().chunks(c)).enumerate() {
                        let a = &mut acc[(p / hw) * c..][..c];
                        for ((s, &dv), &xv) in a.iter_mut().zip(row).zip(xr) {
                            *s += (dv * xv).to_f64();
                        }
                    }
                    out.push((gate, like(gate, acc.into_iter().map(T::from_f64).collect())));
                }
            }
            &Op::Broadcast { x } => {
                let c = val(x).len();
                let mut acc = vec![0.0f64; c];
                for row in gd.chunks(c) {
                    for (a, &v) in acc.iter_mut().zip(row) {
                        *a += v.to_f64();
                    }
                }
                out.push((x, like(x, acc.into_iter().map(T::from_f64).collect())));
            }
            &Op::Slice {
                x,
                outer,
                axis_len,
                inner,
                start,
                len,
            } => {
                let mut d = vec![T::ZERO; outer * axis_len * inner];
                for o in 0..outer {
                    d[(o * axis_len + start) * inner..][..len * inner]
                        .copy_from_slice(&gd[o * len * inner..][..len * inner]);
                }
                out.push((x, like(x, d)));
            }
            Op::Concat {
                xs,
                outer,
                inner,
                lens,
            } => {
                let total: usize = lens.iter().sum();
                let mut off = 0;
                for (&x, &l) in xs.iter().zip(lens) {
                    if self.rg(x) {
                        let mut d = Vec::with_capacity(outer * l * inner);
                        for o in 0..*outer {
                            d.extend_from_slice(&gd[(o * total + off) * inner..][..l * inner]);
                        }
                        out.push((x, like(x, d)));
                    }
                    off += l;
                }
            }
            &Op::Reshape { x } => out.push((x, like(x, gd.to_vec()))),
            &Op::Sum { x } => out.push((x, Tensor::full(val(x).shape(), gd[0]))),
            &Op::Mse { a, b } => {
                let n = T::from_usize(val(a).len());
                let two = T::from_f64(2.0) * gd[0] / n;
                let d = val(a).zip_map(val(b), |x, y| two * (x - y));
                if self.rg(b) {
                    out.push((b, d.map(|v| -v)));
                }
                out.push((a, d));
            }
            &Op::NegLog2Sum { x } => {
                let k = T::from_f64(-1.0 / core::f64::consts::LN_2) * gd[0];
                out.push((x, val(x).map(|p| k / p)));
            }
            &Op::GaussLik { y, mu, sigma } => {
                let (yv, mv, sv) = (val(y).data(), val(mu).data(), val(sigma).data());
                let n = yv.len();
                let mut dy = vec![T::ZERO; n];
                let mut ds = vec![T::ZERO; n];
                for j in 0..n {
                    let (gy, gs) =
                        crate::entropy::likelihood::gaussian_mass_grad(yv[j] - mv[j], sv[j]);
                    dy[j] = gd[j] * gy;
                    ds[j] = gd[j] * gs;
                }
                if self.rg(mu) {
                    out.push((mu, like(mu, dy.iter().map(|&v| -v).collect())));
                }
                out.push((y, like(y, dy)));
                out.push((sigma, like(sigma, ds)));
            }
            &Op::LogisticLik { z, loc, scale } => {
                let (zv, lv, sv) = (val(z).data(), val(loc).data(), val(scale).data());
                let c = lv.len();
                let mut dz = vec![T::ZERO; zv.len()];
                let mut dl = vec![0.0f64; c];
                let mut ds = vec![0.0f64; c];
                for j in 0..zv.len() {
                    let ch = j % c;
                    let (gz, gs) =
                        crate::entropy::likelihood::logistic_mass_grad(zv[j] - lv[ch], sv[ch]);
                    dz[j] = gd[j] * gz;
                    dl[ch] -= (gd[j] * gz).to_f64();
                    ds[ch] += (gd[j] * gs).to_f64();
                }
                out.push((z, like(z, dz)));
                out.push((loc, like(loc, dl.into_iter().map(T::from_f64).collect())));
                out.push((
                    scale,
                    like(scale, ds.into_iter().map(T::from_f64).collect()),
                ));
            }
        }
        out
    }
}
