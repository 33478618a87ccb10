//! Raw forward/backward loops on flat slices.
//!
//! Everything here is single-threaded with a fixed iteration order, so
//! results are reproducible bit-for-bit.

use alloc::vec;
use alloc::vec::Vec;

use crate::real::Real;

/// `c[m×n] += a[m×k] · b[k×n]`
pub fn gemm_nn<T: Real>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            if av == T::ZERO {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// `c[m×n] += a[m×k] · b[n×k]ᵀ`
pub fn gemm_nt<T: Real>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut s = T::ZERO;
            for (&x, &y) in arow.iter().zip(brow) {
                s += x * y;
            }
            c[i * n + j] += s;
        }
    }
}

/// `c[m×n] += a[k×m]ᵀ · b[k×n]`
pub fn gemm_tn<T: Real>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            if av == T::ZERO {
                continue;
            }
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// Geometry of a 2-D convolution over NHWC maps with `[kh, kw, Cin/g, Cout]` kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub cin: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub groups: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl ConvGeom {
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize, usize)) {
        // f(input_pixel_offset, output_pixel_offset, ky, kx) in pixel units
        for b in 0..self.batch {
            for oy in 0..self.out_h {
                for ky in 0..self.kh {
                    let iy = (oy * self.stride + ky) as isize - self.pad_top as isize;
                    if iy < 0 || iy >= self.in_h as isize {
                        continue;
                    }
                    for ox in 0..self.out_w {
                        let opix = (b * self.out_h + oy) * self.out_w + ox;
                        for kx in 0..self.kw {
                            let ix = (ox * self.stride + kx) as isize - self.pad_left as isize;
                            if ix < 0 || ix >= self.in_w as isize {
                                continue;
                            }
                            let ipix = (b * self.in_h + iy as usize) * self.in_w + ix as usize;
                            f(ipix, opix, ky, kx);
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward<T: Real>(g: &ConvGeom, input: &[T], kernel: &[T]) -> Vec<T> {
    let mut out = vec![T::ZERO; g.batch * g.out_h * g.out_w * g.cout];
    let cin_g = g.cin / g.groups;
    let cout_g = g.cout / g.groups;
    g.for_each_tap(|ipix, opix, ky, kx| {
        let inp = &input[ipix * g.cin..(ipix + 1) * g.cin];
        let o = &mut out[opix * g.cout..(opix + 1) * g.cout];
        let kbase = (ky * g.kw + kx) * cin_g * g.cout;
        if cin_g == 1 && cout_g == 1 {
            let w = &kernel[kbase..kbase + g.cout];
            for ((ov, &iv), &wv) in o.iter_mut().zip(inp).zip(w) {
                *ov += iv * wv;
            }
            return;
        }
        for grp in 0..g.groups {
            let og = &mut o[grp * cout_g..(grp + 1) * cout_g];
            for ci in 0..cin_g {
                let v = inp[grp * cin_g + ci];
                let w = &kernel[kbase + ci * g.cout + grp * cout_g..][..cout_g];
                for (ov, &wv) in og.iter_mut().zip(w) {
                    *ov += v * wv;
                }
            }
        }
    });
    out
}

/// Gradient with respect to the input (also the forward of the transposed conv).
pub fn conv2d_backward_input<T: Real>(g: &ConvGeom, dout: &[T], kernel: &[T]) -> Vec<T> {
    let mut din = vec![T::ZERO; g.batch * g.in_h * g.in_w * g.cin];
    let cin_g = g.cin / g.groups;
    let cout_g = g.cout / g.groups;
    g.for_each_tap(|ipix, opix, ky, kx| {
        let d = &dout[opix * g.cout..(opix + 1) * g.cout];
        let di = &mut din[ipix * g.cin..(ipix + 1) * g.cin];
        let kbase = (ky * g.kw + kx) * cin_g * g.cout;
        if cin_g == 1 && cout_g == 1 {
            let w = &kernel[kbase..kbase + g.cout];
            for ((iv, &dv), &wv) in di.iter_mut().zip(d).zip(w) {
                *iv += dv * wv;
            }
            return;
        }
        for grp in 0..g.groups {
            let dg = &d[grp * cout_g..(grp + 1) * cout_g];
            for ci in 0..cin_g {
                let w = &kernel[kbase + ci * g.cout + grp * cout_g..][..cout_g];
                let mut s = T::ZERO;
                for (&dv, &wv) in dg.iter().zip(w) {
                    s += dv * wv;
                }
                di[grp * cin_g + ci] += s;
            }
        }
    });
    din
}

pub fn conv2d_backward_kernel<T: Real>(g: &ConvGeom, input: &[T], dout: &[T]) -> Vec<T> {
    let cin_g = g.cin / g.groups;
    let cout_g = g.cout / g.groups;
    let mut dk = vec![T::ZERO; g.kh * g.kw * cin_g * g.cout];
    g.for_each_tap(|ipix, opix, ky, kx| {
        let inp = &input[ipix * g.cin..(ipix + 1) * g.cin];
        let d = &dout[opix * g.cout..(opix + 1) * g.cout];
        let kbase = (ky * g.kw + kx) * cin_g * g.cout;
        if cin_g == 1 && cout_g == 1 {
            let w = &mut dk[kbase..kbase + g.cout];
            for ((wv, &iv), &dv) in w.iter_mut().zip(inp).zip(d) {
                *wv += iv * dv;
            }
            return;
        }
        for grp in 0..g.groups {
            let dg = &d[grp * cout_g..(grp + 1) * cout_g];
            for ci in 0..cin_g {
                let v = inp[grp * cin_g + ci];
                let w = &mut dk[kbase + ci * g.cout + grp * cout_g..][..cout_g];
                for (wv, &dv) in w.iter_mut().zip(dg) {
                    *wv += v * dv;
                }
            }
        }
    });
    dk
}

/// Multi-head softmax attention over `groups` independent sequences.
///
/// `q` is `[G, Tq, C]`, `k` and `v` are `[G, Tk, C]`; channels are split into
/// `heads` contiguous blocks. When `keep_probs` is set the softmax weights
/// `[G, heads, Tq, Tk]` are returned for the backward pass.
pub struct AttnShape {
    pub groups: usize,
    pub tq: usize,
    pub tk: usize,
    pub channels: usize,
    pub heads: usize,
}

pub fn attention_forward<T: Real>(
    s: &AttnShape,
    q: &[T],
    k: &[T],
    v: &[T],
    keep_probs: bool,
) -> (Vec<T>, Option<Vec<T>>) {
    let c = s.channels;
    let d = c / s.heads;
    let scale = T::ONE / T::from_usize(d).sqrt();
    let mut out = vec![T::ZERO; s.groups * s.tq * c];
    let mut probs = if keep_probs {
        Some(vec![T::ZERO; s.groups * s.heads * s.tq * s.tk])
    } else {
        None
    };
    let mut row = vec![T::ZERO; s.tk];
    for g in 0..s.groups {
        for h in 0..s.heads {
            for i in 0..s.tq {
                let qi = &q[(g * s.tq + i) * c + h * d..][..d];
                let mut mx = T::from_f64(f64::NEG_INFINITY);
                for (j, r) in row.iter_mut().enumerate() {
                    let kj = &k[(g * s.tk + j) * c + h * d..][..d];
                    let mut acc = T::ZERO;
                    for (&a, &b) in qi.iter().zip(kj) {
                        acc += a * b;
                    }
                    *r = acc * scale;
                    mx = mx.max(*r);
                }
                let mut denom = 0.0f64;
                for r in row.iter_mut() {
                    *r = (*r - mx).exp();
                    denom += r.to_f64();
                }
                let inv = T::from_f64(1.0 / denom);
                let o = &mut out[(g * s.tq + i) * c + h * d..][..d];
                for (j, r) in row.iter_mut().enumerate() {
                    *r *= inv;
                    let vj = &v[(g * s.tk + j) * c + h * d..][..d];
                    for (ov, &vv) in o.iter_mut().zip(vj) {
                        *ov += *r * vv;
                    }
                }
                if let Some(p) = probs.as_mut() {
                    p[((g * s.heads + h) * s.tq + i) * s.tk..][..s.tk].copy_from_slice(&row);
                }
            }
        }
    }
    (out, probs)
}

/// Returns `(dq, dk, dv)`.
pub fn attention_backward<T: Real>(
    s: &AttnShape,
    q: &[T],
    k: &[T],
    v: &[T],
    probs: &[T],
    dout: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let c = s.channels;
    let d = c / s.heads;
    let scale = T::ONE / T::from_usize(d).sqrt();
    let mut dq = vec![T::ZERO; q.len()];
    let mut dk = vec![T::ZERO; k.len()];
    let mut dv = vec![T::ZERO; v.len()];
    let mut dp = vec![T::ZERO; s.tk];
    for g in 0..s.groups {
        for h in 0..s.heads {
            for i in 0..s.tq {
                let p = &probs[((g * s.heads + h) * s.tq + i) * s.tk..][..s.tk];
                let doi = &dout[(g * s.tq + i) * c + h * d..][..d];
                let mut dot = 0.0f64;
                for j in 0..s.tk {
                    let vo = (g * s.tk + j) * c + h * d;
                    let mut acc = T::ZERO;
                    for t in 0..d {
                        acc += doi[t] * v[vo + t];
                        dv[vo + t] += p[j] * doi[t];
                    }
                    dp[j] = acc;
                    dot += (acc * p[j]).to_f64();
                }
                let dot = T::from_f64(dot);
                let qo = (g * s.tq + i) * c + h * d;
                for j in 0..s.tk {
                    let ds = p[j] * (dp[j] - dot) * scale;
                    if ds == T::ZERO {
                        continue;
                    }
                    let ko = (g * s.tk + j) * c + h * d;
                    for t in 0..d {
                        dq[qo + t] += ds * k[ko + t];
                        dk[ko + t] += ds * q[qo + t];
                    }
                }
            }
        }
    }
    (dq, dk, dv)
}

/// Layer norm over the last axis. Returns `(y, xhat, rstd)`.
pub fn layer_norm_forward<T: Real>(
    x: &[T],
    c: usize,
    gain: &[T],
    bias: &[T],
    eps: f64,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let rows = x.len() / c;
    let mut y = vec![T::ZERO; x.len()];
    let mut xhat = vec![T::ZERO; x.len()];
    let mut rstd = vec![T::ZERO; rows];
    for r in 0..rows {
        let xr = &x[r * c..(r + 1) * c];
        let mean = xr.iter().map(|v| v.to_f64()).sum::<f64>() / c as f64;
        let var = xr
            .iter()
            .map(|v| {
                let d = v.to_f64() - mean;
                d * d
            })
            .sum::<f64>()
            / c as f64;
        let rs = 1.0 / libm::sqrt(var + eps);
        rstd[r] = T::from_f64(rs);
        for i in 0..c {
            let xh = T::from_f64((xr[i].to_f64() - mean) * rs);
            xhat[r * c + i] = xh;
            y[r * c + i] = xh * gain[i] + bias[i];
        }
    }
    (y, xhat, rstd)
}

/// Returns `(dx, dgain, dbias)`.
pub fn layer_norm_backward<T: Real>(
    dy: &[T],
    xhat: &[T],
    rstd: &[T],
    gain: &[T],
    c: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let rows = dy.len() / c;
    let mut dx = vec![T::ZERO; dy.len()];
    let mut dg = vec![0.0f64; c];
    let mut db = vec![0.0f64; c];
    for r in 0..rows {
        let dyr = &dy[r * c..(r + 1) * c];
        let xr = &xhat[r * c..(r + 1) * c];
        let mut m1 = 0.0f64;
        let mut m2 = 0.0f64;
        for i in 0..c {
            let dxh = (dyr[i] * gain[i]).to_f64();
            m1 += dxh;
            m2 += dxh * xr[i].to_f64();
            dg[i] += (dyr[i] * xr[i]).to_f64();
            db[i] += dyr[i].to_f64();
        }
        m1 /= c as f64;
        m2 /= c as f64;
        let rs = rstd[r].to_f64();
        for i in 0..c {
            let dxh = (dyr[i] * gain[i]).to_f64();
            dx[r * c + i] = T::from_f64(rs * (dxh - m1 - xr[i].to_f64() * m2));
        }
    }
    (
        dx,
        dg.into_iter().map(T::from_f64).collect(),
        db.into_iter().map(T::from_f64).collect(),
    )
}

/// Mean over non-overlapping `wh × ww` windows of `[B,H,W,C]`.
pub fn window_mean<T: Real>(x: &[T], dims: [usize; 4], wh: usize, ww: usize) -> Vec<T> {
    let [b, h, w, c] = dims;
    let (oh, ow) = (h / wh, w / ww);
    let mut acc = vec![0.0f64; b * oh * ow * c];
    for bi in 0..b {
        for y in 0..h {
            for xx in 0..w {
                let o = ((bi * oh + y / wh) * ow + xx / ww) * c;
                let i = ((bi * h + y) * w + xx) * c;
                for ch in 0..c {
                    acc[o + ch] += x[i + ch].to_f64();
                }
            }
        }
    }
    let inv = 1.0 / (wh * ww) as f64;
    acc.into_iter().map(|s| T::from_f64(s * inv)).collect()
}

pub fn window_mean_backward<T: Real>(dy: &[T], dims: [usize; 4], wh: usize, ww: usize) -> Vec<T> {
    let [b, h, w, c] = dims;
    let (oh, ow) = (h / wh, w / ww);
    let inv = T::from_f64(1.0 / (wh * ww) as f64);
    let mut dx = vec![T::ZERO; b * h * w * c];
    for bi in 0..b {
        for y in 0..h {
            for xx in 0..w {
                let o = ((bi * oh + y / wh) * ow + xx / ww) * c;
                let i = ((bi * h + y) * w + xx) * c;
                for ch in 0..c {
                    dx[i + ch] = dy[o + ch] * inv;
                }
            }
        }
    }
    dx
}

/// `[B,H,W,C] -> [B·M, w·w, C]`, windows in row-major order per image.
pub fn window_partition<T: Real>(x: &[T], dims: [usize; 4], win: usize) -> Vec<T> {
    let [b, h, w, c] = dims;
    let mut out = Vec::with_capacity(x.len());
    for bi in 0..b {
        for wy in 0..h / win {
            for wx in 0..w / win {
                for ty in 0..win {
                    let row = ((bi * h + wy * win + ty) * w + wx * win) * c;
                    out.extend_from_slice(&x[row..row + win * c]);
                }
            }
        }
    }
    out
}

pub fn window_merge<T: Real>(x: &[T], dims: [usize; 4], win: usize) -> Vec<T> {
    let [b, h, w, c] = dims;
    let mut out = vec![T::ZERO; x.len()];
    let mut src = 0;
    for bi in 0..b {
        for wy in 0..h / win {
            for wx in 0..w / win {
                for ty in 0..win {
                    let row = ((bi * h + wy * win + ty) * w + wx * win) * c;
                    out[row..row + win * c].copy_from_slice(&x[src..src + win * c]);
                    src += win * c;
                }
            }
        }
    }
    out
}

pub fn softmax_rows<T: Real>(x: &[T], n: usize) -> Vec<T> {
    let mut out = vec![T::ZERO; x.len()];
    for (xr, or) in x.chunks(n).zip(out.chunks_mut(n)) {
        let mx = xr
            .iter()
            .fold(T::from_f64(f64::NEG_INFINITY), |a, &b| a.max(b));
        let mut denom = 0.0f64;
        for (o, &v) in or.iter_mut().zip(xr) {
            *o = (v - mx).exp();
            denom += o.to_f64();
        }
        let inv = T::from_f64(1.0 / denom);
        for o in or.iter_mut() {
            *o *= inv;
        }
    }
    out
}
