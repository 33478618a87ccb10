//! Parameterized building blocks shared by the transforms and entropy model.

use alloc::format;

use rand_core::RngCore;

use crate::error::Result;
use crate::graph::{Graph, Padding, Var};
use crate::params::{Init, ParamId, ParamSet};
use crate::real::Real;
use crate::tensor::Tensor;

/// Token-wise linear map over the last axis.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new<T: Real, R: RngCore>(
        ps: &mut ParamSet<T>,
        init: &mut Init<'_, R>,
        name: &str,
        cin: usize,
        cout: usize,
        bias: bool,
    ) -> Result<Self> {
        let weight = ps.add(
            format!("{name}.weight"),
            init.scaled(&[cin, cout], cin, 1.0),
        )?;
        let bias = if bias {
            Some(ps.add(format!("{name}.bias"), Tensor::zeros(&[cout]))?)
        } else {
            None
        };
        Ok(Self { weight, bias })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, ps: &ParamSet<T>, x: Var) -> Result<Var> {
        let w = g.param(ps, self.weight);
        let y = g.matmul(x, w)?;
        match self.bias {
            Some(b) => {
                let b = g.param(ps, b);
                g.add_bias(y, b)
            }
            None => Ok(y),
        }
    }
}

/// Square-kernel convolution with bias, `same` padding.
#[derive(Debug, Clone)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub groups: usize,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real, R: RngCore>(
        ps: &mut ParamSet<T>,
        init: &mut Init<'_, R>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        groups: usize,
    ) -> Result<Self> {
        let fan_in = kernel * kernel * cin / groups;
        let weight = ps.add(
            format!("{name}.weight"),
            init.scaled(&[kernel, kernel, cin / groups, cout], fan_in, 1.0),
        )?;
        let bias = ps.add(format!("{name}.bias"), Tensor::zeros(&[cout]))?;
        Ok(Self {
            weight,
            bias,
            stride,
            groups,
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, ps: &ParamSet<T>, x: Var) -> Result<Var> {
        let w = g.param(ps, self.weight);
        let y = g.conv2d(x, w, self.stride, self.groups, Padding::Same)?;
        let b = g.param(ps, self.bias);
        g.add_bias(y, b)
    }
}

/// Transposed convolution with bias; spatial extents grow by `stride`.
#[derive(Debug, Clone)]
pub struct ConvTranspose {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
}

impl ConvTranspose {
    pub fn new<T: Real, R: RngCore>(
        ps: &mut ParamSet<T>,
        init: &mut Init<'_, R>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
    ) -> Result<Self> {
        Self::with_gain(ps, init, name, cin, cout, kernel, stride, 1.0)
    }

    /// Like [`ConvTranspose::new`] with the initial weight scale multiplied by `gain`.
    #[allow(clippy::too_many_arguments)]
    pub fn with_gain<T: Real, R: RngCore>(
        ps: &mut ParamSet<T>,
        init: &mut Init<'_, R>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        gain: f64,
    ) -> Result<Self> {
        // each output pixel sees about kernel²/stride² taps
        let fan_in = (kernel * kernel * cin).div_ceil(stride * stride);
        let weight = ps.add(
            format!("{name}.weight"),
            init.scaled(&[kernel, kernel, cout, cin], fan_in, gain),
        )?;
        let bias = ps.add(format!("{name}.bias"), Tensor::zeros(&[cout]))?;
        Ok(Self {
            weight,
            bias,
            stride,
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, ps: &ParamSet<T>, x: Var) -> Result<Var> {
        let w = g.param(ps, self.weight);
        let y = g.conv_transpose2d(x, w, self.stride)?;
        let b = g.param(ps, self.bias);
        g.add_bias(y, b)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new<T: Real>(ps: &mut ParamSet<T>, name: &str, c: usize) -> Result<Self> {
        Ok(Self {
            gain: ps.add(format!("{name}.gain"), Tensor::full(&[c], T::ONE))?,
            bias: ps.add(format!("{name}.bias"), Tensor::zeros(&[c]))?,
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, ps: &ParamSet<T>, x: Var) -> Result<Var> {
        let gain = g.param(ps, self.gain);
        let bias = g.param(ps, self.bias);
        g.layer_norm(x, gain, bias)
    }
}
