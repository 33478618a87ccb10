//! Analysis and synthesis stacks.

use alloc::format;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::params::{Init, ParamSet};
use crate::real::Real;
use crate::transforms::block::{Hscatb, StageConfig};
use crate::transforms::layers::{Conv, ConvTranspose};

/// Total spatial reduction of the analysis transform.
pub const ANALYSIS_FACTOR: usize = 16;

/// Strided 3×3 conv halving the spatial extents, then GELU.
#[derive(Debug, Clone)]
pub struct Downsample {
    conv: Conv,
}

impl Downsample {
    pub fn new<T: Real, R: RngCore>(
        ps: &mut ParamSet<T>,
        init: &mut Init<'_, R>,
        name: &str,
        cin: usize,
        cout: usize,
    ) -> Result<Self> {
        Ok(Self {
            conv: Conv::new(ps, init, name, cin, cout, 3, 2, 1)?,
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, ps: &ParamSet<T>, x: Var) -> Result<Var> {
        let [_, h, w, _] = g.value(x).dims4()?;
        for e in [h, w] {
            if e % 2 != 0 {
                return Err(Error::Divisibility {
                    op: "downsample",
                    extent: e,
                    divisor: 2,
                    hint: alloc::string::String::new(),
                });
            }
        }
        let y = self.conv.forward(g, ps, x)?;
        g.gelu(y)
    }
}

/// Initial weight scale of the final, pixel-producing layer.
const OUTPUT_GAIN: f64 = 0.1;

/// Stride-2 transposed 3×3 conv doubling the spatial extents, optionally
/// followed by GELU.
#[derive(Debug, Clone)]
pub struct Upsample {
    conv: ConvTranspose,
    activate: bool,
}

impl Upsample {
    pub fn new<T: Real, R: RngCore>(
        ps: &mut ParamSet<T>,
        init: &mut Init<'_, R>,
        name: &str,
        cin: usize,
        cout: usize,
        activate: bool,
    ) -> Result<Self> {
        Ok(Self {
            conv: ConvTranspose::with_gain(
                ps,
                init,
                name,
                cin,
                cout,
                3,
                2,
                if activate { 1.0 } else { OUTPUT_GAIN },
            )?,
            activate,
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, ps: &ParamSet<T>, x: Var) -> Result<Var> {
        let y = self.conv.forward(g, ps, x)?;
        if self.activate {
            g.gelu(y)
        } else {
            Ok(y)
        }
    }
}

#[derive(Debug, Clone)]
struct Stage {
    resample: ResampleKind,
    blocks: Vec<Hscatb>,
}

#[derive(Debug, Clone)]
enum ResampleKind {
    Down(Downsample),
    Up(Upsample),
}

/// `g_a`: image `[B, H, W, 3]` to latent `[B, H/16, W/16, M]`.
#[derive(Debug, Clone)]
pub struct AnalysisTransform {
    stages: Vec<Stage>,
}

impl AnalysisTransform {
    pub fn new<T: Real, R: RngCore>(
        ps: &mut ParamSet<T>,
        init: &mut Init<'_, R>,
        cfg: &ModelConfig,
    ) -> Result<Self> {
        let widths = cfg.stage_widths();
        let mut stages = Vec::with_capacity(4);
        let mut cin = 3;
        for (i, (&w, &n)) in widths.iter().zip(&cfg.blocks).enumerate() {
            let down = Downsample::new(ps, init, &format!("g_a.down{i}"), cin, w)?;
            let stage = StageConfig::from_model(cfg, w, n);
            let blocks = (0..n)
                .map(|j| {
                    Hscatb::new(
                        ps,
                        init,
                        &format!("g_a.stage{i}.block{j}"),
                        cfg,
                        stage.clone(),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            stages.push(Stage {
                resample: ResampleKind::Down(down),
                blocks,
            });
            cin = w;
        }
        Ok(Self { stages })
    }

    pub fn blocks(&self) -> impl Iterator<Item = &Hscatb> {
        self.stages.iter().flat_map(|s| s.blocks.iter())
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, ps: &ParamSet<T>, x: Var) -> Result<Var> {
        let [_, h, w, c] = g.value(x).dims4()?;
        if c != 3 {
            return Err(crate::error::shape_err(
                "analysis",
                format!("expected 3 channels, got {c}"),
            ));
        }
        for e in [h, w] {
            if e == 0 || e % ANALYSIS_FACTOR != 0 {
                let need = e.div_ceil(ANALYSIS_FACTOR).max(1) * ANALYSIS_FACTOR;
                return Err(Error::Divisibility {
                    op: "analysis transform",
                    extent: e,
                    divisor: ANALYSIS_FACTOR,
                    hint: format!(" (pad by {} to {need})", need - e),
                });
            }
        }
        run_stages(&self.stages, g, ps, x)
    }
}

/// `g_s`: latent `[B, h, w, M]` to image `[B, 16h, 16w, 3]`.
#[derive(Debug, Clone)]
pub struct SynthesisTransform {
    stages: Vec<Stage>,
}

impl SynthesisTransform {
    pub fn new<T: Real, R: RngCore>(
        ps: &mut ParamSet<T>,
        init: &mut Init<'_, R>,
        cfg: &ModelConfig,
    ) -> Result<Self> {
        let w = cfg.stage_widths();
        let widths = [w[3], w[2], w[1], w[0]];
        let outs = [w[2], w[1], w[0], 3];
        let counts = [cfg.blocks[3], cfg.blocks[2], cfg.blocks[1], cfg.blocks[0]];
        let mut stages = Vec::with_capacity(4);
        for i in 0..4 {
            let stage = StageConfig::from_model(cfg, widths[i], counts[i]);
            let blocks = (0..counts[i])
                .map(|j| {
                    Hscatb::new(
                        ps,
                        init,
                        &format!("g_s.stage{i}.block{j}"),
                        cfg,
                        stage.clone(),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let up = Upsample::new(ps, init, &format!("g_s.up{i}"), widths[i], outs[i], i < 3)?;
            stages.push(Stage {
                resample: ResampleKind::Up(up),
                blocks,
            });
        }
        Ok(Self { stages })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, ps: &ParamSet<T>, y: Var) -> Result<Var> {
        g.value(y).dims4()?;
        run_stages(&self.stages, g, ps, y)
    }
}

fn run_stages<T: Real>(
    stages: &[Stage],
    g: &mut Graph<T>,
    ps: &ParamSet<T>,
    x: Var,
) -> Result<Var> {
    let start = g.len();
    let mut x = x;
    for s in stages {
        if let ResampleKind::Down(d) = &s.resample {
            x = d.forward(g, ps, x)?;
            g.release_from(start, &[x]);
        }
        for b in &s.blocks {
            x = b.forward(g, ps, x)?;
            g.release_from(start, &[x]);
        }
        if let ResampleKind::Up(u) = &s.resample {
            x = u.forward(g, ps, x)?;
            g.release_from(start, &[x]);
        }
    }
    Ok(x)
}
