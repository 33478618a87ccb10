//! End-to-end model: training forward pass, compression and decompression.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_core::RngCore;
use sha2::{Digest, Sha256};

use crate::coder::{
    Bitstream, Header, RangeDecoder, RangeEncoder, SymbolTable, ALPHABET_HALF_WIDTH,
};
use crate::config::ModelConfig;
use crate::entropy::likelihood::{gaussian_mass, logistic_mass};
use crate::entropy::quantize::noise_like;
use crate::entropy::{EntropyModel, HYPER_FACTOR};
use crate::error::{shape_err, Error, Result};
use crate::graph::{Graph, Var};
use crate::params::{Init, ParamSet};
use crate::real::Real;
use crate::tensor::Tensor;
use crate::transforms::{AnalysisTransform, SynthesisTransform, ANALYSIS_FACTOR};

/// Spatial granularity of the full pipeline (analysis then hyper-analysis).
pub const PAD_MULTIPLE: usize = ANALYSIS_FACTOR * HYPER_FACTOR;
/// Default cap on either image side.
pub const DEFAULT_MAX_SIDE: usize = 8192;
/// Pixel values live in `[0, 1]`; distortion is reported on the 8-bit scale.
pub const PIXEL_SCALE: f64 = 255.0;

const SYMBOL_MIN: i32 = i16::MIN as i32;
const SYMBOL_MAX: i32 = i16::MAX as i32;

/// All learned state plus the module layout that addresses it.
#[derive(Debug, Clone)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: ParamSet<T>,
    pub analysis: AnalysisTransform,
    pub synthesis: SynthesisTransform,
    pub entropy: EntropyModel,
    /// Written into stream headers to identify the rate point.
    pub lambda_index: u8,
    pub max_side: usize,
}

/// Graph handles and scalars from one training forward pass.
#[derive(Debug, Clone, Copy)]
pub struct TrainOutput {
    pub loss: Var,
    pub rate: Var,
    pub distortion: Var,
    pub x_hat: Var,
    /// Value of `loss`, readable after the tape is consumed.
    pub loss_value: f64,
    /// Estimated bits per pixel.
    pub bpp: f64,
    /// Mean squared error on the `[0, 1]` scale.
    pub mse: f64,
}

/// Quantized latents as seen by the encoder or recovered by the decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPack<T> {
    pub z_hat: Tensor<T>,
    pub y_hat: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct CompressReport<T> {
    pub stream: Bitstream,
    /// Model information content of the coded symbols, in bits.
    pub estimated_bits: f64,
    pub estimated_z_bits: f64,
    pub latents: LatentPack<T>,
}

impl<T: Real> Model<T> {
    pub fn new<R: RngCore>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let mut init = Init::new(rng);
        let analysis = AnalysisTransform::new(&mut params, &mut init, &config)?;
        let synthesis = SynthesisTransform::new(&mut params, &mut init, &config)?;
        let entropy = EntropyModel::new(&mut params, &mut init, &config)?;
        Ok(Self {
            config,
            params,
            analysis,
            synthesis,
            entropy,
            lambda_index: 0,
            max_side: DEFAULT_MAX_SIDE,
        })
    }

    /// Builds the layout for `config` and fills it from `params`, which must
    /// hold exactly the expected names and shapes.
    pub fn from_params(config: ModelConfig, params: ParamSet<T>) -> Result<Self> {
        let mut rng = ZeroRng;
        let mut model = Self::new(config, &mut rng)?;
        if params.len() != model.params.len() {
            return Err(Error::Config(format!(
                "expected {} parameter tensors, found {}",
                model.params.len(),
                params.len()
            )));
        }
        for p in params.iter() {
            let id = model
                .params
                .find(&p.name)
                .ok_or_else(|| Error::Config(format!("unexpected parameter {}", p.name)))?;
            model.params.set_value(id, p.value.clone())?;
        }
        Ok(model)
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
            analysis: self.analysis.clone(),
            synthesis: self.synthesis.clone(),
            entropy: self.entropy.clone(),
            lambda_index: self.lambda_index,
            max_side: self.max_side,
        }
    }

    /// First eight bytes (little-endian) of SHA-256 over the configuration
    /// and every parameter's name, shape and value bytes.
    pub fn model_id(&self) -> u64 {
        let mut h = Sha256::new();
        h.update(self.config.to_kv().as_bytes());
        for p in self.params.iter() {
            h.update((p.name.len() as u64).to_le_bytes());
            h.update(p.name.as_bytes());
            h.update((p.value.rank() as u64).to_le_bytes());
            for &d in p.value.shape() {
                h.update((d as u64).to_le_bytes());
            }
            let mut bytes = Vec::with_capacity(p.value.len() * T::BYTES);
            for &v in p.value.data() {
                v.to_le_bytes_vec(&mut bytes);
            }
            h.update(&bytes);
        }
        let d = h.finalize();
        let mut id = [0u8; 8];
        id.copy_from_slice(&d[..8]);
        u64::from_le_bytes(id)
    }

    /// Noise-relaxed rate-distortion pass on a `[B, H, W, 3]` batch with
    /// sides divisible by 64. Noise for `z` is drawn before noise for `y`.
    pub fn forward_train<R: RngCore>(
        &self,
        g: &mut Graph<T>,
        x: &Tensor<T>,
        lambda: f64,
        rng: &mut R,
    ) -> Result<TrainOutput> {
        let [b, h, w, _] = x.dims4()?;
        check_multiple(h, w)?;
        let ps = &self.params;
        let xv = g.constant(x.clone());
        let y = self.analysis.forward(g, ps, xv)?;
        let z = self.entropy.hyper_analysis.forward(g, ps, y)?;

        let zn = g.constant(noise_like(g.shape(z), rng));
        let z_tilde = g.add(z, zn)?;
        let yn = g.constant(noise_like(g.shape(y), rng));
        let y_tilde = g.add(y, yn)?;

        let lik_z = self.entropy.prior.likelihood(g, ps, z_tilde)?;
        let mut bits = g.neg_log2_sum(lik_z)?;
        let hyper = self.entropy.hyper_synthesis.forward(g, ps, z_tilde)?;
        let chunks = g.split(y_tilde, 3, self.entropy.schedule.sizes())?;
        for i in 0..chunks.len() {
            let (mu, sigma) = self.entropy.chunk_params(g, ps, &chunks[..i], hyper, i)?;
            let lik = g.gaussian_likelihood(chunks[i], mu, sigma)?;
            let b_i = g.neg_log2_sum(lik)?;
            bits = g.add(bits, b_i)?;
        }

        let x_hat = self.synthesis.forward(g, ps, y_tilde)?;
        let mse = g.mse(x_hat, xv)?;
        let pixels = (b * h * w) as f64;
        let rate = g.scale(bits, T::from_f64(1.0 / pixels))?;
        let distortion = g.scale(mse, T::from_f64(PIXEL_SCALE * PIXEL_SCALE))?;
        let weighted = g.scale(distortion, T::from_f64(lambda))?;
        let loss = g.add(rate, weighted)?;
        Ok(TrainOutput {
            loss,
            rate,
            distortion,
            x_hat,
            loss_value: g.value(loss).data()[0].to_f64(),
            bpp: g.value(rate).data()[0].to_f64(),
            mse: g.value(mse).data()[0].to_f64(),
        })
    }

    pub fn compress(&self, x: &Tensor<T>) -> Result<Bitstream> {
        Ok(self.compress_with_report(x)?.stream)
    }

    /// Compresses one `[1, H, W, 3]` image in `[0, 1]`.
    pub fn compress_with_report(&self, x: &Tensor<T>) -> Result<CompressReport<T>> {
        let [b, h, w, c] = x.dims4()?;
        if b != 1 || c != 3 {
            return Err(shape_err(
                "compress",
                format!("expected [1, H, W, 3], got {:?}", x.shape()),
            ));
        }
        self.check_size(h, w)?;
        let (ph, pw) = (round_up(h), round_up(w));
        let padded = x.reflect_pad(ph, pw)?;
        let ps = &self.params;
        let mut g = Graph::inference();

        let xv = g.constant(padded);
        let y = self.analysis.forward(&mut g, ps, xv)?;
        let z = self.entropy.hyper_analysis.forward(&mut g, ps, y)?;
        let y_val = g.value(y).clone();
        let z_hat = g
            .value(z)
            .map(|v| T::from_f64(clamp_symbol(v.round()) as f64));
        g.release_except(&[]);

        let (loc, scale) = self.entropy.prior.values(ps);
        let tables = prior_tables(&loc, &scale);
        let mut enc = RangeEncoder::new();
        let mut z_bits = 0.0;
        let hc = tables.len();
        for (i, &v) in z_hat.data().iter().enumerate() {
            let ch = i % hc;
            enc.encode_value(v.to_f64() as i32, &tables[ch]);
            z_bits -= libm::log2(logistic_mass(v - loc.data()[ch], scale.data()[ch]).to_f64());
        }
        let z_seg = enc.finish();

        let zv = g.constant(z_hat.clone());
        let hyper = self.entropy.hyper_synthesis.forward(&mut g, ps, zv)?;
        let mut decoded: Vec<Var> = Vec::new();
        let mut segments = Vec::with_capacity(self.entropy.schedule.len());
        let mut y_bits = 0.0;
        for i in 0..self.entropy.schedule.len() {
            let (mu, sigma) = self.entropy.chunk_params(&mut g, ps, &decoded, hyper, i)?;
            let y_i = y_val.channel_slice(
                self.entropy.schedule.offset(i),
                self.entropy.schedule.sizes()[i],
            );
            let (mu_t, sigma_t) = (g.value(mu).clone(), g.value(sigma).clone());
            let mut enc = RangeEncoder::new();
            let mut y_hat = Vec::with_capacity(y_i.len());
            for ((&yv, &m), &s) in y_i.data().iter().zip(mu_t.data()).zip(sigma_t.data()) {
                let sym = clamp_symbol((yv - m).round());
                enc.encode_value(sym, &SymbolTable::gaussian(s.to_f64(), ALPHABET_HALF_WIDTH));
                let sym_t = T::from_f64(sym as f64);
                y_bits -= libm::log2(gaussian_mass(sym_t, s).to_f64());
                y_hat.push(sym_t + m);
            }
            segments.push(enc.finish());
            let y_hat_i = Tensor::new(y_i.shape().to_vec(), y_hat)?;
            decoded.push(g.constant(y_hat_i));
            let mut keep = decoded.clone();
            keep.push(hyper);
            g.release_except(&keep);
        }
        let parts: Vec<&Tensor<T>> = decoded.iter().map(|&v| g.value(v)).collect();
        let y_hat = Tensor::concat_channels(&parts)?;

        let stream = Bitstream {
            header: self.header(h, w),
            z: z_seg,
            chunks: segments,
        };
        Ok(CompressReport {
            stream,
            estimated_bits: z_bits + y_bits,
            estimated_z_bits: z_bits,
            latents: LatentPack { z_hat, y_hat },
        })
    }

    /// Recovers the quantized latents and the true image size from a stream.
    pub fn decode_latents(&self, bytes: &[u8]) -> Result<(LatentPack<T>, Header)> {
        let header = Bitstream::peek_header(bytes)?;
        let expected = self.model_id();
        if header.model_id != expected {
            return Err(Error::ModelMismatch {
                stream: header.model_id,
                model: expected,
            });
        }
        let bs = Bitstream::from_bytes(bytes, self.entropy.schedule.len())?;
        let (h, w) = (bs.header.height as usize, bs.header.width as usize);
        self.check_size(h, w)?;
        let (ph, pw) = (round_up(h), round_up(w));
        let ps = &self.params;
        let mut g = Graph::inference();

        let (loc, scale) = self.entropy.prior.values(ps);
        let tables = prior_tables(&loc, &scale);
        let hc = tables.len();
        let z_shape = [1, ph / PAD_MULTIPLE, pw / PAD_MULTIPLE, hc];
        let mut dec = RangeDecoder::new(&bs.z)?;
        let z_data = (0..z_shape.iter().product::<usize>())
            .map(|i| Ok(T::from_f64(dec.decode_value(&tables[i % hc])? as f64)))
            .collect::<Result<Vec<T>>>()?;
        let z_hat = Tensor::new(z_shape.to_vec(), z_data)?;

        let zv = g.constant(z_hat.clone());
        let hyper = self.entropy.hyper_synthesis.forward(&mut g, ps, zv)?;
        let mut decoded: Vec<Var> = Vec::new();
        for (i, seg) in bs.chunks.iter().enumerate() {
            let (mu, sigma) = self.entropy.chunk_params(&mut g, ps, &decoded, hyper, i)?;
            let (mu_t, sigma_t) = (g.value(mu).clone(), g.value(sigma).clone());
            let mut dec = RangeDecoder::new(seg)?;
            let y_hat = mu_t
                .data()
                .iter()
                .zip(sigma_t.data())
                .map(|(&m, &s)| {
                    let sym =
                        dec.decode_value(&SymbolTable::gaussian(s.to_f64(), ALPHABET_HALF_WIDTH))?;
                    Ok(T::from_f64(sym as f64) + m)
                })
                .collect::<Result<Vec<T>>>()?;
            decoded.push(g.constant(Tensor::new(mu_t.shape().to_vec(), y_hat)?));
            let mut keep = decoded.clone();
            keep.push(hyper);
            g.release_except(&keep);
        }
        let parts: Vec<&Tensor<T>> = decoded.iter().map(|&v| g.value(v)).collect();
        let y_hat = Tensor::concat_channels(&parts)?;
        Ok((LatentPack { z_hat, y_hat }, bs.header))
    }

    /// Reconstructs a `[1, H, W, 3]` image clamped to `[0, 1]`.
    pub fn decompress(&self, bytes: &[u8]) -> Result<Tensor<T>> {
        let (latents, header) = self.decode_latents(bytes)?;
        let x_hat = self.synthesize(&latents.y_hat)?;
        Ok(x_hat
            .crop(header.height as usize, header.width as usize)?
            .map(|v| v.max(T::ZERO).min(T::ONE)))
    }

    /// `g_s` on a quantized latent, without cropping or clamping.
    pub fn synthesize(&self, y_hat: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::inference();
        let yv = g.constant(y_hat.clone());
        let out = self.synthesis.forward(&mut g, &self.params, yv)?;
        Ok(g.value(out).clone())
    }

    fn header(&self, h: usize, w: usize) -> Header {
        Header {
            model_id: self.model_id(),
            height: h as u16,
            width: w as u16,
            lambda_index: self.lambda_index,
        }
    }

    fn check_size(&self, h: usize, w: usize) -> Result<()> {
        let limit = self.max_side.min(u16::MAX as usize);
        if h == 0 || w == 0 || h > limit || w > limit {
            return Err(Error::Oversize {
                height: h,
                width: w,
                limit,
            });
        }
        Ok(())
    }
}

fn round_up(e: usize) -> usize {
    e.div_ceil(PAD_MULTIPLE) * PAD_MULTIPLE
}

fn check_multiple(h: usize, w: usize) -> Result<()> {
    for e in [h, w] {
        if e == 0 || e % PAD_MULTIPLE != 0 {
            let need = round_up(e.max(1));
            return Err(Error::Divisibility {
                op: "forward_train",
                extent: e,
                divisor: PAD_MULTIPLE,
                hint: format!(" (pad by {} to {need})", need - e),
            });
        }
    }
    Ok(())
}

fn clamp_symbol<T: Real>(v: T) -> i32 {
    let f = v.to_f64();
    if f <= SYMBOL_MIN as f64 {
        SYMBOL_MIN
    } else if f >= SYMBOL_MAX as f64 {
        SYMBOL_MAX
    } else {
        f as i32
    }
}

fn prior_tables<T: Real>(loc: &Tensor<T>, scale: &Tensor<T>) -> Vec<SymbolTable> {
    loc.data()
        .iter()
        .zip(scale.data())
        .map(|(&l, &s)| SymbolTable::logistic(l.to_f64(), s.to_f64(), ALPHABET_HALF_WIDTH))
        .collect()
}

/// Deterministic source for layouts whose values are overwritten immediately.
struct ZeroRng;

impl RngCore for ZeroRng {
    fn next_u32(&mut self) -> u32 {
        0
    }
    fn next_u64(&mut self) -> u64 {
        0
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        dst.fill(0);
    }
}

/// Human-readable one-line summary of a model.
pub fn describe<T: Real>(m: &Model<T>) -> String {
    format!(
        "C={} M={} blocks={:?} params={} id={:016x}",
        m.config.embed_channels,
        m.config.latent_channels,
        m.config.blocks,
        m.params.num_scalars(),
        m.model_id()
    )
}
