//! Versioned little-endian checkpoint files.
//!
//! Layout: magic `FRCK`, `u32` version, then length-prefixed sections:
//! model configuration text, λ (`f64`) and its index (`u8`), training
//! configuration text, step (`u64`), optional RNG state, parameter records
//! and optional Adam moments. A record is `u16` name length, name bytes,
//! `u8` element type (1 = f32), `u8` rank, `u32` dims, then raw values.

use std::path::Path;

use frelic_core::optim::Adam;
use frelic_core::{Model, ModelConfig, ParamSet, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{AppError, AppResult};

pub const MAGIC: [u8; 4] = *b"FRCK";
pub const VERSION: u32 = 1;
const DTYPE_F32: u8 = 1;

/// Resumable position of a ChaCha stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model_config: ModelConfig,
    pub lambda: f64,
    pub lambda_index: u8,
    pub train_config: String,
    pub step: u64,
    pub rng: Option<RngState>,
    pub params: ParamSet<f32>,
    pub adam: Option<Adam<f32>>,
}

impl Checkpoint {
    pub fn from_model(model: &Model<f32>, lambda: f64) -> Self {
        Self {
            model_config: model.config.clone(),
            lambda,
            lambda_index: model.lambda_index,
            train_config: String::new(),
            step: 0,
            rng: None,
            params: model.params.clone(),
            adam: None,
        }
    }

    pub fn model(&self) -> AppResult<Model<f32>> {
        let mut m = Model::from_params(self.model_config.clone(), self.params.clone())?;
        m.lambda_index = self.lambda_index;
        Ok(m)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(&MAGIC);
        w.extend_from_slice(&VERSION.to_le_bytes());
        put_str(&mut w, &self.model_config.to_kv());
        w.extend_from_slice(&self.lambda.to_le_bytes());
        w.push(self.lambda_index);
        put_str(&mut w, &self.train_config);
        w.extend_from_slice(&self.step.to_le_bytes());
        match &self.rng {
            Some(r) => {
                w.push(1);
                w.extend_from_slice(&r.seed);
                w.extend_from_slice(&r.stream.to_le_bytes());
                w.extend_from_slice(&r.word_pos.to_le_bytes());
            }
            None => w.push(0),
        }
        w.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for p in self.params.iter() {
            put_tensor(&mut w, &p.name, &p.value);
        }
        match &self.adam {
            Some(a) => {
                w.push(1);
                w.extend_from_slice(&a.t.to_le_bytes());
                for (p, (m, v)) in self.params.iter().zip(a.m.iter().zip(&a.v)) {
                    put_tensor(&mut w, &format!("adam.m/{}", p.name), m);
                    put_tensor(&mut w, &format!("adam.v/{}", p.name), v);
                }
            }
            None => w.push(0),
        }
        w
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        let mut r = Reader { b: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err("not a checkpoint (bad magic)".into());
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(format!("unsupported checkpoint version {version}"));
        }
        let model_config = ModelConfig::from_kv(&r.string()?).map_err(|e| e.to_string())?;
        let lambda = f64::from_le_bytes(r.array()?);
        let lambda_index = r.u8()?;
        let train_config = r.string()?;
        let step = u64::from_le_bytes(r.array()?);
        let rng = match r.u8()? {
            0 => None,
            1 => Some(RngState {
                seed: r.array()?,
                stream: u64::from_le_bytes(r.array()?),
                word_pos: u128::from_le_bytes(r.array()?),
            }),
            t => return Err(format!("bad rng flag {t}")),
        };
        let n = r.u32()? as usize;
        let mut params = ParamSet::new();
        for _ in 0..n {
            let (name, t) = r.tensor()?;
            params.add(name, t).map_err(|e| e.to_string())?;
        }
        let adam = match r.u8()? {
            0 => None,
            1 => {
                let t = u64::from_le_bytes(r.array()?);
                let mut m = Vec::with_capacity(n);
                let mut v = Vec::with_capacity(n);
                for p in params.iter() {
                    for (prefix, dst) in [("adam.m/", &mut m), ("adam.v/", &mut v)] {
                        let (name, t) = r.tensor()?;
                        if name != format!("{prefix}{}", p.name) || t.shape() != p.value.shape() {
                            return Err(format!(
                                "optimizer record {name} does not match {}",
                                p.name
                            ));
                        }
                        dst.push(t);
                    }
                }
                Some(Adam { m, v, t })
            }
            f => return Err(format!("bad optimizer flag {f}")),
        };
        if r.pos != bytes.len() {
            return Err("trailing bytes".into());
        }
        Ok(Self {
            model_config,
            lambda,
            lambda_index,
            train_config,
            step,
            rng,
            params,
            adam,
        })
    }

    pub fn save(&self, path: &Path) -> AppResult<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(|e| AppError::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| AppError::io(path, e))
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|m| AppError::data(path, m))
    }
}

fn put_str(w: &mut Vec<u8>, s: &str) {
    w.extend_from_slice(&(s.len() as u32).to_le_bytes());
    w.extend_from_slice(s.as_bytes());
}

fn put_tensor(w: &mut Vec<u8>, name: &str, t: &Tensor<f32>) {
    w.extend_from_slice(&(name.len() as u16).to_le_bytes());
    w.extend_from_slice(name.as_bytes());
    w.push(DTYPE_F32);
    w.push(t.rank() as u8);
    for &d in t.shape() {
        w.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        w.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.b.len())
            .ok_or("truncated checkpoint")?;
        let s = &self.b[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N], String> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8, String> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn string(&mut self) -> Result<String, String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| "invalid utf-8 text".into())
    }
    fn tensor(&mut self) -> Result<(String, Tensor<f32>), String> {
        let n = u16::from_le_bytes(self.array()?) as usize;
        let name = String::from_utf8(self.take(n)?.to_vec()).map_err(|_| "invalid tensor name")?;
        if self.u8()? != DTYPE_F32 {
            return Err(format!("{name}: unsupported element type"));
        }
        let rank = self.u8()? as usize;
        let shape = (0..rank)
            .map(|_| self.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let len = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or("tensor too large")?;
        let raw = self.take(len.checked_mul(4).ok_or("tensor too large")?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| e.to_string())?;
        Ok((name, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn round_trip_with_optimizer_and_rng() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = Model::<f32>::new(ModelConfig::tiny(), &mut rng).unwrap();
        rng.next_u64();
        let mut ck = Checkpoint::from_model(&model, 0.013);
        ck.step = 17;
        ck.rng = Some(RngState::capture(&rng));
        let mut adam = Adam::new(&model.params);
        adam.t = 17;
        adam.m[0].data_mut()[0] = 0.5;
        ck.adam = Some(adam.clone());
        ck.train_config = "lambda = 0.013\n".into();
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back.step, 17);
        assert_eq!(back.adam.clone().unwrap(), adam);
        assert_eq!(back.model_config, ModelConfig::tiny());
        assert_eq!(back.train_config, ck.train_config);
        let mut restored = back.rng.unwrap().restore();
        assert_eq!(restored.next_u64(), rng.next_u64());
        assert_eq!(back.model().unwrap().model_id(), model.model_id());
    }

    #[test]
    fn truncation_is_reported() {
        let model =
            Model::<f32>::new(ModelConfig::tiny(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let bytes = Checkpoint::from_model(&model, 0.1).to_bytes();
        for cut in [0, 3, 8, 40, bytes.len() / 2, bytes.len() - 1] {
            assert!(Checkpoint::from_bytes(&bytes[..cut]).is_err());
        }
    }
}
