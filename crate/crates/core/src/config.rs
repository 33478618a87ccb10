use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;
use core::str::FromStr;

use crate::error::{Error, Result};

/// Feed-forward body of each transformer block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FfnVariant {
    /// Split local (3×3 / 5×5 depthwise) and global (pooled gate) branches.
    #[default]
    Mlgffn,
    /// Global pooled branch over all channels.
    MlgffnNoLocal,
    /// Local depthwise branches over all channels.
    MlgffnNoGlobal,
    /// Token-wise linear → GELU → linear with 4× expansion.
    Plain,
}

impl FfnVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            FfnVariant::Mlgffn => "mlgffn",
            FfnVariant::MlgffnNoLocal => "mlgffn_no_local",
            FfnVariant::MlgffnNoGlobal => "mlgffn_no_global",
            FfnVariant::Plain => "plain",
        }
    }
}

impl FromStr for FfnVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mlgffn" => FfnVariant::Mlgffn,
            "mlgffn_no_local" => FfnVariant::MlgffnNoLocal,
            "mlgffn_no_global" => FfnVariant::MlgffnNoGlobal,
            "plain" | "plain_ffn" => FfnVariant::Plain,
            other => return Err(Error::Config(format!("unknown ffn variant {other:?}"))),
        })
    }
}

/// Architectural hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Embedding width `C` after the first downsample.
    pub embed_channels: usize,
    /// Latent width `M`.
    pub latent_channels: usize,
    /// Transformer blocks after each of the four downsamples.
    pub blocks: [usize; 4],
    /// Base window size `s`; attention windows are `2s × 2s`.
    pub window_base: usize,
    /// Percentage of attention channels given to the high-frequency path.
    pub high_freq_percent: usize,
    pub head_dim: usize,
    /// Channel shrink factor of the channel-attention bottleneck.
    pub casa_shrink: usize,
    pub hyper_channels: usize,
    pub context_channels: usize,
    pub epm_hidden: usize,
    /// Uneven channel chunks of the latent, coded in order.
    pub chunks: Vec<usize>,
    pub lf_enabled: bool,
    pub hf_enabled: bool,
    pub casa_enabled: bool,
    pub ffn: FfnVariant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_channels: 40,
            latent_channels: 320,
            blocks: [1, 1, 2, 2],
            window_base: 4,
            high_freq_percent: 50,
            head_dim: 20,
            casa_shrink: 4,
            hyper_channels: 192,
            context_channels: 128,
            epm_hidden: 256,
            chunks: default_chunks(320),
            lf_enabled: true,
            hf_enabled: true,
            casa_enabled: true,
            ffn: FfnVariant::Mlgffn,
        }
    }
}

/// `[16, 16, 32, 64, M − 128]`.
pub fn default_chunks(m: usize) -> Vec<usize> {
    alloc::vec![16, 16, 32, 64, m.saturating_sub(128)]
}

impl ModelConfig {
    /// Miniature configuration for fast experiments and gradient checks.
    pub fn tiny() -> Self {
        Self {
            embed_channels: 8,
            latent_channels: 16,
            blocks: [1, 1, 1, 1],
            hyper_channels: 16,
            context_channels: 16,
            epm_hidden: 32,
            chunks: alloc::vec![4, 4, 8],
            ..Self::default()
        }
    }

    /// Stage widths of the analysis transform: `[C, 2C, 4C, M]`.
    pub fn stage_widths(&self) -> [usize; 4] {
        let c = self.embed_channels;
        [c, 2 * c, 4 * c, self.latent_channels]
    }

    /// Channels of the high/low frequency attention paths at width `c`.
    pub fn attention_split(&self, c: usize) -> (usize, usize) {
        match (self.hf_enabled, self.lf_enabled) {
            (true, false) => (c, 0),
            (false, true) => (0, c),
            _ => {
                let c1 = c * self.high_freq_percent / 100;
                (c1, c - c1)
            }
        }
    }

    /// Heads for a branch of `c` channels: about `c / head_dim`, at least one,
    /// and always a divisor of `c`.
    pub fn heads_for(&self, c: usize) -> usize {
        let mut h = (c / self.head_dim.max(1)).max(1);
        while !c.is_multiple_of(h) {
            h -= 1;
        }
        h
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.embed_channels == 0 || self.latent_channels == 0 {
            return bad("channel counts must be positive".into());
        }
        if !self.lf_enabled && !self.hf_enabled {
            return bad(
                "at least one of the low/high frequency attention paths must be enabled".into(),
            );
        }
        if self.window_base == 0 || self.head_dim == 0 || self.casa_shrink == 0 {
            return bad("window_base, head_dim and casa_shrink must be positive".into());
        }
        if !(1..100).contains(&self.high_freq_percent) {
            return bad(format!(
                "high_freq_percent {} outside 1..99",
                self.high_freq_percent
            ));
        }
        for w in self.stage_widths() {
            if w % 4 != 0 {
                return bad(format!("stage width {w} must be divisible by 4"));
            }
            if w % self.casa_shrink != 0 {
                return bad(format!(
                    "stage width {w} not divisible by casa_shrink {}",
                    self.casa_shrink
                ));
            }
            let (c1, c2) = self.attention_split(w);
            if self.hf_enabled && self.lf_enabled && (c1 == 0 || c2 == 0) {
                return bad(format!(
                    "attention split of {w} channels leaves an empty path"
                ));
            }
        }
        if self.chunks.is_empty() || self.chunks.contains(&0) {
            return bad("chunk sizes must be positive".into());
        }
        if self.chunks.iter().sum::<usize>() != self.latent_channels {
            return bad(format!(
                "chunk sizes {:?} do not sum to latent channels {}",
                self.chunks, self.latent_channels
            ));
        }
        if self.chunks.len() > 255 {
            return bad("too many chunks".into());
        }
        Ok(())
    }

    /// Canonical `key=value` lines; also the hashed model description.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let chunks: Vec<String> = self.chunks.iter().map(|c| c.to_string()).collect();
        let blocks: Vec<String> = self.blocks.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(s, "embed_channels={}", self.embed_channels);
        let _ = writeln!(s, "latent_channels={}", self.latent_channels);
        let _ = writeln!(s, "blocks={}", blocks.join(","));
        let _ = writeln!(s, "window_base={}", self.window_base);
        let _ = writeln!(s, "high_freq_percent={}", self.high_freq_percent);
        let _ = writeln!(s, "head_dim={}", self.head_dim);
        let _ = writeln!(s, "casa_shrink={}", self.casa_shrink);
        let _ = writeln!(s, "hyper_channels={}", self.hyper_channels);
        let _ = writeln!(s, "context_channels={}", self.context_channels);
        let _ = writeln!(s, "epm_hidden={}", self.epm_hidden);
        let _ = writeln!(s, "chunks={}", chunks.join(","));
        let _ = writeln!(s, "lf_enabled={}", self.lf_enabled);
        let _ = writeln!(s, "hf_enabled={}", self.hf_enabled);
        let _ = writeln!(s, "casa_enabled={}", self.casa_enabled);
        let _ = writeln!(s, "ffn={}", self.ffn.as_str());
        s
    }

    /// Parses `key=value` lines over the defaults. Unknown keys are errors.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut c = Self::default();
        let mut chunks_set = false;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got {line:?}")))?;
            c.set(k.trim(), v.trim())?;
            chunks_set |= k.trim() == "chunks";
        }
        if !chunks_set {
            c.chunks = default_chunks(c.latent_channels);
        }
        c.validate()?;
        Ok(c)
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num(k: &str, v: &str) -> Result<usize> {
            v.parse()
                .map_err(|_| Error::Config(format!("{k}: expected an unsigned integer, got {v:?}")))
        }
        fn flag(k: &str, v: &str) -> Result<bool> {
            v.parse()
                .map_err(|_| Error::Config(format!("{k}: expected true/false, got {v:?}")))
        }
        fn list(k: &str, v: &str) -> Result<Vec<usize>> {
            v.trim_matches(|c| c == '[' || c == ']')
                .split(',')
                .map(|p| num(k, p.trim()))
                .collect()
        }
        match key {
            "embed_channels" => self.embed_channels = num(key, value)?,
            "latent_channels" => self.latent_channels = num(key, value)?,
            "blocks" => {
                let b = list(key, value)?;
                self.blocks = b
                    .try_into()
                    .map_err(|_| Error::Config("blocks: expected four counts".into()))?;
            }
            "window_base" => self.window_base = num(key, value)?,
            "high_freq_percent" => self.high_freq_percent = num(key, value)?,
            "head_dim" => self.head_dim = num(key, value)?,
            "casa_shrink" => self.casa_shrink = num(key, value)?,
            "hyper_channels" => self.hyper_channels = num(key, value)?,
            "context_channels" => self.context_channels = num(key, value)?,
            "epm_hidden" => self.epm_hidden = num(key, value)?,
            "chunks" => self.chunks = list(key, value)?,
            "lf_enabled" => self.lf_enabled = flag(key, value)?,
            "hf_enabled" => self.hf_enabled = flag(key, value)?,
            "casa_enabled" => self.casa_enabled = flag(key, value)?,
            "ffn" => self.ffn = value.trim_matches('"').parse()?,
            other => return Err(Error::Config(format!("unknown model key {other:?}"))),
        }
        Ok(())
    }
}
