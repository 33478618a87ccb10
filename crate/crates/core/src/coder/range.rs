//! Byte-oriented range coder with 32-bit range and carry propagation.
//!
//! Integer arithmetic only; output is identical on every platform.

use alloc::vec::Vec;

use crate::coder::cdf::{QuantizedCdf, SymbolTable, PRECISION_BITS};
use crate::error::{Error, Result};

const TOP: u32 = 1 << 24;
/// Bits per raw chunk after an escape.
const RAW_BITS: u32 = 8;

#[derive(Debug, Clone)]
pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            out: Vec::new(),
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut temp = self.cache;
            loop {
                self.out.push(temp.wrapping_add(carry));
                temp = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = ((self.low >> 24) & 0xFF) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    #[inline]
    fn encode_interval(&mut self, start: u32, freq: u32, bits: u32) {
        let r = self.range >> bits;
        self.low += r as u64 * start as u64;
        self.range = r * freq;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    pub fn encode(&mut self, symbol: usize, cdf: &QuantizedCdf) {
        self.encode_interval(cdf.start(symbol), cdf.freq(symbol), PRECISION_BITS);
    }

    /// Encodes `value` uniformly in `[0, 2^bits)`, `bits ≤ 16`.
    pub fn encode_bits(&mut self, mut value: u32, mut bits: u32) {
        while bits > 0 {
            let take = bits.min(RAW_BITS);
            bits -= take;
            let part = (value >> bits) & ((1 << take) - 1);
            self.encode_interval(part, 1, take);
            value &= (1 << bits) - 1;
        }
    }

    /// Encodes a signed value against a centered table, escaping to 16 raw
    /// bits outside its support. Values must fit in `i16`.
    pub fn encode_value(&mut self, v: i32, table: &SymbolTable) {
        match table.index_of(v) {
            Some(i) => self.encode(i, &table.cdf),
            None => {
                self.encode(table.escape(), &table.cdf);
                self.encode_bits((v as i16) as u16 as u32, 16);
            }
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

#[derive(Debug, Clone)]
pub struct RangeDecoder<'a> {
    code: u32,
    range: u32,
    data: &'a [u8],
    pos: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Result<Self> {
        let mut d = Self {
            code: 0,
            range: u32::MAX,
            data,
            pos: 0,
        };
        for _ in 0..5 {
            d.code = (d.code << 8) | d.next_byte()? as u32;
        }
        Ok(d)
    }

    #[inline]
    fn next_byte(&mut self) -> Result<u8> {
        let b = *self.data.get(self.pos).ok_or(Error::Corrupt(
            "range decoder ran past the end of the segment",
        ))?;
        self.pos += 1;
        Ok(b)
    }

    #[inline]
    fn normalize(&mut self) -> Result<()> {
        while self.range < TOP {
            self.code = (self.code << 8) | self.next_byte()? as u32;
            self.range <<= 8;
        }
        Ok(())
    }

    pub fn decode(&mut self, cdf: &QuantizedCdf) -> Result<usize> {
        let r = self.range >> PRECISION_BITS;
        let target = (self.code / r).min((1 << PRECISION_BITS) - 1);
        let s = cdf.lookup(target);
        self.code -= r * cdf.start(s);
        self.range = r * cdf.freq(s);
        self.normalize()?;
        Ok(s)
    }

    pub fn decode_bits(&mut self, mut bits: u32) -> Result<u32> {
        let mut value = 0u32;
        while bits > 0 {
            let take = bits.min(RAW_BITS);
            bits -= take;
            let r = self.range >> take;
            let part = (self.code / r).min((1 << take) - 1);
            self.code -= r * part;
            self.range = r;
            self.normalize()?;
            value = (value << take) | part;
        }
        Ok(value)
    }

    pub fn decode_value(&mut self, table: &SymbolTable) -> Result<i32> {
        let s = self.decode(&table.cdf)?;
        if s == table.escape() {
            Ok(self.decode_bits(16)? as u16 as i16 as i32)
        } else {
            Ok(s as i32 - table.half_width)
        }
    }

    /// Bytes consumed so far.
    pub fn position(&self) -> usize {
        self.pos
    }
}

/// Encodes `symbols[i]` with `cdfs[i]`.
pub fn range_encode(symbols: &[usize], cdfs: &[&QuantizedCdf]) -> Result<Vec<u8>> {
    if symbols.len() != cdfs.len() {
        return Err(Error::CdfCount {
            symbols: symbols.len(),
            cdfs: cdfs.len(),
        });
    }
    let mut enc = RangeEncoder::new();
    for (&s, cdf) in symbols.iter().zip(cdfs) {
        if s >= cdf.num_symbols() {
            return Err(Error::Corrupt("symbol outside its table"));
        }
        enc.encode(s, cdf);
    }
    Ok(enc.finish())
}

pub fn range_decode(bytes: &[u8], cdfs: &[&QuantizedCdf]) -> Result<Vec<usize>> {
    let mut dec = RangeDecoder::new(bytes)?;
    cdfs.iter().map(|c| dec.decode(c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coder::cdf::ALPHABET_HALF_WIDTH;
    use alloc::vec;

    #[test]
    fn empty_stream_is_flush_only() {
        let bytes = range_encode(&[], &[]).unwrap();
        assert!(bytes.len() <= 8);
        assert!(range_decode(&bytes, &[]).unwrap().is_empty());
    }

    #[test]
    fn certain_symbol_costs_nothing() {
        let cdf = QuantizedCdf::from_frequencies(&[1 << 16]).unwrap();
        let short = range_encode(&[0; 10], &[&cdf; 10]).unwrap();
        let long = range_encode(&vec![0; 10_000], &vec![&cdf; 10_000]).unwrap();
        assert_eq!(short.len(), long.len());
        assert_eq!(
            range_decode(&long, &vec![&cdf; 10_000]).unwrap(),
            vec![0; 10_000]
        );
    }

    #[test]
    fn escapes_round_trip() {
        let t = SymbolTable::gaussian(0.5, ALPHABET_HALF_WIDTH);
        let values = [0, 1, -1, 3, -4, 300, -32768, 32767, 2, 0];
        let mut enc = RangeEncoder::new();
        for &v in &values {
            enc.encode_value(v, &t);
        }
        let bytes = enc.finish();
        let mut dec = RangeDecoder::new(&bytes).unwrap();
        for &v in &values {
            assert_eq!(dec.decode_value(&t).unwrap(), v);
        }
    }

    #[test]
    fn truncated_stream_is_an_error() {
        let cdf = QuantizedCdf::from_frequencies(&[1 << 15, 1 << 15]).unwrap();
        let syms: Vec<usize> = (0..4000).map(|i| (i * 7 + i / 3) % 2).collect();
        let bytes = range_encode(&syms, &vec![&cdf; syms.len()]).unwrap();
        let cut = &bytes[..bytes.len() / 2];
        assert!(matches!(
            range_decode(cut, &vec![&cdf; syms.len()]),
            Err(Error::Corrupt(_))
        ));
        assert!(RangeDecoder::new(&bytes[..3]).is_err());
    }

    #[test]
    fn count_mismatch_is_reported() {
        let cdf = QuantizedCdf::from_frequencies(&[1 << 16]).unwrap();
        assert!(matches!(
            range_encode(&[0, 0], &[&cdf]),
            Err(Error::CdfCount { .. })
        ));
    }
}
