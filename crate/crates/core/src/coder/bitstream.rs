//! Container: fixed header followed by length-prefixed coded segments.

use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"HSCB";
pub const FORMAT_VERSION: u8 = 1;
pub const HEADER_BYTES: usize = 4 + 1 + 8 + 2 + 2 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub model_id: u64,
    pub height: u16,
    pub width: u16,
    pub lambda_index: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitstream {
    pub header: Header,
    /// Hyper-latent segment.
    pub z: Vec<u8>,
    /// One segment per latent chunk, in schedule order.
    pub chunks: Vec<Vec<u8>>,
}

impl Bitstream {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len_bytes());
        out.extend_from_slice(&MAGIC);
        out.push(FORMAT_VERSION);
        out.extend_from_slice(&self.header.model_id.to_le_bytes());
        out.extend_from_slice(&self.header.height.to_le_bytes());
        out.extend_from_slice(&self.header.width.to_le_bytes());
        out.push(self.header.lambda_index);
        for seg in core::iter::once(&self.z).chain(&self.chunks) {
            out.extend_from_slice(&(seg.len() as u32).to_le_bytes());
            out.extend_from_slice(seg);
        }
        out
    }

    /// Parses a container holding exactly `num_chunks` latent segments.
    pub fn from_bytes(bytes: &[u8], num_chunks: usize) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Corrupt("bad magic"));
        }
        if r.take(1)?[0] != FORMAT_VERSION {
            return Err(Error::Corrupt("unsupported format version"));
        }
        let model_id = u64::from_le_bytes(r.array()?);
        let height = u16::from_le_bytes(r.array()?);
        let width = u16::from_le_bytes(r.array()?);
        let lambda_index = r.take(1)?[0];
        if height == 0 || width == 0 {
            return Err(Error::Corrupt("zero image dimension"));
        }
        let z = r.segment()?;
        let chunks = (0..num_chunks)
            .map(|_| r.segment())
            .collect::<Result<Vec<_>>>()?;
        if r.pos != bytes.len() {
            return Err(Error::Corrupt("trailing bytes after last segment"));
        }
        Ok(Self {
            header: Header {
                model_id,
                height,
                width,
                lambda_index,
            },
            z,
            chunks,
        })
    }

    /// Reads only the header, leaving segment validation to [`Self::from_bytes`].
    pub fn peek_header(bytes: &[u8]) -> Result<Header> {
        if bytes.len() < HEADER_BYTES {
            return Err(Error::Corrupt("stream shorter than header"));
        }
        if bytes[..4] != MAGIC {
            return Err(Error::Corrupt("bad magic"));
        }
        let mut id = [0u8; 8];
        id.copy_from_slice(&bytes[5..13]);
        Ok(Header {
            model_id: u64::from_le_bytes(id),
            height: u16::from_le_bytes([bytes[13], bytes[14]]),
            width: u16::from_le_bytes([bytes[15], bytes[16]]),
            lambda_index: bytes[17],
        })
    }

    pub fn len_bytes(&self) -> usize {
        HEADER_BYTES
            + 4 * (1 + self.chunks.len())
            + self.z.len()
            + self.chunks.iter().map(Vec::len).sum::<usize>()
    }

    /// Byte counts `(header and length fields, z, per-chunk)` summing to [`Self::len_bytes`].
    pub fn breakdown(&self) -> (usize, usize, Vec<usize>) {
        (
            HEADER_BYTES + 4 * (1 + self.chunks.len()),
            self.z.len(),
            self.chunks.iter().map(Vec::len).collect(),
        )
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(Error::Corrupt("segment length exceeds stream"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut a = [0u8; N];
        a.copy_from_slice(self.take(N)?);
        Ok(a)
    }

    fn segment(&mut self) -> Result<Vec<u8>> {
        let len = u32::from_le_bytes(self.array()?) as usize;
        Ok(self.take(len)?.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn sample() -> Bitstream {
        Bitstream {
            header: Header {
                model_id: 0x0102_0304_0506_0708,
                height: 512,
                width: 768,
                lambda_index: 3,
            },
            z: vec![1, 2, 3],
            chunks: vec![vec![9; 5], vec![], vec![7]],
        }
    }

    #[test]
    fn round_trip_and_layout() {
        let bs = sample();
        let bytes = bs.to_bytes();
        assert_eq!(bytes.len(), bs.len_bytes());
        assert_eq!(&bytes[..4], b"HSCB");
        assert_eq!(bytes[4], FORMAT_VERSION);
        assert_eq!(&bytes[5..13], &[8, 7, 6, 5, 4, 3, 2, 1]);
        assert_eq!(&bytes[13..15], &[0, 2]);
        assert_eq!(&bytes[15..17], &[0, 3]);
        assert_eq!(bytes[17], 3);
        assert_eq!(&bytes[18..22], &[3, 0, 0, 0]);
        assert_eq!(Bitstream::from_bytes(&bytes, 3).unwrap(), bs);
        let (fixed, z, c) = bs.breakdown();
        assert_eq!(fixed + z + c.iter().sum::<usize>(), bytes.len());
    }

    #[test]
    fn corrupted_lengths_are_errors() {
        let mut bytes = sample().to_bytes();
        bytes[18] = 0xFF;
        bytes[21] = 0xFF;
        assert!(matches!(
            Bitstream::from_bytes(&bytes, 3),
            Err(Error::Corrupt(_))
        ));
        let bytes = sample().to_bytes();
        for cut in 0..bytes.len() {
            assert!(Bitstream::from_bytes(&bytes[..cut], 3).is_err());
        }
        assert!(Bitstream::from_bytes(&bytes, 2).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Bitstream::from_bytes(&bad, 3).is_err());
    }
}
