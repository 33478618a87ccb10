//! Entropy coding: quantized CDF tables, the range coder and the container.

pub mod bitstream;
pub mod cdf;
pub mod range;

pub use bitstream::{Bitstream, Header, FORMAT_VERSION, HEADER_BYTES, MAGIC};
pub use cdf::{
    approx_normal_cdf, QuantizedCdf, SymbolTable, ALPHABET_HALF_WIDTH, PRECISION_BITS, TOTAL,
};
pub use range::{range_decode, range_encode, RangeDecoder, RangeEncoder};
