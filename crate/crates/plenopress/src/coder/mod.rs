//! Lossless entropy coding of quantized latents: quantized CDF tables, the
//! range coder, the bitstream container, and the full image codec.

pub mod bitstream;
pub mod cdf;
pub mod imagecodec;
pub mod range;

pub use bitstream::{Bitstream, BitstreamHeader, PatchSegment};
pub use cdf::{build_factorized_cdf, build_gaussian_cdf, CdfTable};
pub use imagecodec::{decode_image, decode_image_traced, encode_image, encode_image_traced, CodecConfig};
pub use range::{rc_decode, rc_encode, shannon_bits, RangeDecoder, RangeEncoder};
