//! Quantization, entropy coding and the bitstream container.

pub mod arith;
pub mod bitstream;
pub mod entropy;
pub mod quant;

pub use bitstream::{
    read_bitstream, read_header, write_bitstream, CodingMode, FrameRecord, FrameType, StreamHeader, HEADER_BYTES,
    MAGIC, VERSION,
};
pub use entropy::{entropy_decode, entropy_encode, FrameContexts};
pub use quant::{dequantize, quantize, QuantizedBlock};
