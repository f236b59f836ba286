//! JPEG compression arithmetic in the pixel domain: quantization tables,
//! the 8x8 orthonormal DCT and single/double compression with grid shifts.
//!
//! Only luminance is modeled and there is no entropy coding; the only effect
//! of a compression pass is DCT-domain quantization followed by rounding and
//! clipping of the stored pixels.

mod compress;
mod dct;
mod quant;

pub use compress::{block_coefficients, compress_once, double_compress, GridShift, LumaImage};
pub use dct::{forward_dct, inverse_dct, Block};
pub use quant::{quality_to_matrix, QuantMatrix, BASE_LUMINANCE, ZIGZAG};
