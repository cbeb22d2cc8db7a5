//! Binarization and bit-packed XNOR-popcount kernels.

mod bits;
mod layers;

pub use bits::{pack_bits, tail_mask, unpack_bits, words_for, xnor_gemm, xnor_popcount_dot, BitMatrix, WORD_BITS};
pub use layers::{bconv2d, rsign, sign, sign_binarize_conv, BConvLayer, BiLinearLayer, ConvGeometry};
