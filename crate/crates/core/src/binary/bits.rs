//! Bit-packed ±1 storage and the XNOR-popcount dot product.
//!
//! Convention: bit `1` encodes `+1`, bit `0` encodes `-1`. Bits are packed
//! LSB-first into `u64` words and every row is padded to a whole word with
//! zero bits. Padding never reaches a result: the XNOR word of the final
//! partial word is masked to the row length before counting.

use std::fmt;

use crate::error::{Error, Result};
use crate::par;

pub const WORD_BITS: usize = 64;

/// Words needed for `n` bits.
#[inline]
pub fn words_for(n: usize) -> usize {
    n.div_ceil(WORD_BITS)
}

/// Mask selecting the valid bits of the last word of an `n`-bit row.
#[inline]
pub fn tail_mask(n: usize) -> u64 {
    match n % WORD_BITS {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    words_per_row: usize,
    words: Vec<u64>,
}

impl fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitMatrix[{} x {}]", self.rows, self.cols)
    }
}

impl BitMatrix {
    /// All entries `-1`.
    pub fn new(rows: usize, cols: usize) -> Self {
        let words_per_row = words_for(cols);
        BitMatrix { rows, cols, words_per_row, words: vec![0; rows * words_per_row] }
    }

    /// `f(row, col)` returns true for `+1`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = BitMatrix::new(rows, cols);
        for r in 0..rows {
            let row = &mut m.words[r * m.words_per_row..(r + 1) * m.words_per_row];
            for c in 0..cols {
                if f(r, c) {
                    row[c / WORD_BITS] |= 1 << (c % WORD_BITS);
                }
            }
        }
        m
    }

    /// Rebuilds a matrix from its packed words; padding bits must be zero.
    pub fn from_words(rows: usize, cols: usize, words: Vec<u64>) -> Result<Self> {
        let words_per_row = words_for(cols);
        if words.len() != rows * words_per_row {
            return Err(Error::shape(format!("{rows} x {cols} bit matrix needs {} words, got {}", rows * words_per_row, words.len())));
        }
        if words_per_row > 0 {
            let mask = tail_mask(cols);
            for r in 0..rows {
                if words[(r + 1) * words_per_row - 1] & !mask != 0 {
                    return Err(Error::Format(format!("row {r} has non-zero padding bits")));
                }
            }
        }
        Ok(BitMatrix { rows, cols, words_per_row, words })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[u64] {
        &self.words[r * self.words_per_row..(r + 1) * self.words_per_row]
    }

    /// Mask applied to the last word of every row.
    pub fn padding_mask(&self) -> u64 {
        tail_mask(self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.words[r * self.words_per_row + c / WORD_BITS] >> (c % WORD_BITS) & 1 == 1
    }

    pub fn set(&mut self, r: usize, c: usize, plus: bool) {
        let w = &mut self.words[r * self.words_per_row + c / WORD_BITS];
        if plus {
            *w |= 1 << (c % WORD_BITS);
        } else {
            *w &= !(1 << (c % WORD_BITS));
        }
    }

    /// Entry as `+1.0` / `-1.0`.
    pub fn sign_at(&self, r: usize, c: usize) -> f32 {
        if self.get(r, c) {
            1.0
        } else {
            -1.0
        }
    }

    /// Row-major ±1 values.
    pub fn to_signs(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for r in 0..self.rows {
            out.extend(unpack_bits(self.row(r), self.cols));
        }
        out
    }
}

/// Packs exact ±1 values LSB-first.
pub fn pack_bits(values: &[f32]) -> Result<Vec<u64>> {
    let mut words = vec![0u64; words_for(values.len())];
    for (i, &v) in values.iter().enumerate() {
        if v == 1.0 {
            words[i / WORD_BITS] |= 1 << (i % WORD_BITS);
        } else if v != -1.0 {
            return Err(Error::InvalidValue(format!("pack_bits expects ±1, found {v} at index {i}")));
        }
    }
    Ok(words)
}

pub fn unpack_bits(words: &[u64], n: usize) -> Vec<f32> {
    (0..n).map(|i| if words[i / WORD_BITS] >> (i % WORD_BITS) & 1 == 1 { 1.0 } else { -1.0 }).collect()
}

/// `Σ aᵢ·bᵢ` over two packed ±1 rows of length `n`:
/// `2·popcount(XNOR(a, b) & mask) − n`.
pub fn xnor_popcount_dot(a: &[u64], b: &[u64], n: usize) -> Result<i32> {
    let w = words_for(n);
    if a.len() != w || b.len() != w {
        return Err(Error::shape(format!("packed rows of {} and {} words for length {n} (need {w})", a.len(), b.len())));
    }
    Ok(dot_words(a, b, n, tail_mask(n)))
}

#[inline(always)]
pub(crate) fn dot_words(a: &[u64], b: &[u64], n: usize, mask: u64) -> i32 {
    let Some((last, body)) = a.split_last() else {
        return 0;
    };
    let (blast, bbody) = b.split_last().expect("equal word counts");
    let mut agree = 0u32;
    for (x, y) in body.iter().zip(bbody) {
        agree += (!(x ^ y)).count_ones();
    }
    agree += (!(last ^ blast) & mask).count_ones();
    2 * agree as i32 - n as i32
}

#[inline(always)]
fn dot_row_many_generic(a: &[u64], b: &BitMatrix, out: &mut [i32]) {
    let n = b.cols;
    let mask = b.padding_mask();
    for (j, o) in out.iter_mut().enumerate() {
        *o = dot_words(a, b.row(j), n, mask);
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "popcnt")]
unsafe fn dot_row_many_popcnt(a: &[u64], b: &BitMatrix, out: &mut [i32]) {
    dot_row_many_generic(a, b, out)
}

/// `out[j] = dot(a, b.row(j))` for every row of `b`.
#[inline]
pub(crate) fn dot_row_many(a: &[u64], b: &BitMatrix, out: &mut [i32]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("popcnt") {
            // SAFETY: the CPU supports popcnt, checked just above.
            unsafe { dot_row_many_popcnt(a, b, out) };
            return;
        }
    }
    dot_row_many_generic(a, b, out)
}

/// Binary GEMM: `a` is `[M x K]`, `b` is `[N x K]` (rows are the dot
/// operands); returns the `M x N` integer products row-major.
pub fn xnor_gemm(a: &BitMatrix, b: &BitMatrix) -> Result<Vec<i32>> {
    if a.cols != b.cols {
        return Err(Error::shape(format!("xnor_gemm inner dims differ: {} vs {}", a.cols, b.cols)));
    }
    let n = b.rows;
    let mut out = vec![0i32; a.rows * n];
    if n == 0 {
        return Ok(out);
    }
    let rows_per_task = (4096 / n.max(1)).max(1);
    par::for_each_chunk_mut(&mut out, rows_per_task * n, |task, chunk| {
        for (i, row_out) in chunk.chunks_mut(n).enumerate() {
            dot_row_many(a.row(task * rows_per_task + i), b, row_out);
        }
    });
    Ok(out)
}
