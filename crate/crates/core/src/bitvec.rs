//! Packed activation bit patterns and Hamming kernels.
//!
//! Rows are stored as little-endian 64-bit words: bit `j` of a row lives in
//! word `j / 64` at position `j % 64`. Bits past `n_bits` in the last word
//! are always zero, so whole-word XOR/popcount never sees padding.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rdm::{DissimMatrix, Metric};

const WORD_BITS: usize = 64;

#[inline]
pub fn words_for(n_bits: usize) -> usize {
    n_bits.div_ceil(WORD_BITS)
}

#[inline]
fn last_word_mask(n_bits: usize) -> u64 {
    match n_bits % WORD_BITS {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

/// A single packed bit vector.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BitRow {
    n_bits: usize,
    words: Vec<u64>,
}

impl BitRow {
    pub fn zeros(n_bits: usize) -> Self {
        BitRow {
            n_bits,
            words: vec![0; words_for(n_bits)],
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut row = BitRow::zeros(bits.len());
        for (j, &b) in bits.iter().enumerate() {
            if b {
                row.words[j / WORD_BITS] |= 1 << (j % WORD_BITS);
            }
        }
        row
    }

    /// Parses a string of `0`/`1` characters, bit 0 first.
    pub fn parse(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Data(format!("not a bit: {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BitRow::from_bools(&bits))
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, j: usize) -> bool {
        assert!(j < self.n_bits, "bit {j} out of range for {} bits", self.n_bits);
        self.words[j / WORD_BITS] >> (j % WORD_BITS) & 1 == 1
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }
}

impl std::fmt::Display for BitRow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for j in 0..self.n_bits {
            f.write_str(if self.get(j) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Activation pattern of one post-ReLU layer output: bit `j` is set iff
/// `o_j > 0`. Negative or NaN entries mean the values did not come out of a
/// ReLU and are rejected.
pub fn binarize(layer_output: &[f64]) -> Result<BitRow> {
    let mut row = BitRow::zeros(layer_output.len());
    for (j, &o) in layer_output.iter().enumerate() {
        if o > 0.0 {
            row.words[j / WORD_BITS] |= 1 << (j % WORD_BITS);
        } else if o != 0.0 {
            return Err(Error::Contract(format!(
                "activation {j} is {o}; post-ReLU values must be non-negative"
            )));
        }
    }
    Ok(row)
}

/// Differing-bit count of two equally sized packed word slices.
#[inline]
pub fn hamming_words(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

pub fn hamming(a: &BitRow, b: &BitRow) -> Result<usize> {
    if a.n_bits != b.n_bits {
        return Err(Error::Shape(format!(
            "bit vectors of length {} and {}",
            a.n_bits, b.n_bits
        )));
    }
    Ok(hamming_words(&a.words, &b.words) as usize)
}

/// `n_rows` packed bit vectors of `n_bits` each.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitMatrix {
    n_rows: usize,
    n_bits: usize,
    words_per_row: usize,
    words: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(n_rows: usize, n_bits: usize) -> Self {
        let words_per_row = words_for(n_bits);
        BitMatrix {
            n_rows,
            n_bits,
            words_per_row,
            words: vec![0; n_rows * words_per_row],
        }
    }

    /// Wraps raw row-major words, rejecting set padding bits.
    pub fn from_words(n_rows: usize, n_bits: usize, words: Vec<u64>) -> Result<Self> {
        let words_per_row = words_for(n_bits);
        if words.len() != n_rows * words_per_row {
            return Err(Error::Shape(format!(
                "{} words for {n_rows} rows of {n_bits} bits (expected {})",
                words.len(),
                n_rows * words_per_row
            )));
        }
        if words_per_row > 0 {
            let pad = !last_word_mask(n_bits);
            for (i, row) in words.chunks_exact(words_per_row).enumerate() {
                if row[words_per_row - 1] & pad != 0 {
                    return Err(Error::Data(format!("row {i} has padding bits set")));
                }
            }
        }
        Ok(BitMatrix {
            n_rows,
            n_bits,
            words_per_row,
            words,
        })
    }

    pub fn from_rows(rows: &[BitRow]) -> Result<Self> {
        let n_bits = rows.first().map_or(0, |r| r.n_bits);
        let mut m = BitMatrix::zeros(rows.len(), n_bits);
        for (i, r) in rows.iter().enumerate() {
            if r.n_bits != n_bits {
                return Err(Error::Shape(format!(
                    "row {i} has {} bits, expected {n_bits}",
                    r.n_bits
                )));
            }
            m.row_words_mut(i).copy_from_slice(&r.words);
        }
        Ok(m)
    }

    pub fn from_fn(n_rows: usize, n_bits: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = BitMatrix::zeros(n_rows, n_bits);
        for i in 0..n_rows {
            for j in 0..n_bits {
                if f(i, j) {
                    m.set(i, j);
                }
            }
        }
        m
    }

    /// Binarizes every row of a post-ReLU activation matrix.
    pub fn from_activations(activations: &Matrix) -> Result<Self> {
        let rows = activations
            .row_iter()
            .map(binarize)
            .collect::<Result<Vec<_>>>()?;
        if rows.is_empty() {
            return Ok(BitMatrix::zeros(0, activations.cols()));
        }
        BitMatrix::from_rows(&rows)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn row_words(&self, i: usize) -> &[u64] {
        &self.words[i * self.words_per_row..(i + 1) * self.words_per_row]
    }

    fn row_words_mut(&mut self, i: usize) -> &mut [u64] {
        &mut self.words[i * self.words_per_row..(i + 1) * self.words_per_row]
    }

    pub fn row(&self, i: usize) -> BitRow {
        BitRow {
            n_bits: self.n_bits,
            words: self.row_words(i).to_vec(),
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        assert!(j < self.n_bits, "bit {j} out of range for {} bits", self.n_bits);
        self.row_words(i)[j / WORD_BITS] >> (j % WORD_BITS) & 1 == 1
    }

    fn set(&mut self, i: usize, j: usize) {
        self.row_words_mut(i)[j / WORD_BITS] |= 1 << (j % WORD_BITS);
    }

    pub fn select_rows(&self, indices: &[usize]) -> BitMatrix {
        let mut words = Vec::with_capacity(indices.len() * self.words_per_row);
        for &i in indices {
            words.extend_from_slice(self.row_words(i));
        }
        BitMatrix {
            n_rows: indices.len(),
            n_bits: self.n_bits,
            words_per_row: self.words_per_row,
            words,
        }
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn vstack(&self, other: &BitMatrix) -> Result<BitMatrix> {
        if self.n_bits != other.n_bits {
            return Err(Error::Shape(format!(
                "cannot stack {}-bit rows on {}-bit rows",
                other.n_bits, self.n_bits
            )));
        }
        let mut words = self.words.clone();
        words.extend_from_slice(&other.words);
        Ok(BitMatrix {
            n_rows: self.n_rows + other.n_rows,
            words,
            ..*self
        })
    }

    /// Columns of `self` followed by columns of `other`, row by row.
    pub fn hstack(&self, other: &BitMatrix) -> Result<BitMatrix> {
        if self.n_rows != other.n_rows {
            return Err(Error::Shape(format!(
                "cannot join {} rows with {} rows",
                self.n_rows, other.n_rows
            )));
        }
        Ok(BitMatrix::from_fn(self.n_rows, self.n_bits + other.n_bits, |i, j| {
            if j < self.n_bits {
                self.get(i, j)
            } else {
                other.get(i, j - self.n_bits)
            }
        }))
    }

    /// 0/1 real-valued copy, one row per sample.
    pub fn to_real(&self) -> Matrix {
        Matrix::from_fn(self.n_rows, self.n_bits, |i, j| {
            if self.get(i, j) {
                1.0
            } else {
                0.0
            }
        })
    }
}

/// Normalized pairwise Hamming distances: `H_ij = hamming(i, j) / n_bits`.
pub fn hamming_matrix(bits: &BitMatrix) -> Result<DissimMatrix> {
    if bits.n_rows < 2 {
        return Err(Error::Shape(format!(
            "need at least 2 rows, got {}",
            bits.n_rows
        )));
    }
    if bits.n_bits == 0 {
        return Err(Error::Shape("bit vectors are empty".into()));
    }
    let n = bits.n_rows;
    let denom = bits.n_bits as f64;
    let upper: Vec<Vec<u32>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let a = bits.row_words(i);
            (i + 1..n)
                .map(|j| hamming_words(a, bits.row_words(j)))
                .collect()
        })
        .collect();
    let mut values = Matrix::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        for (off, &d) in row.iter().enumerate() {
            let j = i + 1 + off;
            let v = d as f64 / denom;
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
    }
    Ok(DissimMatrix::from_parts(values, Metric::NormalizedHamming, None))
}

/// Keeps the columns `indices` in the given order.
pub fn select_columns(bits: &BitMatrix, indices: &[usize]) -> Result<BitMatrix> {
    if indices.is_empty() {
        return Err(Error::Index("column selection is empty".into()));
    }
    let mut seen = vec![false; bits.n_bits];
    for &j in indices {
        if j >= bits.n_bits {
            return Err(Error::Index(format!(
                "column {j} out of range for {} bits",
                bits.n_bits
            )));
        }
        if std::mem::replace(&mut seen[j], true) {
            return Err(Error::Index(format!("column {j} selected twice")));
        }
    }
    Ok(BitMatrix::from_fn(bits.n_rows, indices.len(), |i, k| {
        bits.get(i, indices[k])
    }))
}
