//! Bit-packed linear algebra over GF(2).
//!
//! Vectors are bit strings stored in `u64` words; matrices are lists of rows
//! of a common length. All arithmetic is XOR/AND plus popcount.
//!
//! Conventions used throughout the crate:
//! - vectors are columns, so `M * x` applies each row of `M` as a parity of `x`;
//! - the text form of a vector prints bit 0 first (index 0 is the leftmost
//!   character);
//! - the integer index of a vector places bit `i` at value `2^i`, matching the
//!   amplitude indexing of the statevector engine.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hard cap on the number of strings a Hamming ball may materialize.
pub const BALL_CAP: u128 = 1 << 20;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum Gf2Error {
    #[error("dimension mismatch: expected length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is singular over GF(2)")]
    SingularMatrix,
    #[error("Hamming ball of {size} strings exceeds the cap of {cap}")]
    BallTooLarge { size: u128, cap: u128 },
    #[error("invalid bit character {0:?} (expected '0' or '1')")]
    InvalidBitChar(char),
    #[error("parity-check rows are linearly dependent")]
    DependentRows,
}

/// A fixed-length vector over GF(2).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitVec {
    len: usize,
    words: Vec<u64>,
}

fn word_count(len: usize) -> usize {
    len.div_ceil(64)
}

impl BitVec {
    pub fn zeros(len: usize) -> Self {
        Self { len, words: vec![0; word_count(len)] }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            v.set(i, b);
        }
        v
    }

    /// One-hot vector e_i.
    pub fn unit(len: usize, i: usize) -> Self {
        let mut v = Self::zeros(len);
        v.set(i, true);
        v
    }

    /// Decodes an amplitude-style index (bit `i` at value `2^i`).
    pub fn from_index(len: usize, index: usize) -> Self {
        assert!(len >= usize::BITS as usize || index < (1usize << len), "index out of range");
        let mut v = Self::zeros(len);
        for i in 0..len.min(usize::BITS as usize) {
            v.set(i, (index >> i) & 1 == 1);
        }
        v
    }

    /// Amplitude-style index of this vector; requires `len() <= 63`.
    pub fn to_index(&self) -> usize {
        assert!(self.len <= 63, "vector too long for an index");
        self.words.first().copied().unwrap_or(0) as usize
    }

    pub fn random(len: usize, rng: &mut impl Rng) -> Self {
        let mut words: Vec<u64> = (0..word_count(len)).map(|_| rng.gen()).collect();
        mask_tail(&mut words, len);
        Self { len, words }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        debug_assert!(i < self.len);
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        self.set(i, !self.get(i));
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Hamming weight.
    pub fn weight(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// In-place XOR with another vector of the same length.
    pub fn xor_assign(&mut self, other: &BitVec) {
        assert_eq!(self.len, other.len, "xor of mismatched lengths");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    pub fn xor(&self, other: &BitVec) -> BitVec {
        let mut out = self.clone();
        out.xor_assign(other);
        out
    }

    /// Inner product over GF(2): parity of the AND popcount.
    pub fn dot(&self, other: &BitVec) -> bool {
        assert_eq!(self.len, other.len, "dot of mismatched lengths");
        let ones: u32 = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones())
            .sum();
        ones % 2 == 1
    }

    /// First `n` bits as a new vector.
    pub fn prefix(&self, n: usize) -> BitVec {
        assert!(n <= self.len);
        let mut out = BitVec::zeros(n);
        for i in 0..n {
            out.set(i, self.get(i));
        }
        out
    }

    /// Concatenation `self ++ other`.
    pub fn concat(&self, other: &BitVec) -> BitVec {
        let mut out = BitVec::zeros(self.len + other.len);
        for i in 0..self.len {
            out.set(i, self.get(i));
        }
        for i in 0..other.len {
            out.set(self.len + i, other.get(i));
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(|i| self.get(i))
    }
}

fn mask_tail(words: &mut [u64], len: usize) {
    if !len.is_multiple_of(64) {
        if let Some(last) = words.last_mut() {
            *last &= (1u64 << (len % 64)) - 1;
        }
    }
}

impl PartialOrd for BitVec {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Lexicographic order on the printed form (bit 0 is most significant).
impl Ord for BitVec {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.len
            .cmp(&other.len)
            .then_with(|| self.iter().cmp(other.iter()))
    }
}

impl fmt::Display for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            write!(f, "{}", if self.get(i) { '1' } else { '0' })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVec({self})")
    }
}

impl FromStr for BitVec {
    type Err = Gf2Error;

    fn from_str(s: &str) -> Result<Self, Gf2Error> {
        let mut v = BitVec::zeros(s.chars().count());
        for (i, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => v.set(i, true),
                other => return Err(Gf2Error::InvalidBitChar(other)),
            }
        }
        Ok(v)
    }
}

impl Serialize for BitVec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BitVec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A matrix over GF(2), stored as rows of a common length.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitMatrix {
    cols: usize,
    rows: Vec<BitVec>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { cols, rows: vec![BitVec::zeros(cols); rows] }
    }

    pub fn identity(n: usize) -> Self {
        let rows = (0..n).map(|i| BitVec::unit(n, i)).collect();
        Self { cols: n, rows }
    }

    pub fn from_rows(rows: Vec<BitVec>, cols: usize) -> Self {
        assert!(rows.iter().all(|r| r.len() == cols), "row length mismatch");
        Self { cols, rows }
    }

    /// Parses rows of 0/1 literals, e.g. `&[[1,1,0,0],[0,0,1,1]]`.
    pub fn from_dense(rows: &[&[u8]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let rows = rows
            .iter()
            .map(|r| BitVec::from_bools(&r.iter().map(|&b| b == 1).collect::<Vec<_>>()))
            .collect();
        Self { cols, rows }
    }

    pub fn random(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        Self {
            cols,
            rows: (0..rows).map(|_| BitVec::random(cols, rng)).collect(),
        }
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn col_count(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &BitVec {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[BitVec] {
        &self.rows
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.rows[r].get(c)
    }

    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        self.rows[r].set(c, value);
    }

    /// XORs row `source` into row `target`.
    pub fn row_xor_assign(&mut self, target: usize, source: usize) {
        assert_ne!(target, source, "row_xor_assign with identical rows");
        let src = self.rows[source].clone();
        self.rows[target].xor_assign(&src);
    }

    /// Matrix-vector product; each row contributes one parity bit.
    pub fn mul_vec(&self, x: &BitVec) -> Result<BitVec, Gf2Error> {
        if x.len() != self.cols {
            return Err(Gf2Error::DimensionMismatch { expected: self.cols, got: x.len() });
        }
        let mut out = BitVec::zeros(self.rows.len());
        for (i, row) in self.rows.iter().enumerate() {
            out.set(i, row.dot(x));
        }
        Ok(out)
    }

    pub fn mul_mat(&self, other: &BitMatrix) -> BitMatrix {
        assert_eq!(self.cols, other.row_count(), "matmul dimension mismatch");
        let mut out = BitMatrix::zeros(self.row_count(), other.col_count());
        for i in 0..self.row_count() {
            for k in 0..self.cols {
                if self.get(i, k) {
                    out.rows[i].xor_assign(&other.rows[k]);
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> BitMatrix {
        let mut out = BitMatrix::zeros(self.cols, self.rows.len());
        for (i, row) in self.rows.iter().enumerate() {
            for j in 0..self.cols {
                if row.get(j) {
                    out.set(j, i, true);
                }
            }
        }
        out
    }

    /// Stacks `self` on top of `other` (column counts must match).
    pub fn vstack(&self, other: &BitMatrix) -> BitMatrix {
        assert_eq!(self.cols, other.cols, "vstack column mismatch");
        let mut rows = self.rows.clone();
        rows.extend(other.rows.iter().cloned());
        BitMatrix { cols: self.cols, rows }
    }

    /// GF(2) rank via Gaussian elimination on a working copy.
    pub fn rank(&self) -> usize {
        let mut work = self.rows.clone();
        let mut rank = 0;
        for col in 0..self.cols {
            let Some(pivot) = (rank..work.len()).find(|&r| work[r].get(col)) else {
                continue;
            };
            work.swap(rank, pivot);
            let pivot_row = work[rank].clone();
            for (r, row) in work.iter_mut().enumerate() {
                if r != rank && row.get(col) {
                    row.xor_assign(&pivot_row);
                }
            }
            rank += 1;
            if rank == work.len() {
                break;
            }
        }
        rank
    }

    pub fn is_zero(&self) -> bool {
        self.rows.iter().all(|r| r.is_zero())
    }

    /// Inverse of a square full-rank matrix, by Gauss-Jordan on `[self | I]`.
    pub fn invert(&self) -> Result<BitMatrix, Gf2Error> {
        let n = self.rows.len();
        if n != self.cols {
            return Err(Gf2Error::SingularMatrix);
        }
        let mut work = self.rows.clone();
        let mut inv = BitMatrix::identity(n).rows;
        for col in 0..n {
            let Some(pivot) = (col..n).find(|&r| work[r].get(col)) else {
                return Err(Gf2Error::SingularMatrix);
            };
            work.swap(col, pivot);
            inv.swap(col, pivot);
            for r in 0..n {
                if r != col && work[r].get(col) {
                    let (src_w, src_i) = (work[col].clone(), inv[col].clone());
                    work[r].xor_assign(&src_w);
                    inv[r].xor_assign(&src_i);
                }
            }
        }
        Ok(BitMatrix { cols: n, rows: inv })
    }

    /// Reduced row echelon form.
    ///
    /// Returns `(rref, transform, pivot_columns)` with `transform * self = rref`
    /// and `transform` invertible.
    pub fn rref(&self) -> (BitMatrix, BitMatrix, Vec<usize>) {
        let m = self.rows.len();
        let mut work = self.rows.clone();
        let mut t = BitMatrix::identity(m).rows;
        let mut pivots = Vec::new();
        let mut rank = 0;
        for col in 0..self.cols {
            let Some(pivot) = (rank..m).find(|&r| work[r].get(col)) else {
                continue;
            };
            work.swap(rank, pivot);
            t.swap(rank, pivot);
            for r in 0..m {
                if r != rank && work[r].get(col) {
                    let (src_w, src_t) = (work[rank].clone(), t[rank].clone());
                    work[r].xor_assign(&src_w);
                    t[r].xor_assign(&src_t);
                }
            }
            pivots.push(col);
            rank += 1;
            if rank == m {
                break;
            }
        }
        (
            BitMatrix { cols: self.cols, rows: work },
            BitMatrix { cols: m, rows: t },
            pivots,
        )
    }

    /// Canonical basis of the kernel `{x : self * x = 0}`, one row per free column.
    pub fn kernel_basis(&self) -> BitMatrix {
        let (rref, _, pivots) = self.rref();
        let mut basis = Vec::new();
        for free in 0..self.cols {
            if pivots.contains(&free) {
                continue;
            }
            let mut v = BitVec::unit(self.cols, free);
            for (i, &p) in pivots.iter().enumerate() {
                if rref.get(i, free) {
                    v.set(p, true);
                }
            }
            basis.push(v);
        }
        BitMatrix { cols: self.cols, rows: basis }
    }

    /// Greedy completion of this matrix's row space to a basis of the full
    /// space, using standard basis vectors in index order. The returned rows
    /// are the lexicographically earliest such choice.
    pub fn standard_completion(&self) -> BitMatrix {
        let mut span = self.rows.clone();
        let mut added = Vec::new();
        let base_rank = self.rank();
        let mut rank = base_rank;
        for j in 0..self.cols {
            if rank == self.cols {
                break;
            }
            let candidate = BitVec::unit(self.cols, j);
            span.push(candidate.clone());
            let new_rank = BitMatrix { cols: self.cols, rows: span.clone() }.rank();
            if new_rank > rank {
                rank = new_rank;
                added.push(candidate);
            } else {
                span.pop();
            }
        }
        BitMatrix { cols: self.cols, rows: added }
    }
}

impl fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BitMatrix {}x{} [", self.rows.len(), self.cols)?;
        for row in &self.rows {
            writeln!(f, "  {row}")?;
        }
        write!(f, "]")
    }
}

/// A random matrix of the given shape with full row rank, found by rejecting
/// dependent rows. Deterministic for a fixed RNG state.
pub fn random_full_rank(rows: usize, cols: usize, rng: &mut impl Rng) -> BitMatrix {
    assert!(rows <= cols, "cannot have rank {rows} with only {cols} columns");
    let mut acc: Vec<BitVec> = Vec::with_capacity(rows);
    while acc.len() < rows {
        let candidate = BitVec::random(cols, rng);
        acc.push(candidate);
        let m = BitMatrix::from_rows(acc.clone(), cols);
        if m.rank() < acc.len() {
            acc.pop();
        }
    }
    BitMatrix::from_rows(acc, cols)
}

/// A linear code presented by its parity-check matrix (`s` rows, `n+s` columns).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearCode {
    parity_check: BitMatrix,
}

impl LinearCode {
    pub fn new(parity_check: BitMatrix) -> Result<Self, Gf2Error> {
        if parity_check.rank() < parity_check.row_count() {
            return Err(Gf2Error::DependentRows);
        }
        Ok(Self { parity_check })
    }

    pub fn parity_check(&self) -> &BitMatrix {
        &self.parity_check
    }

    /// Syndrome length.
    pub fn syndrome_bits(&self) -> usize {
        self.parity_check.row_count()
    }

    pub fn block_len(&self) -> usize {
        self.parity_check.col_count()
    }

    pub fn syndrome(&self, x: &BitVec) -> Result<BitVec, Gf2Error> {
        self.parity_check.mul_vec(x)
    }
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Number of strings within Hamming distance `radius` of any fixed center.
pub fn ball_size(len: usize, radius: usize) -> u128 {
    (0..=radius.min(len)).map(|k| binomial(len, k)).sum()
}

/// Iterates all vectors within Hamming distance `radius` of `center`, in
/// order of increasing weight of the displacement and lexicographic flip
/// positions within each weight shell.
pub fn hamming_ball_iter(center: &BitVec, radius: usize) -> impl Iterator<Item = BitVec> {
    let center = center.clone();
    let n = center.len();
    (0..=radius.min(n)).flat_map(move |k| {
        let center = center.clone();
        Combinations::new(n, k).map(move |positions| {
            let mut v = center.clone();
            for &p in &positions {
                v.flip(p);
            }
            v
        })
    })
}

/// Materializes the Hamming ball; errors beyond [`BALL_CAP`] strings.
pub fn hamming_ball(center: &BitVec, radius: usize) -> Result<Vec<BitVec>, Gf2Error> {
    assert!(radius <= center.len(), "radius exceeds vector length");
    let size = ball_size(center.len(), radius);
    if size > BALL_CAP {
        return Err(Gf2Error::BallTooLarge { size, cap: BALL_CAP });
    }
    Ok(hamming_ball_iter(center, radius).collect())
}

/// Lexicographic k-combinations of `0..n`.
struct Combinations {
    n: usize,
    current: Vec<usize>,
    done: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Self {
            n,
            current: (0..k).collect(),
            done: k > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.current.clone();
        let k = self.current.len();
        if k == 0 {
            self.done = true;
            return Some(out);
        }
        // advance to the next combination
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.current[i] < self.n - (k - i) {
                self.current[i] += 1;
                for j in i + 1..k {
                    self.current[j] = self.current[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}
