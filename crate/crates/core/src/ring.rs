//! Centered arithmetic over `Z_q` for power-of-two moduli.
//!
//! Every residue is stored as its centered representative in
//! `[-q/2, q/2)`. Because `q = 2^b` divides `2^128`, sums and products can
//! be accumulated with wrapping 128-bit arithmetic and reduced once at the
//! end: wrapping arithmetic is exact modulo `2^128`, hence exact modulo `q`.
//!
//! # Wire format
//!
//! ```text
//! +-----------+-----------+-------------+--------------------------------+
//! | rows u32  | cols u32  | q_bits u16  | rows*cols entries, i128 LE     |
//! +-----------+-----------+-------------+--------------------------------+
//! ```

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Size of the serialized matrix header in bytes.
pub const HEADER_LEN: usize = 10;

/// Work (in multiply-adds) above which `matmul` splits rows across threads.
const PAR_THRESHOLD: usize = 1 << 16;

/// A power-of-two modulus `q = 2^bits`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Modulus {
    bits: u32,
}

impl Modulus {
    pub const MIN_BITS: u32 = 2;
    pub const MAX_BITS: u32 = 127;

    pub fn new(bits: u32) -> Result<Self> {
        if !(Self::MIN_BITS..=Self::MAX_BITS).contains(&bits) {
            return Err(Error::InvalidModulus(bits));
        }
        Ok(Self { bits })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// The modulus value `2^bits`.
    pub fn q(&self) -> u128 {
        1u128 << self.bits
    }

    /// `q/2`, the magnitude of the most negative residue.
    pub fn half(&self) -> u128 {
        1u128 << (self.bits - 1)
    }

    /// Centered reduction of a value given modulo `2^128`.
    ///
    /// Sign-extends from bit `bits - 1`, which maps the low `bits` bits onto
    /// `[-q/2, q/2)`.
    #[inline(always)]
    pub fn reduce_wrapping(&self, x: u128) -> i128 {
        let shift = 128 - self.bits;
        ((x << shift) as i128) >> shift
    }

    /// `x mod q` into the centered interval.
    #[inline(always)]
    pub fn reduce(&self, x: i128) -> i128 {
        self.reduce_wrapping(x as u128)
    }

    #[inline]
    pub fn contains(&self, x: i128) -> bool {
        let half = self.half() as i128;
        // q/2 overflows i128 only for 2^128, which is excluded
        x >= -half && x < half
    }
}

/// The textbook centered reduction `x - floor((x + q/2) / q) * q` for an
/// arbitrary modulus `q >= 2`.
///
/// Evaluated as `floor((2x + q) / 2q)` so odd moduli are handled exactly.
/// Requires `|2x| + 2q` to fit in an `i128`.
pub fn centered_mod(x: i128, q: i128) -> i128 {
    assert!(q >= 2, "modulus must be at least 2");
    let quotient = (2 * x + q).div_euclid(2 * q);
    x - quotient * q
}

/// Dense row-major matrix over `Z_q`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ZqMatrix {
    rows: usize,
    cols: usize,
    modulus: Modulus,
    data: Vec<i128>,
}

impl ZqMatrix {
    pub fn zeros(rows: usize, cols: usize, modulus: Modulus) -> Self {
        Self {
            rows,
            cols,
            modulus,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(size: usize, modulus: Modulus) -> Self {
        let mut m = Self::zeros(size, size, modulus);
        for i in 0..size {
            m.data[i * size + i] = 1;
        }
        m
    }

    /// Builds a matrix from row-major data, reducing every entry.
    pub fn from_vec(rows: usize, cols: usize, modulus: Modulus, data: Vec<i128>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Malformed(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        let data = data.into_iter().map(|x| modulus.reduce(x)).collect();
        Ok(Self {
            rows,
            cols,
            modulus,
            data,
        })
    }

    /// Builds a matrix from raw words taken modulo `2^128`.
    pub fn from_wrapping(rows: usize, cols: usize, modulus: Modulus, data: &[u128]) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self {
            rows,
            cols,
            modulus,
            data: data.iter().map(|&x| modulus.reduce_wrapping(x)).collect(),
        }
    }

    pub fn from_rows(rows: &[Vec<i128>], modulus: Modulus) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Malformed("ragged rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::from_vec(rows.len(), cols, modulus, data)
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        modulus: Modulus,
        mut f: impl FnMut(usize, usize) -> i128,
    ) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(modulus.reduce(f(i, j)));
            }
        }
        Self {
            rows,
            cols,
            modulus,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn modulus(&self) -> Modulus {
        self.modulus
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> i128 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: i128) {
        self.data[row * self.cols + col] = self.modulus.reduce(value);
    }

    pub fn row(&self, row: usize) -> &[i128] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[i128] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<i128> {
        self.data
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0)
    }

    /// Largest absolute centered entry, `||X||_max`.
    pub fn max_abs(&self) -> u128 {
        self.data
            .iter()
            .map(|x| x.unsigned_abs())
            .max()
            .unwrap_or(0)
    }

    fn check_same(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.modulus != other.modulus {
            return Err(Error::ModulusMismatch(
                self.modulus.bits,
                other.modulus.bits,
            ));
        }
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    fn zip_with(&self, other: &Self, f: impl Fn(u128, u128) -> u128) -> Self {
        let m = self.modulus;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| m.reduce_wrapping(f(a as u128, b as u128)))
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            modulus: m,
            data,
        }
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self> {
        self.check_same(other, "add")?;
        Ok(self.zip_with(other, u128::wrapping_add))
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self> {
        self.check_same(other, "sub")?;
        Ok(self.zip_with(other, u128::wrapping_sub))
    }

    pub fn neg(&self) -> Self {
        let m = self.modulus;
        Self {
            rows: self.rows,
            cols: self.cols,
            modulus: m,
            data: self
                .data
                .iter()
                .map(|&x| m.reduce_wrapping((x as u128).wrapping_neg()))
                .collect(),
        }
    }

    /// Multiplies every entry by a scalar.
    pub fn scale(&self, factor: i128) -> Self {
        let m = self.modulus;
        Self {
            rows: self.rows,
            cols: self.cols,
            modulus: m,
            data: self
                .data
                .iter()
                .map(|&x| m.reduce_wrapping((x as u128).wrapping_mul(factor as u128)))
                .collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.data[i * self.cols + j]);
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            modulus: self.modulus,
            data,
        }
    }

    /// Matrix product with a single reduction per output entry.
    ///
    /// Rows are split across the rayon pool for large products; each output
    /// row is computed by exactly one worker so the result does not depend on
    /// the thread count.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.modulus != other.modulus {
            return Err(Error::ModulusMismatch(
                self.modulus.bits,
                other.modulus.bits,
            ));
        }
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (n, inner, p) = (self.rows, self.cols, other.cols);
        let m = self.modulus;
        let mut data = vec![0i128; n * p];
        if p == 0 {
            return Ok(Self {
                rows: n,
                cols: p,
                modulus: m,
                data,
            });
        }
        let row_kernel = |(i, out): (usize, &mut [i128])| {
            let mut acc = vec![0u128; p];
            let lhs = &self.data[i * inner..(i + 1) * inner];
            for (k, &a) in lhs.iter().enumerate() {
                if a == 0 {
                    continue;
                }
                let a = a as u128;
                let rhs = &other.data[k * p..(k + 1) * p];
                for (slot, &b) in acc.iter_mut().zip(rhs) {
                    *slot = slot.wrapping_add(a.wrapping_mul(b as u128));
                }
            }
            for (o, a) in out.iter_mut().zip(acc) {
                *o = m.reduce_wrapping(a);
            }
        };
        if n * inner * p >= PAR_THRESHOLD {
            data.par_chunks_mut(p).enumerate().for_each(row_kernel);
        } else {
            data.chunks_mut(p).enumerate().for_each(row_kernel);
        }
        Ok(Self {
            rows: n,
            cols: p,
            modulus: m,
            data,
        })
    }

    /// Number of bytes produced by [`ZqMatrix::write_to`].
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + 16 * self.data.len()
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let rows =
            u32::try_from(self.rows).map_err(|_| Error::Malformed("too many rows".into()))?;
        let cols =
            u32::try_from(self.cols).map_err(|_| Error::Malformed("too many cols".into()))?;
        w.write_all(&rows.to_le_bytes())?;
        w.write_all(&cols.to_le_bytes())?;
        w.write_all(&(self.modulus.bits as u16).to_le_bytes())?;
        for x in &self.data {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.write_to(&mut out)
            .expect("writing to a Vec cannot fail");
        out
    }

    /// Reads one matrix, rejecting entries outside the centered interval.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)?;
        let rows = u32::from_le_bytes(header[0..4].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let bits = u16::from_le_bytes(header[8..10].try_into().unwrap()) as u32;
        let modulus = Modulus::new(bits)?;
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Malformed("matrix size overflows".into()))?;
        let mut data = Vec::with_capacity(len.min(1 << 24));
        let mut buf = [0u8; 16];
        for _ in 0..len {
            r.read_exact(&mut buf)?;
            let value = i128::from_le_bytes(buf);
            if !modulus.contains(value) {
                return Err(Error::NotCentered { value, bits });
            }
            data.push(value);
        }
        Ok(Self {
            rows,
            cols,
            modulus,
            data,
        })
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let m = Self::read_from(&mut bytes)?;
        if !bytes.is_empty() {
            return Err(Error::Malformed(format!("{} trailing bytes", bytes.len())));
        }
        Ok(m)
    }
}
