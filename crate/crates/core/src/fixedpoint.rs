//! `k`-bit fixed-point numbers with `l` fractional bits and their embedding
//! into `Z_q` at scale `2^l` (inputs) or `2^(2l)` (products).

use num_bigint::BigInt;
use num_rational::BigRational;

use crate::error::{Error, Result};
use crate::ring::{Modulus, ZqMatrix};

/// The format `Q_{k,l}`: value = mantissa * 2^-l, mantissa in `[-2^(k-1), 2^(k-1))`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FixedPointSpec {
    k: u32,
    l: u32,
}

impl FixedPointSpec {
    pub const MIN_K: u32 = 6;
    /// Mantissas are held in `i64`.
    pub const MAX_K: u32 = 63;

    pub fn new(k: u32, l: u32) -> Result<Self> {
        if !(Self::MIN_K..=Self::MAX_K).contains(&k) || l >= k {
            return Err(Error::InvalidFixedPoint { k, l });
        }
        Ok(Self { k, l })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn l(&self) -> u32 {
        self.l
    }

    pub fn min_mantissa(&self) -> i64 {
        -(1i64 << (self.k - 1))
    }

    pub fn max_mantissa(&self) -> i64 {
        (1i64 << (self.k - 1)) - 1
    }

    /// Quantization step `2^-l`.
    pub fn step(&self) -> f64 {
        (-(self.l as f64)).exp2()
    }
}

/// Plain real matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Malformed(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Malformed("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn column(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
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

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                op: "real matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op: "real add",
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    /// `||self - other||_max`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Matrix over `Q_{k,l}` stored as integer mantissas.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixedPointMatrix {
    spec: FixedPointSpec,
    rows: usize,
    cols: usize,
    mantissas: Vec<i64>,
}

impl FixedPointMatrix {
    pub fn from_mantissas(
        spec: FixedPointSpec,
        rows: usize,
        cols: usize,
        mantissas: Vec<i64>,
    ) -> Result<Self> {
        if mantissas.len() != rows * cols {
            return Err(Error::Malformed(format!(
                "{} mantissas for a {rows}x{cols} matrix",
                mantissas.len()
            )));
        }
        let (lo, hi) = (spec.min_mantissa(), spec.max_mantissa());
        if let Some(&bad) = mantissas.iter().find(|&&m| m < lo || m > hi) {
            return Err(Error::Malformed(format!(
                "mantissa {bad} outside {}-bit range",
                spec.k
            )));
        }
        Ok(Self {
            spec,
            rows,
            cols,
            mantissas,
        })
    }

    pub fn spec(&self) -> FixedPointSpec {
        self.spec
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

    pub fn mantissas(&self) -> &[i64] {
        &self.mantissas
    }

    pub fn mantissa(&self, row: usize, col: usize) -> i64 {
        self.mantissas[row * self.cols + col]
    }

    /// Values as `f64`; exact whenever `k <= 54`.
    pub fn to_real(&self) -> RealMatrix {
        let step = self.spec.step();
        RealMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.mantissas.iter().map(|&m| m as f64 * step).collect(),
        }
    }

    pub fn to_rational(&self) -> Vec<BigRational> {
        let den = BigInt::from(1) << self.spec.l;
        self.mantissas
            .iter()
            .map(|&m| BigRational::new(BigInt::from(m), den.clone()))
            .collect()
    }
}

/// Result of [`quantize`]: the matrix and how many entries were clamped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Quantized {
    pub matrix: FixedPointMatrix,
    pub saturated: usize,
}

/// Mid-tread quantizer with step `2^-l` and saturation at `2^(k-1-l)`.
///
/// Rounds half away from zero. Scaling by a power of two is exact in
/// binary floating point, so the only rounding is the final one.
pub fn quantize(x: &RealMatrix, spec: FixedPointSpec) -> Quantized {
    let scale = (spec.l as f64).exp2();
    let (lo, hi) = (spec.min_mantissa(), spec.max_mantissa());
    let mut saturated = 0;
    let mantissas = x
        .as_slice()
        .iter()
        .map(|&v| {
            let r = (v * scale).round();
            if r.is_nan() {
                saturated += 1;
                0
            } else if r < lo as f64 {
                saturated += 1;
                lo
            } else if r > hi as f64 {
                saturated += 1;
                hi
            } else {
                r as i64
            }
        })
        .collect();
    Quantized {
        matrix: FixedPointMatrix {
            spec,
            rows: x.rows(),
            cols: x.cols(),
            mantissas,
        },
        saturated,
    }
}

fn embed(m: &FixedPointMatrix, modulus: Modulus, shift: u32) -> Result<ZqMatrix> {
    let overflow = Error::EncodingOverflow {
        bits: modulus.bits(),
    };
    // |mantissa| <= 2^(k-1) and k <= 63, so the shifted value fits when
    // k - 1 + shift < 127
    if m.spec.k - 1 + shift >= 127 {
        return Err(overflow);
    }
    let data = m
        .mantissas
        .iter()
        .map(|&v| {
            let scaled = (v as i128) << shift;
            if modulus.contains(scaled) {
                Ok(scaled)
            } else {
                Err(Error::EncodingOverflow {
                    bits: modulus.bits(),
                })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    ZqMatrix::from_vec(m.rows, m.cols, modulus, data)
}

/// `X_bar = 2^l X`: the mantissas themselves as residues.
pub fn encode_l(m: &FixedPointMatrix, modulus: Modulus) -> Result<ZqMatrix> {
    embed(m, modulus, 0)
}

/// `2^(2l) X`, the scale of protocol outputs.
pub fn encode_2l(m: &FixedPointMatrix, modulus: Modulus) -> Result<ZqMatrix> {
    embed(m, modulus, m.spec.l)
}

/// Inverse of [`encode_l`]; fails when a residue is outside the `k`-bit range.
pub fn decode_l(z: &ZqMatrix, spec: FixedPointSpec) -> Result<FixedPointMatrix> {
    let mantissas = z
        .as_slice()
        .iter()
        .map(|&v| {
            i64::try_from(v)
                .map_err(|_| Error::Malformed(format!("residue {v} outside {}-bit range", spec.k)))
        })
        .collect::<Result<Vec<_>>>()?;
    FixedPointMatrix::from_mantissas(spec, z.rows(), z.cols(), mantissas)
}

/// `2^(-2l) Z_bar` rounded to `f64`.
pub fn decode_2l(z: &ZqMatrix, spec: FixedPointSpec) -> RealMatrix {
    let scale = (-2.0 * spec.l as f64).exp2();
    RealMatrix {
        rows: z.rows(),
        cols: z.cols(),
        data: z.as_slice().iter().map(|&v| v as f64 * scale).collect(),
    }
}

/// `2^(-2l) Z_bar` as exact rationals.
pub fn decode_2l_exact(z: &ZqMatrix, spec: FixedPointSpec) -> Vec<BigRational> {
    let den = BigInt::from(1) << (2 * spec.l);
    z.as_slice()
        .iter()
        .map(|&v| BigRational::new(BigInt::from(v), den.clone()))
        .collect()
}
