//! LWE matrix encryption and SIS matrix commitment.
//!
//! Noise and commitment randomness are explicit arguments; callers sample
//! them. The very wide commitment matrix `B` can be supplied as any
//! [`ColumnSource`], which lets it be generated column by column instead of
//! being held in memory.

use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ring::{Modulus, ZqMatrix};

/// Default number of columns of a streamed matrix handled per work item.
pub const DEFAULT_BLOCK_WIDTH: usize = 4096;

/// LWE parameters `(n, q, sigma)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LweParams {
    pub n: usize,
    pub modulus: Modulus,
    pub sigma: f64,
}

impl LweParams {
    pub fn new(n: usize, modulus: Modulus, sigma: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Infeasible("LWE dimension must be at least 1".into()));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Infeasible(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        Ok(Self { n, modulus, sigma })
    }
}

/// SIS width `t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SisParams {
    pub t: usize,
}

impl SisParams {
    pub fn new(t: usize) -> Result<Self> {
        if t == 0 {
            return Err(Error::Infeasible("SIS width must be at least 1".into()));
        }
        Ok(Self { t })
    }
}

/// A matrix readable one column at a time.
///
/// Columns are delivered as raw 128-bit words congruent to the entries
/// modulo `q`; consumers accumulate with wrapping arithmetic and reduce once.
pub trait ColumnSource: Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn modulus(&self) -> Modulus;

    /// Calls `visit(j, column_j)` for every `j` in `cols` with `wanted(j)`,
    /// in increasing order.
    fn visit_columns(
        &self,
        cols: Range<usize>,
        wanted: &dyn Fn(usize) -> bool,
        visit: &mut dyn FnMut(usize, &[u128]),
    );
}

impl ColumnSource for ZqMatrix {
    fn rows(&self) -> usize {
        ZqMatrix::rows(self)
    }

    fn cols(&self) -> usize {
        ZqMatrix::cols(self)
    }

    fn modulus(&self) -> Modulus {
        ZqMatrix::modulus(self)
    }

    fn visit_columns(
        &self,
        cols: Range<usize>,
        wanted: &dyn Fn(usize) -> bool,
        visit: &mut dyn FnMut(usize, &[u128]),
    ) {
        let mut column = vec![0u128; self.rows()];
        for j in cols.filter(|&j| wanted(j)) {
            for (i, slot) in column.iter_mut().enumerate() {
                *slot = self.get(i, j) as u128;
            }
            visit(j, &column);
        }
    }
}

fn check_modulus(a: Modulus, b: Modulus) -> Result<()> {
    if a != b {
        return Err(Error::ModulusMismatch(a.bits(), b.bits()));
    }
    Ok(())
}

fn check_rows(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Result<()> {
    if left.0 != right.0 {
        return Err(Error::DimensionMismatch { op, left, right });
    }
    Ok(())
}

fn block_ranges(total: usize, width: usize) -> Vec<Range<usize>> {
    let width = width.max(1);
    (0..total)
        .step_by(width)
        .map(|s| s..(s + width).min(total))
        .collect()
}

/// `B R` for a streamed `B` (`n x t`) and dense `R` (`t x c`).
///
/// Columns of `B` whose row of `R` is entirely zero are never generated.
/// Blocks are summed with wrapping addition, so the result is identical for
/// any thread count or block width.
pub fn streamed_mul<S: ColumnSource + ?Sized>(
    b: &S,
    r: &ZqMatrix,
    block_width: usize,
) -> Result<ZqMatrix> {
    check_modulus(b.modulus(), r.modulus())?;
    if b.cols() != r.rows() {
        return Err(Error::DimensionMismatch {
            op: "streamed_mul",
            left: (b.rows(), b.cols()),
            right: r.shape(),
        });
    }
    let (n, c) = (b.rows(), r.cols());
    let nonzero = |j: usize| r.row(j).iter().any(|&x| x != 0);
    let acc = block_ranges(b.cols(), block_width)
        .into_par_iter()
        .map(|range| {
            let mut acc = vec![0u128; n * c];
            b.visit_columns(range, &nonzero, &mut |j, column| {
                for (k, &coef) in r.row(j).iter().enumerate() {
                    match coef {
                        0 => {}
                        1 => {
                            for (i, &x) in column.iter().enumerate() {
                                acc[i * c + k] = acc[i * c + k].wrapping_add(x);
                            }
                        }
                        -1 => {
                            for (i, &x) in column.iter().enumerate() {
                                acc[i * c + k] = acc[i * c + k].wrapping_sub(x);
                            }
                        }
                        _ => {
                            let coef = coef as u128;
                            for (i, &x) in column.iter().enumerate() {
                                acc[i * c + k] = acc[i * c + k].wrapping_add(x.wrapping_mul(coef));
                            }
                        }
                    }
                }
            });
            acc
        })
        .reduce(
            || vec![0u128; n * c],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x = x.wrapping_add(y);
                }
                a
            },
        );
    Ok(ZqMatrix::from_wrapping(n, c, b.modulus(), &acc))
}

/// `B^T S` for a streamed `B` (`n x t`) and dense `S` (`n x c`).
pub fn streamed_transpose_mul<S: ColumnSource + ?Sized>(
    b: &S,
    s: &ZqMatrix,
    block_width: usize,
) -> Result<ZqMatrix> {
    check_modulus(b.modulus(), s.modulus())?;
    check_rows("streamed_transpose_mul", (b.rows(), b.cols()), s.shape())?;
    let (t, c) = (b.cols(), s.cols());
    let width = block_width.max(1);
    let mut out = vec![0u128; t * c];
    let s_words: Vec<u128> = s.as_slice().iter().map(|&x| x as u128).collect();
    out.par_chunks_mut(width * c.max(1))
        .enumerate()
        .for_each(|(blk, chunk)| {
            if c == 0 {
                return;
            }
            let start = blk * width;
            let end = (start + width).min(t);
            b.visit_columns(start..end, &|_| true, &mut |j, column| {
                let row = &mut chunk[(j - start) * c..(j - start + 1) * c];
                for (i, &x) in column.iter().enumerate() {
                    let srow = &s_words[i * c..(i + 1) * c];
                    for (o, &sv) in row.iter_mut().zip(srow) {
                        *o = o.wrapping_add(x.wrapping_mul(sv));
                    }
                }
            });
        });
    Ok(ZqMatrix::from_wrapping(t, c, b.modulus(), &out))
}

/// LWE encryption of the columns of `m`: `A^T S + M + E mod q`.
///
/// `a` is `n x d`, `s` is `n x c`, `m` and `e` are `d x c`.
pub fn lwe_encrypt(a: &ZqMatrix, s: &ZqMatrix, m: &ZqMatrix, e: &ZqMatrix) -> Result<ZqMatrix> {
    check_rows("lwe_encrypt", a.shape(), s.shape())?;
    a.transpose().matmul(s)?.checked_add(m)?.checked_add(e)
}

/// LWE encryption of zero under a streamed key matrix: `B^T S + E mod q`.
pub fn lwe_encrypt_zero_streamed<S: ColumnSource + ?Sized>(
    b: &S,
    s: &ZqMatrix,
    e: &ZqMatrix,
    block_width: usize,
) -> Result<ZqMatrix> {
    streamed_transpose_mul(b, s, block_width)?.checked_add(e)
}

/// SIS commitment to the columns of `m` with randomness `r`: `A M + B R mod q`.
///
/// `a` is `n x d`, `m` is `d x c`, `b` is `n x t`, `r` is `t x c`.
pub fn sis_commit(a: &ZqMatrix, b: &ZqMatrix, m: &ZqMatrix, r: &ZqMatrix) -> Result<ZqMatrix> {
    check_rows("sis_commit", a.shape(), b.shape())?;
    a.matmul(m)?.checked_add(&b.matmul(r)?)
}

/// [`sis_commit`] with `B` read column by column.
pub fn sis_commit_streamed<S: ColumnSource + ?Sized>(
    a: &ZqMatrix,
    b: &S,
    m: &ZqMatrix,
    r: &ZqMatrix,
    block_width: usize,
) -> Result<ZqMatrix> {
    check_rows("sis_commit", a.shape(), (b.rows(), b.cols()))?;
    a.matmul(m)?.checked_add(&streamed_mul(b, r, block_width)?)
}
