//! Two-party additive secret sharing over `Z_q`.
//!
//! All share operations are componentwise: part 0 only ever meets part 0,
//! so each party can apply them to its own part without interaction.

use crate::error::{Error, Result};
use crate::ring::ZqMatrix;
use crate::sampling::{sample_uniform_zq, RngStream};

/// Both parts of an additive sharing `(X_0, X_1)` with `X = X_0 + X_1 mod q`.
///
/// Protocol roles only ever hold one part; bundling both is for the
/// dealer and for tests.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SharePair {
    part0: ZqMatrix,
    part1: ZqMatrix,
}

impl SharePair {
    /// Assembles a sharing from independently produced parts.
    ///
    /// This is the constructor for distributed shares such as the short
    /// randomness `R`, where each party samples its own part and no one
    /// ever runs [`share`] on the secret.
    pub fn from_parts(part0: ZqMatrix, part1: ZqMatrix) -> Result<Self> {
        if part0.modulus() != part1.modulus() {
            return Err(Error::ModulusMismatch(
                part0.modulus().bits(),
                part1.modulus().bits(),
            ));
        }
        if part0.shape() != part1.shape() {
            return Err(Error::DimensionMismatch {
                op: "share",
                left: part0.shape(),
                right: part1.shape(),
            });
        }
        Ok(Self { part0, part1 })
    }

    pub fn part(&self, index: usize) -> &ZqMatrix {
        match index {
            0 => &self.part0,
            1 => &self.part1,
            _ => panic!("share index {index} out of range"),
        }
    }

    pub fn into_parts(self) -> (ZqMatrix, ZqMatrix) {
        (self.part0, self.part1)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.part0.shape()
    }

    fn map(&self, f: impl Fn(&ZqMatrix) -> Result<ZqMatrix>) -> Result<Self> {
        Ok(Self {
            part0: f(&self.part0)?,
            part1: f(&self.part1)?,
        })
    }

    fn zip(
        &self,
        other: &Self,
        f: impl Fn(&ZqMatrix, &ZqMatrix) -> Result<ZqMatrix>,
    ) -> Result<Self> {
        Ok(Self {
            part0: f(&self.part0, &other.part0)?,
            part1: f(&self.part1, &other.part1)?,
        })
    }
}

/// Splits `x` into a uniform mask and `x - mask`.
pub fn share(x: &ZqMatrix, rng: &mut RngStream) -> SharePair {
    let mask = sample_uniform_zq(rng, x.rows(), x.cols(), x.modulus());
    share_with_mask(x, mask).expect("mask sampled with matching shape")
}

/// Deterministic sharing with a caller-chosen first part.
pub fn share_with_mask(x: &ZqMatrix, mask: ZqMatrix) -> Result<SharePair> {
    let rest = x.checked_sub(&mask)?;
    Ok(SharePair {
        part0: mask,
        part1: rest,
    })
}

pub fn reconst(s: &SharePair) -> ZqMatrix {
    s.part0
        .checked_add(&s.part1)
        .expect("share parts agree by construction")
}

pub fn share_add(a: &SharePair, b: &SharePair) -> Result<SharePair> {
    a.zip(b, ZqMatrix::checked_add)
}

pub fn share_sub(a: &SharePair, b: &SharePair) -> Result<SharePair> {
    a.zip(b, ZqMatrix::checked_sub)
}

/// `X [[Y]]` for public `X`.
pub fn share_mul_left(x: &ZqMatrix, s: &SharePair) -> Result<SharePair> {
    s.map(|p| x.matmul(p))
}

/// `[[X]] Y` for public `Y`.
pub fn share_mul_right(s: &SharePair, y: &ZqMatrix) -> Result<SharePair> {
    s.map(|p| p.matmul(y))
}

pub fn share_transpose(s: &SharePair) -> SharePair {
    SharePair {
        part0: s.part0.transpose(),
        part1: s.part1.transpose(),
    }
}
