//! Parameter bounds: the overflow bound on the total bit length `k`, the
//! precision bound on the fractional bit length `l`, and the window of
//! admissible `(k, l)` pairs they leave.
//!
//! Real-valued bounds are reported as `f64`. Admissibility of concrete
//! integer `k` and `l` is decided exactly, by clearing the logarithms:
//!
//! * `k < 1/2 log2((q - 128 t) / d2)  <=>  2^(2k) d2 + 128 t < q`
//! * `l > 1/2 [k + 4 + log2((d2 + t) / eps)]  <=>  eps 2^(2l) > (d2 + t) 2^(k+4)`

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;

use crate::error::{Error, Result};
use crate::fixedpoint::FixedPointSpec;
use crate::lattice::{LweParams, SisParams};
use crate::ring::Modulus;
use crate::sampling::GaussianSpec;

/// Smallest total bit length for which the bounds hold.
pub const MIN_K: u32 = 6;

/// Gaussian tail bound the bounds are derived for (`10 * 3.2`, rounded to `2^5`).
pub const NOISE_BOUND: u32 = 32;

/// Matrix dimensions of `X` (`d1 x d2`) and `Y` (`d2 x d3`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dims {
    pub d1: usize,
    pub d2: usize,
    pub d3: usize,
}

impl Dims {
    pub fn new(d1: usize, d2: usize, d3: usize) -> Self {
        Self { d1, d2, d3 }
    }
}

/// Everything public about one protocol instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProtocolParams {
    pub lwe: LweParams,
    pub sis: SisParams,
    pub dims: Dims,
    /// Total bit length `k`.
    pub k: u32,
    /// Fractional bit length `l`.
    pub l: u32,
    pub epsilon: f64,
}

impl ProtocolParams {
    pub fn fp(&self) -> Result<FixedPointSpec> {
        FixedPointSpec::new(self.k, self.l)
    }

    pub fn modulus(&self) -> Modulus {
        self.lwe.modulus
    }

    pub fn gaussian(&self) -> Result<GaussianSpec> {
        GaussianSpec::new(self.lwe.sigma)
    }

    /// Fails with every violated invariant.
    pub fn validated(self) -> Result<Self> {
        let violations = validate(&self);
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidParams(violations))
        }
    }

    /// `(n, q, sigma) = (2^12, 2^108, 3.2)`, `t = 2 n log2 q`, `k = 53`,
    /// `l = 44`, `eps = 2^-10` for a `1 x 2` gain times a `2 x 1` state.
    pub fn paper_sec128() -> Self {
        let modulus = Modulus::new(108).unwrap();
        let n = 1 << 12;
        Self {
            lwe: LweParams::new(n, modulus, GaussianSpec::DEFAULT_SIGMA).unwrap(),
            sis: SisParams::new(standard_t(n, modulus)).unwrap(),
            dims: Dims::new(1, 2, 1),
            k: 53,
            l: 44,
            epsilon: (-10f64).exp2(),
        }
    }

    /// Scaled-down set for routine runs: `n = 512`, `q = 2^64`, `t = 2048`,
    /// with `(k, l)` taken from the feasible window.
    pub fn ci() -> Self {
        Self::from_window(512, 64, 2048, Dims::new(1, 2, 1), (-10f64).exp2())
            .expect("ci preset has a feasible window")
    }

    /// Builds a parameter set using the largest admissible `k` and the
    /// smallest admissible `l` for it.
    pub fn from_window(n: usize, q_bits: u32, t: usize, dims: Dims, epsilon: f64) -> Result<Self> {
        let modulus = Modulus::new(q_bits)?;
        let lwe = LweParams::new(n, modulus, GaussianSpec::DEFAULT_SIGMA)?;
        let window = feasible_window(&lwe, t, dims, epsilon);
        let (k, l) = window.recommended.ok_or_else(|| {
            Error::Infeasible(format!("no (k, l) window for q = 2^{q_bits}, t = {t}"))
        })?;
        Ok(Self {
            lwe,
            sis: SisParams::new(t)?,
            dims,
            k,
            l,
            epsilon,
        })
    }
}

/// `1/2 log2((q - 128 t) / d2)`; `None` when `q <= 128 t`.
pub fn k_upper_bound(m: Modulus, t: usize, d2: usize) -> Option<f64> {
    let slack = (m.q()).checked_sub(128u128.checked_mul(t as u128)?)?;
    if slack == 0 || d2 == 0 {
        return None;
    }
    Some(0.5 * (log2_u128(slack) - (d2 as f64).log2()))
}

/// `1/2 [k + 4 + log2((d2 + t) / eps)]`.
pub fn l_lower_bound(k: f64, d2: usize, t: usize, eps: f64) -> f64 {
    0.5 * (k + 4.0 + ((d2 + t) as f64).log2() - eps.log2())
}

/// The standard SIS width `t = 2 n log2 q`.
pub fn standard_t(n: usize, m: Modulus) -> usize {
    2 * n * m.bits() as usize
}

fn log2_u128(x: u128) -> f64 {
    // keep the top 64 significant bits; the dropped part moves the result
    // by less than 2^-63 relative
    let bits = 128 - x.leading_zeros();
    if bits <= 64 {
        return (x as u64 as f64).log2();
    }
    let shift = bits - 64;
    ((x >> shift) as u64 as f64).log2() + shift as f64
}

/// Exact test of `6 <= k < 1/2 log2((q - 128 t) / d2)`.
pub fn k_admissible(k: u32, m: Modulus, t: usize, d2: usize) -> bool {
    if k < MIN_K {
        return false;
    }
    let lhs = (BigInt::from(d2) << (2 * k as usize)) + BigInt::from(128u32) * BigInt::from(t);
    lhs < BigInt::from(m.q())
}

/// Exact test of `l > 1/2 [k + 4 + log2((d2 + t) / eps)]`.
pub fn l_admissible(l: u32, k: u32, d2: usize, t: usize, eps: f64) -> bool {
    let Some(eps) = BigRational::from_float(eps) else {
        return false;
    };
    if eps <= BigRational::from_integer(0.into()) {
        return false;
    }
    let lhs = eps * BigRational::from_integer(BigInt::from(1) << (2 * l as usize));
    let rhs = BigInt::from(d2 + t) << (k as usize + 4);
    lhs > BigRational::from_integer(rhs)
}

/// The region of admissible `(k, l)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    /// Real upper bound on `k`; `None` when `q <= 128 t`.
    pub k_max: Option<f64>,
    /// Largest admissible integer `k`.
    pub k_int_max: Option<u32>,
    /// `(k, l)` with the largest admissible `k` and the smallest `l` for it.
    pub recommended: Option<(u32, u32)>,
    pub ok: bool,
    d2: usize,
    t: usize,
    epsilon: f64,
}

impl Window {
    /// Real lower bound on `l` at a given `k`.
    pub fn l_min(&self, k: f64) -> f64 {
        l_lower_bound(k, self.d2, self.t, self.epsilon)
    }

    /// `l_min` at the upper edge `k_max`.
    pub fn l_min_at_edge(&self) -> Option<f64> {
        self.k_max.map(|k| self.l_min(k))
    }

    /// One-decimal rendering, `"l_min < l < k < k_max"`.
    pub fn render(&self) -> String {
        match self.l_min_at_edge() {
            Some(lmin) if self.ok => format!("{lmin:.1} < l < k < {:.1}", self.k_max.unwrap()),
            _ => "empty window".to_string(),
        }
    }
}

/// Evaluates both bounds and searches for integer `(k, l)` inside them.
///
/// Since `l_min` grows at half the rate of `k` and `l < k` is required,
/// the window is nonempty iff it admits a pair at the largest admissible `k`.
pub fn feasible_window(lwe: &LweParams, t: usize, dims: Dims, eps: f64) -> Window {
    let m = lwe.modulus;
    let k_max = k_upper_bound(m, t, dims.d2);
    let k_int_max = (MIN_K..=FixedPointSpec::MAX_K)
        .rev()
        .find(|&k| k_admissible(k, m, t, dims.d2));
    let recommended = k_int_max.and_then(|k| {
        (0..k)
            .find(|&l| l_admissible(l, k, dims.d2, t, eps))
            .map(|l| (k, l))
    });
    Window {
        k_max,
        k_int_max,
        recommended,
        ok: recommended.is_some(),
        d2: dims.d2,
        t,
        epsilon: eps,
    }
}

/// A violated parameter invariant.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    KBelowMin { k: u32 },
    KTooLarge { k: u32, k_max: Option<f64> },
    LNotBelowK { k: u32, l: u32 },
    LTooSmall { l: u32, l_min: f64 },
    ModulusTooSmall { t: usize },
    NoiseBoundTooLarge { bound: u32 },
    NonPositiveEpsilon,
    ZeroDimension,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::KBelowMin { k } => write!(f, "k below 6 (k = {k})"),
            Violation::KTooLarge {
                k,
                k_max: Some(max),
            } => {
                write!(f, "k = {k} not below overflow bound {max:.4}")
            }
            Violation::KTooLarge { k, k_max: None } => {
                write!(f, "k = {k} admits no overflow bound")
            }
            Violation::LNotBelowK { k, l } => write!(f, "ℓ must be < k (ℓ = {l}, k = {k})"),
            Violation::LTooSmall { l, l_min } => {
                write!(f, "ℓ = {l} not above precision bound {l_min:.4}")
            }
            Violation::ModulusTooSmall { t } => write!(f, "q must exceed 128 t = {}", 128 * t),
            Violation::NoiseBoundTooLarge { bound } => {
                write!(f, "Gaussian bound {bound} exceeds {NOISE_BOUND}")
            }
            Violation::NonPositiveEpsilon => write!(f, "epsilon must be positive"),
            Violation::ZeroDimension => write!(f, "matrix dimensions must be positive"),
        }
    }
}

/// Lists every violated invariant; empty means the parameters are usable.
pub fn validate(p: &ProtocolParams) -> Vec<Violation> {
    let mut out = Vec::new();
    let (k, l) = (p.k, p.l);
    let (t, d2) = (p.sis.t, p.dims.d2);
    let m = p.lwe.modulus;

    if p.dims.d1 == 0 || p.dims.d2 == 0 || p.dims.d3 == 0 {
        out.push(Violation::ZeroDimension);
    }
    if !(p.epsilon.is_finite() && p.epsilon > 0.0) {
        out.push(Violation::NonPositiveEpsilon);
    }
    match GaussianSpec::new(p.lwe.sigma) {
        Ok(g) if g.bound > NOISE_BOUND => {
            out.push(Violation::NoiseBoundTooLarge { bound: g.bound })
        }
        _ => {}
    }
    let k_max = k_upper_bound(m, t, d2.max(1));
    if k_max.is_none() {
        out.push(Violation::ModulusTooSmall { t });
    }
    if k < MIN_K {
        out.push(Violation::KBelowMin { k });
    } else if !k_admissible(k, m, t, d2.max(1)) {
        out.push(Violation::KTooLarge { k, k_max });
    }
    if l >= k {
        out.push(Violation::LNotBelowK { k, l });
    }
    if p.epsilon > 0.0 && !l_admissible(l, k, d2, t, p.epsilon) {
        out.push(Violation::LTooSmall {
            l,
            l_min: l_lower_bound(k as f64, d2, t, p.epsilon),
        });
    }
    out
}
