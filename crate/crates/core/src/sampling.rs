//! Seeded randomness for every sampling step of the protocol.
//!
//! An [`RngStream`] is the AES-256 keystream in counter mode, keyed by a
//! 32-byte [`Seed`] and started at block `stream_id << 64`. Streams with
//! distinct ids never overlap (each owns 2^64 blocks) and the output is
//! byte-identical on every platform.
//!
//! Stream ids are laid out as `role:8 | phase:8 | object:16 | index:32`,
//! see [`StreamId::new`].

use std::fmt;

use aes::cipher::{KeyIvInit, StreamCipher, StreamCipherSeek};
use rand::{CryptoRng, RngCore};

use crate::error::{Error, Result};
use crate::ring::{Modulus, ZqMatrix};

type Aes256Ctr = ctr::Ctr128BE<aes::Aes256>;

const BUF_LEN: usize = 1024;

/// 256-bit seed, written as 64 hex characters.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Seed(pub [u8; 32]);

impl Seed {
    pub fn from_hex(s: &str) -> Result<Self> {
        let bytes = hex::decode(s.trim()).map_err(|e| Error::InvalidSeed(e.to_string()))?;
        let arr: [u8; 32] = bytes.try_into().map_err(|b: Vec<u8>| {
            Error::InvalidSeed(format!("expected 32 bytes, got {}", b.len()))
        })?;
        Ok(Self(arr))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Seed with the given value in its first eight bytes. Handy for tests.
    pub fn from_u64(x: u64) -> Self {
        let mut s = [0u8; 32];
        s[..8].copy_from_slice(&x.to_le_bytes());
        Self(s)
    }

    /// Derives an independent child seed by drawing 32 bytes from `stream`.
    pub fn derive(&self, stream: StreamId) -> Seed {
        let mut out = [0u8; 32];
        RngStream::new(*self, stream).fill_bytes(&mut out);
        Seed(out)
    }
}

impl fmt::Debug for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Seed({})", self.to_hex())
    }
}

/// Who draws from a stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum StreamRole {
    Setup = 1,
    Client = 2,
    Operator = 3,
    Party0 = 4,
    Party1 = 5,
    Test = 0xff,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum StreamPhase {
    Setup = 1,
    Offline = 2,
    Online = 3,
    Misc = 0xff,
}

/// What a stream is used for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum StreamObject {
    SeedDerivation = 0,
    CrsA = 1,
    CrsB = 2,
    SecretS = 3,
    ErrorE = 4,
    ErrorEPrime = 5,
    ShareMask = 6,
    ShortR = 7,
    Generic = 0xffff,
}

/// 64-bit domain-separation tag of a stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamId(pub u64);

impl StreamId {
    pub fn new(role: StreamRole, phase: StreamPhase, object: StreamObject, index: u32) -> Self {
        Self((role as u64) << 56 | (phase as u64) << 48 | (object as u64) << 32 | index as u64)
    }
}

/// Deterministic cryptographically strong byte stream.
pub struct RngStream {
    seed: Seed,
    stream_id: StreamId,
    cipher: Aes256Ctr,
    buf: [u8; BUF_LEN],
    pos: usize,
    /// Keystream bytes generated into `buf` so far.
    generated: u64,
}

impl RngStream {
    pub fn new(seed: Seed, stream_id: StreamId) -> Self {
        let mut iv = [0u8; 16];
        iv[..8].copy_from_slice(&stream_id.0.to_be_bytes());
        Self {
            seed,
            stream_id,
            cipher: Aes256Ctr::new(&seed.0.into(), &iv.into()),
            buf: [0; BUF_LEN],
            pos: BUF_LEN,
            generated: 0,
        }
    }

    pub fn seed(&self) -> Seed {
        self.seed
    }

    pub fn stream_id(&self) -> StreamId {
        self.stream_id
    }

    /// Number of bytes consumed from the stream.
    pub fn position(&self) -> u64 {
        self.generated - (BUF_LEN - self.pos) as u64
    }

    /// Moves to an absolute byte offset.
    pub fn seek(&mut self, byte_offset: u64) {
        self.cipher.seek(byte_offset);
        self.generated = byte_offset;
        self.pos = BUF_LEN;
    }

    fn refill(&mut self) {
        self.buf = [0; BUF_LEN];
        self.cipher.apply_keystream(&mut self.buf);
        self.generated += BUF_LEN as u64;
        self.pos = 0;
    }

    #[inline]
    fn take<const N: usize>(&mut self) -> [u8; N] {
        if self.pos + N > BUF_LEN {
            let mut out = [0u8; N];
            self.fill_bytes(&mut out);
            return out;
        }
        let out: [u8; N] = self.buf[self.pos..self.pos + N].try_into().unwrap();
        self.pos += N;
        out
    }

    #[inline]
    pub fn next_u128(&mut self) -> u128 {
        u128::from_le_bytes(self.take::<16>())
    }

    /// Uniform element of `{-1, 0, 1}` by rejection on single bytes.
    #[inline]
    pub fn next_ternary(&mut self) -> i8 {
        loop {
            let [b] = self.take::<1>();
            if b < 255 {
                return (b % 3) as i8 - 1;
            }
        }
    }

    /// Writes raw keystream words, bypassing the internal buffer.
    ///
    /// Only valid at a buffer boundary; used by the column expander which
    /// seeks before every call.
    pub fn fill_words(&mut self, out: &mut [u128]) {
        debug_assert_eq!(self.pos, BUF_LEN);
        let mut chunk = [0u8; BUF_LEN];
        for words in out.chunks_mut(BUF_LEN / 16) {
            let bytes = &mut chunk[..words.len() * 16];
            bytes.fill(0);
            self.cipher.apply_keystream(bytes);
            for (w, b) in words.iter_mut().zip(bytes.chunks_exact(16)) {
                *w = u128::from_le_bytes(b.try_into().unwrap());
            }
            self.generated += bytes.len() as u64;
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take::<4>())
    }

    fn next_u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take::<8>())
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        let mut written = 0;
        while written < dest.len() {
            if self.pos == BUF_LEN {
                self.refill();
            }
            let n = (BUF_LEN - self.pos).min(dest.len() - written);
            dest[written..written + n].copy_from_slice(&self.buf[self.pos..self.pos + n]);
            self.pos += n;
            written += n;
        }
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}

impl CryptoRng for RngStream {}

/// Width and bound of the truncated discrete Gaussian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianSpec {
    pub sigma: f64,
    pub bound: u32,
}

impl GaussianSpec {
    /// Width used throughout: `sigma = 3.2`, bound 32.
    pub const DEFAULT_SIGMA: f64 = 3.2;

    /// Bound `ceil(10 * sigma)`.
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Infeasible(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        Self::with_bound(sigma, (10.0 * sigma).ceil() as u32)
    }

    pub fn with_bound(sigma: f64, bound: u32) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Infeasible(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        Ok(Self { sigma, bound })
    }

    pub fn paper_default() -> Self {
        Self::new(Self::DEFAULT_SIGMA).expect("default sigma is valid")
    }
}

/// Inverse-CDF sampler over `[-bound, bound]` with weights
/// `exp(-pi x^2 / sigma^2)`.
#[derive(Clone, Debug)]
pub struct GaussianTable {
    bound: u32,
    /// `thresholds[i] = floor(2^64 * P(X <= i - bound))`, last entry `2^64`.
    thresholds: Vec<u128>,
}

impl GaussianTable {
    pub fn new(spec: GaussianSpec) -> Self {
        let b = spec.bound as i64;
        let weights: Vec<f64> = (-b..=b)
            .map(|x| (-std::f64::consts::PI * (x * x) as f64 / (spec.sigma * spec.sigma)).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        let scale = 2f64.powi(64);
        let mut acc = 0.0;
        let mut thresholds: Vec<u128> = weights
            .iter()
            .map(|w| {
                acc += w / total;
                ((acc * scale) as u128).min(1u128 << 64)
            })
            .collect();
        *thresholds.last_mut().unwrap() = 1u128 << 64;
        Self {
            bound: spec.bound,
            thresholds,
        }
    }

    pub fn bound(&self) -> u32 {
        self.bound
    }

    #[inline]
    pub fn sample(&self, rng: &mut RngStream) -> i64 {
        let u = rng.next_u64() as u128;
        let idx = self.thresholds.partition_point(|&t| t <= u);
        idx as i64 - self.bound as i64
    }
}

/// Uniform matrix over the centered interval of `Z_q`.
pub fn sample_uniform_zq(rng: &mut RngStream, rows: usize, cols: usize, m: Modulus) -> ZqMatrix {
    ZqMatrix::from_fn(rows, cols, m, |_, _| m.reduce_wrapping(rng.next_u128()))
}

/// Matrix of independent truncated discrete Gaussian samples, embedded in `Z_q`.
pub fn sample_gaussian(
    rng: &mut RngStream,
    rows: usize,
    cols: usize,
    spec: GaussianSpec,
    m: Modulus,
) -> ZqMatrix {
    let table = GaussianTable::new(spec);
    ZqMatrix::from_fn(rows, cols, m, |_, _| table.sample(rng) as i128)
}

/// Matrix with entries uniform over `Z_3 = {-1, 0, 1}`, embedded in `Z_q`.
pub fn sample_z3(rng: &mut RngStream, rows: usize, cols: usize, m: Modulus) -> ZqMatrix {
    ZqMatrix::from_fn(rows, cols, m, |_, _| rng.next_ternary() as i128)
}
