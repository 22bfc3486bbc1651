//! The one-round multiplication protocol as explicit role state machines.
//!
//! * [`Client`] owns `X` and `Y`, runs setup and the offline phase, shares
//!   each `Y` and reconstructs each product.
//! * [`Party`] is one of the two computing parties. It holds the public
//!   `crs`, the ciphertexts `(C, C')` and one part of the key `S`.
//! * [`Operator`] optionally contributes shares of an additive term that the
//!   parties fold into their output shares.
//!
//! Per online step the parties exchange exactly one message each, their
//! parts of the commitment `H`.

mod client;
mod message;
mod operator;
mod party;
pub mod runner;

use std::ops::Range;

pub use client::{Client, OnlineOutput};
pub use message::{Message, MsgType, Payload, Phase, SetupInfo};
pub use operator::Operator;
pub use party::Party;

use crate::error::Result;
use crate::lattice::ColumnSource;
use crate::params::ProtocolParams;
use crate::ring::{Modulus, ZqMatrix};
use crate::sampling::{
    sample_uniform_zq, RngStream, Seed, StreamId, StreamObject, StreamPhase, StreamRole,
};

/// Role index of a computing party.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PartyId {
    P0,
    P1,
}

impl PartyId {
    pub fn index(self) -> usize {
        match self {
            PartyId::P0 => 0,
            PartyId::P1 => 1,
        }
    }

    pub fn other(self) -> Self {
        match self {
            PartyId::P0 => PartyId::P1,
            PartyId::P1 => PartyId::P0,
        }
    }

    fn stream_role(self) -> StreamRole {
        match self {
            PartyId::P0 => StreamRole::Party0,
            PartyId::P1 => StreamRole::Party1,
        }
    }
}

/// Per-role seeds derived from one master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SessionSeeds {
    pub setup: Seed,
    pub client: Seed,
    pub operator: Seed,
    pub party0: Seed,
    pub party1: Seed,
}

impl SessionSeeds {
    pub fn from_master(master: Seed) -> Self {
        let derive = |role| {
            master.derive(StreamId::new(
                role,
                StreamPhase::Misc,
                StreamObject::SeedDerivation,
                0,
            ))
        };
        Self {
            setup: derive(StreamRole::Setup),
            client: derive(StreamRole::Client),
            operator: derive(StreamRole::Operator),
            party0: derive(StreamRole::Party0),
            party1: derive(StreamRole::Party1),
        }
    }

    pub fn party(&self, id: PartyId) -> Seed {
        match id {
            PartyId::P0 => self.party0,
            PartyId::P1 => self.party1,
        }
    }
}

/// The `n x t` commitment matrix, regenerated on demand from a seed.
///
/// Column `j` is the AES-CTR keystream at byte offset `16 n j`, read as
/// little-endian 128-bit words and reduced mod `q`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpandedMatrix {
    seed: Seed,
    stream: StreamId,
    rows: usize,
    cols: usize,
    modulus: Modulus,
}

impl ExpandedMatrix {
    pub fn new(seed: Seed, stream: StreamId, rows: usize, cols: usize, modulus: Modulus) -> Self {
        Self {
            seed,
            stream,
            rows,
            cols,
            modulus,
        }
    }

    /// Materializes the whole matrix. Only sensible for small `t`.
    pub fn to_dense(&self) -> ZqMatrix {
        let mut words = vec![0u128; self.rows * self.cols];
        self.visit_columns(0..self.cols, &|_| true, &mut |j, col| {
            words[j * self.rows..(j + 1) * self.rows].copy_from_slice(col);
        });
        ZqMatrix::from_wrapping(self.cols, self.rows, self.modulus, &words).transpose()
    }
}

impl ColumnSource for ExpandedMatrix {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn modulus(&self) -> Modulus {
        self.modulus
    }

    fn visit_columns(
        &self,
        cols: Range<usize>,
        wanted: &dyn Fn(usize) -> bool,
        visit: &mut dyn FnMut(usize, &[u128]),
    ) {
        let mut rng = RngStream::new(self.seed, self.stream);
        let mut column = vec![0u128; self.rows];
        let column_bytes = 16 * self.rows as u64;
        for j in cols.filter(|&j| wanted(j)) {
            rng.seek(j as u64 * column_bytes);
            rng.fill_words(&mut column);
            visit(j, &column);
        }
    }
}

/// Common reference string: a dense `A` (`n x d2`) and a streamed `B` (`n x t`).
#[derive(Clone, Debug)]
pub struct Crs {
    seed: Seed,
    a: ZqMatrix,
    b: ExpandedMatrix,
}

impl Crs {
    /// Expands `(A, B)` from a seed; every role derives the same matrices.
    pub fn derive(seed: Seed, params: &ProtocolParams) -> Self {
        let m = params.modulus();
        let n = params.lwe.n;
        let mut rng_a = RngStream::new(
            seed,
            StreamId::new(StreamRole::Setup, StreamPhase::Setup, StreamObject::CrsA, 0),
        );
        let a = sample_uniform_zq(&mut rng_a, n, params.dims.d2, m);
        let b = ExpandedMatrix::new(
            seed,
            StreamId::new(StreamRole::Setup, StreamPhase::Setup, StreamObject::CrsB, 0),
            n,
            params.sis.t,
            m,
        );
        Self { seed, a, b }
    }

    /// Draws a fresh seed from `rng` and expands it. Rejects invalid parameters.
    pub fn setup(params: &ProtocolParams, rng: &mut RngStream) -> Result<Self> {
        let params = params.validated()?;
        let mut seed = [0u8; 32];
        rand::RngCore::fill_bytes(rng, &mut seed);
        Ok(Self::derive(Seed(seed), &params))
    }

    pub fn seed(&self) -> Seed {
        self.seed
    }

    pub fn a(&self) -> &ZqMatrix {
        &self.a
    }

    pub fn b(&self) -> &ExpandedMatrix {
        &self.b
    }
}

/// What one party receives from the offline phase: the ciphertexts of `X`
/// and of zero, and its part of the key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OfflineMaterial {
    /// `A^T S + X_bar^T + E`, `d2 x d1`.
    pub c: ZqMatrix,
    /// `B^T S + E'`, `t x d1`.
    pub c_prime: ZqMatrix,
    /// One part of `[[S]]`, `n x d1`.
    pub s_share: ZqMatrix,
}

/// Key and noise of an offline run, for tests that replay the algebra.
#[cfg(any(test, feature = "test-hooks"))]
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OfflineSecrets {
    pub s: ZqMatrix,
    pub e: ZqMatrix,
    pub e_prime: ZqMatrix,
}
