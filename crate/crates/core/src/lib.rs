//! One-round two-party fixed-point matrix multiplication built from LWE
//! ciphertexts, SIS commitments and additive secret sharing, with the
//! parameter bounds that keep the result within a target precision and an
//! encrypted state-feedback control loop on top.

pub mod control;
pub mod error;
pub mod fixedpoint;
pub mod lattice;
pub mod params;
pub mod protocol;
pub mod ring;
pub mod sampling;
pub mod secretshare;
pub mod transport;

pub use error::{Error, Result};
pub use fixedpoint::{FixedPointMatrix, FixedPointSpec, RealMatrix};
pub use params::{Dims, ProtocolParams};
pub use protocol::{Crs, OfflineMaterial};
pub use ring::{Modulus, ZqMatrix};
pub use sampling::{RngStream, Seed, StreamId};
pub use secretshare::SharePair;
