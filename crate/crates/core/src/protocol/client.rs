use std::collections::BTreeSet;
use std::sync::Arc;

use num_rational::BigRational;

use crate::error::{Error, Result};
use crate::fixedpoint::{
    decode_2l, decode_2l_exact, encode_l, FixedPointMatrix, FixedPointSpec, RealMatrix,
};
use crate::lattice::{lwe_encrypt, lwe_encrypt_zero_streamed, DEFAULT_BLOCK_WIDTH};
use crate::params::ProtocolParams;
use crate::ring::ZqMatrix;
use crate::sampling::{
    sample_gaussian, GaussianSpec, RngStream, Seed, StreamId, StreamObject, StreamPhase, StreamRole,
};
use crate::secretshare::{reconst, share, SharePair};

#[cfg(any(test, feature = "test-hooks"))]
use super::OfflineSecrets;
use super::{Crs, Message, OfflineMaterial, Payload, SessionSeeds, SetupInfo};

/// The data owner: holds `X` and every `Y`, and is the only role that sees
/// reconstructed products.
#[derive(Debug)]
pub struct Client {
    params: ProtocolParams,
    fp: FixedPointSpec,
    gaussian: GaussianSpec,
    session: u64,
    seeds: SessionSeeds,
    block_width: usize,
    crs: Option<Arc<Crs>>,
    offline_done: bool,
    pending: BTreeSet<u64>,
    finished: BTreeSet<u64>,
}

/// Reconstructed `Z_bar` of one online step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OnlineOutput {
    pub step: u64,
    pub z_bar: ZqMatrix,
    pub fp: FixedPointSpec,
}

impl OnlineOutput {
    /// `2^(-2l) Z_bar` in double precision.
    pub fn to_real(&self) -> RealMatrix {
        decode_2l(&self.z_bar, self.fp)
    }

    /// `2^(-2l) Z_bar` exactly, row-major.
    pub fn to_exact(&self) -> Vec<BigRational> {
        decode_2l_exact(&self.z_bar, self.fp)
    }
}

fn client_stream(object: StreamObject, phase: StreamPhase, index: u32) -> StreamId {
    StreamId::new(StreamRole::Client, phase, object, index)
}

fn step_index(step: u64) -> Result<u32> {
    u32::try_from(step)
        .map_err(|_| Error::Protocol(format!("step {step} exceeds the 32-bit stream index")))
}

impl Client {
    pub fn new(params: ProtocolParams, session: u64, seeds: SessionSeeds) -> Result<Self> {
        let params = params.validated()?;
        Ok(Self {
            fp: params.fp()?,
            gaussian: params.gaussian()?,
            params,
            session,
            seeds,
            block_width: DEFAULT_BLOCK_WIDTH,
            crs: None,
            offline_done: false,
            pending: BTreeSet::new(),
            finished: BTreeSet::new(),
        })
    }

    pub fn with_block_width(mut self, width: usize) -> Self {
        self.block_width = width.max(1);
        self
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn session(&self) -> u64 {
        self.session
    }

    pub fn crs(&self) -> Option<&Arc<Crs>> {
        self.crs.as_ref()
    }

    /// Runs `Setup` and returns the message that hands the `crs` seed to
    /// both parties.
    pub fn setup(&mut self, with_reference: bool) -> Result<(Arc<Crs>, Message)> {
        let mut rng = RngStream::new(
            self.seeds.setup,
            StreamId::new(
                StreamRole::Setup,
                StreamPhase::Setup,
                StreamObject::SeedDerivation,
                0,
            ),
        );
        let crs = Arc::new(Crs::setup(&self.params, &mut rng)?);
        self.crs = Some(crs.clone());
        let info = SetupInfo {
            params: self.params,
            crs_seed: crs.seed(),
            with_reference,
        };
        Ok((crs, Message::new(self.session, 0, Payload::Setup(info))))
    }

    fn sample_secrets(&self) -> (ZqMatrix, ZqMatrix, ZqMatrix) {
        let m = self.params.modulus();
        let d = self.params.dims;
        let seed = self.seeds.client;
        let draw = |object, rows, cols| {
            let mut rng = RngStream::new(seed, client_stream(object, StreamPhase::Offline, 0));
            sample_gaussian(&mut rng, rows, cols, self.gaussian, m)
        };
        (
            draw(StreamObject::SecretS, self.params.lwe.n, d.d1),
            draw(StreamObject::ErrorE, d.d2, d.d1),
            draw(StreamObject::ErrorEPrime, self.params.sis.t, d.d1),
        )
    }

    fn offline_inner(
        &mut self,
        x: &FixedPointMatrix,
        s: &ZqMatrix,
        e: &ZqMatrix,
        e_prime: &ZqMatrix,
    ) -> Result<[Message; 2]> {
        let crs = self
            .crs
            .clone()
            .ok_or_else(|| Error::Protocol("offline phase before setup".into()))?;
        let d = self.params.dims;
        if x.shape() != (d.d1, d.d2) {
            return Err(Error::DimensionMismatch {
                op: "offline X",
                left: x.shape(),
                right: (d.d1, d.d2),
            });
        }
        if x.spec() != self.fp {
            return Err(Error::Protocol(
                "X quantized with a different (k, l)".into(),
            ));
        }
        let x_bar = encode_l(x, self.params.modulus())?;
        let c = lwe_encrypt(crs.a(), s, &x_bar.transpose(), e)?;
        let c_prime = lwe_encrypt_zero_streamed(crs.b(), s, e_prime, self.block_width)?;
        let mut rng = RngStream::new(
            self.seeds.client,
            client_stream(StreamObject::ShareMask, StreamPhase::Offline, 0),
        );
        let (s0, s1) = share(s, &mut rng).into_parts();
        self.offline_done = true;
        let msg = |s_share| {
            Message::new(
                self.session,
                0,
                Payload::Offline(OfflineMaterial {
                    c: c.clone(),
                    c_prime: c_prime.clone(),
                    s_share,
                }),
            )
        };
        Ok([msg(s0), msg(s1)])
    }

    /// Runs `Offline` for `X` and returns the material for `P0` and `P1`.
    pub fn offline(&mut self, x: &FixedPointMatrix) -> Result<[Message; 2]> {
        let (s, e, e_prime) = self.sample_secrets();
        self.offline_inner(x, &s, &e, &e_prime)
    }

    /// [`Client::offline`] that also returns the sampled key and noise.
    #[cfg(any(test, feature = "test-hooks"))]
    pub fn offline_exposed(
        &mut self,
        x: &FixedPointMatrix,
    ) -> Result<([Message; 2], OfflineSecrets)> {
        let (s, e, e_prime) = self.sample_secrets();
        let msgs = self.offline_inner(x, &s, &e, &e_prime)?;
        Ok((msgs, OfflineSecrets { s, e, e_prime }))
    }

    /// [`Client::offline`] with caller-chosen key and noise.
    #[cfg(any(test, feature = "test-hooks"))]
    pub fn offline_with(
        &mut self,
        x: &FixedPointMatrix,
        secrets: &OfflineSecrets,
    ) -> Result<[Message; 2]> {
        self.offline_inner(x, &secrets.s, &secrets.e, &secrets.e_prime)
    }

    /// Shares `Y_bar = 2^l Y` for online step `step`.
    pub fn online_begin(&mut self, step: u64, y: &FixedPointMatrix) -> Result<[Message; 2]> {
        if !self.offline_done {
            return Err(Error::Protocol("online phase before offline".into()));
        }
        let d = self.params.dims;
        if y.shape() != (d.d2, d.d3) {
            return Err(Error::DimensionMismatch {
                op: "online Y",
                left: y.shape(),
                right: (d.d2, d.d3),
            });
        }
        if y.spec() != self.fp {
            return Err(Error::Protocol(
                "Y quantized with a different (k, l)".into(),
            ));
        }
        if self.pending.contains(&step) || self.finished.contains(&step) {
            return Err(Error::Protocol(format!("step {step} already started")));
        }
        let y_bar = encode_l(y, self.params.modulus())?;
        let mut rng = RngStream::new(
            self.seeds.client,
            client_stream(
                StreamObject::ShareMask,
                StreamPhase::Online,
                step_index(step)?,
            ),
        );
        let (y0, y1) = share(&y_bar, &mut rng).into_parts();
        self.pending.insert(step);
        Ok([
            Message::new(self.session, step, Payload::YShare(y0)),
            Message::new(self.session, step, Payload::YShare(y1)),
        ])
    }

    /// Reconstructs `Z_bar` from the parties' output shares, `z0` from `P0`.
    pub fn online_finish(&mut self, z0: &Message, z1: &Message) -> Result<OnlineOutput> {
        for z in [z0, z1] {
            if z.session != self.session {
                return Err(Error::SessionMismatch {
                    expected: self.session,
                    got: z.session,
                });
            }
        }
        if z0.step != z1.step {
            return Err(Error::Protocol(format!(
                "output shares for steps {} and {}",
                z0.step, z1.step
            )));
        }
        let step = z0.step;
        if !self.pending.contains(&step) {
            return Err(Error::Protocol(format!("no pending online step {step}")));
        }
        let (Payload::ZShare(a), Payload::ZShare(b)) = (&z0.payload, &z1.payload) else {
            return Err(Error::Protocol("expected two output shares".into()));
        };
        let d = self.params.dims;
        for part in [a, b] {
            if part.shape() != (d.d1, d.d3) {
                return Err(Error::DimensionMismatch {
                    op: "online Z",
                    left: part.shape(),
                    right: (d.d1, d.d3),
                });
            }
        }
        let z_bar = reconst(&SharePair::from_parts(a.clone(), b.clone())?);
        self.pending.remove(&step);
        self.finished.insert(step);
        Ok(OnlineOutput {
            step,
            z_bar,
            fp: self.fp,
        })
    }

    /// Client-side seed, for callers that need to reproduce its streams.
    pub fn seed(&self) -> Seed {
        self.seeds.client
    }
}
