use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lattice::{streamed_mul, DEFAULT_BLOCK_WIDTH};
use crate::params::ProtocolParams;
use crate::ring::ZqMatrix;
use crate::sampling::{sample_z3, RngStream, Seed, StreamId, StreamObject, StreamPhase};

use super::{Crs, Message, MsgType, OfflineMaterial, PartyId, Payload};

struct Setup {
    params: ProtocolParams,
    crs: Arc<Crs>,
    with_reference: bool,
}

/// Everything a party keeps between its two online phases.
struct Pending {
    step: u64,
    y: ZqMatrix,
    v: Option<ZqMatrix>,
    r: ZqMatrix,
    h: ZqMatrix,
}

/// One computing party. It only ever holds its own part of `[[S]]`,
/// `[[Y_bar]]`, `[[R]]` and `[[Z_bar]]`; the only cross-party value it sees
/// is the peer's part of `[[H]]`.
pub struct Party {
    id: PartyId,
    session: u64,
    seed: Seed,
    block_width: usize,
    setup: Option<Setup>,
    offline: Option<OfflineMaterial>,
    last_step: Option<u64>,
    pending: Option<Pending>,
}

impl Party {
    pub fn new(id: PartyId, session: u64, seed: Seed) -> Self {
        Self {
            id,
            session,
            seed,
            block_width: DEFAULT_BLOCK_WIDTH,
            setup: None,
            offline: None,
            last_step: None,
            pending: None,
        }
    }

    pub fn with_block_width(mut self, width: usize) -> Self {
        self.block_width = width.max(1);
        self
    }

    pub fn id(&self) -> PartyId {
        self.id
    }

    pub fn session(&self) -> u64 {
        self.session
    }

    /// Whether online steps carry an operator share (known after setup).
    pub fn with_reference(&self) -> bool {
        self.setup.as_ref().is_some_and(|s| s.with_reference)
    }

    fn check(&self, msg: &Message, expected: MsgType) -> Result<()> {
        if msg.session != self.session {
            return Err(Error::SessionMismatch {
                expected: self.session,
                got: msg.session,
            });
        }
        if msg.msg_type() != expected {
            return Err(Error::Protocol(format!(
                "party {:?} expected {expected:?}, got {:?}",
                self.id,
                msg.msg_type()
            )));
        }
        Ok(())
    }

    fn setup(&self) -> Result<&Setup> {
        self.setup
            .as_ref()
            .ok_or_else(|| Error::Protocol("no setup received".into()))
    }

    pub fn handle_setup(&mut self, msg: &Message) -> Result<()> {
        self.check(msg, MsgType::Setup)?;
        let Payload::Setup(info) = &msg.payload else {
            unreachable!()
        };
        if self.setup.is_some() {
            return Err(Error::Protocol("setup received twice".into()));
        }
        let params = info.params.validated()?;
        self.setup = Some(Setup {
            params,
            crs: Arc::new(Crs::derive(info.crs_seed, &params)),
            with_reference: info.with_reference,
        });
        Ok(())
    }

    /// Like [`Party::handle_setup`] but reuses an already expanded `crs`.
    pub fn handle_setup_shared(&mut self, msg: &Message, crs: Arc<Crs>) -> Result<()> {
        self.check(msg, MsgType::Setup)?;
        let Payload::Setup(info) = &msg.payload else {
            unreachable!()
        };
        if crs.seed() != info.crs_seed {
            return Err(Error::Protocol(
                "shared crs does not match the setup seed".into(),
            ));
        }
        if self.setup.is_some() {
            return Err(Error::Protocol("setup received twice".into()));
        }
        self.setup = Some(Setup {
            params: info.params.validated()?,
            crs,
            with_reference: info.with_reference,
        });
        Ok(())
    }

    pub fn handle_offline(&mut self, msg: &Message) -> Result<()> {
        self.check(msg, MsgType::Offline)?;
        let Payload::Offline(material) = &msg.payload else {
            unreachable!()
        };
        let p = self.setup()?.params;
        let (n, t, d) = (p.lwe.n, p.sis.t, p.dims);
        for (what, got, want) in [
            ("offline C", material.c.shape(), (d.d2, d.d1)),
            ("offline C'", material.c_prime.shape(), (t, d.d1)),
            ("offline S share", material.s_share.shape(), (n, d.d1)),
        ] {
            if got != want {
                return Err(Error::DimensionMismatch {
                    op: what,
                    left: got,
                    right: want,
                });
            }
        }
        if self.offline.is_some() {
            return Err(Error::Protocol("offline material received twice".into()));
        }
        self.offline = Some(material.clone());
        Ok(())
    }

    fn sample_r(&self, step: u64) -> Result<ZqMatrix> {
        let p = self.setup()?.params;
        let index = u32::try_from(step)
            .map_err(|_| Error::Protocol(format!("step {step} exceeds the 32-bit stream index")))?;
        let mut rng = RngStream::new(
            self.seed,
            StreamId::new(
                self.id.stream_role(),
                StreamPhase::Online,
                StreamObject::ShortR,
                index,
            ),
        );
        Ok(sample_z3(&mut rng, p.sis.t, p.dims.d3, p.modulus()))
    }

    /// First online phase: samples `[[R]]_i` and returns `[[H]]_i = A [[Y_bar]]_i + B [[R]]_i`
    /// for the peer.
    pub fn phase1(&mut self, y: &Message, v: Option<&Message>) -> Result<Message> {
        self.check(y, MsgType::YShare)?;
        let r = self.sample_r(y.step)?;
        self.phase1_inner(y, v, r)
    }

    /// [`Party::phase1`] with a caller-chosen `[[R]]_i`.
    #[cfg(any(test, feature = "test-hooks"))]
    pub fn phase1_with_r(
        &mut self,
        y: &Message,
        v: Option<&Message>,
        r: ZqMatrix,
    ) -> Result<Message> {
        self.check(y, MsgType::YShare)?;
        self.phase1_inner(y, v, r)
    }

    fn phase1_inner(&mut self, y: &Message, v: Option<&Message>, r: ZqMatrix) -> Result<Message> {
        let setup = self.setup()?;
        let p = setup.params;
        let d = p.dims;
        if self.offline.is_none() {
            return Err(Error::Protocol(
                "online phase before offline material".into(),
            ));
        }
        if self.pending.is_some() {
            return Err(Error::Protocol(
                "previous step still waiting for the peer".into(),
            ));
        }
        let step = y.step;
        if self.last_step.is_some_and(|last| step <= last) {
            return Err(Error::Protocol(format!(
                "step {step} replayed or out of order"
            )));
        }
        let Payload::YShare(y_share) = &y.payload else {
            unreachable!()
        };
        if y_share.shape() != (d.d2, d.d3) {
            return Err(Error::DimensionMismatch {
                op: "Y share",
                left: y_share.shape(),
                right: (d.d2, d.d3),
            });
        }
        if r.shape() != (p.sis.t, d.d3) {
            return Err(Error::DimensionMismatch {
                op: "R share",
                left: r.shape(),
                right: (p.sis.t, d.d3),
            });
        }
        let v_share = match (setup.with_reference, v) {
            (true, Some(v)) => {
                self.check(v, MsgType::VShare)?;
                if v.step != step {
                    return Err(Error::Protocol(format!(
                        "reference share for step {} at step {step}",
                        v.step
                    )));
                }
                let Payload::VShare(m) = &v.payload else {
                    unreachable!()
                };
                if m.shape() != (d.d1, d.d3) {
                    return Err(Error::DimensionMismatch {
                        op: "V share",
                        left: m.shape(),
                        right: (d.d1, d.d3),
                    });
                }
                Some(m.clone())
            }
            (false, None) => None,
            (true, None) => return Err(Error::Protocol("missing reference share".into())),
            (false, Some(_)) => return Err(Error::Protocol("unexpected reference share".into())),
        };
        let h = setup.crs.a().matmul(y_share)?.checked_add(&streamed_mul(
            setup.crs.b(),
            &r,
            self.block_width,
        )?)?;
        self.pending = Some(Pending {
            step,
            y: y_share.clone(),
            v: v_share,
            r,
            h: h.clone(),
        });
        self.last_step = Some(step);
        Ok(Message::new(self.session, step, Payload::HShare(h)))
    }

    /// Second online phase: reconstructs `H` from both parts and returns
    /// `[[Z_bar]]_i = C^T [[Y_bar]]_i + C'^T [[R]]_i - [[S]]_i^T H (+ [[v_bar]]_i)`.
    pub fn phase2(&mut self, other: &Message) -> Result<Message> {
        self.check(other, MsgType::HShare)?;
        let pending = self
            .pending
            .as_ref()
            .ok_or_else(|| Error::Protocol("peer commitment before own first phase".into()))?;
        if other.step != pending.step {
            return Err(Error::Protocol(format!(
                "peer commitment for step {} while at step {}",
                other.step, pending.step
            )));
        }
        let Payload::HShare(peer_h) = &other.payload else {
            unreachable!()
        };
        if peer_h.shape() != pending.h.shape() {
            return Err(Error::DimensionMismatch {
                op: "H share",
                left: peer_h.shape(),
                right: pending.h.shape(),
            });
        }
        let off = self.offline.as_ref().expect("checked in phase1");
        let h = pending.h.checked_add(peer_h)?;
        let mut z = off
            .c
            .transpose()
            .matmul(&pending.y)?
            .checked_add(&off.c_prime.transpose().matmul(&pending.r)?)?
            .checked_sub(&off.s_share.transpose().matmul(&h)?)?;
        if let Some(v) = &pending.v {
            z = z.checked_add(v)?;
        }
        let step = pending.step;
        self.pending = None;
        Ok(Message::new(self.session, step, Payload::ZShare(z)))
    }

    /// This party's `[[R]]_i` for `step`, regenerated from its stream.
    #[cfg(any(test, feature = "test-hooks"))]
    pub fn r_share(&self, step: u64) -> Result<ZqMatrix> {
        self.sample_r(step)
    }
}

impl std::fmt::Debug for Party {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Party")
            .field("id", &self.id)
            .field("session", &self.session)
            .field("last_step", &self.last_step)
            .finish_non_exhaustive()
    }
}
