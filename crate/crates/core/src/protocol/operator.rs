use crate::error::{Error, Result};
use crate::fixedpoint::{encode_2l, FixedPointMatrix, FixedPointSpec};
use crate::params::ProtocolParams;
use crate::sampling::{RngStream, Seed, StreamId, StreamObject, StreamPhase, StreamRole};
use crate::secretshare::share;

use super::{Message, Payload};

/// Share producer for the additive term `v_bar = 2^(2l) v`. It never
/// receives anything.
#[derive(Debug)]
pub struct Operator {
    params: ProtocolParams,
    fp: FixedPointSpec,
    session: u64,
    seed: Seed,
}

impl Operator {
    pub fn new(params: ProtocolParams, session: u64, seed: Seed) -> Result<Self> {
        let params = params.validated()?;
        Ok(Self {
            fp: params.fp()?,
            params,
            session,
            seed,
        })
    }

    /// Shares of `2^(2l) v` for `P0` and `P1` at `step`.
    pub fn share_reference(&self, step: u64, v: &FixedPointMatrix) -> Result<[Message; 2]> {
        let d = self.params.dims;
        if v.shape() != (d.d1, d.d3) {
            return Err(Error::DimensionMismatch {
                op: "reference v",
                left: v.shape(),
                right: (d.d1, d.d3),
            });
        }
        if v.spec() != self.fp {
            return Err(Error::Protocol(
                "reference quantized with a different (k, l)".into(),
            ));
        }
        let index = u32::try_from(step)
            .map_err(|_| Error::Protocol(format!("step {step} exceeds the 32-bit stream index")))?;
        let v_bar = encode_2l(v, self.params.modulus())?;
        let mut rng = RngStream::new(
            self.seed,
            StreamId::new(
                StreamRole::Operator,
                StreamPhase::Online,
                StreamObject::ShareMask,
                index,
            ),
        );
        let (v0, v1) = share(&v_bar, &mut rng).into_parts();
        Ok([
            Message::new(self.session, step, Payload::VShare(v0)),
            Message::new(self.session, step, Payload::VShare(v1)),
        ])
    }
}
