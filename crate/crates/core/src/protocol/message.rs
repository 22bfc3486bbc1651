use std::io::Read;

use crate::error::{Error, Result};
use crate::lattice::{LweParams, SisParams};
use crate::params::{Dims, ProtocolParams};
use crate::ring::{Modulus, ZqMatrix};
use crate::sampling::Seed;

use super::OfflineMaterial;

/// Wire tag of a message.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum MsgType {
    YShare = 0x01,
    VShare = 0x02,
    HShare = 0x03,
    ZShare = 0x04,
    Setup = 0x10,
    Offline = 0x11,
    Close = 0x1f,
}

impl MsgType {
    pub fn from_u8(b: u8) -> Result<Self> {
        Ok(match b {
            0x01 => MsgType::YShare,
            0x02 => MsgType::VShare,
            0x03 => MsgType::HShare,
            0x04 => MsgType::ZShare,
            0x10 => MsgType::Setup,
            0x11 => MsgType::Offline,
            0x1f => MsgType::Close,
            other => {
                return Err(Error::Malformed(format!(
                    "unknown message type {other:#04x}"
                )))
            }
        })
    }

    pub fn phase(self) -> Phase {
        match self {
            MsgType::Setup => Phase::Setup,
            MsgType::Offline => Phase::Offline,
            MsgType::YShare | MsgType::VShare | MsgType::HShare | MsgType::ZShare => Phase::Online,
            MsgType::Close => Phase::Teardown,
        }
    }
}

/// Protocol phase a message belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Setup,
    Offline,
    Online,
    Teardown,
}

/// Public parameters and the `crs` seed, sent by the client to each party.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SetupInfo {
    pub params: ProtocolParams,
    pub crs_seed: Seed,
    /// Whether each online step also carries an operator share.
    pub with_reference: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Setup(SetupInfo),
    Offline(OfflineMaterial),
    YShare(ZqMatrix),
    VShare(ZqMatrix),
    HShare(ZqMatrix),
    ZShare(ZqMatrix),
    Close,
}

/// A protocol message tagged with its session and online step.
#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    pub session: u64,
    pub step: u64,
    pub payload: Payload,
}

impl Message {
    pub fn new(session: u64, step: u64, payload: Payload) -> Self {
        Self {
            session,
            step,
            payload,
        }
    }

    pub fn msg_type(&self) -> MsgType {
        match &self.payload {
            Payload::Setup(_) => MsgType::Setup,
            Payload::Offline(_) => MsgType::Offline,
            Payload::YShare(_) => MsgType::YShare,
            Payload::VShare(_) => MsgType::VShare,
            Payload::HShare(_) => MsgType::HShare,
            Payload::ZShare(_) => MsgType::ZShare,
            Payload::Close => MsgType::Close,
        }
    }

    /// Matrix carried by a share message.
    pub fn share(&self) -> Option<&ZqMatrix> {
        match &self.payload {
            Payload::YShare(m) | Payload::VShare(m) | Payload::HShare(m) | Payload::ZShare(m) => {
                Some(m)
            }
            _ => None,
        }
    }

    pub fn encode_payload(&self) -> Vec<u8> {
        match &self.payload {
            Payload::Setup(info) => encode_setup(info),
            Payload::Offline(m) => {
                let mut out = Vec::with_capacity(
                    m.c.encoded_len() + m.c_prime.encoded_len() + m.s_share.encoded_len(),
                );
                for x in [&m.c, &m.c_prime, &m.s_share] {
                    x.write_to(&mut out).expect("writing to a Vec cannot fail");
                }
                out
            }
            Payload::YShare(m) | Payload::VShare(m) | Payload::HShare(m) | Payload::ZShare(m) => {
                m.to_bytes()
            }
            Payload::Close => Vec::new(),
        }
    }

    pub fn decode_payload(
        msg_type: MsgType,
        session: u64,
        step: u64,
        mut bytes: &[u8],
    ) -> Result<Self> {
        let payload = match msg_type {
            MsgType::Setup => Payload::Setup(decode_setup(&mut bytes)?),
            MsgType::Offline => Payload::Offline(OfflineMaterial {
                c: ZqMatrix::read_from(&mut bytes)?,
                c_prime: ZqMatrix::read_from(&mut bytes)?,
                s_share: ZqMatrix::read_from(&mut bytes)?,
            }),
            MsgType::YShare => Payload::YShare(ZqMatrix::read_from(&mut bytes)?),
            MsgType::VShare => Payload::VShare(ZqMatrix::read_from(&mut bytes)?),
            MsgType::HShare => Payload::HShare(ZqMatrix::read_from(&mut bytes)?),
            MsgType::ZShare => Payload::ZShare(ZqMatrix::read_from(&mut bytes)?),
            MsgType::Close => Payload::Close,
        };
        if !bytes.is_empty() {
            return Err(Error::Malformed(format!(
                "{} trailing payload bytes",
                bytes.len()
            )));
        }
        Ok(Self {
            session,
            step,
            payload,
        })
    }
}

// n u64 | q_bits u16 | sigma f64 | t u64 | d1 d2 d3 u64 | k u32 | l u32 |
// epsilon f64 | with_reference u8 | crs seed [32]
fn encode_setup(info: &SetupInfo) -> Vec<u8> {
    let p = &info.params;
    let mut out = Vec::with_capacity(101);
    out.extend_from_slice(&(p.lwe.n as u64).to_le_bytes());
    out.extend_from_slice(&(p.lwe.modulus.bits() as u16).to_le_bytes());
    out.extend_from_slice(&p.lwe.sigma.to_le_bytes());
    out.extend_from_slice(&(p.sis.t as u64).to_le_bytes());
    for d in [p.dims.d1, p.dims.d2, p.dims.d3] {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    out.extend_from_slice(&p.k.to_le_bytes());
    out.extend_from_slice(&p.l.to_le_bytes());
    out.extend_from_slice(&p.epsilon.to_le_bytes());
    out.push(info.with_reference as u8);
    out.extend_from_slice(&info.crs_seed.0);
    out
}

fn read_array<const N: usize>(r: &mut &[u8]) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Malformed("truncated setup payload".into()))?;
    Ok(buf)
}

fn read_usize(r: &mut &[u8]) -> Result<usize> {
    usize::try_from(u64::from_le_bytes(read_array(r)?))
        .map_err(|_| Error::Malformed("size overflows usize".into()))
}

fn decode_setup(r: &mut &[u8]) -> Result<SetupInfo> {
    let n = read_usize(r)?;
    let bits = u16::from_le_bytes(read_array(r)?) as u32;
    let sigma = f64::from_le_bytes(read_array(r)?);
    let t = read_usize(r)?;
    let dims = Dims::new(read_usize(r)?, read_usize(r)?, read_usize(r)?);
    let k = u32::from_le_bytes(read_array(r)?);
    let l = u32::from_le_bytes(read_array(r)?);
    let epsilon = f64::from_le_bytes(read_array(r)?);
    let [flag] = read_array::<1>(r)?;
    let seed = Seed(read_array(r)?);
    let with_reference = match flag {
        0 => false,
        1 => true,
        other => return Err(Error::Malformed(format!("bad reference flag {other}"))),
    };
    Ok(SetupInfo {
        params: ProtocolParams {
            lwe: LweParams::new(n, Modulus::new(bits)?, sigma)?,
            sis: SisParams::new(t)?,
            dims,
            k,
            l,
            epsilon,
        },
        crs_seed: seed,
        with_reference,
    })
}
