use std::net::{SocketAddr, ToSocketAddrs};
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use clap::{Args, ValueEnum};
use l2pc_core::params::{feasible_window, k_admissible, l_admissible, standard_t, Window};
use l2pc_core::protocol::runner::{Deployment, RemoteAddrs, RunOptions};
use l2pc_core::transport::Role;
use l2pc_core::{Dims, Modulus, ProtocolParams, Seed};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    #[value(name = "paper-sec128")]
    PaperSec128,
    Ci,
}

impl Preset {
    pub fn params(self) -> ProtocolParams {
        match self {
            Preset::PaperSec128 => ProtocolParams::paper_sec128(),
            Preset::Ci => ProtocolParams::ci(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TransportMode {
    Inproc,
    Tcp,
}

/// `D1,D2,D3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DimsArg(pub Dims);

impl FromStr for DimsArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<Result<_, _>>()?;
        match v[..] {
            [a, b, c] if a > 0 && b > 0 && c > 0 => Ok(DimsArg(Dims::new(a, b, c))),
            _ => Err("expected three positive integers D1,D2,D3".into()),
        }
    }
}

/// `ROLE=HOST:PORT`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeerArg {
    pub role: Role,
    pub addr: SocketAddr,
}

impl FromStr for PeerArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (role, addr) = s.split_once('=').ok_or("expected ROLE=ADDR")?;
        let role = role.parse::<Role>().map_err(|e| e.to_string())?;
        let addr = resolve(addr)?;
        Ok(PeerArg { role, addr })
    }
}

pub fn resolve(addr: &str) -> Result<SocketAddr, String> {
    addr.to_socket_addrs()
        .map_err(|e| format!("{addr}: {e}"))?
        .next()
        .ok_or_else(|| format!("{addr}: no address"))
}

pub fn parse_seed(s: &str) -> Result<Seed, String> {
    Seed::from_hex(s).map_err(|e| e.to_string())
}

#[derive(Args, Clone, Debug)]
pub struct ParamArgs {
    /// Named parameter set the other flags override.
    #[arg(
        long,
        value_enum,
        default_value = "ci",
        env = "L2PC_PRESET",
        global = true
    )]
    pub preset: Preset,
    /// LWE dimension.
    #[arg(long, env = "L2PC_N", global = true)]
    pub n: Option<usize>,
    /// Modulus bit length, q = 2^b.
    #[arg(long, env = "L2PC_Q_BITS", global = true)]
    pub q_bits: Option<u32>,
    /// SIS width.
    #[arg(long, env = "L2PC_T", global = true)]
    pub t: Option<usize>,
    #[arg(long, env = "L2PC_K", global = true)]
    pub k: Option<u32>,
    #[arg(long, env = "L2PC_L", global = true)]
    pub l: Option<u32>,
    /// Target precision.
    #[arg(long, env = "L2PC_EPSILON", global = true)]
    pub epsilon: Option<f64>,
    /// Matrix shape D1,D2,D3 for X in R^(D1 x D2) and Y in R^(D2 x D3).
    #[arg(long, env = "L2PC_DIMS", global = true)]
    pub dims: Option<DimsArg>,
}

/// Unvalidated parameter choice plus the window it was drawn from.
pub struct Resolved {
    pub n: usize,
    pub q_bits: u32,
    pub t: usize,
    pub dims: Dims,
    pub epsilon: f64,
    pub window: Window,
    pub k: Option<u32>,
    pub l: Option<u32>,
    base: ProtocolParams,
}

impl Resolved {
    pub fn params(&self) -> Result<ProtocolParams, CliError> {
        let (k, l) = match (self.k, self.l) {
            (Some(k), Some(l)) => (k, l),
            _ => {
                return Err(CliError::Core(l2pc_core::Error::Infeasible(format!(
                    "no (k, l) window for q = 2^{}, t = {}",
                    self.q_bits, self.t
                ))))
            }
        };
        let modulus = Modulus::new(self.q_bits)?;
        let lwe = l2pc_core::lattice::LweParams::new(self.n, modulus, self.base.lwe.sigma)?;
        let p = ProtocolParams {
            lwe,
            sis: l2pc_core::lattice::SisParams::new(self.t)?,
            dims: self.dims,
            k,
            l,
            epsilon: self.epsilon,
        };
        Ok(p.validated()?)
    }
}

impl ParamArgs {
    /// Applies the overrides to the preset. `shape` wins over `--dims`.
    /// Unless given, `(k, l)` is kept from the preset when nothing it depends
    /// on changed and is otherwise taken from the window.
    pub fn resolve(&self, shape: Option<Dims>) -> Result<Resolved, CliError> {
        let base = self.preset.params();
        let n = self.n.unwrap_or(base.lwe.n);
        let q_bits = self.q_bits.unwrap_or(base.modulus().bits());
        let modulus = Modulus::new(q_bits)?;
        let t = match (self.t, self.preset) {
            (Some(t), _) => t,
            (None, Preset::PaperSec128) => standard_t(n, modulus),
            (None, Preset::Ci) => base.sis.t,
        };
        let dims = shape.or(self.dims.map(|d| d.0)).unwrap_or(base.dims);
        let epsilon = self.epsilon.unwrap_or(base.epsilon);
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(CliError::Input(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        let lwe = l2pc_core::lattice::LweParams::new(n, modulus, base.lwe.sigma)?;
        let window = feasible_window(&lwe, t, dims, epsilon);
        let unchanged = n == base.lwe.n
            && q_bits == base.modulus().bits()
            && t == base.sis.t
            && dims == base.dims
            && epsilon == base.epsilon;
        let (k, l) = match (self.k, self.l) {
            (Some(k), Some(l)) => (Some(k), Some(l)),
            (None, None) if unchanged => (Some(base.k), Some(base.l)),
            (None, None) => window.recommended.unzip(),
            (Some(k), None) => (
                Some(k),
                (0..k).find(|&l| l_admissible(l, k, dims.d2, t, epsilon)),
            ),
            (None, Some(l)) => (
                window
                    .k_int_max
                    .filter(|&k| k > l && k_admissible(k, modulus, t, dims.d2)),
                Some(l),
            ),
        };
        Ok(Resolved {
            n,
            q_bits,
            t,
            dims,
            epsilon,
            window,
            k,
            l,
            base,
        })
    }
}

#[derive(Args, Clone, Debug)]
pub struct RunArgs {
    /// Master seed, 64 hex digits. Every stream of the run derives from it.
    #[arg(
        long,
        env = "L2PC_SEED",
        global = true,
        default_value = "0000000000000000000000000000000000000000000000000000000000000000",
        value_parser = parse_seed
    )]
    pub seed: Seed,
    #[arg(
        long,
        value_enum,
        default_value = "inproc",
        env = "L2PC_TRANSPORT",
        global = true
    )]
    pub transport: TransportMode,
    /// Local listen address (tcp). For the client this receives output shares.
    #[arg(long, env = "L2PC_LISTEN", global = true)]
    pub listen: Option<String>,
    /// Remote role address as ROLE=HOST:PORT; repeatable.
    #[arg(long = "peer", env = "L2PC_PEER", value_delimiter = ';', global = true)]
    pub peers: Vec<PeerArg>,
    #[arg(long, default_value_t = 1, env = "L2PC_SESSION", global = true)]
    pub session: u64,
    /// Seconds to wait for any single message.
    #[arg(long, default_value_t = 60.0, env = "L2PC_TIMEOUT", global = true)]
    pub timeout: f64,
    #[arg(long, env = "L2PC_OUT", global = true)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    pub fn options(&self) -> Result<RunOptions, CliError> {
        if !(self.timeout.is_finite() && self.timeout > 0.0) {
            return Err(CliError::Input(format!(
                "timeout must be positive, got {}",
                self.timeout
            )));
        }
        Ok(RunOptions {
            session: self.session,
            timeout: Duration::from_secs_f64(self.timeout),
            ..RunOptions::default()
        })
    }

    pub fn peer(&self, role: Role) -> Option<SocketAddr> {
        self.peers
            .iter()
            .rev()
            .find(|p| p.role == role)
            .map(|p| p.addr)
    }

    pub fn listen_addr(&self) -> Result<Option<SocketAddr>, CliError> {
        self.listen
            .as_deref()
            .map(resolve)
            .transpose()
            .map_err(CliError::Input)
    }

    /// In-process threads, tcp on loopback, or remote parties when both
    /// party addresses are given.
    pub fn deployment(&self) -> Result<Deployment, CliError> {
        match self.transport {
            TransportMode::Inproc => Ok(Deployment::InProc),
            TransportMode::Tcp => match (self.peer(Role::Party0), self.peer(Role::Party1)) {
                (None, None) => Ok(Deployment::TcpLoopback),
                (Some(party0), Some(party1)) => {
                    let client_listen = self.listen_addr()?.ok_or_else(|| {
                        CliError::Input("--listen is required with remote parties".into())
                    })?;
                    Ok(Deployment::TcpRemote(RemoteAddrs {
                        client_listen,
                        party0,
                        party1,
                    }))
                }
                _ => Err(CliError::Input(
                    "give both --peer p0=ADDR and --peer p1=ADDR".into(),
                )),
            },
        }
    }
}
