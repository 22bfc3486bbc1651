//! Wiring roles to endpoints: the party service loop, a client driver and a
//! launcher that starts parties on threads or points at remote processes.

use std::collections::HashMap;
use std::net::{SocketAddr, TcpListener};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crate::error::{Error, Result};
use crate::fixedpoint::FixedPointMatrix;
use crate::lattice::DEFAULT_BLOCK_WIDTH;
use crate::params::ProtocolParams;
use crate::sampling::Seed;
use crate::transport::{inproc_network, Endpoint, Role, Transcript, DEFAULT_TIMEOUT};

use super::{Client, Crs, Message, OnlineOutput, Operator, Party, PartyId, Payload, SessionSeeds};

/// Runs one party until the client closes the session. Returns the number
/// of online steps served.
pub fn serve_party(party: &mut Party, endpoint: &mut Endpoint) -> Result<u64> {
    let peer = Role::party(party.id().other());
    let mut steps = 0;
    loop {
        let msg = endpoint.recv(Role::Client)?;
        match &msg.payload {
            Payload::Setup(_) => party.handle_setup(&msg)?,
            Payload::Offline(_) => party.handle_offline(&msg)?,
            Payload::YShare(_) => {
                let v = if party.with_reference() {
                    Some(endpoint.recv(Role::Operator)?)
                } else {
                    None
                };
                let h = party.phase1(&msg, v.as_ref())?;
                endpoint.send(peer, &h)?;
                let other = endpoint.recv(peer)?;
                let z = party.phase2(&other)?;
                endpoint.send(Role::Client, &z)?;
                steps += 1;
            }
            Payload::Close => return Ok(steps),
            _ => {
                return Err(Error::Protocol(format!(
                    "party {:?} got {:?} from the client",
                    party.id(),
                    msg.msg_type()
                )))
            }
        }
    }
}

/// Sends the operator's reference shares for steps `0..refs.len()`.
pub fn serve_operator(
    operator: &Operator,
    endpoint: &mut Endpoint,
    refs: &[FixedPointMatrix],
) -> Result<()> {
    for (step, v) in refs.iter().enumerate() {
        let [v0, v1] = operator.share_reference(step as u64, v)?;
        endpoint.send(Role::Party0, &v0)?;
        endpoint.send(Role::Party1, &v1)?;
    }
    Ok(())
}

/// The client role bound to its endpoint.
#[derive(Debug)]
pub struct ClientDriver {
    client: Client,
    endpoint: Endpoint,
}

impl ClientDriver {
    pub fn new(client: Client, endpoint: Endpoint) -> Self {
        Self { client, endpoint }
    }

    pub fn client(&self) -> &Client {
        &self.client
    }

    pub fn setup(&mut self, with_reference: bool) -> Result<Arc<Crs>> {
        let (crs, msg) = self.client.setup(with_reference)?;
        self.endpoint.send(Role::Party0, &msg)?;
        self.endpoint.send(Role::Party1, &msg)?;
        Ok(crs)
    }

    pub fn offline(&mut self, x: &FixedPointMatrix) -> Result<()> {
        let [m0, m1] = self.client.offline(x)?;
        self.endpoint.send(Role::Party0, &m0)?;
        self.endpoint.send(Role::Party1, &m1)
    }

    /// One online evaluation: two shares out, two shares back.
    pub fn step(&mut self, step: u64, y: &FixedPointMatrix) -> Result<OnlineOutput> {
        let [y0, y1] = self.client.online_begin(step, y)?;
        self.endpoint.send(Role::Party0, &y0)?;
        self.endpoint.send(Role::Party1, &y1)?;
        let z0 = self.endpoint.recv(Role::Party0)?;
        let z1 = self.endpoint.recv(Role::Party1)?;
        self.client.online_finish(&z0, &z1)
    }

    pub fn close(&mut self) -> Result<()> {
        let msg = Message::new(self.client.session(), 0, Payload::Close);
        self.endpoint.send(Role::Party0, &msg)?;
        self.endpoint.send(Role::Party1, &msg)
    }
}

/// Where the two computing parties run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Deployment {
    /// Threads connected by channels.
    InProc,
    /// Threads connected by TCP on 127.0.0.1.
    TcpLoopback,
    /// Parties are separate `serve-party` processes.
    TcpRemote(RemoteAddrs),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RemoteAddrs {
    /// Where this process accepts the parties' output shares.
    pub client_listen: SocketAddr,
    pub party0: SocketAddr,
    pub party1: SocketAddr,
}

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    pub session: u64,
    pub timeout: Duration,
    pub block_width: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            session: 1,
            timeout: DEFAULT_TIMEOUT,
            block_width: DEFAULT_BLOCK_WIDTH,
        }
    }
}

/// Roles a party accepts messages from.
pub const PARTY_SOURCES: [[Role; 3]; 2] = [
    [Role::Client, Role::Operator, Role::Party1],
    [Role::Client, Role::Operator, Role::Party0],
];

/// Builds the TCP endpoint for a party process.
pub fn party_tcp_endpoint(
    id: PartyId,
    session: u64,
    listener: TcpListener,
    peer: SocketAddr,
    client: SocketAddr,
    transcript: Option<Transcript>,
    timeout: Duration,
) -> Result<Endpoint> {
    Endpoint::tcp(
        Role::party(id),
        session,
        Some(listener),
        &PARTY_SOURCES[id.index()],
        HashMap::from([(Role::party(id.other()), peer), (Role::Client, client)]),
        transcript,
        timeout,
    )
}

fn spawn_party(
    id: PartyId,
    seed: Seed,
    mut endpoint: Endpoint,
    opts: RunOptions,
) -> Result<JoinHandle<Result<u64>>> {
    Ok(thread::Builder::new()
        .name(format!("{}", Role::party(id)))
        .spawn(move || {
            let mut party = Party::new(id, opts.session, seed).with_block_width(opts.block_width);
            serve_party(&mut party, &mut endpoint)
        })?)
}

/// A running session: the client driver, an optional operator endpoint and
/// any party threads started locally.
pub struct Cluster {
    pub driver: ClientDriver,
    operator: Option<Endpoint>,
    threads: Vec<JoinHandle<Result<u64>>>,
    operator_thread: Option<JoinHandle<Result<()>>>,
    seeds: SessionSeeds,
    params: ProtocolParams,
    opts: RunOptions,
    transcript: Transcript,
}

impl Cluster {
    pub fn launch(
        params: &ProtocolParams,
        deployment: &Deployment,
        master: Seed,
        opts: RunOptions,
    ) -> Result<Self> {
        let params = params.validated()?;
        let seeds = SessionSeeds::from_master(master);
        let transcript = Transcript::new();
        let t = Some(transcript.clone());
        let (client_ep, operator_ep, threads) = match deployment {
            Deployment::InProc => {
                let mut net = inproc_network(opts.session, &Role::ALL, t, opts.timeout);
                let mut threads = Vec::new();
                for id in [PartyId::P0, PartyId::P1] {
                    let ep = net.remove(&Role::party(id)).unwrap();
                    threads.push(spawn_party(id, seeds.party(id), ep, opts)?);
                }
                (
                    net.remove(&Role::Client).unwrap(),
                    net.remove(&Role::Operator).unwrap(),
                    threads,
                )
            }
            Deployment::TcpLoopback => {
                let bind = || TcpListener::bind("127.0.0.1:0");
                let (l0, l1, lc) = (bind()?, bind()?, bind()?);
                let (a0, a1, ac) = (l0.local_addr()?, l1.local_addr()?, lc.local_addr()?);
                let mut threads = Vec::new();
                for (id, listener, peer) in [(PartyId::P0, l0, a1), (PartyId::P1, l1, a0)] {
                    let ep = party_tcp_endpoint(
                        id,
                        opts.session,
                        listener,
                        peer,
                        ac,
                        t.clone(),
                        opts.timeout,
                    )?;
                    threads.push(spawn_party(id, seeds.party(id), ep, opts)?);
                }
                let peers = HashMap::from([(Role::Party0, a0), (Role::Party1, a1)]);
                let client = Endpoint::tcp(
                    Role::Client,
                    opts.session,
                    Some(lc),
                    &[Role::Party0, Role::Party1],
                    peers.clone(),
                    t.clone(),
                    opts.timeout,
                )?;
                let operator = Endpoint::tcp(
                    Role::Operator,
                    opts.session,
                    None,
                    &[],
                    peers,
                    t,
                    opts.timeout,
                )?;
                (client, operator, threads)
            }
            Deployment::TcpRemote(addrs) => {
                let lc = TcpListener::bind(addrs.client_listen)?;
                let peers =
                    HashMap::from([(Role::Party0, addrs.party0), (Role::Party1, addrs.party1)]);
                let client = Endpoint::tcp(
                    Role::Client,
                    opts.session,
                    Some(lc),
                    &[Role::Party0, Role::Party1],
                    peers.clone(),
                    t.clone(),
                    opts.timeout,
                )?;
                let operator = Endpoint::tcp(
                    Role::Operator,
                    opts.session,
                    None,
                    &[],
                    peers,
                    t,
                    opts.timeout,
                )?;
                (client, operator, Vec::new())
            }
        };
        let client = Client::new(params, opts.session, seeds)?.with_block_width(opts.block_width);
        Ok(Self {
            driver: ClientDriver::new(client, client_ep),
            operator: Some(operator_ep),
            threads,
            operator_thread: None,
            seeds,
            params,
            opts,
            transcript,
        })
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    /// Starts the operator on its own thread, sending one reference share
    /// pair per step.
    pub fn spawn_operator(&mut self, refs: Vec<FixedPointMatrix>) -> Result<()> {
        let mut endpoint = self
            .operator
            .take()
            .ok_or_else(|| Error::Protocol("operator already started".into()))?;
        let operator = Operator::new(self.params, self.opts.session, self.seeds.operator)?;
        self.operator_thread = Some(
            thread::Builder::new()
                .name("operator".into())
                .spawn(move || serve_operator(&operator, &mut endpoint, &refs))?,
        );
        Ok(())
    }

    /// Closes the session and waits for local roles to finish.
    pub fn finish(mut self) -> Result<Transcript> {
        let closed = self.driver.close();
        let joined = self.join();
        closed?;
        joined?;
        Ok(self.transcript)
    }

    /// Tears the session down after `err`, preferring a party's own error
    /// when `err` is just the transport noticing that the party stopped.
    pub fn abort(mut self, err: Error) -> Error {
        let _ = self.driver.close();
        self.operator = None;
        match self.join() {
            Err(root) if err.is_transport() => root,
            _ => err,
        }
    }

    fn join(&mut self) -> Result<()> {
        let mut first = Ok(());
        if let Some(h) = self.operator_thread.take() {
            let r = h
                .join()
                .map_err(|_| Error::Protocol("operator thread panicked".into()))?;
            if first.is_ok() {
                first = r;
            }
        }
        for h in self.threads.drain(..) {
            let r = h
                .join()
                .map_err(|_| Error::Protocol("party thread panicked".into()))
                .and_then(|r| r.map(|_| ()));
            if first.is_ok() {
                first = r;
            }
        }
        first
    }
}

/// Result of [`run_mult`]: one output per `Y`, plus the transcript.
#[derive(Debug)]
pub struct MultRun {
    pub outputs: Vec<OnlineOutput>,
    pub transcript: Transcript,
}

/// Runs setup, offline for `x` and one online step per entry of `ys`.
pub fn run_mult(
    params: &ProtocolParams,
    x: &FixedPointMatrix,
    ys: &[FixedPointMatrix],
    deployment: &Deployment,
    master: Seed,
    opts: RunOptions,
) -> Result<MultRun> {
    let mut cluster = Cluster::launch(params, deployment, master, opts)?;
    let run = |c: &mut Cluster| -> Result<Vec<OnlineOutput>> {
        c.driver.setup(false)?;
        c.driver.offline(x)?;
        ys.iter()
            .enumerate()
            .map(|(i, y)| c.driver.step(i as u64, y))
            .collect()
    };
    match run(&mut cluster) {
        Ok(outputs) => Ok(MultRun {
            outputs,
            transcript: cluster.finish()?,
        }),
        Err(e) => Err(cluster.abort(e)),
    }
}
