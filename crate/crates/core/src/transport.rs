//! Message transport between roles.
//!
//! Two backends share one [`Endpoint`] type: in-process channels and framed
//! TCP with one connection per directed role pair. Either way each endpoint
//! has one inbox per sending role, so messages from a given peer arrive in
//! the order they were sent.
//!
//! Frame layout, all integers little-endian:
//!
//! ```text
//! magic "L2PC" | version u8 | msg_type u8 | session u64 | step u64 | payload_len u64 | payload
//! ```
//!
//! A TCP connection opens with a hello frame (`msg_type = 0`, payload = the
//! sender's role byte) that the receiver answers with one status byte:
//! `0` accepted, `1` wrong session, `2` unexpected role.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::protocol::{Message, MsgType, PartyId, Phase};

pub const MAGIC: [u8; 4] = *b"L2PC";
pub const VERSION: u8 = 1;
pub const FRAME_HEADER_LEN: usize = 30;
/// Upper bound on a single payload; larger length fields are treated as corruption.
pub const MAX_PAYLOAD: u64 = 1 << 34;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

const HELLO: u8 = 0x00;
const ACK_OK: u8 = 0;
const ACK_WRONG_SESSION: u8 = 1;
const ACK_WRONG_ROLE: u8 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Role {
    Client = 0,
    Operator = 1,
    Party0 = 2,
    Party1 = 3,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Client, Role::Operator, Role::Party0, Role::Party1];

    pub fn from_u8(b: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|r| *r as u8 == b)
    }

    pub fn party(id: PartyId) -> Self {
        match id {
            PartyId::P0 => Role::Party0,
            PartyId::P1 => Role::Party1,
        }
    }

    pub fn party_id(self) -> Option<PartyId> {
        match self {
            Role::Party0 => Some(PartyId::P0),
            Role::Party1 => Some(PartyId::P1),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::Client => "client",
            Role::Operator => "operator",
            Role::Party0 => "party0",
            Role::Party1 => "party1",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "client" => Ok(Role::Client),
            "operator" => Ok(Role::Operator),
            "party0" | "p0" => Ok(Role::Party0),
            "party1" | "p1" => Ok(Role::Party1),
            other => Err(Error::Malformed(format!("unknown role {other:?}"))),
        }
    }
}

/// One frame on the wire. `msg_type` is kept raw so the hello frame fits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: u8,
    pub session: u64,
    pub step: u64,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn from_message(msg: &Message) -> Self {
        Self {
            msg_type: msg.msg_type() as u8,
            session: msg.session,
            step: msg.step,
            payload: msg.encode_payload(),
        }
    }

    pub fn to_message(&self) -> Result<Message> {
        let t = MsgType::from_u8(self.msg_type)?;
        Message::decode_payload(t, self.session, self.step, &self.payload)
    }

    pub fn encoded_len(&self) -> usize {
        FRAME_HEADER_LEN + self.payload.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.msg_type);
        out.extend_from_slice(&self.session.to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    fn parse_header(h: &[u8; FRAME_HEADER_LEN]) -> Result<(u8, u64, u64, u64)> {
        if h[..4] != MAGIC {
            return Err(Error::Malformed(format!(
                "bad frame magic {:02x?}",
                &h[..4]
            )));
        }
        if h[4] != VERSION {
            return Err(Error::Malformed(format!(
                "unsupported frame version {}",
                h[4]
            )));
        }
        let word = |i: usize| u64::from_le_bytes(h[i..i + 8].try_into().unwrap());
        let len = word(22);
        if len > MAX_PAYLOAD {
            return Err(Error::Malformed(format!("payload length {len} too large")));
        }
        Ok((h[5], word(6), word(14), len))
    }

    /// Decodes exactly one frame occupying all of `bytes`.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let frame =
            Self::read_from(&mut r)?.ok_or_else(|| Error::Malformed("empty frame".into()))?;
        if !r.is_empty() {
            return Err(Error::Malformed(format!("{} bytes after frame", r.len())));
        }
        Ok(frame)
    }

    /// Reads the next frame; `Ok(None)` on a clean end of stream.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Option<Self>> {
        let mut header = [0u8; FRAME_HEADER_LEN];
        let mut filled = 0;
        while filled < FRAME_HEADER_LEN {
            match r.read(&mut header[filled..]) {
                Ok(0) if filled == 0 => return Ok(None),
                Ok(0) => return Err(Error::Malformed("truncated frame header".into())),
                Ok(n) => filled += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        let (msg_type, session, step, len) = Self::parse_header(&header)?;
        let mut payload = vec![0u8; len as usize];
        r.read_exact(&mut payload).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => Error::Malformed("truncated frame payload".into()),
            _ => e.into(),
        })?;
        Ok(Some(Self {
            msg_type,
            session,
            step,
            payload,
        }))
    }
}

/// One sent message as seen by the transport.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub elapsed: Duration,
    pub from: Role,
    pub to: Role,
    pub msg_type: MsgType,
    /// Frame size including the header.
    pub bytes: usize,
    pub session: u64,
    pub step: u64,
    /// One plus the number of online messages of this step the sender had
    /// already received from the recipient when it sent this one.
    pub round: u32,
}

impl TranscriptEntry {
    pub fn phase(&self) -> Phase {
        self.msg_type.phase()
    }
}

/// Append-only log of sent messages, shareable across threads.
#[derive(Clone, Debug)]
pub struct Transcript {
    start: Instant,
    entries: Arc<Mutex<Vec<TranscriptEntry>>>,
}

impl Default for Transcript {
    fn default() -> Self {
        Self::new()
    }
}

impl Transcript {
    pub fn new() -> Self {
        Self {
            start: Instant::now(),
            entries: Arc::new(Mutex::new(Vec::new())),
        }
    }

    fn record(&self, mut entry: TranscriptEntry) {
        entry.elapsed = self.start.elapsed();
        self.entries
            .lock()
            .expect("transcript lock poisoned")
            .push(entry);
    }

    /// Entries in recording order.
    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.entries
            .lock()
            .expect("transcript lock poisoned")
            .clone()
    }

    /// Entries without timestamps in a canonical order, for comparing
    /// transcripts whose interleaving across threads differs.
    pub fn canonical(&self) -> Vec<TranscriptEntry> {
        let mut v: Vec<_> = self
            .entries()
            .into_iter()
            .map(|mut e| {
                e.elapsed = Duration::ZERO;
                e
            })
            .collect();
        v.sort_by_key(|e| {
            (
                e.session,
                e.msg_type.phase(),
                e.step,
                e.msg_type,
                e.from,
                e.to,
            )
        });
        v
    }

    pub fn total_bytes(&self, filter: impl Fn(&TranscriptEntry) -> bool) -> usize {
        self.entries()
            .iter()
            .filter(|e| filter(e))
            .map(|e| e.bytes)
            .sum()
    }
}

/// Number of communication rounds between `P0` and `P1` in online step `step`.
///
/// Messages sent without having seen anything from the peer in this step form
/// round one; a message sent after receiving `r` peer messages belongs to
/// round `r + 1`. Zero when the parties exchanged nothing.
pub fn transcript_round_count(entries: &[TranscriptEntry], step: u64) -> u32 {
    entries
        .iter()
        .filter(|e| e.step == step && e.phase() == Phase::Online)
        .filter(|e| {
            matches!(
                (e.from, e.to),
                (Role::Party0, Role::Party1) | (Role::Party1, Role::Party0)
            )
        })
        .map(|e| e.round)
        .max()
        .unwrap_or(0)
}

type Inbox = Receiver<Result<Frame>>;

enum Outbound {
    Channel(Sender<Result<Frame>>),
    Tcp {
        addr: SocketAddr,
        stream: Option<TcpStream>,
    },
}

/// A role's view of the network: a send path to every peer it talks to and
/// an inbox per sender.
pub struct Endpoint {
    role: Role,
    session: u64,
    timeout: Duration,
    outbound: HashMap<Role, Outbound>,
    inbox: HashMap<Role, Inbox>,
    transcript: Option<Transcript>,
    /// Online messages received per `(sender, step)`.
    received: HashMap<(Role, u64), u32>,
    stop: Option<Arc<AtomicBool>>,
}

impl fmt::Debug for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Endpoint")
            .field("role", &self.role)
            .field("session", &self.session)
            .finish_non_exhaustive()
    }
}

/// In-process endpoints for `roles`, fully connected by channels.
pub fn inproc_network(
    session: u64,
    roles: &[Role],
    transcript: Option<Transcript>,
    timeout: Duration,
) -> HashMap<Role, Endpoint> {
    let mut eps: HashMap<Role, Endpoint> = roles
        .iter()
        .map(|&role| {
            (
                role,
                Endpoint {
                    role,
                    session,
                    timeout,
                    outbound: HashMap::new(),
                    inbox: HashMap::new(),
                    transcript: transcript.clone(),
                    received: HashMap::new(),
                    stop: None,
                },
            )
        })
        .collect();
    for &from in roles {
        for &to in roles {
            if from == to {
                continue;
            }
            let (tx, rx) = mpsc::channel();
            eps.get_mut(&from)
                .unwrap()
                .outbound
                .insert(to, Outbound::Channel(tx));
            eps.get_mut(&to).unwrap().inbox.insert(from, rx);
        }
    }
    eps
}

fn write_hello(stream: &mut TcpStream, role: Role, session: u64) -> Result<()> {
    let hello = Frame {
        msg_type: HELLO,
        session,
        step: 0,
        payload: vec![role as u8],
    };
    stream.write_all(&hello.encode())?;
    Ok(())
}

fn handle_incoming(
    mut stream: TcpStream,
    session: u64,
    timeout: Duration,
    senders: &HashMap<Role, Sender<Result<Frame>>>,
) -> Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(timeout))?;
    stream.set_nodelay(true)?;
    let hello = Frame::read_from(&mut stream)?
        .ok_or_else(|| Error::Transport("connection closed before hello".into()))?;
    if hello.msg_type != HELLO || hello.payload.len() != 1 {
        return Err(Error::Malformed("expected hello frame".into()));
    }
    if hello.session != session {
        stream.write_all(&[ACK_WRONG_SESSION])?;
        return Err(Error::SessionMismatch {
            expected: session,
            got: hello.session,
        });
    }
    let Some(tx) = Role::from_u8(hello.payload[0])
        .and_then(|r| senders.get(&r))
        .cloned()
    else {
        stream.write_all(&[ACK_WRONG_ROLE])?;
        return Err(Error::Malformed(format!(
            "unexpected peer role {}",
            hello.payload[0]
        )));
    };
    stream.write_all(&[ACK_OK])?;
    stream.set_read_timeout(None)?;
    thread::spawn(move || {
        let mut reader = io::BufReader::with_capacity(1 << 16, stream);
        loop {
            match Frame::read_from(&mut reader) {
                Ok(Some(frame)) => {
                    if tx.send(Ok(frame)).is_err() {
                        return;
                    }
                }
                Ok(None) => {
                    let _ = tx.send(Err(Error::Transport("peer closed the connection".into())));
                    return;
                }
                Err(e) => {
                    let _ = tx.send(Err(e));
                    return;
                }
            }
        }
    });
    Ok(())
}

impl Endpoint {
    /// A TCP endpoint. `listener` accepts connections from the roles in
    /// `accept_from`; `peers` maps every role this endpoint sends to onto its
    /// listening address. Outgoing connections are opened on first send.
    pub fn tcp(
        role: Role,
        session: u64,
        listener: Option<TcpListener>,
        accept_from: &[Role],
        peers: HashMap<Role, SocketAddr>,
        transcript: Option<Transcript>,
        timeout: Duration,
    ) -> Result<Self> {
        let mut inbox = HashMap::new();
        let mut stop = None;
        if let Some(listener) = listener {
            let mut senders = HashMap::new();
            for &from in accept_from {
                let (tx, rx) = mpsc::channel();
                senders.insert(from, tx);
                inbox.insert(from, rx);
            }
            listener.set_nonblocking(true)?;
            let flag = Arc::new(AtomicBool::new(false));
            let thread_flag = flag.clone();
            thread::Builder::new()
                .name(format!("{role}-accept"))
                .spawn(move || {
                    while !thread_flag.load(Ordering::Relaxed) {
                        match listener.accept() {
                            Ok((stream, _)) => {
                                // a rejected hello only affects that connection
                                let _ = handle_incoming(stream, session, timeout, &senders);
                            }
                            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                                thread::sleep(Duration::from_millis(2));
                            }
                            Err(_) => thread::sleep(Duration::from_millis(2)),
                        }
                    }
                })?;
            stop = Some(flag);
        } else if !accept_from.is_empty() {
            return Err(Error::Transport(format!(
                "{role} must listen to receive messages"
            )));
        }
        Ok(Self {
            role,
            session,
            timeout,
            outbound: peers
                .into_iter()
                .map(|(r, addr)| (r, Outbound::Tcp { addr, stream: None }))
                .collect(),
            inbox,
            transcript,
            received: HashMap::new(),
            stop,
        })
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn session(&self) -> u64 {
        self.session
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    pub fn set_timeout(&mut self, timeout: Duration) {
        self.timeout = timeout;
    }

    fn connect(addr: SocketAddr, role: Role, session: u64, timeout: Duration) -> Result<TcpStream> {
        let deadline = Instant::now() + timeout;
        let mut stream = loop {
            match TcpStream::connect_timeout(&addr, Duration::from_millis(500)) {
                Ok(s) => break s,
                Err(e) if Instant::now() >= deadline => {
                    return Err(Error::Timeout(format!("connection to {addr} ({e})")));
                }
                Err(_) => thread::sleep(Duration::from_millis(20)),
            }
        };
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(timeout))?;
        write_hello(&mut stream, role, session)?;
        let mut ack = [0u8; 1];
        stream.read_exact(&mut ack).map_err(|e| match e.kind() {
            io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => {
                Error::Timeout(format!("hello acknowledgement from {addr}"))
            }
            _ => Error::Transport(format!("hello to {addr} failed: {e}")),
        })?;
        match ack[0] {
            ACK_OK => Ok(stream),
            ACK_WRONG_SESSION => Err(Error::Transport(format!(
                "{addr} rejected session {session}"
            ))),
            other => Err(Error::Transport(format!(
                "{addr} rejected role {role} (status {other})"
            ))),
        }
    }

    pub fn send(&mut self, to: Role, msg: &Message) -> Result<()> {
        if msg.session != self.session {
            return Err(Error::SessionMismatch {
                expected: self.session,
                got: msg.session,
            });
        }
        let frame = Frame::from_message(msg);
        let bytes = frame.encoded_len();
        let (role, session, timeout) = (self.role, self.session, self.timeout);
        match self.outbound.get_mut(&to) {
            None => return Err(Error::Transport(format!("{role} has no route to {to}"))),
            Some(Outbound::Channel(tx)) => {
                tx.send(Ok(frame))
                    .map_err(|_| Error::Transport(format!("{to} is gone")))?;
            }
            Some(Outbound::Tcp { addr, stream }) => {
                if stream.is_none() {
                    *stream = Some(Self::connect(*addr, role, session, timeout)?);
                }
                let s = stream.as_mut().unwrap();
                if let Err(e) = s.write_all(&frame.encode()) {
                    *stream = None;
                    return Err(Error::Transport(format!("sending to {to}: {e}")));
                }
            }
        }
        if let Some(t) = &self.transcript {
            let round = if msg.msg_type().phase() == Phase::Online {
                1 + self.received.get(&(to, msg.step)).copied().unwrap_or(0)
            } else {
                0
            };
            t.record(TranscriptEntry {
                elapsed: Duration::ZERO,
                from: self.role,
                to,
                msg_type: msg.msg_type(),
                bytes,
                session: msg.session,
                step: msg.step,
                round,
            });
        }
        Ok(())
    }

    /// Next message from `from`, waiting at most the endpoint timeout.
    pub fn recv(&mut self, from: Role) -> Result<Message> {
        let rx = self.inbox.get(&from).ok_or_else(|| {
            Error::Transport(format!("{} does not receive from {from}", self.role))
        })?;
        let frame = match rx.recv_timeout(self.timeout) {
            Ok(frame) => frame?,
            Err(RecvTimeoutError::Timeout) => {
                return Err(Error::Timeout(format!(
                    "message from {from} at {}",
                    self.role
                )));
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(Error::Transport(format!(
                    "{from} disconnected from {}",
                    self.role
                )));
            }
        };
        let msg = frame.to_message()?;
        if msg.session != self.session {
            return Err(Error::SessionMismatch {
                expected: self.session,
                got: msg.session,
            });
        }
        if msg.msg_type().phase() == Phase::Online {
            *self.received.entry((from, msg.step)).or_insert(0) += 1;
        }
        Ok(msg)
    }
}

impl Drop for Endpoint {
    fn drop(&mut self) {
        if let Some(flag) = &self.stop {
            flag.store(true, Ordering::Relaxed);
        }
    }
}
