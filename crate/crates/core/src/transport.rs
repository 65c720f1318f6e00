//! Ordered, reliable channels between the three roles with exact cost
//! accounting.
//!
//! Every frame on the wire is a 4-byte little-endian length followed by the
//! payload. The meter charges `payload + 4` bytes per send on both the
//! in-process and the TCP transport, so byte totals agree between them.
//!
//! In simulated mode each send advances the sender's virtual clock by
//! `latency + 8 * frame_bytes / bandwidth`; the receiver's clock jumps to the
//! frame's arrival stamp if that is later than its own.

use std::fmt;
use std::io::{BufReader, BufWriter, Read, Write};
use std::net::TcpStream;
use std::str::FromStr;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FRAME_HEADER_BYTES: usize = 4;
/// Frames above this size are rejected as malformed.
pub const MAX_FRAME_BYTES: usize = 1 << 31;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("channel to {0} closed")]
    Closed(Role),
    #[error("timed out waiting for {0}")]
    Timeout(Role),
    #[error("malformed frame: {0}")]
    Frame(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    PartyA,
    PartyB,
    Dealer,
}

impl Role {
    pub fn index(self) -> usize {
        match self {
            Role::PartyA => 0,
            Role::PartyB => 1,
            Role::Dealer => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Role> {
        match i {
            0 => Some(Role::PartyA),
            1 => Some(Role::PartyB),
            2 => Some(Role::Dealer),
            _ => None,
        }
    }

    /// The other computing party. The dealer has no peer.
    pub fn peer(self) -> Role {
        match self {
            Role::PartyA => Role::PartyB,
            Role::PartyB => Role::PartyA,
            Role::Dealer => Role::Dealer,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Role::PartyA => "party-a",
            Role::PartyB => "party-b",
            Role::Dealer => "dealer",
        })
    }
}

impl FromStr for Role {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "a" | "party-a" | "partya" => Ok(Role::PartyA),
            "b" | "party-b" | "partyb" => Ok(Role::PartyB),
            "dealer" | "c" => Ok(Role::Dealer),
            other => Err(format!("unknown role '{other}'")),
        }
    }
}

/// Simulated link characteristics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetProfile {
    /// Bits per second; `None` means unlimited.
    pub bandwidth_bps: Option<f64>,
    /// One-way latency in seconds.
    pub latency_s: f64,
}

impl Default for NetProfile {
    fn default() -> Self {
        Self::unlimited()
    }
}

impl NetProfile {
    pub fn unlimited() -> Self {
        Self {
            bandwidth_bps: None,
            latency_s: 0.0,
        }
    }

    pub fn new(bandwidth_bps: Option<f64>, latency_s: f64) -> Result<Self, String> {
        if let Some(bw) = bandwidth_bps {
            if !(bw > 0.0 && bw.is_finite()) {
                return Err(format!("bandwidth must be positive, got {bw}"));
            }
        }
        if !(latency_s >= 0.0 && latency_s.is_finite()) {
            return Err(format!("latency must be non-negative, got {latency_s}"));
        }
        Ok(Self {
            bandwidth_bps,
            latency_s,
        })
    }

    /// Modeled delivery time of one frame of `bytes` total bytes.
    pub fn transfer_seconds(&self, bytes: usize) -> f64 {
        let tx = match self.bandwidth_bps {
            Some(bw) => (bytes as f64) * 8.0 / bw,
            None => 0.0,
        };
        self.latency_s + tx
    }
}

/// Counters for one endpoint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostMeter {
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub messages_sent: u64,
    pub rounds: u64,
    #[serde(skip)]
    last_was_recv: bool,
}

impl CostMeter {
    fn new() -> Self {
        Self {
            last_was_recv: true,
            ..Default::default()
        }
    }

    fn on_send(&mut self, frame_bytes: usize) {
        self.bytes_sent += frame_bytes as u64;
        self.messages_sent += 1;
        if self.last_was_recv {
            self.rounds += 1;
        }
        self.last_was_recv = false;
    }

    fn on_recv(&mut self, frame_bytes: usize) {
        self.bytes_received += frame_bytes as u64;
        self.last_was_recv = true;
    }
}

/// A payload plus the virtual arrival stamp (in-process only).
#[derive(Debug, Clone)]
pub struct Frame {
    pub payload: Vec<u8>,
    pub stamp: f64,
}

/// A raw bidirectional frame pipe.
pub trait Link: Send {
    fn send_frame(&mut self, frame: Frame) -> Result<(), TransportError>;
    fn recv_frame(&mut self, timeout: Option<Duration>) -> Result<Frame, TransportError>;
    /// Whether frames carry the sender's virtual stamp.
    fn carries_stamp(&self) -> bool;
}

pub struct InProcLink {
    peer: Role,
    tx: Sender<Frame>,
    rx: Receiver<Frame>,
}

/// Connected pair of in-process links: `(endpoint held by a, endpoint held by b)`.
pub fn in_process_pair(a: Role, b: Role) -> (InProcLink, InProcLink) {
    let (tx_ab, rx_ab) = mpsc::channel();
    let (tx_ba, rx_ba) = mpsc::channel();
    (
        InProcLink {
            peer: b,
            tx: tx_ab,
            rx: rx_ba,
        },
        InProcLink {
            peer: a,
            tx: tx_ba,
            rx: rx_ab,
        },
    )
}

impl Link for InProcLink {
    fn send_frame(&mut self, frame: Frame) -> Result<(), TransportError> {
        if frame.payload.len() > MAX_FRAME_BYTES {
            return Err(TransportError::Frame(format!(
                "payload of {} bytes exceeds limit",
                frame.payload.len()
            )));
        }
        self.tx
            .send(frame)
            .map_err(|_| TransportError::Closed(self.peer))
    }

    fn recv_frame(&mut self, timeout: Option<Duration>) -> Result<Frame, TransportError> {
        match timeout {
            None => self.rx.recv().map_err(|_| TransportError::Closed(self.peer)),
            Some(t) => self.rx.recv_timeout(t).map_err(|e| match e {
                RecvTimeoutError::Timeout => TransportError::Timeout(self.peer),
                RecvTimeoutError::Disconnected => TransportError::Closed(self.peer),
            }),
        }
    }

    fn carries_stamp(&self) -> bool {
        true
    }
}

/// TCP link. Writes go through a background thread so that both sides of a
/// symmetric exchange can send before receiving without filling the socket
/// buffers and deadlocking.
pub struct TcpLink {
    peer: Role,
    reader: BufReader<TcpStream>,
    writer: Option<Sender<Vec<u8>>>,
    writer_thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl TcpLink {
    pub fn new(peer: Role, stream: TcpStream) -> Result<Self, TransportError> {
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        let (tx, rx) = mpsc::channel::<Vec<u8>>();
        let writer_thread = std::thread::spawn(move || {
            let mut w = BufWriter::new(stream);
            while let Ok(first) = rx.recv() {
                w.write_all(&first)?;
                for more in rx.try_iter() {
                    w.write_all(&more)?;
                }
                w.flush()?;
            }
            w.flush()?;
            w.get_ref().shutdown(std::net::Shutdown::Write)
        });
        Ok(Self {
            peer,
            reader,
            writer: Some(tx),
            writer_thread: Some(writer_thread),
        })
    }
}

impl Drop for TcpLink {
    fn drop(&mut self) {
        self.writer.take();
        if let Some(t) = self.writer_thread.take() {
            let _ = t.join();
        }
    }
}

impl Link for TcpLink {
    fn send_frame(&mut self, frame: Frame) -> Result<(), TransportError> {
        let len = frame.payload.len();
        if len > MAX_FRAME_BYTES {
            return Err(TransportError::Frame(format!(
                "payload of {len} bytes exceeds limit"
            )));
        }
        let mut buf = Vec::with_capacity(FRAME_HEADER_BYTES + len);
        buf.extend_from_slice(&(len as u32).to_le_bytes());
        buf.extend_from_slice(&frame.payload);
        let closed = match &self.writer {
            Some(tx) => tx.send(buf).is_err(),
            None => true,
        };
        if closed {
            // The writer thread exited; surface its I/O error if it had one.
            self.writer.take();
            if let Some(t) = self.writer_thread.take() {
                if let Ok(Err(e)) = t.join() {
                    return Err(TransportError::Io(e));
                }
            }
            return Err(TransportError::Closed(self.peer));
        }
        Ok(())
    }

    fn recv_frame(&mut self, timeout: Option<Duration>) -> Result<Frame, TransportError> {
        self.reader.get_ref().set_read_timeout(timeout)?;
        let mut hdr = [0u8; FRAME_HEADER_BYTES];
        self.reader.read_exact(&mut hdr).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof | std::io::ErrorKind::ConnectionReset => {
                TransportError::Closed(self.peer)
            }
            std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut => {
                TransportError::Timeout(self.peer)
            }
            _ => TransportError::Io(e),
        })?;
        let len = u32::from_le_bytes(hdr) as usize;
        if len > MAX_FRAME_BYTES {
            return Err(TransportError::Frame(format!("declared length {len}")));
        }
        let mut payload = vec![0u8; len];
        self.reader.read_exact(&mut payload)?;
        Ok(Frame {
            payload,
            stamp: 0.0,
        })
    }

    fn carries_stamp(&self) -> bool {
        false
    }
}

/// Metered endpoint towards one remote role.
pub struct Endpoint {
    peer: Role,
    link: Box<dyn Link>,
    meter: CostMeter,
    profile: NetProfile,
    clock: f64,
    realtime: bool,
    timeout: Option<Duration>,
}

impl Endpoint {
    pub fn new(peer: Role, link: Box<dyn Link>) -> Self {
        Self {
            peer,
            link,
            meter: CostMeter::new(),
            profile: NetProfile::unlimited(),
            clock: 0.0,
            realtime: false,
            timeout: None,
        }
    }

    pub fn with_profile(mut self, profile: NetProfile) -> Self {
        self.profile = profile;
        self
    }

    /// Actually sleep for the modeled transfer time on every send.
    pub fn with_realtime(mut self, realtime: bool) -> Self {
        self.realtime = realtime;
        self
    }

    pub fn with_timeout(mut self, timeout: Option<Duration>) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn peer(&self) -> Role {
        self.peer
    }

    pub fn meter(&self) -> CostMeter {
        self.meter
    }

    pub fn profile(&self) -> NetProfile {
        self.profile
    }

    /// Virtual seconds elapsed on this endpoint.
    pub fn clock(&self) -> f64 {
        self.clock
    }

    /// Resets counters and the clock; only valid between protocol sessions.
    pub fn reset(&mut self) {
        self.meter = CostMeter::new();
        self.clock = 0.0;
    }

    pub fn send(&mut self, payload: Vec<u8>) -> Result<(), TransportError> {
        let frame_bytes = payload.len() + FRAME_HEADER_BYTES;
        let cost = self.profile.transfer_seconds(frame_bytes);
        self.clock += cost;
        if self.realtime && cost > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(cost));
        }
        self.link.send_frame(Frame {
            payload,
            stamp: self.clock,
        })?;
        self.meter.on_send(frame_bytes);
        Ok(())
    }

    pub fn recv(&mut self) -> Result<Vec<u8>, TransportError> {
        let frame = self.link.recv_frame(self.timeout)?;
        if self.link.carries_stamp() && frame.stamp > self.clock {
            self.clock = frame.stamp;
        }
        self.meter.on_recv(frame.payload.len() + FRAME_HEADER_BYTES);
        Ok(frame.payload)
    }
}

/// Connected in-process endpoint pair with a common network profile.
pub fn endpoint_pair(a: Role, b: Role, profile: NetProfile) -> (Endpoint, Endpoint) {
    let (la, lb) = in_process_pair(a, b);
    (
        Endpoint::new(b, Box::new(la)).with_profile(profile),
        Endpoint::new(a, Box::new(lb)).with_profile(profile),
    )
}
