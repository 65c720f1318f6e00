//! TCP wiring: one role per process. Every connection opens with a hello
//! frame naming the sender's role and ring parameters.

use std::io::Read;
use std::net::{TcpListener, TcpStream};
use std::time::{Duration, Instant};

use sgb_core::dealer::{Dealer, DealerStats};
use sgb_core::protocols::Party;
use sgb_core::ring::RingConfig;
use sgb_core::session::{make_party, role_rng, SessionOptions};
use sgb_core::transport::{Endpoint, Role, TcpLink, FRAME_HEADER_BYTES};

use crate::CliError;

const MAGIC: &[u8; 4] = b"SGB1";
const CONNECT_WAIT: Duration = Duration::from_secs(30);

fn hello(role: Role, ring: &RingConfig) -> Vec<u8> {
    let mut v = MAGIC.to_vec();
    v.push(role.index() as u8);
    for x in [ring.bits, ring.frac_bits, ring.sigma] {
        v.extend_from_slice(&x.to_le_bytes());
    }
    v
}

fn read_hello(bytes: &[u8], ring: &RingConfig) -> Result<Role, CliError> {
    if bytes.len() != 17 || &bytes[..4] != MAGIC {
        return Err(CliError::Protocol("peer did not send a valid hello".into()));
    }
    let role = Role::from_index(bytes[4] as usize)
        .ok_or_else(|| CliError::Protocol(format!("peer announced unknown role {}", bytes[4])))?;
    let word = |i: usize| u32::from_le_bytes(bytes[5 + 4 * i..9 + 4 * i].try_into().unwrap());
    let theirs = RingConfig {
        bits: word(0),
        frac_bits: word(1),
        sigma: word(2),
    };
    if theirs != *ring {
        return Err(CliError::Protocol(format!("{role} uses ring {theirs:?}, expected {ring:?}")));
    }
    Ok(role)
}

/// One length-prefixed frame read straight off the socket.
fn read_frame(stream: &mut TcpStream) -> Result<Vec<u8>, CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("reading hello: {e}"));
    let mut len = [0u8; FRAME_HEADER_BYTES];
    stream.read_exact(&mut len).map_err(io)?;
    let len = u32::from_le_bytes(len) as usize;
    if len > 64 {
        return Err(CliError::Protocol("oversized hello".into()));
    }
    let mut buf = vec![0u8; len];
    stream.read_exact(&mut buf).map_err(io)?;
    Ok(buf)
}

fn connect(addr: &str, wait: Duration) -> Result<TcpStream, CliError> {
    let start = Instant::now();
    loop {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) if start.elapsed() < wait => {
                log::debug!("connecting to {addr}: {e}; retrying");
                std::thread::sleep(Duration::from_millis(100));
            }
            Err(e) => return Err(CliError::Io(format!("cannot connect to {addr}: {e}"))),
        }
    }
}

fn endpoint(peer: Role, stream: TcpStream, timeout: Option<Duration>) -> Result<Endpoint, CliError> {
    let link = TcpLink::new(peer, stream).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(Endpoint::new(peer, Box::new(link)).with_timeout(timeout))
}

/// Sends our hello and checks the peer's.
fn greet(ep: &mut Endpoint, me: Role, expect: Role, ring: &RingConfig) -> Result<(), CliError> {
    ep.send(hello(me, ring)).map_err(sgb_core::Error::from)?;
    let got = read_hello(&ep.recv().map_err(sgb_core::Error::from)?, ring)?;
    if got != expect {
        return Err(CliError::Protocol(format!("expected {expect}, got {got}")));
    }
    Ok(())
}

/// Connects a party: A listens on `peer_addr` and B connects to it; both
/// connect to the dealer.
pub fn connect_party(
    role: Role,
    peer_addr: &str,
    dealer_addr: &str,
    opts: &SessionOptions,
) -> Result<Party, CliError> {
    let wait = opts.timeout.unwrap_or(CONNECT_WAIT);
    let mut dealer = endpoint(Role::Dealer, connect(dealer_addr, wait)?, opts.timeout)?;
    greet(&mut dealer, role, Role::Dealer, &opts.ring)?;
    let stream = match role {
        Role::PartyA => {
            let listener = TcpListener::bind(peer_addr)
                .map_err(|e| CliError::Io(format!("cannot listen on {peer_addr}: {e}")))?;
            log::info!("party A waiting for party B on {peer_addr}");
            listener.accept().map_err(|e| CliError::Io(e.to_string()))?.0
        }
        _ => connect(peer_addr, wait)?,
    };
    let mut peer = endpoint(role.peer(), stream, opts.timeout)?;
    greet(&mut peer, role, role.peer(), &opts.ring)?;
    let peer = peer.with_profile(opts.profile);
    Ok(make_party(role, opts, peer, dealer))
}

/// Accepts both parties on `addr` and serves one session.
pub fn serve_dealer(addr: &str, ring: RingConfig, seed: Option<u64>, timeout: Option<Duration>) -> Result<DealerStats, CliError> {
    let listener = TcpListener::bind(addr).map_err(|e| CliError::Io(format!("cannot listen on {addr}: {e}")))?;
    log::info!("dealer listening on {addr}");
    let mut slots: [Option<Endpoint>; 2] = [None, None];
    while slots.iter().any(Option::is_none) {
        let (mut stream, from) = listener.accept().map_err(|e| CliError::Io(e.to_string()))?;
        stream.set_read_timeout(timeout).map_err(|e| CliError::Io(e.to_string()))?;
        let got = read_hello(&read_frame(&mut stream)?, &ring)?;
        if got == Role::Dealer || slots[got.index()].is_some() {
            return Err(CliError::Protocol(format!("unexpected connection from {got} at {from}")));
        }
        let mut ep = endpoint(got, stream, timeout)?;
        ep.send(hello(Role::Dealer, &ring)).map_err(sgb_core::Error::from)?;
        log::info!("{got} connected from {from}");
        slots[got.index()] = Some(ep);
    }
    let [a, b] = slots.map(Option::unwrap);
    let dealer = Dealer::new(ring, role_rng(seed, Role::Dealer));
    Ok(dealer.serve(a, b)?)
}
