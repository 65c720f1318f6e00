//! In-process sessions: the dealer and both parties as three threads joined
//! by metered channels.

use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::dealer::{Dealer, DealerClient, DealerStats, PoolSizes};
use crate::protocols::{Party, PhaseStat};
use crate::ring::RingConfig;
use crate::transport::{endpoint_pair, Endpoint, NetProfile, Role, TransportError};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct SessionOptions {
    pub ring: RingConfig,
    pub profile: NetProfile,
    /// Fixed seed for every random choice; `None` draws from OS entropy.
    pub seed: Option<u64>,
    pub pools: PoolSizes,
    pub div_iters: usize,
    pub timeout: Option<Duration>,
}

impl Default for SessionOptions {
    fn default() -> Self {
        Self {
            ring: RingConfig::default(),
            profile: NetProfile::unlimited(),
            seed: None,
            pools: PoolSizes::default(),
            div_iters: 2,
            timeout: None,
        }
    }
}

impl SessionOptions {
    pub fn seeded(seed: u64) -> Self {
        Self {
            seed: Some(seed),
            ..Self::default()
        }
    }
}

/// RNG for one role, derived from the session seed.
pub fn role_rng(seed: Option<u64>, role: Role) -> ChaCha20Rng {
    match seed {
        Some(s) => {
            let mut key = [0u8; 32];
            key[..8].copy_from_slice(&s.to_le_bytes());
            key[8] = role.index() as u8 + 1;
            ChaCha20Rng::from_seed(key)
        }
        None => ChaCha20Rng::from_entropy(),
    }
}

/// Counters of one party over a whole session.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PartyStats {
    pub bytes_sent: u64,
    pub messages_sent: u64,
    pub rounds: u64,
    pub virtual_seconds: f64,
    pub offline_bytes: u64,
    pub ciphertexts_sent: u64,
}

impl PartyStats {
    pub fn of(party: &Party) -> Self {
        let m = party.peer_endpoint().meter();
        Self {
            bytes_sent: m.bytes_sent,
            messages_sent: m.messages_sent,
            rounds: m.rounds,
            virtual_seconds: party.peer_endpoint().clock(),
            offline_bytes: party.dealer_endpoint().meter().bytes_received,
            ciphertexts_sent: party.ciphertexts_sent(),
        }
    }
}

/// Session-wide view of one phase: bytes and ciphertexts summed over both
/// parties, rounds and virtual time as the maximum of the two.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub name: String,
    pub bytes: u64,
    pub rounds: u64,
    pub virtual_seconds: f64,
    pub offline_bytes: u64,
    pub ciphertexts: u64,
}

pub fn merge_phases(a: &[PhaseStat], b: &[PhaseStat]) -> Vec<PhaseSummary> {
    let mut out: Vec<PhaseSummary> = Vec::new();
    for p in a.iter().chain(b) {
        let idx = match out.iter().position(|s| s.name == p.name) {
            Some(i) => i,
            None => {
                out.push(PhaseSummary {
                    name: p.name.clone(),
                    ..Default::default()
                });
                out.len() - 1
            }
        };
        let s = &mut out[idx];
        s.bytes += p.bytes;
        s.rounds = s.rounds.max(p.rounds);
        s.virtual_seconds = s.virtual_seconds.max(p.virtual_seconds);
        s.offline_bytes += p.offline_bytes;
        s.ciphertexts += p.ciphertexts;
    }
    out
}

pub struct SessionOutput<TA, TB> {
    pub a: TA,
    pub b: TB,
    pub phases: Vec<PhaseSummary>,
    pub stats: [PartyStats; 2],
    pub dealer: DealerStats,
}

impl<TA, TB> SessionOutput<TA, TB> {
    pub fn phase(&self, name: &str) -> Option<&PhaseSummary> {
        self.phases.iter().find(|p| p.name == name)
    }

    pub fn total_bytes(&self) -> u64 {
        self.stats[0].bytes_sent + self.stats[1].bytes_sent
    }
}

/// Builds a party from its two endpoints.
pub fn make_party(role: Role, opts: &SessionOptions, peer: Endpoint, dealer: Endpoint) -> Party {
    let peer = peer.with_timeout(opts.timeout);
    let dealer = dealer.with_timeout(opts.timeout);
    let client = DealerClient::new(role, opts.ring, dealer, opts.pools);
    Party::new(role, opts.ring, peer, client, role_rng(opts.seed, role)).with_div_iters(opts.div_iters)
}

fn is_closed(e: &Error) -> bool {
    matches!(e, Error::Transport(TransportError::Closed(_)))
}

/// Runs `fa` as party A and `fb` as party B against a dealer thread.
///
/// If one party fails, its channels close and the other side observes a
/// closed channel; the original error is the one reported.
pub fn run_session<TA, TB, FA, FB>(opts: &SessionOptions, fa: FA, fb: FB) -> Result<SessionOutput<TA, TB>>
where
    TA: Send,
    TB: Send,
    FA: FnOnce(&mut Party) -> Result<TA> + Send,
    FB: FnOnce(&mut Party) -> Result<TB> + Send,
{
    opts.ring.validate()?;
    let (ab, ba) = endpoint_pair(Role::PartyA, Role::PartyB, opts.profile);
    let (da, ad) = endpoint_pair(Role::Dealer, Role::PartyA, NetProfile::unlimited());
    let (db, bd) = endpoint_pair(Role::Dealer, Role::PartyB, NetProfile::unlimited());
    let dealer = Dealer::new(opts.ring, role_rng(opts.seed, Role::Dealer));
    let mut pa = make_party(Role::PartyA, opts, ab, ad);
    let mut pb = make_party(Role::PartyB, opts, ba, bd);

    // Each thread drops its party when done so a failing side closes its
    // channels and unblocks the others.
    let ((ra, sa, pha), (rb, sb, phb), rd) = std::thread::scope(|s| {
        let hd = s.spawn(move || dealer.serve(da, db));
        let ha = s.spawn(move || {
            let r = fa(&mut pa);
            (r, PartyStats::of(&pa), pa.phases().to_vec())
        });
        let hb = s.spawn(move || {
            let r = fb(&mut pb);
            (r, PartyStats::of(&pb), pb.phases().to_vec())
        });
        let a = ha.join().expect("party A panicked");
        let b = hb.join().expect("party B panicked");
        (a, b, hd.join().expect("dealer panicked"))
    });
    let stats = [sa, sb];
    let phases = merge_phases(&pha, &phb);
    match (ra, rb) {
        (Ok(a), Ok(b)) => Ok(SessionOutput {
            a,
            b,
            phases,
            stats,
            dealer: rd?,
        }),
        (Err(e), Ok(_)) | (Ok(_), Err(e)) => Err(e),
        (Err(ea), Err(eb)) => Err(if is_closed(&ea) { eb } else { ea }),
    }
}
