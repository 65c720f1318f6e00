//! Offline correlated randomness.
//!
//! The dealer answers batch requests from both parties with shares of Beaver
//! triples, bit-level AND triples, arithmetic/Boolean bit pairs, permutation
//! triples and owner-masked matrix triples. Requests carry only a header
//! `(kind, count, n, aux)`, so the dealer never sees protocol inputs.
//!
//! Parties draw from local pools and pull a refill when a pool runs dry. Both
//! parties consume randomness in the same order, so their refill requests
//! always match; the dealer rejects mismatched requests.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::codec::{Reader, Writer};
use crate::permutation::Permutation;
use crate::ring::{RingConfig, RingValue};
use crate::transport::{Endpoint, Role, TransportError};
use crate::{Error, Result};

/// One party's share of a Beaver triple `c = a * b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BeaverShare {
    pub a: RingValue,
    pub b: RingValue,
    pub c: RingValue,
}

/// 64 bit-level AND triples packed into words: `w = u & v` after XOR reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AndTripleShare {
    pub u: u64,
    pub v: u64,
    pub w: u64,
}

/// One party's share of a random bit held both as an XOR share and as an
/// additive share. The additive share is at unit scale (the bit is 0 or 1);
/// multiply by `2^f` locally for a fixed-point encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BitPairShare {
    pub bit: bool,
    pub arith: RingValue,
}

/// One party's share of a permutation triple `(pi1, <R>, <pi1(R)>)`.
///
/// Not `Clone`: a triple is consumed by exactly one permutation.
#[derive(Debug, PartialEq, Eq)]
pub struct PermTripleShare {
    /// `Some` only for the permuting party.
    pub pi1: Option<Permutation>,
    pub r: Vec<RingValue>,
    pub pi_r: Vec<RingValue>,
}

/// Owner-masked matrix triple for `Z_X = G * S_X` with `G` of shape
/// `rows x m` and one indicator matrix `S_X` of shape `m x cols_X` per owner.
///
/// The owner of `S_X` learns the mask `A_X` in clear, delivered as a seed
/// expanded with [`expand_mask`]; `B` and `C_X = B * A_X` are additively
/// shared.
#[derive(Debug, PartialEq, Eq)]
pub struct MatrixTripleShare {
    pub rows: usize,
    pub m: usize,
    pub cols: [usize; 2],
    /// Share of `B`, row-major `rows x m`.
    pub b: Vec<RingValue>,
    /// Seed of this party's own mask `A_self` (row-major `m x cols[self]`).
    pub mask_seed: [u8; 32],
    /// Shares of `C_A` and `C_B`, row-major `rows x cols[X]`.
    pub c: [Vec<RingValue>; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Request {
    Beaver { count: usize },
    AndWords { count: usize },
    BitPairs { count: usize },
    Perm { n: usize, owner: Role },
    MaskedMatrix { rows: usize, m: usize, cols_a: usize, cols_b: usize },
}

impl Request {
    fn encode(&self) -> Vec<u8> {
        let (kind, count, n, aux) = match *self {
            Request::Beaver { count } => (1u8, count, 0, 0),
            Request::AndWords { count } => (2, count, 0, 0),
            Request::BitPairs { count } => (3, count, 0, 0),
            Request::Perm { n, owner } => (4, 1, n, owner.index()),
            Request::MaskedMatrix { rows, m, cols_a, cols_b } => {
                (5, rows, m, (cols_a << 32) | cols_b)
            }
        };
        let mut w = Writer::with_capacity(25);
        w.u8(kind).u64(count as u64).u64(n as u64).u64(aux as u64);
        w.finish()
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let kind = r.u8()?;
        let count = r.u64()? as usize;
        let n = r.u64()? as usize;
        let aux = r.u64()? as usize;
        r.finish()?;
        Ok(match kind {
            1 => Request::Beaver { count },
            2 => Request::AndWords { count },
            3 => Request::BitPairs { count },
            4 => Request::Perm {
                n,
                owner: Role::from_index(aux)
                    .filter(|r| *r != Role::Dealer)
                    .ok_or_else(|| Error::Protocol(format!("bad permutation owner {aux}")))?,
            },
            5 => Request::MaskedMatrix {
                rows: count,
                m: n,
                cols_a: aux >> 32,
                cols_b: aux & 0xffff_ffff,
            },
            k => return Err(Error::Protocol(format!("unknown randomness kind {k}"))),
        })
    }
}

fn split<R: Rng>(ring: &RingConfig, rng: &mut R, v: RingValue) -> (RingValue, RingValue) {
    let r = ring.random(rng);
    (ring.sub(v, r), r)
}

/// Shares of a triple with forced `a`, `b`.
pub fn beaver_from<R: Rng>(ring: &RingConfig, rng: &mut R, a: RingValue, b: RingValue) -> [BeaverShare; 2] {
    let c = ring.mul(a, b);
    let (a0, a1) = split(ring, rng, a);
    let (b0, b1) = split(ring, rng, b);
    let (c0, c1) = split(ring, rng, c);
    [
        BeaverShare { a: a0, b: b0, c: c0 },
        BeaverShare { a: a1, b: b1, c: c1 },
    ]
}

pub fn beaver_batch<R: Rng>(ring: &RingConfig, rng: &mut R, count: usize) -> [Vec<BeaverShare>; 2] {
    let mut out = [Vec::with_capacity(count), Vec::with_capacity(count)];
    for _ in 0..count {
        let a = ring.random(rng);
        let b = ring.random(rng);
        let [s0, s1] = beaver_from(ring, rng, a, b);
        out[0].push(s0);
        out[1].push(s1);
    }
    out
}

pub fn and_batch<R: Rng>(rng: &mut R, count: usize) -> [Vec<AndTripleShare>; 2] {
    let mut out = [Vec::with_capacity(count), Vec::with_capacity(count)];
    for _ in 0..count {
        let (u, v): (u64, u64) = (rng.gen(), rng.gen());
        let w = u & v;
        let (u0, v0, w0): (u64, u64, u64) = (rng.gen(), rng.gen(), rng.gen());
        out[0].push(AndTripleShare { u: u0, v: v0, w: w0 });
        out[1].push(AndTripleShare {
            u: u ^ u0,
            v: v ^ v0,
            w: w ^ w0,
        });
    }
    out
}

pub fn bit_pair_from<R: Rng>(ring: &RingConfig, rng: &mut R, bit: bool) -> [BitPairShare; 2] {
    let b0: bool = rng.gen();
    let (a0, a1) = split(ring, rng, RingValue(bit as u128));
    [
        BitPairShare { bit: b0, arith: a0 },
        BitPairShare {
            bit: bit ^ b0,
            arith: a1,
        },
    ]
}

pub fn bit_pairs<R: Rng>(ring: &RingConfig, rng: &mut R, count: usize) -> [Vec<BitPairShare>; 2] {
    let mut out = [Vec::with_capacity(count), Vec::with_capacity(count)];
    for _ in 0..count {
        let bit = rng.gen();
        let [s0, s1] = bit_pair_from(ring, rng, bit);
        out[0].push(s0);
        out[1].push(s1);
    }
    out
}

/// Permutation triple of size `n`; `forced` pins `pi1` (tests only).
pub fn perm_triple<R: Rng>(
    ring: &RingConfig,
    rng: &mut R,
    n: usize,
    owner: Role,
    forced: Option<Permutation>,
) -> [PermTripleShare; 2] {
    let pi1 = forced.unwrap_or_else(|| Permutation::random(n, rng));
    assert_eq!(pi1.len(), n, "forced permutation has wrong size");
    let r: Vec<RingValue> = (0..n).map(|_| ring.random(rng)).collect();
    let pi_r = pi1.apply(&r);
    let (r0, r1): (Vec<_>, Vec<_>) = r.iter().map(|&v| split(ring, rng, v)).unzip();
    let (p0, p1): (Vec<_>, Vec<_>) = pi_r.iter().map(|&v| split(ring, rng, v)).unzip();
    let owner_idx = owner.index();
    let mut pi1 = Some(pi1);
    let mut mk = |idx: usize, r: Vec<RingValue>, pi_r: Vec<RingValue>| PermTripleShare {
        pi1: if idx == owner_idx { pi1.take() } else { None },
        r,
        pi_r,
    };
    let s0 = mk(0, r0, p0);
    let s1 = mk(1, r1, p1);
    [s0, s1]
}

/// `out[r][c] += sum_i left[r][i] * right[i][c]` over the ring (row-major).
pub(crate) fn matmul_acc(
    ring: &RingConfig,
    left: &[RingValue],
    right: &[RingValue],
    rows: usize,
    inner: usize,
    cols: usize,
    out: &mut [RingValue],
) {
    let mut acc = vec![0u128; cols];
    for r in 0..rows {
        acc.iter_mut().for_each(|a| *a = 0);
        for i in 0..inner {
            let l = left[r * inner + i].0;
            if l == 0 {
                continue;
            }
            let row = &right[i * cols..(i + 1) * cols];
            for (a, v) in acc.iter_mut().zip(row) {
                *a = a.wrapping_add(l.wrapping_mul(v.0));
            }
        }
        for (o, a) in out[r * cols..(r + 1) * cols].iter_mut().zip(&acc) {
            *o = ring.reduce(o.0.wrapping_add(*a));
        }
    }
}

/// Expands a mask seed into `len` uniform ring elements.
pub fn expand_mask(ring: &RingConfig, seed: [u8; 32], len: usize) -> Vec<RingValue> {
    let mut rng = ChaCha20Rng::from_seed(seed);
    (0..len).map(|_| ring.random(&mut rng)).collect()
}

pub fn masked_matrix<R: Rng>(
    ring: &RingConfig,
    rng: &mut R,
    rows: usize,
    m: usize,
    cols: [usize; 2],
) -> [MatrixTripleShare; 2] {
    let b: Vec<RingValue> = (0..rows * m).map(|_| ring.random(rng)).collect();
    let (b0, b1): (Vec<_>, Vec<_>) = b.iter().map(|&v| split(ring, rng, v)).unzip();
    let seeds: [[u8; 32]; 2] = [rng.gen(), rng.gen()];
    let masks: [Vec<RingValue>; 2] = [0, 1].map(|x| expand_mask(ring, seeds[x], m * cols[x]));
    let mut c_shares: [[Vec<RingValue>; 2]; 2] = Default::default();
    for x in 0..2 {
        let mut c = vec![RingValue(0); rows * cols[x]];
        matmul_acc(ring, &b, &masks[x], rows, m, cols[x], &mut c);
        let (c0, c1): (Vec<_>, Vec<_>) = c.iter().map(|&v| split(ring, rng, v)).unzip();
        c_shares[0][x] = c0;
        c_shares[1][x] = c1;
    }
    let [cs0, cs1] = c_shares;
    [
        MatrixTripleShare {
            rows,
            m,
            cols,
            b: b0,
            mask_seed: seeds[0],
            c: cs0,
        },
        MatrixTripleShare {
            rows,
            m,
            cols,
            b: b1,
            mask_seed: seeds[1],
            c: cs1,
        },
    ]
}

fn seed_words(seed: &[u8; 32]) -> [u64; 4] {
    std::array::from_fn(|i| u64::from_le_bytes(seed[8 * i..8 * i + 8].try_into().unwrap()))
}

/// Totals reported by a finished dealer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DealerStats {
    pub requests: u64,
    pub bytes_sent: u64,
}

/// Software dealer. Holds only its RNG; it has no receive path for data.
pub struct Dealer {
    ring: RingConfig,
    rng: ChaCha20Rng,
}

impl Dealer {
    pub fn new(ring: RingConfig, rng: ChaCha20Rng) -> Self {
        Self { ring, rng }
    }

    fn respond(&mut self, req: Request) -> [Vec<u8>; 2] {
        let ring = self.ring;
        let rng = &mut self.rng;
        match req {
            Request::Beaver { count } => beaver_batch(&ring, rng, count).map(|shares| {
                let mut w = Writer::with_capacity(count * 3 * ring.byte_len());
                for s in &shares {
                    w.ring(&ring, s.a).ring(&ring, s.b).ring(&ring, s.c);
                }
                w.finish()
            }),
            Request::AndWords { count } => and_batch(rng, count).map(|shares| {
                let mut w = Writer::with_capacity(count * 24);
                for s in &shares {
                    w.u64(s.u).u64(s.v).u64(s.w);
                }
                w.finish()
            }),
            Request::BitPairs { count } => bit_pairs(&ring, rng, count).map(|shares| {
                let mut words = vec![0u64; count.div_ceil(64)];
                for (i, s) in shares.iter().enumerate() {
                    words[i / 64] |= (s.bit as u64) << (i % 64);
                }
                let arith: Vec<RingValue> = shares.iter().map(|s| s.arith).collect();
                let mut w = Writer::default();
                w.u64s(&words).rings(&ring, &arith);
                w.finish()
            }),
            Request::Perm { n, owner } => perm_triple(&ring, rng, n, owner, None).map(|share| {
                let mut w = Writer::default();
                match &share.pi1 {
                    Some(p) => w.u8(1).u32s(p.as_slice()),
                    None => w.u8(0),
                };
                w.rings(&ring, &share.r).rings(&ring, &share.pi_r);
                w.finish()
            }),
            Request::MaskedMatrix { rows, m, cols_a, cols_b } => {
                masked_matrix(&ring, rng, rows, m, [cols_a, cols_b]).map(|share| {
                    let mut w = Writer::default();
                    w.rings(&ring, &share.b)
                        .u64s(&seed_words(&share.mask_seed))
                        .rings(&ring, &share.c[0])
                        .rings(&ring, &share.c[1]);
                    w.finish()
                })
            }
        }
    }

    /// Serves both parties until either closes its channel.
    pub fn serve(mut self, mut a: Endpoint, mut b: Endpoint) -> Result<DealerStats> {
        let mut stats = DealerStats::default();
        loop {
            let req_a = match a.recv() {
                Ok(bytes) => Request::decode(&bytes)?,
                Err(TransportError::Closed(_)) => break,
                Err(e) => return Err(e.into()),
            };
            let req_b = match b.recv() {
                Ok(bytes) => Request::decode(&bytes)?,
                Err(TransportError::Closed(_)) => break,
                Err(e) => return Err(e.into()),
            };
            if req_a != req_b {
                return Err(Error::Protocol(format!(
                    "dealer requests diverged: {req_a:?} vs {req_b:?}"
                )));
            }
            let [ra, rb] = self.respond(req_a);
            stats.requests += 1;
            // A party that hung up after its last request is not an error.
            let _ = a.send(ra);
            let _ = b.send(rb);
        }
        stats.bytes_sent = a.meter().bytes_sent + b.meter().bytes_sent;
        Ok(stats)
    }
}

/// Pool batch sizes used when refilling from the dealer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSizes {
    pub beaver: usize,
    pub and_words: usize,
    pub bit_pairs: usize,
}

impl Default for PoolSizes {
    fn default() -> Self {
        Self {
            beaver: 1 << 14,
            and_words: 1 << 14,
            bit_pairs: 1 << 14,
        }
    }
}

/// Party-side view of the dealer: local pools plus the pull-based refill.
pub struct DealerClient {
    role: Role,
    ring: RingConfig,
    ep: Endpoint,
    sizes: PoolSizes,
    beaver: VecDeque<BeaverShare>,
    and_words: VecDeque<AndTripleShare>,
    bit_pairs: VecDeque<BitPairShare>,
    perm_triples_used: u64,
}

impl DealerClient {
    pub fn new(role: Role, ring: RingConfig, ep: Endpoint, sizes: PoolSizes) -> Self {
        Self {
            role,
            ring,
            ep,
            sizes,
            beaver: VecDeque::new(),
            and_words: VecDeque::new(),
            bit_pairs: VecDeque::new(),
            perm_triples_used: 0,
        }
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.ep
    }

    pub fn perm_triples_used(&self) -> u64 {
        self.perm_triples_used
    }

    fn request(&mut self, req: Request) -> Result<Vec<u8>> {
        self.ep.send(req.encode())?;
        Ok(self.ep.recv()?)
    }

    pub fn beaver(&mut self, n: usize) -> Result<Vec<BeaverShare>> {
        if self.beaver.len() < n {
            let count = (n - self.beaver.len()).max(self.sizes.beaver);
            let bytes = self.request(Request::Beaver { count })?;
            let mut r = Reader::new(&bytes);
            let vals = r.rings(&self.ring, 3 * count)?;
            r.finish()?;
            self.beaver.extend(vals.chunks_exact(3).map(|c| BeaverShare {
                a: c[0],
                b: c[1],
                c: c[2],
            }));
        }
        Ok(self.beaver.drain(..n).collect())
    }

    pub fn and_words(&mut self, n: usize) -> Result<Vec<AndTripleShare>> {
        if self.and_words.len() < n {
            let count = (n - self.and_words.len()).max(self.sizes.and_words);
            let bytes = self.request(Request::AndWords { count })?;
            let mut r = Reader::new(&bytes);
            let vals = r.u64s(3 * count)?;
            r.finish()?;
            self.and_words.extend(vals.chunks_exact(3).map(|c| AndTripleShare {
                u: c[0],
                v: c[1],
                w: c[2],
            }));
        }
        Ok(self.and_words.drain(..n).collect())
    }

    pub fn bit_pairs(&mut self, n: usize) -> Result<Vec<BitPairShare>> {
        if self.bit_pairs.len() < n {
            let count = (n - self.bit_pairs.len()).max(self.sizes.bit_pairs);
            let bytes = self.request(Request::BitPairs { count })?;
            let mut r = Reader::new(&bytes);
            let words = r.u64s(count.div_ceil(64))?;
            let arith = r.rings(&self.ring, count)?;
            r.finish()?;
            self.bit_pairs
                .extend(arith.into_iter().enumerate().map(|(i, a)| BitPairShare {
                    bit: (words[i / 64] >> (i % 64)) & 1 == 1,
                    arith: a,
                }));
        }
        Ok(self.bit_pairs.drain(..n).collect())
    }

    pub fn perm_triple(&mut self, n: usize, owner: Role) -> Result<PermTripleShare> {
        let bytes = self.request(Request::Perm { n, owner })?;
        let mut r = Reader::new(&bytes);
        let pi1 = match r.u8()? {
            1 => Some(
                Permutation::new(r.u32s(n)?)
                    .map_err(|e| Error::Protocol(format!("dealer sent bad permutation: {e}")))?,
            ),
            _ => None,
        };
        if pi1.is_some() != (owner == self.role) {
            return Err(Error::Protocol("permutation owner mismatch".into()));
        }
        let r_sh = r.rings(&self.ring, n)?;
        let pi_r = r.rings(&self.ring, n)?;
        r.finish()?;
        self.perm_triples_used += 1;
        Ok(PermTripleShare {
            pi1,
            r: r_sh,
            pi_r,
        })
    }

    pub fn masked_matrix(&mut self, rows: usize, m: usize, cols: [usize; 2]) -> Result<MatrixTripleShare> {
        let bytes = self.request(Request::MaskedMatrix {
            rows,
            m,
            cols_a: cols[0],
            cols_b: cols[1],
        })?;
        let mut r = Reader::new(&bytes);
        let b = r.rings(&self.ring, rows * m)?;
        let words = r.u64s(4)?;
        let mut mask_seed = [0u8; 32];
        for (chunk, w) in mask_seed.chunks_exact_mut(8).zip(&words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        let c0 = r.rings(&self.ring, rows * cols[0])?;
        let c1 = r.rings(&self.ring, rows * cols[1])?;
        r.finish()?;
        Ok(MatrixTripleShare {
            rows,
            m,
            cols,
            b,
            mask_seed,
            c: [c0, c1],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{endpoint_pair, NetProfile};

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    #[test]
    fn beaver_triples_reconstruct() {
        let ring = RingConfig::default();
        let [s0, s1] = beaver_batch(&ring, &mut rng(1), 500);
        for (x, y) in s0.iter().zip(&s1) {
            let a = ring.add(x.a, y.a);
            let b = ring.add(x.b, y.b);
            assert_eq!(ring.mul(a, b), ring.add(x.c, y.c));
        }
        let [f0, f1] = beaver_from(&ring, &mut rng(2), RingValue(2), RingValue(3));
        assert_eq!(ring.add(f0.c, f1.c), RingValue(6));
    }

    /// Coarse chi-square screen on the byte distribution of issued shares.
    #[test]
    fn beaver_share_bytes_look_uniform() {
        let ring = RingConfig::default();
        let [s0, _] = beaver_batch(&ring, &mut rng(3), 10_000);
        let mut counts = [0u64; 256];
        for s in &s0 {
            for v in [s.a, s.b, s.c] {
                for byte in v.0.to_le_bytes() {
                    counts[byte as usize] += 1;
                }
            }
        }
        let total: u64 = counts.iter().sum();
        let expected = total as f64 / 256.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 255 degrees of freedom; 350 is far beyond the 99.9th percentile.
        assert!(chi2 < 350.0, "chi2 = {chi2}");
    }

    #[test]
    fn and_triples_hold() {
        let [s0, s1] = and_batch(&mut rng(4), 100);
        for (x, y) in s0.iter().zip(&s1) {
            assert_eq!((x.u ^ y.u) & (x.v ^ y.v), x.w ^ y.w);
        }
    }

    #[test]
    fn bit_pairs_agree() {
        let ring = RingConfig::default();
        for bit in [false, true] {
            let [p0, p1] = bit_pair_from(&ring, &mut rng(5), bit);
            assert_eq!(p0.bit ^ p1.bit, bit);
            assert_eq!(ring.add(p0.arith, p1.arith), RingValue(bit as u128));
            let scaled = ring.mul(ring.add(p0.arith, p1.arith), ring.encode(1.0).unwrap());
            assert_eq!(scaled, if bit { ring.encode(1.0).unwrap() } else { RingValue(0) });
        }
        let [s0, s1] = bit_pairs(&ring, &mut rng(6), 1000);
        for (x, y) in s0.iter().zip(&s1) {
            assert_eq!(ring.add(x.arith, y.arith), RingValue((x.bit ^ y.bit) as u128));
        }
    }

    fn reconstruct(ring: &RingConfig, x: &[RingValue], y: &[RingValue]) -> Vec<RingValue> {
        x.iter().zip(y).map(|(&a, &b)| ring.add(a, b)).collect()
    }

    #[test]
    fn perm_triple_invariants() {
        let ring = RingConfig::default();
        let [s0, s1] = perm_triple(&ring, &mut rng(7), 1, Role::PartyA, None);
        assert_eq!(s0.pi1.as_ref().unwrap(), &Permutation::identity(1));
        assert_eq!(reconstruct(&ring, &s0.r, &s1.r), reconstruct(&ring, &s0.pi_r, &s1.pi_r));

        let forced = Permutation::from_one_based(&[1, 3, 5, 2, 4]).unwrap();
        let [s0, s1] = perm_triple(&ring, &mut rng(8), 5, Role::PartyB, Some(forced.clone()));
        assert!(s0.pi1.is_none());
        assert_eq!(s1.pi1.as_ref(), Some(&forced));
        let r = reconstruct(&ring, &s0.r, &s1.r);
        let pr = reconstruct(&ring, &s0.pi_r, &s1.pi_r);
        for (i, &dest) in [0usize, 2, 4, 1, 3].iter().enumerate() {
            assert_eq!(pr[dest], r[i]);
        }

        let [s0, s1] = perm_triple(&ring, &mut rng(9), 64, Role::PartyA, None);
        let pi1 = s0.pi1.unwrap();
        let r = reconstruct(&ring, &s0.r, &s1.r);
        let pr = reconstruct(&ring, &s0.pi_r, &s1.pi_r);
        for i in 0..64 {
            assert_eq!(pr[pi1.as_slice()[i] as usize], r[i]);
        }
    }

    #[test]
    fn masked_matrix_relation() {
        let ring = RingConfig::default();
        let (rows, m, cols) = (2, 5, [3, 4]);
        let [s0, s1] = masked_matrix(&ring, &mut rng(10), rows, m, cols);
        let b = reconstruct(&ring, &s0.b, &s1.b);
        for (x, seed) in [s0.mask_seed, s1.mask_seed].into_iter().enumerate() {
            let mask = expand_mask(&ring, seed, m * cols[x]);
            let mut c = vec![RingValue(0); rows * cols[x]];
            matmul_acc(&ring, &b, &mask, rows, m, cols[x], &mut c);
            assert_eq!(c, reconstruct(&ring, &s0.c[x], &s1.c[x]));
        }
    }

    #[test]
    fn serve_over_channels() {
        let ring = RingConfig::default();
        let (da, pa) = endpoint_pair(Role::Dealer, Role::PartyA, NetProfile::unlimited());
        let (db, pb) = endpoint_pair(Role::Dealer, Role::PartyB, NetProfile::unlimited());
        let dealer = std::thread::spawn(move || Dealer::new(ring, rng(11)).serve(da, db));
        let sizes = PoolSizes {
            beaver: 4,
            and_words: 4,
            bit_pairs: 4,
        };
        let run = move |role: Role, ep: Endpoint| {
            std::thread::spawn(move || {
                let mut c = DealerClient::new(role, ring, ep, sizes);
                let t = c.beaver(10).unwrap();
                let t2 = c.beaver(2).unwrap();
                let bp = c.bit_pairs(3).unwrap();
                let p = c.perm_triple(6, Role::PartyB).unwrap();
                (t, t2, bp, p)
            })
        };
        let ha = run(Role::PartyA, pa);
        let hb = run(Role::PartyB, pb);
        let (ta, t2a, bpa, pa) = ha.join().unwrap();
        let (tb, t2b, bpb, pb) = hb.join().unwrap();
        let stats = dealer.join().unwrap().unwrap();
        assert_eq!(stats.requests, 3 + 1);
        for (x, y) in ta.iter().chain(&t2a).zip(tb.iter().chain(&t2b)) {
            assert_eq!(ring.mul(ring.add(x.a, y.a), ring.add(x.b, y.b)), ring.add(x.c, y.c));
        }
        for (x, y) in bpa.iter().zip(&bpb) {
            assert_eq!(ring.add(x.arith, y.arith), RingValue((x.bit ^ y.bit) as u128));
        }
        assert!(pa.pi1.is_none());
        let pi1 = pb.pi1.unwrap();
        assert_eq!(pi1.apply(&reconstruct(&ring, &pa.r, &pb.r)), reconstruct(&ring, &pa.pi_r, &pb.pi_r));
    }
}
