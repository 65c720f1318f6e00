//! Two-party arithmetic over additive shares.
//!
//! A [`Party`] owns its channel to the peer, its dealer client and its local
//! RNG. Shared vectors are plain `Vec<RingValue>` holding this party's
//! components; the peer holds the matching components in the same order.
//!
//! Two scales are in use. Fixed-point values carry `f` fractional bits.
//! Bits produced by comparisons are kept at unit scale (raw 0 or 1) so that
//! selecting with them via [`Party::mul_raw`] is exact.

use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{Reader, Writer};
use crate::dealer::DealerClient;
use crate::ring::{RingConfig, RingValue};
use crate::transport::{Endpoint, Role};
use crate::{Error, Result};

/// Linear initial approximation of `1/d` on `[0.5, 1)`: `w0 = 2.9142 - 2d`.
const GOLDSCHMIDT_W0: f64 = 2.9142;

/// Message kinds; every peer message starts with `(seq: u32, op: u8)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub(crate) enum Op {
    Input = 1,
    Reveal = 2,
    Beaver = 3,
    And = 4,
    BitOpen = 5,
    PermPlan = 6,
    PermMasked = 7,
    MatrixMasked = 8,
    HeKey = 10,
    HeCipher = 11,
    HeMasked = 12,
    Meta = 13,
}

/// One party's product share from the opened masks `e = x - a`, `f = y - b`:
/// `z_i = -i * e * f + f * x_i + e * y_i + c_i`.
pub fn beaver_share(
    ring: &RingConfig,
    index: usize,
    e: RingValue,
    f: RingValue,
    x: RingValue,
    y: RingValue,
    c: RingValue,
) -> RingValue {
    let mut z = ring.add(ring.add(ring.mul(f, x), ring.mul(e, y)), c);
    if index == 1 {
        z = ring.sub(z, ring.mul(e, f));
    }
    z
}

/// Traffic attributed to one named phase of a session.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseStat {
    pub name: String,
    /// Bytes this party sent to its peer, frame headers included.
    pub bytes: u64,
    pub messages: u64,
    pub rounds: u64,
    pub virtual_seconds: f64,
    /// Bytes received from the dealer during the phase.
    pub offline_bytes: u64,
    pub ciphertexts: u64,
}

#[derive(Clone, Copy)]
struct Snapshot {
    bytes: u64,
    messages: u64,
    rounds: u64,
    clock: f64,
    offline: u64,
    ciphertexts: u64,
}

pub struct Party {
    role: Role,
    ring: RingConfig,
    peer: Endpoint,
    dealer: DealerClient,
    rng: ChaCha20Rng,
    send_seq: u32,
    recv_seq: u32,
    div_iters: usize,
    phases: Vec<PhaseStat>,
    in_phase: bool,
    pub(crate) ciphertexts_sent: u64,
}

impl Party {
    pub fn new(role: Role, ring: RingConfig, peer: Endpoint, dealer: DealerClient, rng: ChaCha20Rng) -> Self {
        assert!(role != Role::Dealer, "a computing party is A or B");
        Self {
            role,
            ring,
            peer,
            dealer,
            rng,
            send_seq: 0,
            recv_seq: 0,
            div_iters: 2,
            phases: Vec::new(),
            in_phase: false,
            ciphertexts_sent: 0,
        }
    }

    /// Goldschmidt iteration count used by the division protocols.
    pub fn with_div_iters(mut self, iters: usize) -> Self {
        self.div_iters = iters;
        self
    }

    pub fn role(&self) -> Role {
        self.role
    }

    /// 0 for party A, 1 for party B.
    pub fn index(&self) -> usize {
        self.role.index()
    }

    pub fn ring(&self) -> &RingConfig {
        &self.ring
    }

    pub fn div_iters(&self) -> usize {
        self.div_iters
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }

    pub(crate) fn dealer(&mut self) -> &mut DealerClient {
        &mut self.dealer
    }

    pub fn peer_endpoint(&self) -> &Endpoint {
        &self.peer
    }

    pub fn dealer_endpoint(&self) -> &Endpoint {
        self.dealer.endpoint()
    }

    pub fn ciphertexts_sent(&self) -> u64 {
        self.ciphertexts_sent
    }

    pub fn phases(&self) -> &[PhaseStat] {
        &self.phases
    }

    // ----- phases -----

    fn snapshot(&self) -> Snapshot {
        let m = self.peer.meter();
        Snapshot {
            bytes: m.bytes_sent,
            messages: m.messages_sent,
            rounds: m.rounds,
            clock: self.peer.clock(),
            offline: self.dealer.endpoint().meter().bytes_received,
            ciphertexts: self.ciphertexts_sent,
        }
    }

    /// Runs `f`, attributing its traffic to the phase `name`. Nested calls
    /// are attributed to the outermost phase.
    pub fn phase<T>(&mut self, name: &str, f: impl FnOnce(&mut Party) -> Result<T>) -> Result<T> {
        if self.in_phase {
            return f(self);
        }
        self.in_phase = true;
        let before = self.snapshot();
        let out = f(self);
        self.in_phase = false;
        let after = self.snapshot();
        let idx = match self.phases.iter().position(|p| p.name == name) {
            Some(i) => i,
            None => {
                self.phases.push(PhaseStat {
                    name: name.to_string(),
                    ..Default::default()
                });
                self.phases.len() - 1
            }
        };
        let p = &mut self.phases[idx];
        p.bytes += after.bytes - before.bytes;
        p.messages += after.messages - before.messages;
        p.rounds += after.rounds - before.rounds;
        p.virtual_seconds += after.clock - before.clock;
        p.offline_bytes += after.offline - before.offline;
        p.ciphertexts += after.ciphertexts - before.ciphertexts;
        out
    }

    // ----- messaging -----

    pub(crate) fn send_msg(&mut self, op: Op, build: impl FnOnce(&mut Writer)) -> Result<()> {
        let mut w = Writer::default();
        w.u32(self.send_seq).u8(op as u8);
        build(&mut w);
        self.send_seq = self.send_seq.wrapping_add(1);
        self.peer.send(w.finish())?;
        Ok(())
    }

    /// Receives the next peer message, checking sequence number and kind.
    pub(crate) fn recv_msg(&mut self, op: Op) -> Result<Vec<u8>> {
        let mut bytes = self.peer.recv()?;
        if bytes.len() < 5 {
            return Err(Error::Protocol("short message header".into()));
        }
        let seq = u32::from_le_bytes(bytes[..4].try_into().unwrap());
        let got = bytes[4];
        if seq != self.recv_seq || got != op as u8 {
            return Err(Error::Protocol(format!(
                "desynchronized: expected message {} of kind {}, got {} of kind {}",
                self.recv_seq, op as u8, seq, got
            )));
        }
        self.recv_seq = self.recv_seq.wrapping_add(1);
        bytes.drain(..5);
        Ok(bytes)
    }

    fn exchange_rings(&mut self, op: Op, mine: &[RingValue]) -> Result<Vec<RingValue>> {
        let ring = self.ring;
        self.send_msg(op, |w| {
            w.rings(&ring, mine);
        })?;
        let bytes = self.recv_msg(op)?;
        let mut r = Reader::new(&bytes);
        let theirs = r.rings(&ring, mine.len())?;
        r.finish()?;
        Ok(theirs)
    }

    fn exchange_words(&mut self, op: Op, mine: &[u64]) -> Result<Vec<u64>> {
        self.send_msg(op, |w| {
            w.u64s(mine);
        })?;
        let bytes = self.recv_msg(op)?;
        let mut r = Reader::new(&bytes);
        let theirs = r.u64s(mine.len())?;
        r.finish()?;
        Ok(theirs)
    }

    /// Exchanges a small metadata blob with the peer.
    pub(crate) fn exchange_meta(&mut self, mine: &[u64]) -> Result<Vec<u64>> {
        self.send_msg(Op::Meta, |w| {
            w.u32(mine.len() as u32).u64s(mine);
        })?;
        let bytes = self.recv_msg(Op::Meta)?;
        let mut r = Reader::new(&bytes);
        let n = r.u32()? as usize;
        let theirs = r.u64s(n)?;
        r.finish()?;
        Ok(theirs)
    }

    // ----- sharing -----

    /// Secret-shares `n` values held by `owner`. The owner passes
    /// `Some(values)` and keeps `x - r`; the peer passes `None` and gets `r`.
    pub fn share_input(&mut self, owner: Role, values: Option<&[RingValue]>, n: usize) -> Result<Vec<RingValue>> {
        let ring = self.ring;
        if owner == self.role {
            let values = values.ok_or_else(|| Error::Protocol("owner must supply values".into()))?;
            if values.len() != n {
                return Err(Error::Protocol(format!("expected {n} inputs, got {}", values.len())));
            }
            let masks: Vec<RingValue> = (0..n).map(|_| ring.random(&mut self.rng)).collect();
            self.send_msg(Op::Input, |w| {
                w.rings(&ring, &masks);
            })?;
            Ok(values.iter().zip(&masks).map(|(&x, &r)| ring.sub(x, r)).collect())
        } else {
            let bytes = self.recv_msg(Op::Input)?;
            let mut r = Reader::new(&bytes);
            let masks = r.rings(&ring, n)?;
            r.finish()?;
            Ok(masks)
        }
    }

    /// Fixed-point encodes and shares reals held by `owner`.
    pub fn share_reals(&mut self, owner: Role, values: Option<&[f64]>, n: usize) -> Result<Vec<RingValue>> {
        let encoded = values.map(|v| self.ring.encode_vec(v)).transpose()?;
        self.share_input(owner, encoded.as_deref(), n)
    }

    /// Reconstructs `x` at `to` (`None` = both parties). Returns the values
    /// at a recipient and `None` elsewhere.
    pub fn reveal(&mut self, x: &[RingValue], to: Option<Role>) -> Result<Option<Vec<RingValue>>> {
        let ring = self.ring;
        match to {
            None => {
                let theirs = self.exchange_rings(Op::Reveal, x)?;
                Ok(Some(x.iter().zip(&theirs).map(|(&a, &b)| ring.add(a, b)).collect()))
            }
            Some(r) if r == self.role => {
                let bytes = self.recv_msg(Op::Reveal)?;
                let mut rd = Reader::new(&bytes);
                let theirs = rd.rings(&ring, x.len())?;
                rd.finish()?;
                Ok(Some(x.iter().zip(&theirs).map(|(&a, &b)| ring.add(a, b)).collect()))
            }
            Some(_) => {
                self.send_msg(Op::Reveal, |w| {
                    w.rings(&ring, x);
                })?;
                Ok(None)
            }
        }
    }

    pub fn reveal_all(&mut self, x: &[RingValue]) -> Result<Vec<RingValue>> {
        Ok(self.reveal(x, None)?.expect("both parties receive"))
    }

    pub fn reveal_reals(&mut self, x: &[RingValue]) -> Result<Vec<f64>> {
        let v = self.reveal_all(x)?;
        Ok(self.ring.decode_vec(&v))
    }

    // ----- local operations -----

    /// Shares of a public constant: A holds `v`, B holds zero.
    pub fn constant(&self, v: RingValue, n: usize) -> Vec<RingValue> {
        let mine = if self.index() == 0 { v } else { RingValue(0) };
        vec![mine; n]
    }

    pub fn constant_real(&self, v: f64, n: usize) -> Result<Vec<RingValue>> {
        Ok(self.constant(self.ring.encode(v)?, n))
    }

    pub fn add(&self, x: &[RingValue], y: &[RingValue]) -> Vec<RingValue> {
        assert_eq!(x.len(), y.len(), "length mismatch");
        x.iter().zip(y).map(|(&a, &b)| self.ring.add(a, b)).collect()
    }

    pub fn sub(&self, x: &[RingValue], y: &[RingValue]) -> Vec<RingValue> {
        assert_eq!(x.len(), y.len(), "length mismatch");
        x.iter().zip(y).map(|(&a, &b)| self.ring.sub(a, b)).collect()
    }

    pub fn neg(&self, x: &[RingValue]) -> Vec<RingValue> {
        x.iter().map(|&a| self.ring.neg(a)).collect()
    }

    /// Adds a public ring constant to every element.
    pub fn add_public(&self, x: &[RingValue], c: RingValue) -> Vec<RingValue> {
        if self.index() == 0 {
            x.iter().map(|&a| self.ring.add(a, c)).collect()
        } else {
            x.to_vec()
        }
    }

    /// Multiplies by a public ring element without truncation (exact).
    pub fn scale_raw(&self, x: &[RingValue], k: RingValue) -> Vec<RingValue> {
        x.iter().map(|&a| self.ring.mul(a, k)).collect()
    }

    /// Multiplies by a public real and truncates.
    pub fn scalar_mul(&self, x: &[RingValue], c: f64) -> Result<Vec<RingValue>> {
        let k = self.ring.encode(c)?;
        Ok(self.truncate(&self.scale_raw(x, k)))
    }

    /// Independent share truncation by `f` bits.
    pub fn truncate(&self, x: &[RingValue]) -> Vec<RingValue> {
        let i = self.index();
        x.iter().map(|&a| self.ring.truncate_share(a, i)).collect()
    }

    /// Sum of all elements.
    pub fn sum(&self, x: &[RingValue]) -> RingValue {
        x.iter().fold(RingValue(0), |acc, &a| self.ring.add(acc, a))
    }

    // ----- multiplication -----

    /// Element-wise Beaver product without truncation. Use when one operand
    /// is at unit scale, or when the caller truncates.
    pub fn mul_raw(&mut self, x: &[RingValue], y: &[RingValue]) -> Result<Vec<RingValue>> {
        assert_eq!(x.len(), y.len(), "length mismatch");
        let n = x.len();
        if n == 0 {
            return Ok(Vec::new());
        }
        let ring = self.ring;
        let triples = self.dealer.beaver(n)?;
        let mut masked = Vec::with_capacity(2 * n);
        for ((&xi, &yi), t) in x.iter().zip(y).zip(&triples) {
            masked.push(ring.sub(xi, t.a));
            masked.push(ring.sub(yi, t.b));
        }
        let theirs = self.exchange_rings(Op::Beaver, &masked)?;
        let me = self.index();
        Ok((0..n)
            .map(|k| {
                let e = ring.add(masked[2 * k], theirs[2 * k]);
                let f = ring.add(masked[2 * k + 1], theirs[2 * k + 1]);
                beaver_share(&ring, me, e, f, x[k], y[k], triples[k].c)
            })
            .collect())
    }

    /// Element-wise fixed-point product with truncation.
    pub fn mul(&mut self, x: &[RingValue], y: &[RingValue]) -> Result<Vec<RingValue>> {
        let z = self.mul_raw(x, y)?;
        Ok(self.truncate(&z))
    }

    // ----- comparison -----

    /// XOR-shared AND of packed bit words.
    fn and_words(&mut self, x: &[u64], y: &[u64]) -> Result<Vec<u64>> {
        let n = x.len();
        let triples = self.dealer.and_words(n)?;
        let mut masked = Vec::with_capacity(2 * n);
        for ((&xi, &yi), t) in x.iter().zip(y).zip(&triples) {
            masked.push(xi ^ t.u);
            masked.push(yi ^ t.v);
        }
        let theirs = self.exchange_words(Op::And, &masked)?;
        let me = self.index();
        Ok((0..n)
            .map(|k| {
                let d = masked[2 * k] ^ theirs[2 * k];
                let e = masked[2 * k + 1] ^ theirs[2 * k + 1];
                let t = &triples[k];
                let mut z = (d & t.v) ^ (e & t.u) ^ t.w;
                if me == 0 {
                    z ^= d & e;
                }
                z
            })
            .collect())
    }

    /// Converts packed XOR-shared bits (first `n` valid) to unit-scale
    /// additive shares using dealer bit pairs.
    fn bits_to_arith(&mut self, bits: &[u64], n: usize) -> Result<Vec<RingValue>> {
        let ring = self.ring;
        let pairs = self.dealer.bit_pairs(n)?;
        let mut opened = bits.to_vec();
        for (i, p) in pairs.iter().enumerate() {
            opened[i / 64] ^= (p.bit as u64) << (i % 64);
        }
        let theirs = self.exchange_words(Op::BitOpen, &opened)?;
        let me = self.index();
        Ok(pairs
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let c = ((opened[i / 64] ^ theirs[i / 64]) >> (i % 64)) & 1 == 1;
                // bit = c xor r = c + r - 2cr
                let r = if c { ring.neg(p.arith) } else { p.arith };
                if c && me == 0 {
                    ring.add(r, RingValue(1))
                } else {
                    r
                }
            })
            .collect())
    }

    /// Most significant bit of each shared value, as unit-scale shares.
    ///
    /// Runs a ripple-carry adder over XOR shares of the two parties' share
    /// bits; `l - 1` AND layers, each batched across all elements.
    pub fn msb(&mut self, x: &[RingValue]) -> Result<Vec<RingValue>> {
        let n = x.len();
        if n == 0 {
            return Ok(Vec::new());
        }
        let l = self.ring.bits as usize;
        let words = n.div_ceil(64);
        let me = self.index();
        // Bit plane i of this party's own share value.
        let mut planes = vec![vec![0u64; words]; l];
        for (k, v) in x.iter().enumerate() {
            let mut raw = v.0;
            let (w, b) = (k / 64, k % 64);
            for plane in planes.iter_mut() {
                plane[w] |= ((raw & 1) as u64) << b;
                raw >>= 1;
            }
        }
        let zero = vec![0u64; words];
        let mut carry = vec![0u64; words];
        for plane in planes.iter().take(l - 1) {
            // Shares of a_i and b_i: A holds its bits as a, B as b.
            let (a_i, b_i) = if me == 0 { (plane, &zero) } else { (&zero, plane) };
            let xs: Vec<u64> = a_i.iter().zip(&carry).map(|(a, c)| a ^ c).collect();
            let ys: Vec<u64> = b_i.iter().zip(&carry).map(|(b, c)| b ^ c).collect();
            let t = self.and_words(&xs, &ys)?;
            for (c, t) in carry.iter_mut().zip(&t) {
                *c ^= t;
            }
        }
        let top: Vec<u64> = planes[l - 1].iter().zip(&carry).map(|(p, c)| p ^ c).collect();
        self.bits_to_arith(&top, n)
    }

    /// `[x < y]` as unit-scale shares (signed comparison).
    pub fn lt_raw(&mut self, x: &[RingValue], y: &[RingValue]) -> Result<Vec<RingValue>> {
        let d = self.sub(x, y);
        self.msb(&d)
    }

    /// `[x < y]` as fixed-point shares of 0 or 1.
    pub fn less_than(&mut self, x: &[RingValue], y: &[RingValue]) -> Result<Vec<RingValue>> {
        let bits = self.lt_raw(x, y)?;
        let one = self.ring.encode(1.0)?;
        Ok(self.scale_raw(&bits, one))
    }

    /// Index of the maximum, lowest index on ties. Only the index is revealed.
    pub fn argmax(&mut self, v: &[RingValue]) -> Result<usize> {
        Ok(self.argmax_many(&[v])?[0])
    }

    /// [`Party::argmax`] of several vectors, with their tournaments run in
    /// lockstep so the round count is that of the longest one.
    pub fn argmax_many(&mut self, vs: &[&[RingValue]]) -> Result<Vec<usize>> {
        if vs.iter().any(|v| v.is_empty()) {
            return Err(Error::Protocol("argmax of an empty vector".into()));
        }
        let me = self.index();
        let mut vals: Vec<Vec<RingValue>> = vs.iter().map(|v| v.to_vec()).collect();
        // Candidate indices are public constants, held by A.
        let mut idxs: Vec<Vec<RingValue>> = vs
            .iter()
            .map(|v| (0..v.len()).map(|i| RingValue(if me == 0 { i as u128 } else { 0 })).collect())
            .collect();
        while vals.iter().any(|v| v.len() > 1) {
            let (mut left, mut right, mut left_i, mut right_i) = (vec![], vec![], vec![], vec![]);
            for (v, ix) in vals.iter().zip(&idxs) {
                for j in 0..v.len() / 2 {
                    left.push(v[2 * j]);
                    right.push(v[2 * j + 1]);
                    left_i.push(ix[2 * j]);
                    right_i.push(ix[2 * j + 1]);
                }
            }
            let pairs = left.len();
            let take_right = self.lt_raw(&left, &right)?;
            let mut sel = take_right.clone();
            sel.extend_from_slice(&take_right);
            let mut diff = self.sub(&right, &left);
            diff.extend(self.sub(&right_i, &left_i));
            let delta = self.mul_raw(&sel, &diff)?;
            let win_v = self.add(&left, &delta[..pairs]);
            let win_i = self.add(&left_i, &delta[pairs..]);
            let mut at = 0;
            for (v, ix) in vals.iter_mut().zip(idxs.iter_mut()) {
                let half = v.len() / 2;
                let mut nv = win_v[at..at + half].to_vec();
                let mut ni = win_i[at..at + half].to_vec();
                at += half;
                if v.len() % 2 == 1 {
                    nv.push(*v.last().unwrap());
                    ni.push(*ix.last().unwrap());
                }
                *v = nv;
                *ix = ni;
            }
        }
        let finals: Vec<RingValue> = idxs.iter().map(|ix| ix[0]).collect();
        let opened = self.reveal_all(&finals)?;
        opened
            .iter()
            .zip(vs)
            .map(|(&i, v)| {
                if i.0 >= v.len() as u128 {
                    Err(Error::Protocol(format!("argmax revealed out-of-range index {}", i.0)))
                } else {
                    Ok(i.0 as usize)
                }
            })
            .collect()
    }

    // ----- division -----

    /// Goldschmidt iterations for `n / d` with `d` in `[0.5, 1)`.
    fn goldschmidt(&mut self, n: &[RingValue], d: &[RingValue]) -> Result<Vec<RingValue>> {
        let len = n.len();
        let ring = self.ring;
        let w0: Vec<RingValue> = {
            let two_d = self.scale_raw(d, RingValue(2));
            let c = ring.encode(GOLDSCHMIDT_W0)?;
            let neg = self.neg(&two_d);
            self.add_public(&neg, c)
        };
        let mut lhs = n.to_vec();
        lhs.extend_from_slice(d);
        let mut rhs = w0.clone();
        rhs.extend_from_slice(&w0);
        let prod = self.mul(&lhs, &rhs)?;
        let mut y = prod[..len].to_vec();
        let one = ring.encode(1.0)?;
        // err = 1 - d * w0
        let mut err = self.add_public(&self.neg(&prod[len..]), one);
        for it in 0..self.div_iters {
            let last = it + 1 == self.div_iters;
            let factor = self.add_public(&err, one);
            let mut lhs = y.clone();
            let mut rhs = factor;
            if !last {
                lhs.extend_from_slice(&err);
                rhs.extend_from_slice(&err);
            }
            let prod = self.mul(&lhs, &rhs)?;
            y = prod[..len].to_vec();
            if !last {
                err = prod[len..].to_vec();
            }
        }
        Ok(y)
    }

    /// `num / den` for denominators in `(0, bound]`, normalizing by the public
    /// bound. Accurate when `den / bound` lies in `[0.5, 1)`.
    pub fn div(&mut self, num: &[RingValue], den: &[RingValue], bound: f64) -> Result<Vec<RingValue>> {
        assert_eq!(num.len(), den.len(), "length mismatch");
        if bound.is_nan() || bound <= 0.0 {
            return Err(Error::Config(format!("division bound must be positive, got {bound}")));
        }
        let scale = self.ring.encode(1.0 / bound)?;
        let mut both = num.to_vec();
        both.extend_from_slice(den);
        let scaled = self.truncate(&self.scale_raw(&both, scale));
        let (n, d) = scaled.split_at(num.len());
        self.goldschmidt(n, d)
    }

    /// `num / den` for denominators known to lie in `[lower, upper]`.
    ///
    /// The denominator is normalized into `[0.5, 1)` by a secret power of two
    /// `2^-(e+1)` with `2^e <= den < 2^(e+1)`, assembled from the comparisons
    /// `[den < 2^j]` for every `j` the range allows.
    pub fn div_range(&mut self, num: &[RingValue], den: &[RingValue], lower: f64, upper: f64) -> Result<Vec<RingValue>> {
        assert_eq!(num.len(), den.len(), "length mismatch");
        let f = self.ring.frac_bits as i32;
        if !(lower > 0.0 && upper >= lower && upper < 2f64.powi(f - 1)) {
            return Err(Error::Config(format!(
                "division range [{lower}, {upper}] must satisfy 0 < lower <= upper < 2^{}",
                f - 1
            )));
        }
        let len = num.len();
        if len == 0 {
            return Ok(Vec::new());
        }
        let j_lo = lower.log2().floor() as i32;
        let j_hi = upper.log2().floor() as i32;
        if j_lo + 1 > f {
            return Err(Error::Config(format!("division lower bound {lower} too small")));
        }
        let ring = self.ring;
        // factor = 2^-(j_hi+1) + sum_j [den < 2^j] * 2^-(j+1)
        let mut factor = self.constant_real(2f64.powi(-(j_hi + 1)), len)?;
        let steps: Vec<i32> = (j_lo + 1..=j_hi).collect();
        if !steps.is_empty() {
            let mut lhs = Vec::with_capacity(len * steps.len());
            let mut rhs = Vec::with_capacity(len * steps.len());
            for &j in &steps {
                let t = self.constant_real(2f64.powi(j), len)?;
                lhs.extend_from_slice(den);
                rhs.extend(t);
            }
            let below = self.lt_raw(&lhs, &rhs)?;
            for (s, &j) in steps.iter().enumerate() {
                let w = ring.encode(2f64.powi(-(j + 1)))?;
                let part = self.scale_raw(&below[s * len..(s + 1) * len], w);
                factor = self.add(&factor, &part);
            }
        }
        let mut lhs = num.to_vec();
        lhs.extend_from_slice(den);
        let mut rhs = factor.clone();
        rhs.extend_from_slice(&factor);
        let scaled = self.mul(&lhs, &rhs)?;
        let (n, d) = scaled.split_at(len);
        self.goldschmidt(n, d)
    }

    /// `0.5 x / (1 + |x|) + 0.5`, valid for `|x| < 2^18 - 1`.
    pub fn sigmoid(&mut self, x: &[RingValue]) -> Result<Vec<RingValue>> {
        let ring = self.ring;
        let neg = self.msb(x)?;
        let sx = self.mul_raw(&neg, x)?;
        let abs = self.sub(x, &self.scale_raw(&sx, RingValue(2)));
        let den = self.add_public(&abs, ring.encode(1.0)?);
        let q = self.div_range(x, &den, 1.0, 2f64.powi(18))?;
        let me = self.index();
        let half: Vec<RingValue> = q.iter().map(|&v| ring.truncate_share_by(v, me, 1)).collect();
        Ok(self.add_public(&half, ring.encode(0.5)?))
    }

    /// Draws `n` uniform ring elements from the local RNG.
    pub fn random_vec(&mut self, n: usize) -> Vec<RingValue> {
        let ring = self.ring;
        (0..n).map(|_| ring.random(&mut self.rng)).collect()
    }
}
