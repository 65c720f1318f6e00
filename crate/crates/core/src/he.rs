//! Additively homomorphic encryption and the share/ciphertext conversions.
//!
//! The cryptosystem is Paillier with generator `n + 1`. Plaintexts are
//! integers mod `n`; values above `n / 2` decode as negatives.
//!
//! Roles: the *encrypter* owns a key pair; the *calculator* holds
//! ciphertexts under the encrypter's public key and computes on them. For
//! gradient aggregation the calculator is the feature owner, so it works on
//! ciphertexts under its peer's key.

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::Rng;

use crate::codec::{Reader, Writer};
use crate::protocols::{Op, Party};
use crate::ring::{RingConfig, RingValue};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    n: BigUint,
    n2: BigUint,
}

#[derive(Clone)]
struct SecretKey {
    p: BigUint,
    q: BigUint,
    p2: BigUint,
    q2: BigUint,
    /// `(L_p((n+1)^(p-1) mod p^2))^-1 mod p`
    hp: BigUint,
    hq: BigUint,
    /// `p^-1 mod q` for recombination.
    p_inv_q: BigUint,
    /// `n mod p(p-1)` and `n mod q(q-1)`: reduced exponents for `r^n`.
    /// `(q^2)^-1 mod p^2`.
    q2_inv_p2: BigUint,
}

#[derive(Clone)]
pub struct KeyPair {
    pub public: PublicKey,
    secret: SecretKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext(BigUint);

impl Ciphertext {
    pub fn to_bytes(&self) -> Vec<u8> {
        self.0.to_bytes_be()
    }

    pub fn from_bytes(bytes: &[u8]) -> Self {
        Self(BigUint::from_bytes_be(bytes))
    }
}

fn mod_inverse(a: &BigUint, m: &BigUint) -> Option<BigUint> {
    let a = num_bigint::BigInt::from(a.clone());
    let m_i = num_bigint::BigInt::from(m.clone());
    let g = a.extended_gcd(&m_i);
    if !g.gcd.is_one() {
        return None;
    }
    let x = g.x.mod_floor(&m_i);
    x.to_biguint()
}

impl KeyPair {
    /// Generates a key with a modulus of exactly `bits` bits (`bits >= 1024`
    /// in production; smaller sizes are accepted down to 256 for tests).
    pub fn generate<R: Rng + ?Sized>(bits: usize, rng: &mut R) -> Result<Self> {
        if bits < 256 || !bits.is_multiple_of(2) {
            return Err(Error::Config(format!("invalid key size {bits}")));
        }
        loop {
            let p = glass_pumpkin::prime::from_rng(bits / 2, &mut *rng)
                .map_err(|e| Error::Config(format!("prime generation failed: {e}")))?;
            let q = glass_pumpkin::prime::from_rng(bits / 2, &mut *rng)
                .map_err(|e| Error::Config(format!("prime generation failed: {e}")))?;
            if p == q {
                continue;
            }
            let n = &p * &q;
            if n.bits() as usize != bits {
                continue;
            }
            let one = BigUint::one();
            let phi = (&p - &one) * (&q - &one);
            if !n.gcd(&phi).is_one() {
                continue;
            }
            if let Some(kp) = Self::from_primes(p, q) {
                return Ok(kp);
            }
        }
    }

    fn from_primes(p: BigUint, q: BigUint) -> Option<Self> {
        let one = BigUint::one();
        let n = &p * &q;
        let n2 = &n * &n;
        let g = &n + &one;
        let p2 = &p * &p;
        let q2 = &q * &q;
        let lp = (g.modpow(&(&p - &one), &p2) - &one) / &p;
        let lq = (g.modpow(&(&q - &one), &q2) - &one) / &q;
        let hp = mod_inverse(&(lp % &p), &p)?;
        let hq = mod_inverse(&(lq % &q), &q)?;
        let p_inv_q = mod_inverse(&(&p % &q), &q)?;
        let q2_inv_p2 = mod_inverse(&(&q2 % &p2), &p2)?;
        Some(Self {
            public: PublicKey { n, n2 },
            secret: SecretKey {
                p,
                q,
                p2,
                q2,
                hp,
                hq,
                p_inv_q,
                q2_inv_p2,
            },
        })
    }

    pub fn decrypt(&self, c: &Ciphertext) -> BigUint {
        let s = &self.secret;
        let one = BigUint::one();
        let cp = c.0.modpow(&(&s.p - &one), &s.p2);
        let mp = (((cp - &one) / &s.p) * &s.hp) % &s.p;
        let cq = c.0.modpow(&(&s.q - &one), &s.q2);
        let mq = (((cq - &one) / &s.q) * &s.hq) % &s.q;
        // CRT: m = mp + p * ((mq - mp) * p^-1 mod q)
        let diff = (&mq + &s.q - (&mp % &s.q)) % &s.q;
        mp + &s.p * ((diff * &s.p_inv_q) % &s.q)
    }

    /// Encryption using the factorization to sample the noise `r^n`.
    ///
    /// Modulo `p^2`, the n-th residues form the subgroup of order `p - 1`
    /// (as `gcd(n, phi(n)) = 1`), which is exactly `{s^p : s in Z_p^*}`. So
    /// `s^p mod p^2` for uniform `s` has the distribution of `r^n mod p^2`
    /// at half the exponent length; likewise modulo `q^2`.
    pub fn encrypt_fast<R: Rng + ?Sized>(&self, m: &BigUint, rng: &mut R) -> Ciphertext {
        let pk = &self.public;
        let s = &self.secret;
        let one = BigUint::one();
        let sp = rng.gen_biguint_range(&one, &s.p);
        let sq = rng.gen_biguint_range(&one, &s.q);
        let rp = sp.modpow(&s.p, &s.p2);
        let rq = sq.modpow(&s.q, &s.q2);
        let diff = (&rp + &s.p2 - (&rq % &s.p2)) % &s.p2;
        let rn = rq + &s.q2 * ((diff * &s.q2_inv_p2) % &s.p2);
        Ciphertext((pk.trivial(m) * rn) % &pk.n2)
    }
}

impl PublicKey {
    pub fn modulus(&self) -> &BigUint {
        &self.n
    }

    pub fn bits(&self) -> usize {
        self.n.bits() as usize
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.n.to_bytes_be()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let n = BigUint::from_bytes_be(bytes);
        if n.bits() < 256 || n.is_even() {
            return Err(Error::Protocol("malformed public key".into()));
        }
        let n2 = &n * &n;
        Ok(Self { n, n2 })
    }

    fn random_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> BigUint {
        loop {
            let r = rng.gen_biguint_below(&self.n);
            if !r.is_zero() && r.gcd(&self.n).is_one() {
                return r;
            }
        }
    }

    /// `(n+1)^m = 1 + m n mod n^2`, an encryption of `m` with randomness 1.
    pub fn trivial(&self, m: &BigUint) -> BigUint {
        (BigUint::one() + (m % &self.n) * &self.n) % &self.n2
    }

    pub fn encrypt<R: Rng + ?Sized>(&self, m: &BigUint, rng: &mut R) -> Ciphertext {
        let r = self.random_unit(rng);
        Ciphertext((self.trivial(m) * r.modpow(&self.n, &self.n2)) % &self.n2)
    }

    /// Homomorphic addition.
    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Ciphertext {
        Ciphertext((&a.0 * &b.0) % &self.n2)
    }

    /// Adds a plaintext without fresh randomness.
    pub fn add_plain(&self, a: &Ciphertext, m: &BigUint) -> Ciphertext {
        Ciphertext((&a.0 * self.trivial(m)) % &self.n2)
    }

    /// Homomorphic multiplication by a plaintext scalar.
    pub fn scalar_mul(&self, a: &Ciphertext, k: &BigUint) -> Ciphertext {
        Ciphertext(a.0.modpow(k, &self.n2))
    }

    /// Encryption of zero with randomness 1; the neutral element.
    pub fn zero(&self) -> Ciphertext {
        Ciphertext(BigUint::one())
    }

    /// Plaintext representative of `-x mod n`.
    pub fn negate_plain(&self, x: &BigUint) -> BigUint {
        let x = x % &self.n;
        if x.is_zero() {
            x
        } else {
            &self.n - x
        }
    }

    /// Maps a decrypted value to the ring, reading values above `n / 2` as
    /// negatives.
    pub fn to_ring(&self, ring: &RingConfig, m: &BigUint) -> RingValue {
        let mask = BigUint::from(ring.mask());
        let low = |v: &BigUint| -> u128 {
            let d = (v & &mask).to_u64_digits();
            d.first().copied().unwrap_or(0) as u128 | (d.get(1).copied().unwrap_or(0) as u128) << 64
        };
        if m > &(&self.n >> 1) {
            ring.neg(RingValue(low(&(&self.n - m))))
        } else {
            RingValue(low(m))
        }
    }
}

fn ring_to_big(v: RingValue) -> BigUint {
    BigUint::from(v.0)
}

fn write_ciphertexts(w: &mut Writer, cs: &[Ciphertext]) {
    w.u32(cs.len() as u32);
    for c in cs {
        w.blob(&c.to_bytes());
    }
}

fn read_ciphertexts(bytes: &[u8], expected: usize) -> Result<Vec<Ciphertext>> {
    let mut r = Reader::new(bytes);
    let n = r.u32()? as usize;
    if n != expected {
        return Err(Error::Protocol(format!("expected {expected} ciphertexts, got {n}")));
    }
    let out = (0..n)
        .map(|_| r.blob().map(Ciphertext::from_bytes))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    r.finish()?;
    Ok(out)
}

/// Smallest modulus accepted for protocol keys.
pub const MIN_KEY_BITS: usize = 1024;

/// Per-party homomorphic state: own key pair and the peer's public key.
pub struct HeContext {
    pub own: KeyPair,
    pub peer: PublicKey,
}

impl HeContext {
    /// Generates a key pair and swaps public keys with the peer.
    pub fn setup(party: &mut Party, bits: usize) -> Result<Self> {
        let ring = *party.ring();
        let need = MIN_KEY_BITS.max((ring.bits + ring.sigma + 66) as usize);
        if bits < need {
            return Err(Error::Config(format!(
                "key size {bits} too small for ring width {} and slack {} (need >= {need})",
                ring.bits, ring.sigma
            )));
        }
        let own = KeyPair::generate(bits, party.rng())?;
        let pk = own.public.to_bytes();
        party.send_msg(Op::HeKey, |w| {
            w.blob(&pk);
        })?;
        let bytes = party.recv_msg(Op::HeKey)?;
        let mut r = Reader::new(&bytes);
        let peer = PublicKey::from_bytes(r.blob()?)?;
        r.finish()?;
        if peer.bits() < need {
            return Err(Error::Protocol(format!("peer key of {} bits is too small", peer.bits())));
        }
        Ok(Self { own, peer })
    }
}

/// Share-to-ciphertext conversion, run by both parties.
///
/// The encrypter sends encryptions of its shares under its own key; the
/// calculator adds its own shares into them and returns ciphertexts of the
/// (unreduced) sums. The encrypter gets `None`.
pub fn s2h(
    party: &mut Party,
    ctx: &HeContext,
    shares: &[RingValue],
    calculator: bool,
) -> Result<Option<Vec<Ciphertext>>> {
    let n = shares.len();
    if calculator {
        let bytes = party.recv_msg(Op::HeCipher)?;
        let cs = read_ciphertexts(&bytes, n)?;
        Ok(Some(
            cs.iter()
                .zip(shares)
                .map(|(c, &s)| ctx.peer.add_plain(c, &ring_to_big(s)))
                .collect(),
        ))
    } else {
        let cs: Vec<Ciphertext> = shares
            .iter()
            .map(|&s| ctx.own.encrypt_fast(&ring_to_big(s), party.rng()))
            .collect();
        party.ciphertexts_sent += cs.len() as u64;
        party.send_msg(Op::HeCipher, |w| write_ciphertexts(w, &cs))?;
        Ok(None)
    }
}

/// Ciphertext-to-share conversion, run by both parties. The calculator
/// passes its ciphertexts (under the encrypter's key) and `count` must match
/// on both sides.
pub fn h2s(party: &mut Party, ctx: &HeContext, held: Option<&[Ciphertext]>, count: usize) -> Result<Vec<RingValue>> {
    let ring = *party.ring();
    match held {
        Some(cs) => {
            if cs.len() != count {
                return Err(Error::Protocol("h2s count mismatch".into()));
            }
            let bound = BigUint::one() << (ring.bits + ring.sigma) as usize;
            let mut masked = Vec::with_capacity(count);
            let mut mine = Vec::with_capacity(count);
            for c in cs {
                let r = party.rng().gen_biguint_below(&bound);
                let neg = ctx.peer.negate_plain(&r);
                let enc = ctx.peer.encrypt(&neg, party.rng());
                masked.push(ctx.peer.add(c, &enc));
                mine.push(ctx.peer.to_ring(&ring, &r));
            }
            party.ciphertexts_sent += masked.len() as u64;
            party.send_msg(Op::HeMasked, |w| write_ciphertexts(w, &masked))?;
            Ok(mine)
        }
        None => {
            let bytes = party.recv_msg(Op::HeMasked)?;
            let cs = read_ciphertexts(&bytes, count)?;
            Ok(cs
                .iter()
                .map(|c| ctx.own.public.to_ring(&ring, &ctx.own.decrypt(c)))
                .collect())
        }
    }
}

/// Per-bucket sums of shared vectors via homomorphic accumulation.
///
/// `vectors` are shared vectors of length `m` (typically `g` and `h`). Each
/// party that owns features acts as calculator for them. `own_buckets[j][i]`
/// is the bucket of row `i` under this party's feature `j`. The output holds,
/// for every vector, shares of the sums laid out as A's features then B's,
/// `k` buckets each.
pub fn he_bucket_sums(
    party: &mut Party,
    ctx: &HeContext,
    vectors: &[&[RingValue]],
    own_buckets: &[Vec<u32>],
    features: [usize; 2],
    k: usize,
) -> Result<Vec<Vec<RingValue>>> {
    let me = party.index();
    let peer = 1 - me;
    let m = vectors.first().map_or(0, |v| v.len());
    let stacked: Vec<RingValue> = vectors.iter().flat_map(|v| v.iter().copied()).collect();

    // Shares -> ciphertexts: towards each feature owner.
    let mut held = None;
    if features[peer] > 0 {
        s2h(party, ctx, &stacked, false)?;
    }
    if features[me] > 0 {
        held = s2h(party, ctx, &stacked, true)?;
    }

    // Homomorphic accumulation by the owner.
    let mut sums = Vec::new();
    if let Some(cs) = &held {
        for v in 0..vectors.len() {
            for buckets in own_buckets {
                let mut acc = vec![ctx.peer.zero(); k];
                for (i, &b) in buckets.iter().enumerate() {
                    acc[b as usize] = ctx.peer.add(&acc[b as usize], &cs[v * m + i]);
                }
                sums.extend(acc);
            }
        }
    }

    // Ciphertexts -> shares: own sums first, then the peer's.
    let mut per_owner: [Vec<RingValue>; 2] = Default::default();
    if features[me] > 0 {
        per_owner[me] = h2s(party, ctx, Some(&sums), vectors.len() * features[me] * k)?;
    }
    if features[peer] > 0 {
        per_owner[peer] = h2s(party, ctx, None, vectors.len() * features[peer] * k)?;
    }

    // Re-layout to [vector][A features, B features][bucket].
    let mut out = Vec::with_capacity(vectors.len());
    for v in 0..vectors.len() {
        let mut row = Vec::with_capacity((features[0] + features[1]) * k);
        for owner in 0..2 {
            let block = features[owner] * k;
            row.extend_from_slice(&per_owner[owner][v * block..(v + 1) * block]);
        }
        out.push(row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn key() -> KeyPair {
        use std::sync::OnceLock;
        static KEY: OnceLock<KeyPair> = OnceLock::new();
        KEY.get_or_init(|| KeyPair::generate(512, &mut ChaCha20Rng::seed_from_u64(1)).unwrap())
            .clone()
    }

    #[test]
    fn roundtrip_and_homomorphism() {
        let kp = key();
        let pk = &kp.public;
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        assert_eq!(kp.decrypt(&pk.encrypt(&BigUint::zero(), &mut rng)), BigUint::zero());
        for _ in 0..100 {
            let a = rng.gen_biguint_below(pk.modulus());
            let b = rng.gen_biguint_below(pk.modulus());
            let ca = pk.encrypt(&a, &mut rng);
            let cb = kp.encrypt_fast(&b, &mut rng);
            assert_eq!(kp.decrypt(&ca), a);
            assert_eq!(kp.decrypt(&cb), b);
            assert_eq!(kp.decrypt(&pk.add(&ca, &cb)), (&a + &b) % pk.modulus());
            let k = BigUint::from(rng.gen::<u32>());
            assert_eq!(kp.decrypt(&pk.scalar_mul(&ca, &k)), (&a * &k) % pk.modulus());
        }
    }

    #[test]
    fn modulus_has_requested_size() {
        assert_eq!(key().public.bits(), 512);
        assert!(KeyPair::generate(100, &mut ChaCha20Rng::seed_from_u64(3)).is_err());
    }

    #[test]
    fn signed_decoding() {
        let kp = key();
        let pk = &kp.public;
        let ring = RingConfig::default();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let c = pk.encrypt(&pk.negate_plain(&BigUint::from(5u32)), &mut rng);
        assert_eq!(pk.to_ring(&ring, &kp.decrypt(&c)), ring.from_int(-5));
        let big = (BigUint::one() << 130usize) + BigUint::from(7u32);
        let c = pk.encrypt(&big, &mut rng);
        assert_eq!(pk.to_ring(&ring, &kp.decrypt(&c)), RingValue(7));
    }

    #[test]
    fn ciphertext_bytes_roundtrip() {
        let kp = key();
        let c = kp.public.encrypt(&BigUint::from(42u32), &mut ChaCha20Rng::seed_from_u64(5));
        assert_eq!(Ciphertext::from_bytes(&c.to_bytes()), c);
        let pk = PublicKey::from_bytes(&kp.public.to_bytes()).unwrap();
        assert_eq!(pk, kp.public);
    }
}
