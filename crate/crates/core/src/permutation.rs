//! Permutations as destination maps.
//!
//! `p.apply(x)` moves element `i` to position `p[i]`, so
//! `p.compose(q).apply(x) == p.apply(&q.apply(x))`.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::codec::Reader;
use crate::protocols::{Op, Party};
use crate::ring::RingValue;
use crate::transport::Role;
use crate::Error;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PermutationError {
    #[error("index {index} out of range for length {len}")]
    OutOfRange { index: u32, len: usize },
    #[error("destination {0} used twice")]
    Duplicate(u32),
    #[error("length {0} exceeds u32 indexing")]
    TooLong(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation(Vec<u32>);

impl Permutation {
    pub fn new(map: Vec<u32>) -> Result<Self, PermutationError> {
        let n = map.len();
        if n > u32::MAX as usize {
            return Err(PermutationError::TooLong(n));
        }
        let mut seen = vec![false; n];
        for &d in &map {
            let slot = seen
                .get_mut(d as usize)
                .ok_or(PermutationError::OutOfRange { index: d, len: n })?;
            if *slot {
                return Err(PermutationError::Duplicate(d));
            }
            *slot = true;
        }
        Ok(Self(map))
    }

    /// From a 1-based destination list such as `(1, 3, 5, 2, 4)`.
    pub fn from_one_based(map: &[usize]) -> Result<Self, PermutationError> {
        let zero: Vec<u32> = map
            .iter()
            .map(|&d| d.checked_sub(1).map(|v| v as u32).unwrap_or(u32::MAX))
            .collect();
        Self::new(zero)
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n as u32).collect())
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut v: Vec<u32> = (0..n as u32).collect();
        v.shuffle(rng);
        Self(v)
    }

    /// Stable sort by key, as a destination map: `apply` yields the sorted order.
    pub fn sorting<K: Ord>(keys: &[K]) -> Self {
        let mut order: Vec<u32> = (0..keys.len() as u32).collect();
        order.sort_by(|&a, &b| keys[a as usize].cmp(&keys[b as usize]));
        let mut dest = vec![0u32; keys.len()];
        for (pos, &src) in order.iter().enumerate() {
            dest[src as usize] = pos as u32;
        }
        Self(dest)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn apply<T: Copy + Default>(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.0.len(), "permutation length mismatch");
        let mut out = vec![T::default(); x.len()];
        for (&d, &v) in self.0.iter().zip(x) {
            out[d as usize] = v;
        }
        out
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0u32; self.0.len()];
        for (i, &d) in self.0.iter().enumerate() {
            inv[d as usize] = i as u32;
        }
        Self(inv)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Permutation) -> Self {
        assert_eq!(self.len(), other.len(), "permutation length mismatch");
        Self(other.0.iter().map(|&d| self.0[d as usize]).collect())
    }
}

/// Applies `perm` (known only to `owner`) to each shared vector in `xs`,
/// consuming one dealer permutation triple per vector.
///
/// The owner sends `pi2 = pi ∘ pi1^-1`; the peer sends `<X>_peer - <R>_peer`.
/// Both messages go out in the same round. The owner's result is
/// `pi(X - R) + pi2(<pi1(R)>_owner)`, the peer's is `pi2(<pi1(R)>_peer)`.
pub fn secure_permute_many(
    party: &mut Party,
    xs: &[&[RingValue]],
    perms: Option<&[&Permutation]>,
    owner: Role,
) -> crate::Result<Vec<Vec<RingValue>>> {
    let ring = *party.ring();
    let is_owner = party.role() == owner;
    if is_owner != perms.is_some() {
        return Err(Error::Protocol("only the owner supplies permutations".into()));
    }
    if let Some(ps) = perms {
        if ps.len() != xs.len() || ps.iter().zip(xs).any(|(p, x)| p.len() != x.len()) {
            return Err(Error::Protocol("permutation size mismatch".into()));
        }
    }
    let mut triples = Vec::with_capacity(xs.len());
    for x in xs {
        triples.push(party.dealer().perm_triple(x.len(), owner)?);
    }
    if is_owner {
        let ps = perms.unwrap();
        let plans: Vec<Permutation> = ps
            .iter()
            .zip(&triples)
            .map(|(p, t)| p.compose(&t.pi1.as_ref().expect("owner receives pi1").inverse()))
            .collect();
        party.send_msg(Op::PermPlan, |w| {
            for plan in &plans {
                w.u32s(plan.as_slice());
            }
        })?;
        let bytes = party.recv_msg(Op::PermMasked)?;
        let mut r = Reader::new(&bytes);
        let mut out = Vec::with_capacity(xs.len());
        for (((x, t), plan), p) in xs.iter().zip(&triples).zip(&plans).zip(ps) {
            let theirs = r.rings(&ring, x.len())?;
            let masked: Vec<RingValue> = x
                .iter()
                .zip(&t.r)
                .zip(&theirs)
                .map(|((&xi, &ri), &ti)| ring.add(ring.sub(xi, ri), ti))
                .collect();
            let a = p.apply(&masked);
            let b = plan.apply(&t.pi_r);
            out.push(a.iter().zip(&b).map(|(&u, &v)| ring.add(u, v)).collect());
        }
        r.finish()?;
        Ok(out)
    } else {
        party.send_msg(Op::PermMasked, |w| {
            for (x, t) in xs.iter().zip(&triples) {
                let masked: Vec<RingValue> =
                    x.iter().zip(&t.r).map(|(&xi, &ri)| ring.sub(xi, ri)).collect();
                w.rings(&ring, &masked);
            }
        })?;
        let bytes = party.recv_msg(Op::PermPlan)?;
        let mut r = Reader::new(&bytes);
        let mut out = Vec::with_capacity(xs.len());
        for (x, t) in xs.iter().zip(&triples) {
            let plan = Permutation::new(r.u32s(x.len())?)
                .map_err(|e| Error::Protocol(format!("peer sent invalid permutation: {e}")))?;
            out.push(plan.apply(&t.pi_r));
        }
        r.finish()?;
        Ok(out)
    }
}

/// Single-vector form of [`secure_permute_many`].
pub fn secure_permute(
    party: &mut Party,
    x: &[RingValue],
    perm: Option<&Permutation>,
    owner: Role,
) -> crate::Result<Vec<RingValue>> {
    let perms = perm.map(|p| [p]);
    let mut out = secure_permute_many(party, &[x], perms.as_ref().map(|p| &p[..]), owner)?;
    Ok(out.pop().unwrap())
}

/// Per-bucket sums by sorting each vector into bucket order with a secure
/// permutation, then adding up the public bucket ranges.
///
/// `own_buckets[j][i]` is the bucket of row `i` under this party's feature
/// `j`; `counts[x][j][b]` is the public size of bucket `b` of feature `j` of
/// party `x`. Output layout as in the other back-ends: per vector, A's
/// features then B's, `k` buckets each.
pub fn crp_bucket_sums(
    party: &mut Party,
    vectors: &[&[RingValue]],
    own_buckets: &[Vec<u32>],
    counts: &[Vec<Vec<u64>>; 2],
    k: usize,
) -> crate::Result<Vec<Vec<RingValue>>> {
    let ring = *party.ring();
    let me = party.index();
    let sorts: Vec<Permutation> = own_buckets.iter().map(|b| Permutation::sorting(b)).collect();
    // Triple order: owner A's features then owner B's; per feature, each vector.
    let mut sorted: [Vec<Vec<RingValue>>; 2] = Default::default();
    let mut plan_msgs = Vec::new();
    for (owner, c) in counts.iter().enumerate() {
        let n_feat = c.len();
        let xs: Vec<&[RingValue]> = (0..n_feat).flat_map(|_| vectors.iter().copied()).collect();
        if xs.is_empty() {
            continue;
        }
        let perms: Option<Vec<&Permutation>> = (owner == me)
            .then(|| sorts.iter().flat_map(|p| std::iter::repeat_n(p, vectors.len())).collect());
        plan_msgs.push((owner, xs, perms));
    }
    // Run both owners' permutations; each party sends before it receives.
    // A single combined call per owner keeps triples in a fixed order.
    for (owner, xs, perms) in plan_msgs {
        let role = Role::from_index(owner).unwrap();
        sorted[owner] = secure_permute_many(party, &xs, perms.as_deref(), role)?;
    }
    let mut out = vec![Vec::new(); vectors.len()];
    for owner in 0..2 {
        for (j, feat_counts) in counts[owner].iter().enumerate() {
            if feat_counts.len() != k {
                return Err(Error::Protocol("bucket count metadata mismatch".into()));
            }
            for (v, row) in out.iter_mut().enumerate() {
                let perm_out = &sorted[owner][j * vectors.len() + v];
                let mut start = 0usize;
                for &c in feat_counts {
                    let end = start + c as usize;
                    let s = perm_out[start..end]
                        .iter()
                        .fold(RingValue(0), |acc, &x| ring.add(acc, x));
                    row.push(s);
                    start = end;
                }
                if start != perm_out.len() {
                    return Err(Error::Protocol("bucket counts do not cover all rows".into()));
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn destination_semantics() {
        let p = Permutation::from_one_based(&[1, 3, 5, 2, 4]).unwrap();
        assert_eq!(p.apply(&[10, 20, 30, 40, 50]), vec![10, 40, 20, 50, 30]);
        assert_eq!(p.inverse().apply(&p.apply(&[1, 2, 3, 4, 5])), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn rejects_invalid() {
        assert_eq!(
            Permutation::new(vec![0, 0]),
            Err(PermutationError::Duplicate(0))
        );
        assert!(matches!(
            Permutation::new(vec![0, 2]),
            Err(PermutationError::OutOfRange { .. })
        ));
        assert!(Permutation::from_one_based(&[0, 1]).is_err());
    }

    #[test]
    fn sorting_is_stable() {
        let keys = [2, 0, 1, 0, 2];
        let p = Permutation::sorting(&keys);
        assert_eq!(p.apply(&keys), vec![0, 0, 1, 2, 2]);
        assert_eq!(p.apply(&[0, 1, 2, 3, 4]), vec![1, 3, 2, 0, 4]);
    }

    proptest! {
        #[test]
        fn compose_matches_sequential(n in 1usize..60, s1: u64, s2: u64) {
            let p = Permutation::random(n, &mut ChaCha20Rng::seed_from_u64(s1));
            let q = Permutation::random(n, &mut ChaCha20Rng::seed_from_u64(s2));
            let x: Vec<u64> = (0..n as u64).map(|v| v * 7 + 1).collect();
            prop_assert_eq!(p.compose(&q).apply(&x), p.apply(&q.apply(&x)));
            prop_assert_eq!(p.compose(&p.inverse()), Permutation::identity(n));
        }
    }
}
