//! Per-bucket gradient sums with three interchangeable back-ends.
//!
//! Every back-end maps shared vectors `v` (gradients masked to one node) to
//! shares of `sum_{i in bucket k of feature j} v[i]`, laid out per vector as
//! A's features then B's, `k` buckets each. Results are exact in the ring.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::binning::BinnedFeatures;
use crate::codec::Reader;
use crate::dealer::{expand_mask, matmul_acc};
use crate::he::{he_bucket_sums, HeContext};
use crate::permutation::crp_bucket_sums;
use crate::protocols::{Op, Party};
use crate::ring::RingValue;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Secure inner products with the shared bucket indicators.
    Ss,
    /// Correlated-randomness permutation into bucket order.
    Crp,
    /// Homomorphic accumulation at the feature owner.
    Hep,
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ss" => Ok(Self::Ss),
            "crp" => Ok(Self::Crp),
            "hep" => Ok(Self::Hep),
            other => Err(Error::Config(format!("unknown variant {other:?} (expected ss, crp or hep)"))),
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Self::Ss => "ss",
            Self::Crp => "crp",
            Self::Hep => "hep",
        })
    }
}

/// Bucket sums through one masked-matrix triple.
///
/// With `V` the `rows x m` stack of vectors and `S_X` the 0/1 indicator
/// matrix of owner `X`, the owner publishes `E_X = S_X - A_X` and both open
/// `F = V - B`. Then `V S_X = F S_X + B E_X + C_X`, where only the owner
/// adds the `F S_X` term. All products are at unit scale on the indicator
/// side, so no truncation is needed.
pub fn ss_bucket_sums(
    party: &mut Party,
    vectors: &[&[RingValue]],
    own_buckets: &[Vec<u32>],
    features: [usize; 2],
    k: usize,
) -> Result<Vec<Vec<RingValue>>> {
    let ring = *party.ring();
    let me = party.index();
    let rows = vectors.len();
    let m = vectors.first().map_or(0, |v| v.len());
    if vectors.iter().any(|v| v.len() != m) || own_buckets.iter().any(|b| b.len() != m) {
        return Err(Error::Protocol("bucket sum inputs disagree on row count".into()));
    }
    if own_buckets.len() != features[me] {
        return Err(Error::Protocol("local feature count mismatch".into()));
    }
    let cols = [features[0] * k, features[1] * k];
    let t = party.dealer().masked_matrix(rows, m, cols)?;

    // E_me = S_me - A_me, row-major m x cols[me].
    let mut e_own = expand_mask(&ring, t.mask_seed, m * cols[me]);
    e_own.iter_mut().for_each(|v| *v = ring.neg(*v));
    for (j, buckets) in own_buckets.iter().enumerate() {
        for (i, &b) in buckets.iter().enumerate() {
            let slot = &mut e_own[i * cols[me] + j * k + b as usize];
            *slot = ring.add(*slot, RingValue(1));
        }
    }
    let f_own: Vec<RingValue> = vectors
        .iter()
        .flat_map(|v| v.iter())
        .zip(&t.b)
        .map(|(&x, &b)| ring.sub(x, b))
        .collect();
    party.send_msg(Op::MatrixMasked, |w| {
        w.rings(&ring, &e_own).rings(&ring, &f_own);
    })?;
    let bytes = party.recv_msg(Op::MatrixMasked)?;
    let mut r = Reader::new(&bytes);
    let e_peer = r.rings(&ring, m * cols[1 - me])?;
    let f_peer = r.rings(&ring, rows * m)?;
    r.finish()?;
    let f: Vec<RingValue> = f_own.iter().zip(&f_peer).map(|(&a, &b)| ring.add(a, b)).collect();

    let mut blocks: [Vec<RingValue>; 2] = Default::default();
    for x in 0..2 {
        let e = if x == me { &e_own } else { &e_peer };
        let mut z = t.c[x].clone();
        matmul_acc(&ring, &t.b, e, rows, m, cols[x], &mut z);
        if x == me {
            for row in 0..rows {
                let fr = &f[row * m..(row + 1) * m];
                let zr = &mut z[row * cols[x]..(row + 1) * cols[x]];
                for (j, buckets) in own_buckets.iter().enumerate() {
                    for (i, &b) in buckets.iter().enumerate() {
                        let slot = &mut zr[j * k + b as usize];
                        *slot = ring.add(*slot, fr[i]);
                    }
                }
            }
        }
        blocks[x] = z;
    }
    Ok((0..rows)
        .map(|row| {
            let mut out = blocks[0][row * cols[0]..(row + 1) * cols[0]].to_vec();
            out.extend_from_slice(&blocks[1][row * cols[1]..(row + 1) * cols[1]]);
            out
        })
        .collect())
}

/// Everything a party needs to run bucket sums repeatedly during training.
pub struct SumContext {
    pub backend: Backend,
    pub k: usize,
    /// Feature counts of A and B.
    pub features: [usize; 2],
    own_buckets: Vec<Vec<u32>>,
    /// Public bucket sizes of both parties, exchanged only for CRP.
    counts: [Vec<Vec<u64>>; 2],
    he: Option<HeContext>,
}

impl SumContext {
    /// Exchanges the public metadata of `backend` with the peer: feature
    /// counts always, bucket sizes for CRP, and keys for HEP.
    pub fn setup(party: &mut Party, backend: Backend, bins: &BinnedFeatures, he_bits: usize) -> Result<Self> {
        let me = party.index();
        let n = bins.n_features();
        let mine = vec![n as u64, bins.k as u64, bins.rows as u64, backend as u64];
        let theirs = party.exchange_meta(&mine)?;
        if theirs.len() != 4 {
            return Err(Error::Protocol("malformed setup metadata".into()));
        }
        if theirs[1..] != mine[1..] {
            return Err(Error::Protocol(format!(
                "parties disagree on (k, rows, variant): {:?} vs {:?}",
                &mine[1..],
                &theirs[1..]
            )));
        }
        let mut features = [0usize; 2];
        features[me] = n;
        features[1 - me] = theirs[0] as usize;
        let mut counts: [Vec<Vec<u64>>; 2] = Default::default();
        if backend == Backend::Crp {
            let own = bins.counts();
            let flat: Vec<u64> = own.iter().flatten().copied().collect();
            let peer_flat = party.exchange_meta(&flat)?;
            if peer_flat.len() != features[1 - me] * bins.k {
                return Err(Error::Protocol("malformed bucket size metadata".into()));
            }
            counts[1 - me] = peer_flat.chunks(bins.k.max(1)).map(<[u64]>::to_vec).collect();
            counts[me] = own;
        }
        let he = if backend == Backend::Hep {
            Some(HeContext::setup(party, he_bits)?)
        } else {
            None
        };
        Ok(Self {
            backend,
            k: bins.k,
            features,
            own_buckets: bins.buckets.clone(),
            counts,
            he,
        })
    }

    pub fn total_features(&self) -> usize {
        self.features[0] + self.features[1]
    }

    pub fn sums(&self, party: &mut Party, vectors: &[&[RingValue]]) -> Result<Vec<Vec<RingValue>>> {
        match self.backend {
            Backend::Ss => ss_bucket_sums(party, vectors, &self.own_buckets, self.features, self.k),
            Backend::Crp => crp_bucket_sums(party, vectors, &self.own_buckets, &self.counts, self.k),
            Backend::Hep => {
                let he = self.he.as_ref().expect("HE context set up for hep");
                he_bucket_sums(party, he, vectors, &self.own_buckets, self.features, self.k)
            }
        }
    }
}

/// Plaintext reference: per-bucket sums in the same layout, over `Z_{2^l}`.
pub fn plain_bucket_sums(
    ring: &crate::ring::RingConfig,
    vectors: &[Vec<RingValue>],
    buckets: &[&[Vec<u32>]; 2],
    k: usize,
) -> Vec<Vec<RingValue>> {
    vectors
        .iter()
        .map(|v| {
            let mut out = Vec::new();
            for owner in buckets {
                for feat in owner.iter() {
                    let mut s = vec![RingValue(0); k];
                    for (i, &b) in feat.iter().enumerate() {
                        s[b as usize] = ring.add(s[b as usize], v[i]);
                    }
                    out.extend(s);
                }
            }
            out
        })
        .collect()
}
