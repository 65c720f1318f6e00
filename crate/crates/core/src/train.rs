//! Secure training with oblivious full-depth expansion.
//!
//! Every tree is grown level by level to `max_depth`. Nodes carry shared
//! 0/1 masks and gradients already multiplied by their mask, so an empty
//! node looks like any other. Per level, bucket sums, gains and the secret
//! argmax run batched over all nodes; only the flat split index of each
//! node is revealed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::binning::{BinnedFeatures, Dataset};
use crate::protocols::Party;
use crate::ring::{RingConfig, RingValue};
use crate::sumgrad::{Backend, SumContext};
use crate::transport::Role;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    SquaredError,
    Logistic,
}

impl Objective {
    /// Upper bound of a single second-order gradient.
    pub fn h_max(self) -> f64 {
        match self {
            Self::SquaredError => 1.0,
            Self::Logistic => 0.25,
        }
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "squared_error" | "squared" | "regression" => Ok(Self::SquaredError),
            "logistic" | "binary" => Ok(Self::Logistic),
            other => Err(Error::Config(format!(
                "unknown objective {other:?} (expected squared_error or logistic)"
            ))),
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Self::SquaredError => "squared_error",
            Self::Logistic => "logistic",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub buckets: usize,
    pub objective: Objective,
    pub variant: Backend,
    pub learning_rate: f64,
    /// Paillier modulus size for the `hep` variant.
    pub he_bits: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            trees: 10,
            max_depth: 3,
            lambda: 1.0,
            gamma: 0.0,
            buckets: 33,
            objective: Objective::SquaredError,
            variant: Backend::Crp,
            learning_rate: 1.0,
            he_bits: 2048,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.trees < 1 {
            return bad("trees must be at least 1".into());
        }
        if !(1..=16).contains(&self.max_depth) {
            return bad(format!("max_depth must be in 1..=16, got {}", self.max_depth));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be non-negative, got {}", self.gamma));
        }
        if self.buckets < 2 {
            return bad(format!("buckets must be at least 2, got {}", self.buckets));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        Ok(())
    }

    /// Public range of every gain and leaf denominator `H + lambda`.
    pub fn denominator_range(&self, rows: usize) -> (f64, f64) {
        (self.lambda, self.objective.h_max() * rows as f64 + self.lambda)
    }

    fn fingerprint(&self) -> Vec<u64> {
        vec![
            self.trees as u64,
            self.max_depth as u64,
            self.lambda.to_bits(),
            self.gamma.to_bits(),
            self.objective as u64,
            self.learning_rate.to_bits(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeOwner {
    #[serde(rename = "self")]
    Own,
    Peer,
}

/// An internal node as one party sees it. Split details are present only
/// on the owner's side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeHalf {
    pub id: usize,
    pub owner: NodeOwner,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub feature: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bucket: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bucket_threshold: Option<f64>,
}

/// One party's half of a full binary tree. Internal nodes use heap ids
/// (children of `i` are `2i+1`, `2i+2`); leaf `l` is node `2^depth - 1 + l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeHalf {
    pub nodes: Vec<NodeHalf>,
    pub leaf_weight_shares: Vec<String>,
}

/// One party's half of the distributed model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHalf {
    pub role: Role,
    pub ring: RingConfig,
    pub config: TrainConfig,
    pub base_score_share: String,
    pub trees: Vec<TreeHalf>,
}

impl ModelHalf {
    pub fn depth(&self) -> usize {
        self.config.max_depth
    }

    pub fn leaves(&self) -> usize {
        1 << self.config.max_depth
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Data(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s).map_err(|e| Error::Data(format!("malformed model: {e}")))?;
        m.check_shape()?;
        Ok(m)
    }

    fn check_shape(&self) -> Result<()> {
        let internal = self.leaves() - 1;
        for (t, tree) in self.trees.iter().enumerate() {
            let ids_ok = tree.nodes.iter().enumerate().all(|(i, n)| n.id == i);
            let split_ok = tree.nodes.iter().all(|n| match n.owner {
                NodeOwner::Own => n.feature.is_some() && n.bucket_threshold.is_some(),
                NodeOwner::Peer => n.feature.is_none(),
            });
            if tree.nodes.len() != internal || tree.leaf_weight_shares.len() != self.leaves() || !ids_ok || !split_ok {
                return Err(Error::Data(format!("tree {t} does not match depth {}", self.depth())));
            }
        }
        Ok(())
    }

    pub fn leaf_weights(&self, tree: usize) -> Result<Vec<RingValue>> {
        self.trees[tree]
            .leaf_weight_shares
            .iter()
            .map(|h| self.ring.from_hex(h).map_err(Error::from))
            .collect()
    }

    pub fn base_score(&self) -> Result<RingValue> {
        Ok(self.ring.from_hex(&self.base_score_share)?)
    }
}

/// A revealed split decision, identical on both parties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitChoice {
    pub node: usize,
    /// Index into the flat candidate list: A's slots first, then B's, each
    /// feature contributing `k - 1` candidates in bucket order.
    pub flat: usize,
    pub owner: Role,
    pub slot: usize,
    pub bucket: usize,
}

pub struct TrainOutput {
    pub model: ModelHalf,
    /// Per tree, the split of every internal node in heap order.
    pub trace: Vec<Vec<SplitChoice>>,
    /// Shares of the training-set scores after the last tree.
    pub predictions: Vec<RingValue>,
}

/// Decodes a flat candidate index.
pub fn decode_flat(flat: usize, features: [usize; 2], k: usize) -> (Role, usize, usize) {
    let per = k - 1;
    if flat < features[0] * per {
        (Role::PartyA, flat / per, flat % per)
    } else {
        let r = flat - features[0] * per;
        (Role::PartyB, r / per, r % per)
    }
}

/// Shared node state; `g` and `h` are already multiplied by `mask`.
#[derive(Clone)]
struct Node {
    mask: Vec<RingValue>,
    g: Vec<RingValue>,
    h: Vec<RingValue>,
}

/// Trains the distributed model. Party A passes its features and labels,
/// party B its features; both pass the same configuration.
pub fn train(party: &mut Party, cfg: &TrainConfig, data: &Dataset) -> Result<TrainOutput> {
    cfg.validate()?;
    let ring = *party.ring();
    let me = party.index();
    let role = party.role();
    let labels = match role {
        Role::PartyA => Some(
            data.label
                .as_deref()
                .ok_or_else(|| Error::Data("party A must hold the label column".into()))?,
        ),
        _ => None,
    };
    let m = data.rows();
    if m == 0 {
        return Err(Error::Data("cannot train on zero rows".into()));
    }
    let bins = BinnedFeatures::fit(data, cfg.buckets)?;
    let k = cfg.buckets;

    let ctx = party.phase("setup", |p| {
        let theirs = p.exchange_meta(&cfg.fingerprint())?;
        if theirs != cfg.fingerprint() {
            return Err(Error::Protocol("parties disagree on the training configuration".into()));
        }
        SumContext::setup(p, cfg.variant, &bins, cfg.he_bits)
    })?;
    if ctx.total_features() == 0 {
        return Err(Error::Data("no features on either side".into()));
    }
    let features = ctx.features;
    let (lo, hi) = cfg.denominator_range(m);

    let (y, base) = party.phase("init", |p| {
        let y = p.share_reals(Role::PartyA, labels, m)?;
        let base = match cfg.objective {
            Objective::SquaredError => {
                // Mean with 1/m at 2f fractional bits, then drop them.
                let s = p.sum(&y);
                let inv = ring.encode_with(1.0 / m as f64, 2 * ring.frac_bits)?;
                ring.truncate_share_by(ring.mul(s, inv), me, 2 * ring.frac_bits)
            }
            Objective::Logistic => RingValue(0),
        };
        Ok((y, base))
    })?;
    let mut pred = vec![base; m];
    let unit = |n: usize| -> Vec<RingValue> { vec![RingValue(if me == 0 { 1 } else { 0 }); n] };

    let mut trees = Vec::with_capacity(cfg.trees);
    let mut trace = Vec::with_capacity(cfg.trees);
    for _ in 0..cfg.trees {
        let (g, h) = party.phase("gradients", |p| gradients(p, cfg.objective, &pred, &y))?;
        let mut level = vec![Node {
            mask: unit(m),
            g,
            h,
        }];
        let mut nodes = Vec::new();
        let mut choices = Vec::new();
        for depth in 0..cfg.max_depth {
            let vectors: Vec<&[RingValue]> = level.iter().flat_map(|n| [&n.g[..], &n.h[..]]).collect();
            let sums = party.phase("sum_gradients", |p| ctx.sums(p, &vectors))?;
            let gains = party.phase("gain", |p| gains(p, cfg, &level, &sums, k, (lo, hi)))?;
            let picks = party.phase("argmax", |p| {
                let refs: Vec<&[RingValue]> = gains.iter().map(Vec::as_slice).collect();
                p.argmax_many(&refs)
            })?;
            let first_id = (1 << depth) - 1;
            let mut branch_own = Vec::new();
            let mut owners = Vec::with_capacity(level.len());
            for (pos, &flat) in picks.iter().enumerate() {
                let (owner, slot, bucket) = decode_flat(flat, features, k);
                choices.push(SplitChoice {
                    node: first_id + pos,
                    flat,
                    owner,
                    slot,
                    bucket,
                });
                owners.push(owner);
                if owner == role {
                    let thr = bins.bins[slot].split_threshold(bucket);
                    nodes.push(NodeHalf {
                        id: first_id + pos,
                        owner: NodeOwner::Own,
                        feature: Some(data.names[slot].clone()),
                        bucket: Some(bucket),
                        bucket_threshold: Some(thr),
                    });
                    branch_own.extend(bins.buckets[slot].iter().map(|&b| RingValue((b as usize <= bucket) as u128)));
                } else {
                    nodes.push(NodeHalf {
                        id: first_id + pos,
                        owner: NodeOwner::Peer,
                        feature: None,
                        bucket: None,
                        bucket_threshold: None,
                    });
                }
            }
            level = party.phase("split", |p| split_level(p, &level, &owners, &branch_own))?;
        }
        // Leaves.
        let weights = party.phase("leaf", |p| {
            let num: Vec<RingValue> = level.iter().map(|n| ring.neg(p.sum(&n.g))).collect();
            let den: Vec<RingValue> = level.iter().map(|n| p.sum(&n.h)).collect();
            let den = p.add_public(&den, ring.encode(cfg.lambda)?);
            p.div_range(&num, &den, lo, hi)
        })?;
        pred = party.phase("update", |p| {
            let step = if cfg.learning_rate == 1.0 {
                weights.clone()
            } else {
                p.scalar_mul(&weights, cfg.learning_rate)?
            };
            let wide: Vec<RingValue> = step.iter().flat_map(|&w| std::iter::repeat_n(w, m)).collect();
            let masks: Vec<RingValue> = level.iter().flat_map(|n| n.mask.iter().copied()).collect();
            let prod = p.mul_raw(&wide, &masks)?;
            let mut out = pred.clone();
            for chunk in prod.chunks(m) {
                out = p.add(&out, chunk);
            }
            Ok(out)
        })?;
        trees.push(TreeHalf {
            nodes,
            leaf_weight_shares: weights.iter().map(|&w| ring.to_hex(w)).collect(),
        });
        trace.push(choices);
    }
    Ok(TrainOutput {
        model: ModelHalf {
            role,
            ring,
            config: cfg.clone(),
            base_score_share: ring.to_hex(base),
            trees,
        },
        trace,
        predictions: pred,
    })
}

/// First- and second-order gradients from shared scores and labels.
pub fn gradients(
    party: &mut Party,
    objective: Objective,
    pred: &[RingValue],
    y: &[RingValue],
) -> Result<(Vec<RingValue>, Vec<RingValue>)> {
    let ring = *party.ring();
    match objective {
        Objective::SquaredError => {
            let g = party.sub(pred, y);
            let h = party.constant_real(1.0, pred.len())?;
            Ok((g, h))
        }
        Objective::Logistic => {
            let p = party.sigmoid(pred)?;
            let g = party.sub(&p, y);
            let q = party.add_public(&party.neg(&p), ring.encode(1.0)?);
            let h = party.mul(&p, &q)?;
            Ok((g, h))
        }
    }
}

/// Shared gains of every candidate of every node, one vector per node.
fn gains(
    party: &mut Party,
    cfg: &TrainConfig,
    level: &[Node],
    sums: &[Vec<RingValue>],
    k: usize,
    range: (f64, f64),
) -> Result<Vec<Vec<RingValue>>> {
    let ring = *party.ring();
    let me = party.index();
    let n_feat = sums[0].len() / k;
    let per_node = n_feat * (k - 1);
    let mut gl = Vec::with_capacity(level.len() * per_node);
    let mut hl = Vec::with_capacity(level.len() * per_node);
    let mut gt = Vec::with_capacity(level.len());
    let mut ht = Vec::with_capacity(level.len());
    for (n, node) in level.iter().enumerate() {
        let (bg, bh) = (&sums[2 * n], &sums[2 * n + 1]);
        for f in 0..n_feat {
            let (mut sg, mut sh) = (RingValue(0), RingValue(0));
            for b in 0..k - 1 {
                sg = ring.add(sg, bg[f * k + b]);
                sh = ring.add(sh, bh[f * k + b]);
                gl.push(sg);
                hl.push(sh);
            }
        }
        gt.push(party.sum(&node.g));
        ht.push(party.sum(&node.h));
    }
    let cand = gl.len();
    let mut gr = Vec::with_capacity(cand);
    let mut hr = Vec::with_capacity(cand);
    for i in 0..cand {
        let n = i / per_node;
        gr.push(ring.sub(gt[n], gl[i]));
        hr.push(ring.sub(ht[n], hl[i]));
    }
    let g_all: Vec<RingValue> = [&gl[..], &gr[..], &gt[..]].concat();
    let h_all: Vec<RingValue> = [&hl[..], &hr[..], &ht[..]].concat();
    let sq = party.mul(&g_all, &g_all)?;
    let den = party.add_public(&h_all, ring.encode(cfg.lambda)?);
    let q = party.div_range(&sq, &den, range.0, range.1)?;
    let gamma = ring.encode(cfg.gamma)?;
    let mut out = Vec::with_capacity(level.len());
    for n in 0..level.len() {
        let parent = q[2 * cand + n];
        let row: Vec<RingValue> = (n * per_node..(n + 1) * per_node)
            .map(|i| {
                let s = ring.sub(ring.add(q[i], q[cand + i]), parent);
                let half = ring.truncate_share_by(s, me, 1);
                if me == 0 {
                    ring.sub(half, gamma)
                } else {
                    half
                }
            })
            .collect();
        out.push(row);
    }
    Ok(out)
}

/// Splits every node of a level. The owner of each split shares its 0/1
/// branch vector; children are `mask * b` and `mask - mask * b`, and the
/// same for the masked gradients.
fn split_level(party: &mut Party, level: &[Node], owners: &[Role], branch_own: &[RingValue]) -> Result<Vec<Node>> {
    let m = level[0].mask.len();
    let role = party.role();
    let mut branch: Vec<Option<Vec<RingValue>>> = vec![None; level.len()];
    for owner in [Role::PartyA, Role::PartyB] {
        let count = owners.iter().filter(|&&o| o == owner).count();
        if count == 0 {
            continue;
        }
        let input = (owner == role).then_some(branch_own);
        let shared = party.share_input(owner, input, count * m)?;
        let mut chunks = shared.chunks(m);
        for (n, &o) in owners.iter().enumerate() {
            if o == owner {
                branch[n] = Some(chunks.next().unwrap().to_vec());
            }
        }
    }
    let mut lhs = Vec::with_capacity(3 * m * level.len());
    let mut rhs = Vec::with_capacity(3 * m * level.len());
    for (node, b) in level.iter().zip(&branch) {
        let b = b.as_ref().unwrap();
        for v in [&node.mask, &node.g, &node.h] {
            lhs.extend_from_slice(b);
            rhs.extend_from_slice(v);
        }
    }
    let prod = party.mul_raw(&lhs, &rhs)?;
    let mut next = Vec::with_capacity(2 * level.len());
    for (n, node) in level.iter().enumerate() {
        let base = 3 * m * n;
        let left = Node {
            mask: prod[base..base + m].to_vec(),
            g: prod[base + m..base + 2 * m].to_vec(),
            h: prod[base + 2 * m..base + 3 * m].to_vec(),
        };
        let right = Node {
            mask: party.sub(&node.mask, &left.mask),
            g: party.sub(&node.g, &left.g),
            h: party.sub(&node.h, &left.h),
        };
        next.push(left);
        next.push(right);
    }
    Ok(next)
}
