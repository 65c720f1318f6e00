//! Secure prediction over the distributed model.
//!
//! Each party walks its half of every tree: at its own nodes it follows the
//! comparison, at the peer's nodes it keeps both branches. The two local
//! candidate sets intersect in exactly the true leaf, so the element-wise
//! product of the shared candidate vectors is a shared one-hot vector `S`,
//! and the tree's score is the inner product of `S` with the shared leaf
//! weights.

use crate::binning::Dataset;
use crate::protocols::Party;
use crate::ring::RingValue;
use crate::train::{ModelHalf, NodeOwner, TreeHalf};
use crate::transport::Role;
use crate::{Error, Result};

/// Upper bound on elements per batched multiplication.
const BATCH_ELEMENTS: usize = 1 << 20;

/// Leaves of `tree` reachable from `row` given only this party's splits.
/// `lookup` maps the owner's feature names to positions in `row`.
pub fn local_candidates(tree: &TreeHalf, depth: usize, row: &[f64], lookup: &dyn Fn(&str) -> Option<usize>) -> Result<Vec<bool>> {
    let internal = (1usize << depth) - 1;
    let mut out = vec![false; 1 << depth];
    let mut stack = vec![0usize];
    while let Some(node) = stack.pop() {
        if node >= internal {
            out[node - internal] = true;
            continue;
        }
        let n = tree
            .nodes
            .get(node)
            .ok_or_else(|| Error::Data(format!("tree is missing node {node}")))?;
        match n.owner {
            NodeOwner::Peer => {
                stack.push(2 * node + 2);
                stack.push(2 * node + 1);
            }
            NodeOwner::Own => {
                let name = n.feature.as_deref().unwrap_or_default();
                let j = lookup(name).ok_or_else(|| Error::Data(format!("feature {name:?} not in the input")))?;
                let thr = n.bucket_threshold.unwrap_or(f64::MAX);
                stack.push(if row[j] <= thr { 2 * node + 1 } else { 2 * node + 2 });
            }
        }
    }
    Ok(out)
}

/// Checks that the two halves describe the same forest with complementary
/// ownership and that both parties score the same number of rows.
fn check_halves(party: &mut Party, model: &ModelHalf, rows: usize) -> Result<()> {
    if model.role != party.role() {
        return Err(Error::Config(format!(
            "model half belongs to {:?}, not {:?}",
            model.role,
            party.role()
        )));
    }
    if model.ring != *party.ring() {
        return Err(Error::Config("model ring parameters differ from the session's".into()));
    }
    let mut meta = vec![
        model.trees.len() as u64,
        model.depth() as u64,
        rows as u64,
        model.config.objective as u64,
        model.config.learning_rate.to_bits(),
    ];
    let head = meta.len();
    meta.extend(model.trees.iter().flat_map(|t| t.nodes.iter().map(|n| (n.owner == NodeOwner::Own) as u64)));
    let theirs = party.exchange_meta(&meta)?;
    if theirs.len() != meta.len() || theirs[..head] != meta[..head] {
        return Err(Error::Protocol("model halves disagree on shape or row count".into()));
    }
    if meta[head..].iter().zip(&theirs[head..]).any(|(a, b)| a + b != 1) {
        return Err(Error::Protocol("model halves disagree on node ownership".into()));
    }
    Ok(())
}

/// Shares of the one-hot leaf indicator `S` of every tree, instance-major
/// (`out[t][i * leaves + l]`), at unit scale.
pub fn leaf_indicators(party: &mut Party, model: &ModelHalf, data: &Dataset) -> Result<Vec<Vec<RingValue>>> {
    let m = data.rows();
    check_halves(party, model, m)?;
    let leaves = model.leaves();
    let lookup = |name: &str| data.names.iter().position(|n| n == name);
    let rows: Vec<Vec<f64>> = (0..m).map(|i| data.row(i)).collect();
    let per_tree = m * leaves;
    let chunk = (BATCH_ELEMENTS / per_tree.max(1)).max(1);
    let mut out = Vec::with_capacity(model.trees.len());
    for trees in model.trees.chunks(chunk) {
        let mut local = Vec::with_capacity(trees.len() * per_tree);
        for tree in trees {
            for row in &rows {
                let c = local_candidates(tree, model.depth(), row, &lookup)?;
                local.extend(c.into_iter().map(|b| RingValue(b as u128)));
            }
        }
        let n = local.len();
        let ia = party.share_input(Role::PartyA, (party.role() == Role::PartyA).then_some(&local[..]), n)?;
        let ib = party.share_input(Role::PartyB, (party.role() == Role::PartyB).then_some(&local[..]), n)?;
        let s = party.mul_raw(&ia, &ib)?;
        out.extend(s.chunks(per_tree.max(1)).map(<[RingValue]>::to_vec).take(trees.len()));
    }
    while out.len() < model.trees.len() {
        out.push(Vec::new());
    }
    Ok(out)
}

/// Shares of the raw scores `base + lr * sum_t <S_t, W_t>` of every row.
pub fn secure_scores(party: &mut Party, model: &ModelHalf, data: &Dataset) -> Result<Vec<RingValue>> {
    let m = data.rows();
    let leaves = model.leaves();
    let indicators = leaf_indicators(party, model, data)?;
    let ring = *party.ring();
    let mut total = vec![RingValue(0); m];
    for (t, s) in indicators.iter().enumerate() {
        let w = model.leaf_weights(t)?;
        let wide: Vec<RingValue> = (0..m).flat_map(|_| w.iter().copied()).collect();
        let prod = party.mul_raw(s, &wide)?;
        for (i, row) in prod.chunks(leaves).enumerate() {
            total[i] = row.iter().fold(total[i], |acc, &v| ring.add(acc, v));
        }
    }
    if model.config.learning_rate != 1.0 {
        total = party.scalar_mul(&total, model.config.learning_rate)?;
    }
    let base = vec![model.base_score()?; m];
    Ok(party.add(&total, &base))
}

/// Raw scores revealed to `recipient` only (`None` reveals to both).
pub fn secure_predict(
    party: &mut Party,
    model: &ModelHalf,
    data: &Dataset,
    recipient: Option<Role>,
) -> Result<Option<Vec<f64>>> {
    let scores = party.phase("predict", |p| secure_scores(p, model, data))?;
    let ring = *party.ring();
    let opened = party.phase("reveal", |p| p.reveal(&scores, recipient))?;
    Ok(opened.map(|v| ring.decode_vec(&v)))
}
