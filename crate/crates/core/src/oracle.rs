//! Plaintext reference trainer and metrics.
//!
//! The oracle grows the same full-depth trees over the same bins as the
//! secure trainer. With [`OracleOptions::matched`] it also reproduces the
//! secure arithmetic where it matters for decisions: gains go through the
//! same normalized Goldschmidt division, are rounded to the fixed-point
//! grid, and ties resolve to the lowest flat index.

use serde::{Deserialize, Serialize};

use crate::binning::{BinnedFeatures, Dataset};
use crate::train::{ModelHalf, NodeOwner, Objective, TrainConfig};
use crate::{Error, Result};

/// Initial reciprocal approximation, identical to the secure protocol.
const W0: f64 = 2.9142;

/// `num / den` as computed by the secure range division: `den` is scaled
/// into `[0.5, 1)` by the power of two the comparisons select for the
/// public range `[lower, upper]`, followed by `iters` Goldschmidt steps.
pub fn emulated_div(num: f64, den: f64, lower: f64, upper: f64, iters: usize) -> f64 {
    let j_lo = lower.log2().floor() as i32;
    let j_hi = upper.log2().floor() as i32;
    let mut e = j_hi;
    for j in (j_lo + 1..=j_hi).rev() {
        if den < 2f64.powi(j) {
            e = j - 1;
        }
    }
    let factor = 2f64.powi(-(e + 1));
    let (n, d) = (num * factor, den * factor);
    let w0 = W0 - 2.0 * d;
    let mut y = n * w0;
    let mut err = 1.0 - d * w0;
    for _ in 0..iters {
        y *= 1.0 + err;
        err *= err;
    }
    y
}

/// The rational sigmoid used by the secure trainer: `0.5 x / (1 + |x|) + 0.5`.
pub fn rational_sigmoid(x: f64) -> f64 {
    0.5 * x / (1.0 + x.abs()) + 0.5
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    /// Division as in the secure protocol instead of exact.
    pub emulate_division: bool,
    /// Division iterations when emulating.
    pub div_iters: usize,
    /// Gains rounded to `2^-frac_bits` before comparison; `None` keeps f64.
    pub quantize_bits: Option<u32>,
    /// Rational sigmoid (as in the secure trainer) instead of the logistic.
    pub rational_sigmoid: bool,
}

impl OracleOptions {
    /// Arithmetic matched to the secure trainer with `frac_bits` fractional bits.
    pub fn matched(frac_bits: u32) -> Self {
        Self {
            emulate_division: true,
            div_iters: 2,
            quantize_bits: Some(frac_bits),
            rational_sigmoid: true,
        }
    }

    /// Textbook arithmetic: exact division and the logistic link.
    pub fn exact() -> Self {
        Self {
            emulate_division: false,
            div_iters: 0,
            quantize_bits: None,
            rational_sigmoid: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlainSplit {
    pub feature: usize,
    pub bucket: usize,
    pub threshold: f64,
    /// Candidate index in the flat order used by the secure trainer.
    pub flat: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlainTree {
    /// Internal nodes in heap order.
    pub splits: Vec<PlainSplit>,
    pub leaves: Vec<f64>,
}

impl PlainTree {
    pub fn depth(&self) -> usize {
        self.leaves.len().trailing_zeros() as usize
    }

    pub fn leaf_of(&self, row: &[f64]) -> usize {
        let mut node = 0;
        while node < self.splits.len() {
            let s = &self.splits[node];
            node = if row[s.feature] <= s.threshold { 2 * node + 1 } else { 2 * node + 2 };
        }
        node - self.splits.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlainModel {
    pub objective: Objective,
    pub learning_rate: f64,
    pub base_score: f64,
    pub trees: Vec<PlainTree>,
    pub options: OracleOptions,
}

impl PlainModel {
    /// Raw scores (before any link function).
    pub fn predict(&self, data: &Dataset) -> Vec<f64> {
        (0..data.rows())
            .map(|i| {
                let row = data.row(i);
                self.base_score
                    + self.learning_rate * self.trees.iter().map(|t| t.leaves[t.leaf_of(&row)]).sum::<f64>()
            })
            .collect()
    }

    pub fn link(&self, score: f64) -> f64 {
        link(self.objective, score, self.options.rational_sigmoid)
    }
}

/// Maps a raw score to the prediction scale of `objective`.
pub fn link(objective: Objective, score: f64, rational: bool) -> f64 {
    match (objective, rational) {
        (Objective::SquaredError, _) => score,
        (Objective::Logistic, true) => rational_sigmoid(score),
        (Objective::Logistic, false) => logistic(score),
    }
}

/// Joins two model halves into one plaintext model, revealing everything.
/// Only for testing and audits: both halves must be in one place.
/// `names` orders the features as the rows passed to [`PlainModel::predict`].
pub fn from_halves(a: &ModelHalf, b: &ModelHalf, names: &[String]) -> Result<PlainModel> {
    if a.trees.len() != b.trees.len() || a.config.max_depth != b.config.max_depth || a.ring != b.ring {
        return Err(Error::Data("model halves do not match".into()));
    }
    let ring = a.ring;
    let mut trees = Vec::with_capacity(a.trees.len());
    for (t, (ta, tb)) in a.trees.iter().zip(&b.trees).enumerate() {
        let mut splits = Vec::with_capacity(ta.nodes.len());
        for (na, nb) in ta.nodes.iter().zip(&tb.nodes) {
            let own = match (na.owner, nb.owner) {
                (NodeOwner::Own, NodeOwner::Peer) => na,
                (NodeOwner::Peer, NodeOwner::Own) => nb,
                _ => return Err(Error::Data(format!("tree {t}: node {} owned ambiguously", na.id))),
            };
            let name = own.feature.as_deref().unwrap_or_default();
            let feature = names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Data(format!("feature {name:?} not in names")))?;
            splits.push(PlainSplit {
                feature,
                bucket: own.bucket.unwrap_or(0),
                threshold: own.bucket_threshold.unwrap_or(f64::MAX),
                flat: 0,
            });
        }
        let wa = a.leaf_weights(t)?;
        let wb = b.leaf_weights(t)?;
        let leaves = wa.iter().zip(&wb).map(|(&x, &y)| ring.decode(ring.add(x, y))).collect();
        trees.push(PlainTree { splits, leaves });
    }
    Ok(PlainModel {
        objective: a.config.objective,
        learning_rate: a.config.learning_rate,
        base_score: ring.decode(ring.add(a.base_score()?, b.base_score()?)),
        trees,
        options: OracleOptions::matched(ring.frac_bits),
    })
}

/// Result of plaintext training, including the training-set scores.
pub struct PlainOutput {
    pub model: PlainModel,
    pub predictions: Vec<f64>,
}

/// Trains on the joined data; features must be ordered as A's then B's for
/// flat indices to line up with the secure trainer.
pub fn plain_train(cfg: &TrainConfig, data: &Dataset, opts: OracleOptions) -> Result<PlainOutput> {
    cfg.validate()?;
    let y = data
        .label
        .as_deref()
        .ok_or_else(|| Error::Data("oracle needs labels".into()))?;
    let m = data.rows();
    if m == 0 {
        return Err(Error::Data("cannot train on zero rows".into()));
    }
    let bins = BinnedFeatures::fit(data, cfg.buckets)?;
    let k = cfg.buckets;
    let n_feat = bins.n_features();
    if n_feat == 0 {
        return Err(Error::Data("no features".into()));
    }
    let (lo, hi) = cfg.denominator_range(m);
    let div = |n: f64, d: f64| {
        if opts.emulate_division {
            emulated_div(n, d, lo, hi, opts.div_iters)
        } else {
            n / d
        }
    };
    let quant = |v: f64| match opts.quantize_bits {
        Some(b) => (v * 2f64.powi(b as i32)).round(),
        None => v,
    };
    let sigmoid = |x: f64| {
        if opts.rational_sigmoid {
            if opts.emulate_division {
                0.5 * emulated_div(x, 1.0 + x.abs(), 1.0, 2f64.powi(18), opts.div_iters) + 0.5
            } else {
                rational_sigmoid(x)
            }
        } else {
            logistic(x)
        }
    };

    let base = match cfg.objective {
        Objective::SquaredError => y.iter().sum::<f64>() / m as f64,
        Objective::Logistic => 0.0,
    };
    let mut pred = vec![base; m];
    let mut trees = Vec::with_capacity(cfg.trees);
    for _ in 0..cfg.trees {
        let (g, h): (Vec<f64>, Vec<f64>) = match cfg.objective {
            Objective::SquaredError => (pred.iter().zip(y).map(|(p, y)| p - y).collect(), vec![1.0; m]),
            Objective::Logistic => pred
                .iter()
                .zip(y)
                .map(|(&p, &y)| {
                    let s = sigmoid(p);
                    (s - y, s * (1.0 - s))
                })
                .unzip(),
        };
        // Rows of each node at the current level, in heap order.
        let mut level: Vec<Vec<usize>> = vec![(0..m).collect()];
        let mut splits = Vec::new();
        for _ in 0..cfg.max_depth {
            let mut next = Vec::with_capacity(2 * level.len());
            for rows in &level {
                let gt: f64 = rows.iter().map(|&i| g[i]).sum();
                let ht: f64 = rows.iter().map(|&i| h[i]).sum();
                let parent = div(gt * gt, ht + cfg.lambda);
                let mut best: Option<(f64, usize)> = None;
                for j in 0..n_feat {
                    let mut bg = vec![0.0; k];
                    let mut bh = vec![0.0; k];
                    for &i in rows {
                        let b = bins.buckets[j][i] as usize;
                        bg[b] += g[i];
                        bh[b] += h[i];
                    }
                    let (mut gl, mut hl) = (0.0, 0.0);
                    for b in 0..k - 1 {
                        gl += bg[b];
                        hl += bh[b];
                        let (gr, hr) = (gt - gl, ht - hl);
                        let gain = 0.5 * (div(gl * gl, hl + cfg.lambda) + div(gr * gr, hr + cfg.lambda) - parent)
                            - cfg.gamma;
                        let score = quant(gain);
                        let flat = j * (k - 1) + b;
                        if best.is_none_or(|(s, _)| score > s) {
                            best = Some((score, flat));
                        }
                    }
                }
                let flat = best.unwrap().1;
                let (feature, bucket) = (flat / (k - 1), flat % (k - 1));
                let threshold = bins.bins[feature].split_threshold(bucket);
                let (left, right): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&i| bins.buckets[feature][i] as usize <= bucket);
                splits.push(PlainSplit {
                    feature,
                    bucket,
                    threshold,
                    flat,
                });
                next.push(left);
                next.push(right);
            }
            level = next;
        }
        let leaves: Vec<f64> = level
            .iter()
            .map(|rows| {
                let gs: f64 = rows.iter().map(|&i| g[i]).sum();
                let hs: f64 = rows.iter().map(|&i| h[i]).sum();
                div(-gs, hs + cfg.lambda)
            })
            .collect();
        for (leaf, rows) in level.iter().enumerate() {
            for &i in rows {
                pred[i] += cfg.learning_rate * leaves[leaf];
            }
        }
        trees.push(PlainTree { splits, leaves });
    }
    Ok(PlainOutput {
        model: PlainModel {
            objective: cfg.objective,
            learning_rate: cfg.learning_rate,
            base_score: base,
            trees,
            options: opts,
        },
        predictions: pred,
    })
}

/// Area under the ROC curve via the rank statistic, ties averaged.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Data(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    let pos = labels.iter().filter(|&&y| y > 0.5).count() as f64;
    let neg = labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(Error::Data("AUC needs both classes".into()));
    }
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &y)| y > 0.5).map(|(r, _)| r).sum();
    Ok((rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg))
}

pub fn rmse(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Data(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.is_empty() {
        return Err(Error::Data("RMSE of nothing".into()));
    }
    let s: f64 = scores.iter().zip(labels).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((s / scores.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn pairwise_auc(s: &[f64], y: &[f64]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..s.len() {
            for j in 0..s.len() {
                if y[i] > 0.5 && y[j] <= 0.5 {
                    den += 1.0;
                    num += if s[i] > s[j] {
                        1.0
                    } else if s[i] == s[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_matches_pairwise() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let y: Vec<f64> = (0..200).map(|_| rng.gen_range(0..2) as f64).collect();
        let s: Vec<f64> = (0..200).map(|_| (rng.gen_range(0..40) as f64) / 10.0).collect();
        assert!((auc(&s, &y).unwrap() - pairwise_auc(&s, &y)).abs() < 1e-9);
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 1.0);
        assert!(auc(&[0.1], &[1.0]).is_err());
    }

    #[test]
    fn rmse_basics() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), (12.5f64).sqrt());
        assert!(rmse(&[1.0], &[]).is_err());
    }

    #[test]
    fn emulated_division_is_close() {
        for &(n, d) in &[(6.0, 3.0), (1.0, 7.0), (-5.0, 1.0), (100.0, 4999.0), (0.0, 3.0)] {
            let q = emulated_div(n, d, 1.0, 5000.0, 2);
            assert!((q - n / d).abs() <= 1e-4 * (n / d).abs());
        }
    }

    fn stump_data() -> Dataset {
        Dataset::new(vec!["x".into()], vec![vec![1.0, 2.0, 3.0, 4.0]], Some(vec![0.0, 0.0, 1.0, 1.0])).unwrap()
    }

    #[test]
    fn four_row_stump() {
        let cfg = TrainConfig {
            trees: 1,
            max_depth: 1,
            buckets: 4,
            ..Default::default()
        };
        let out = plain_train(&cfg, &stump_data(), OracleOptions::exact()).unwrap();
        let t = &out.model.trees[0];
        assert_eq!(t.splits[0].threshold, 2.0);
        // g = p - y is 0.5,0.5 | -0.5,-0.5 with lambda 1: w = -G/(H+1).
        assert!((t.leaves[0] + 1.0 / 3.0).abs() < 1e-12);
        assert!((t.leaves[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn constant_labels_give_zero_leaves() {
        let mut d = stump_data();
        d.label = Some(vec![2.0; 4]);
        let cfg = TrainConfig {
            trees: 2,
            max_depth: 2,
            buckets: 4,
            ..Default::default()
        };
        let out = plain_train(&cfg, &d, OracleOptions::matched(20)).unwrap();
        for t in &out.model.trees {
            assert!(t.leaves.iter().all(|w| w.abs() < 1e-12));
        }
    }
}
