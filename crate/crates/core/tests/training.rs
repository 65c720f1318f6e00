mod common;

use common::{both, combine};
use sgb_core::binning::{BinnedFeatures, Dataset};
use sgb_core::oracle::{plain_train, OracleOptions};
use sgb_core::predict::{leaf_indicators, secure_predict};
use sgb_core::ring::{RingConfig, RingValue};
use sgb_core::session::{run_session, SessionOptions};
use sgb_core::sumgrad::Backend;
use sgb_core::synth::{generate, SynthSpec};
use sgb_core::train::{gradients, train, Objective, TrainConfig, TrainOutput};
use sgb_core::transport::Role;

fn secure_train(cfg: &TrainConfig, a: &Dataset, b: &Dataset, seed: u64) -> (TrainOutput, TrainOutput) {
    let out = run_session(
        &SessionOptions::seeded(seed),
        |p| train(p, cfg, a),
        |p| train(p, cfg, b),
    )
    .expect("training failed");
    (out.a, out.b)
}

fn check_against_oracle(objective: Objective, variant: Backend, seed: u64) {
    let ring = RingConfig::default();
    let data = generate(&SynthSpec {
        rows: 300,
        features: [2, 2],
        objective,
        seed,
    })
    .unwrap();
    let cfg = TrainConfig {
        trees: 3,
        max_depth: 2,
        buckets: 8,
        objective,
        variant,
        ..Default::default()
    };
    let (ta, tb) = secure_train(&cfg, &data.a, &data.b, seed);
    let plain = plain_train(&cfg, &data.joined, OracleOptions::matched(ring.frac_bits)).unwrap();
    assert_eq!(ta.trace, tb.trace);
    for (t, (secure, oracle)) in ta.trace.iter().zip(&plain.model.trees).enumerate() {
        let flats: Vec<usize> = secure.iter().map(|c| c.flat).collect();
        let expect: Vec<usize> = oracle.splits.iter().map(|s| s.flat).collect();
        assert_eq!(flats, expect, "tree {t}");
        let wa = ta.model.leaf_weights(t).unwrap();
        let wb = tb.model.leaf_weights(t).unwrap();
        let w = ring.decode_vec(&combine(&ring, &wa, &wb));
        for (x, y) in w.iter().zip(&oracle.leaves) {
            assert!((x - y).abs() <= 2e-3, "tree {t}: {x} vs {y}");
        }
    }
    let p = ring.decode_vec(&combine(&ring, &ta.predictions, &tb.predictions));
    for (x, y) in p.iter().zip(&plain.predictions) {
        assert!((x - y).abs() <= 1e-2, "{x} vs {y}");
    }
}

#[test]
fn squared_error_matches_oracle() {
    check_against_oracle(Objective::SquaredError, Backend::Crp, 1);
}

#[test]
fn logistic_matches_oracle() {
    check_against_oracle(Objective::Logistic, Backend::Ss, 2);
}

#[test]
fn single_stump_matches_hand_computation() {
    let ring = RingConfig::default();
    let a = Dataset::new(vec!["x".into()], vec![vec![1.0, 2.0, 3.0, 4.0]], Some(vec![0.0, 0.0, 1.0, 1.0])).unwrap();
    let b = Dataset::with_rows(4, vec![], vec![], None).unwrap();
    let cfg = TrainConfig {
        trees: 1,
        max_depth: 1,
        buckets: 4,
        ..Default::default()
    };
    let (ta, tb) = secure_train(&cfg, &a, &b, 3);
    let root = &ta.model.trees[0].nodes[0];
    assert_eq!(root.bucket_threshold, Some(2.0));
    assert_eq!(root.feature.as_deref(), Some("x"));
    assert!(tb.model.trees[0].nodes[0].feature.is_none());
    let w = ring.decode_vec(&combine(
        &ring,
        &ta.model.leaf_weights(0).unwrap(),
        &tb.model.leaf_weights(0).unwrap(),
    ));
    assert!((w[0] + 1.0 / 3.0).abs() <= 2e-3 && (w[1] - 1.0 / 3.0).abs() <= 2e-3, "{w:?}");
}

#[test]
fn constant_labels_give_zero_weights() {
    let ring = RingConfig::default();
    let mut data = generate(&SynthSpec {
        rows: 64,
        features: [1, 2],
        objective: Objective::SquaredError,
        seed: 4,
    })
    .unwrap();
    data.a.label = Some(vec![3.5; 64]);
    let cfg = TrainConfig {
        trees: 2,
        max_depth: 2,
        buckets: 4,
        variant: Backend::Ss,
        ..Default::default()
    };
    let (ta, tb) = secure_train(&cfg, &data.a, &data.b, 4);
    for t in 0..2 {
        let w = ring.decode_vec(&combine(
            &ring,
            &ta.model.leaf_weights(t).unwrap(),
            &tb.model.leaf_weights(t).unwrap(),
        ));
        assert!(w.iter().all(|x| x.abs() <= 2f64.powi(-16)), "{w:?}");
    }
}

#[test]
fn gradient_examples() {
    let ring = RingConfig::default();
    let out = both(&SessionOptions::seeded(5), |p, i| {
        let own = |v: f64| if i == 0 { ring.encode(v).unwrap() } else { RingValue(0) };
        let pred = vec![own(1.5), own(0.0)];
        let y = vec![own(1.5), own(1.0)];
        let sq = gradients(p, Objective::SquaredError, &pred, &y)?;
        let lg = gradients(p, Objective::Logistic, &pred[1..], &y[1..])?;
        Ok((sq, lg))
    });
    let dec = |a: &[RingValue], b: &[RingValue]| ring.decode_vec(&combine(&ring, a, b));
    assert_eq!(dec(&out.a.0 .0[..1], &out.b.0 .0[..1]), vec![0.0]);
    assert_eq!(dec(&out.a.0 .1[..1], &out.b.0 .1[..1]), vec![1.0]);
    let g = dec(&out.a.1 .0, &out.b.1 .0)[0];
    let h = dec(&out.a.1 .1, &out.b.1 .1)[0];
    assert!((g + 0.5).abs() <= 1e-5 && (h - 0.25).abs() <= 1e-5, "{g} {h}");
}

#[test]
fn predictions_are_one_hot_and_match_training() {
    let ring = RingConfig::default();
    let data = generate(&SynthSpec {
        rows: 120,
        features: [2, 3],
        objective: Objective::SquaredError,
        seed: 6,
    })
    .unwrap();
    let cfg = TrainConfig {
        trees: 3,
        max_depth: 3,
        buckets: 8,
        variant: Backend::Crp,
        ..Default::default()
    };
    let (ta, tb) = secure_train(&cfg, &data.a, &data.b, 6);
    let out = run_session(
        &SessionOptions::seeded(7),
        |p| {
            let s = leaf_indicators(p, &ta.model, &data.a)?;
            let y = secure_predict(p, &ta.model, &data.a, Some(Role::PartyA))?;
            Ok((s, y))
        },
        |p| {
            let s = leaf_indicators(p, &tb.model, &data.b)?;
            let y = secure_predict(p, &tb.model, &data.b, Some(Role::PartyA))?;
            Ok((s, y))
        },
    )
    .unwrap();
    for (sa, sb) in out.a.0.iter().zip(&out.b.0) {
        let s = combine(&ring, sa, sb);
        for row in s.chunks(8) {
            assert_eq!(row.iter().filter(|v| v.0 == 1).count(), 1);
            assert!(row.iter().all(|v| v.0 <= 1));
        }
    }
    assert!(out.b.1.is_none());
    let scores = out.a.1.unwrap();
    let train_p = ring.decode_vec(&combine(&ring, &ta.predictions, &tb.predictions));
    for (x, y) in scores.iter().zip(&train_p) {
        assert!((x - y).abs() <= 1e-3, "{x} vs {y}");
    }
    let bins = BinnedFeatures::fit(&data.joined, 8).unwrap();
    assert_eq!(bins.n_features(), 5);
}
