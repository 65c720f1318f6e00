mod common;

use common::{both, combine, rng, split, split_reals, uniform};
use rand::Rng;
use sgb_core::protocols::beaver_share;
use sgb_core::ring::{RingConfig, RingValue};
use sgb_core::session::SessionOptions;
use sgb_core::transport::Role;

fn ring() -> RingConfig {
    RingConfig::default()
}

#[test]
fn reconstruct_known_shares() {
    let ring = ring();
    let opts = SessionOptions::seeded(1);
    let shares = [
        [RingValue(2), RingValue(6), RingValue(5)],
        [RingValue(1), RingValue(2), ring.neg(RingValue(5))],
    ];
    let out = both(&opts, |p, i| p.reveal_all(&shares[i]));
    assert_eq!(out.a, vec![RingValue(3), RingValue(8), RingValue(0)]);
    assert_eq!(out.a, out.b);
}

#[test]
fn share_input_roundtrip() {
    let ring = ring();
    let mut r = rng(2);
    let xs: Vec<RingValue> = (0..1000).map(|_| ring.random(&mut r)).collect();
    let mut with_zero = xs.clone();
    with_zero.push(RingValue(0));
    let n = with_zero.len();
    let out = both(&SessionOptions::seeded(2), |p, i| {
        let s = p.share_input(Role::PartyA, (i == 0).then_some(&with_zero[..]), n)?;
        Ok(s)
    });
    assert_eq!(combine(&ring, &out.a, &out.b), with_zero);
    // One direction only: the owner's masks.
    assert_eq!(out.stats[1].bytes_sent, 0);
}

#[test]
fn reveal_to_one_party() {
    let ring = ring();
    let mut r = rng(3);
    let [a, b] = split_reals(&ring, &mut r, &[1.5, -2.0]);
    let shares = [a, b];
    let out = both(&SessionOptions::seeded(3), |p, i| p.reveal(&shares[i], Some(Role::PartyB)));
    assert!(out.a.is_none());
    assert_eq!(ring.decode_vec(&out.b.unwrap()), vec![1.5, -2.0]);
    assert_eq!(out.stats[1].bytes_sent, 0);
}

#[test]
fn linear_ops_are_local() {
    let ring = ring();
    let mut r = rng(4);
    let [a, b] = split_reals(&ring, &mut r, &[3.0, 1.0]);
    let [c, d] = split_reals(&ring, &mut r, &[5.0, 1.0]);
    let x = [a, b];
    let y = [c, d];
    let out = both(&SessionOptions::seeded(4), |p, i| {
        let sum = p.add(&x[i], &y[i]);
        let diff = p.sub(&x[i], &x[i]);
        let zero = p.scalar_mul(&x[i], 0.0)?;
        let with_const = p.add_public(&x[i], ring.encode(0.25)?);
        let stats_before = p.peer_endpoint().meter().bytes_sent;
        assert_eq!(stats_before, 0);
        Ok([sum, diff, zero, with_const].concat())
    });
    let v = ring.decode_vec(&combine(&ring, &out.a, &out.b));
    assert_eq!(v, vec![8.0, 2.0, 0.0, 0.0, 0.0, 0.0, 3.25, 1.25]);
    assert_eq!(out.total_bytes(), 0);
}

#[test]
fn beaver_formula_example() {
    // x = 4 = 3 + 1, y = 5 = 2 + 3, triple a = 2 = 1 + 1, b = 3 = 2 + 1, c = 6 = 4 + 2.
    let ring = ring();
    let v = |x: u128| RingValue(x);
    let e = v(2);
    let f = v(2);
    let z0 = beaver_share(&ring, 0, e, f, v(3), v(2), v(4));
    let z1 = beaver_share(&ring, 1, e, f, v(1), v(3), v(2));
    assert_eq!(ring.add(z0, z1), v(20));
}

#[test]
fn mul_with_truncation() {
    let ring = ring();
    let mut r = rng(5);
    let n = 2000;
    let xs = uniform(&mut r, n, -100.0, 100.0);
    let mut ys = uniform(&mut r, n, -100.0, 100.0);
    ys[0] = 0.0;
    let x = split_reals(&ring, &mut r, &xs);
    let y = split_reals(&ring, &mut r, &ys);
    let out = both(&SessionOptions::seeded(5), |p, i| p.mul(&x[i], &y[i]));
    let z = ring.decode_vec(&combine(&ring, &out.a, &out.b));
    let xq = ring.decode_vec(&ring.encode_vec(&xs).unwrap());
    let yq = ring.decode_vec(&ring.encode_vec(&ys).unwrap());
    for k in 0..n {
        assert!((z[k] - xq[k] * yq[k]).abs() <= 2.0 * 2f64.powi(-20), "k={k}");
    }
    assert_eq!(z[0], 0.0);
    // Two masked values per element from each party.
    let per_party = out.stats[0].bytes_sent;
    assert_eq!(per_party, (2 * n * 16 + 4 + 5) as u64);
}

#[test]
fn comparison_examples_and_random() {
    let ring = ring();
    let mut r = rng(6);
    let mut xs = vec![3.0, 5.0, -1.0, 0.0];
    let mut ys = vec![7.0, 5.0, 1.0, -0.0];
    for _ in 0..1000 {
        xs.push(r.gen_range(-1e6..1e6));
        ys.push(if r.gen_bool(0.1) { *xs.last().unwrap() } else { r.gen_range(-1e6..1e6) });
    }
    let x = split_reals(&ring, &mut r, &xs);
    let y = split_reals(&ring, &mut r, &ys);
    let out = both(&SessionOptions::seeded(6), |p, i| {
        let raw = p.lt_raw(&x[i], &y[i])?;
        let fixed = p.less_than(&x[i][..2], &y[i][..2])?;
        Ok((raw, fixed))
    });
    let bits = combine(&ring, &out.a.0, &out.b.0);
    let xe = ring.encode_vec(&xs).unwrap();
    let ye = ring.encode_vec(&ys).unwrap();
    for k in 0..xs.len() {
        let expect = ring.to_signed(xe[k]) < ring.to_signed(ye[k]);
        assert_eq!(bits[k], RingValue(expect as u128), "k={k}");
    }
    let fixed = ring.decode_vec(&combine(&ring, &out.a.1, &out.b.1));
    assert_eq!(fixed, vec![1.0, 0.0]);
}

#[test]
fn argmax_examples() {
    let ring = ring();
    let cases: Vec<(Vec<f64>, usize)> = vec![
        (vec![3.0, 7.0, 2.0], 1),
        (vec![5.0, 5.0], 0),
        (vec![4.0], 0),
        (vec![1.0, 2.0, 9.0, 9.0, -3.0], 2),
        (vec![-1.0, -1.0, -1.0, -0.5, -0.5], 3),
    ];
    let mut r = rng(7);
    let shared: Vec<[Vec<RingValue>; 2]> = cases.iter().map(|(v, _)| split_reals(&ring, &mut r, v)).collect();
    let out = both(&SessionOptions::seeded(7), |p, i| {
        shared.iter().map(|s| p.argmax(&s[i])).collect::<sgb_core::Result<Vec<_>>>()
    });
    let expected: Vec<usize> = cases.iter().map(|c| c.1).collect();
    assert_eq!(out.a, expected);
    assert_eq!(out.b, expected);
}

#[test]
fn argmax_invariant_to_positive_scaling() {
    let ring = ring();
    let mut r = rng(8);
    let v = uniform(&mut r, 20, -10.0, 10.0);
    let scaled: Vec<f64> = v.iter().map(|x| x * 3.5).collect();
    let s1 = split_reals(&ring, &mut r, &v);
    let s2 = split_reals(&ring, &mut r, &scaled);
    let out = both(&SessionOptions::seeded(8), |p, i| Ok((p.argmax(&s1[i])?, p.argmax(&s2[i])?)));
    assert_eq!(out.a.0, out.a.1);
}

#[test]
fn argmax_empty_is_an_error() {
    let res = sgb_core::session::run_session(&SessionOptions::seeded(9), |p| p.argmax(&[]), |p| p.argmax(&[]));
    assert!(res.is_err());
}

#[test]
fn division_examples() {
    let ring = ring();
    let mut r = rng(10);
    let num = split_reals(&ring, &mut r, &[6.0, 0.0, 1.0]);
    let den = split_reals(&ring, &mut r, &[3.0, 3.0, 7.0]);
    let out = both(&SessionOptions::seeded(10), |p, i| {
        let a = p.div(&num[i][..2], &den[i][..2], 4.0)?;
        let b = p.div(&num[i][2..], &den[i][2..], 8.0)?;
        Ok([a, b].concat())
    });
    let q = ring.decode_vec(&combine(&ring, &out.a, &out.b));
    assert!((q[0] - 2.0).abs() <= 2e-3, "{}", q[0]);
    assert!(q[1].abs() <= 2f64.powi(-18), "{}", q[1]);
    assert!(((q[2] - 1.0 / 7.0) / (1.0 / 7.0)).abs() <= 1.5e-4, "{}", q[2]);
}

#[test]
fn division_over_a_range() {
    let ring = ring();
    let mut r = rng(11);
    let n = 300;
    let dens = uniform(&mut r, n, 1.0, 5000.0);
    let nums = uniform(&mut r, n, -1e4, 1e4);
    let num = split_reals(&ring, &mut r, &nums);
    let den = split_reals(&ring, &mut r, &dens);
    let out = both(&SessionOptions::seeded(11), |p, i| p.div_range(&num[i], &den[i], 1.0, 5001.0));
    let q = ring.decode_vec(&combine(&ring, &out.a, &out.b));
    for k in 0..n {
        let exact = nums[k] / dens[k];
        assert!((q[k] - exact).abs() <= 1e-3 * exact.abs() + 1e-5, "{} vs {exact}", q[k]);
    }
}

#[test]
fn division_times_denominator() {
    let ring = ring();
    let mut r = rng(12);
    let dens = uniform(&mut r, 100, 2.0, 4.0);
    let nums = uniform(&mut r, 100, 0.5, 3.0);
    let num = split_reals(&ring, &mut r, &nums);
    let den = split_reals(&ring, &mut r, &dens);
    let out = both(&SessionOptions::seeded(12), |p, i| {
        let q = p.div(&num[i], &den[i], 4.0)?;
        p.mul(&q, &den[i])
    });
    let back = ring.decode_vec(&combine(&ring, &out.a, &out.b));
    for k in 0..100 {
        assert!(((back[k] - nums[k]) / nums[k]).abs() <= 2e-3);
    }
}

#[test]
fn sigmoid_values() {
    let ring = ring();
    let mut r = rng(13);
    let xs = [0.0, 1.0, -1.0, 4.0, -7.5];
    let x = split_reals(&ring, &mut r, &xs);
    let out = both(&SessionOptions::seeded(13), |p, i| p.sigmoid(&x[i]));
    let raw = combine(&ring, &out.a, &out.b);
    assert_eq!(raw[0], ring.encode(0.5).unwrap());
    let v = ring.decode_vec(&raw);
    for (k, &x) in xs.iter().enumerate() {
        let exact = 0.5 * x / (1.0 + x.abs()) + 0.5;
        assert!((v[k] - exact).abs() <= 1e-4, "{x}: {} vs {exact}", v[k]);
    }
}

#[test]
fn shares_split_uniformly() {
    let ring = ring();
    let mut r = rng(14);
    let x = split(&ring, &mut r, &[RingValue(3)]);
    assert_eq!(ring.add(x[0][0], x[1][0]), RingValue(3));
}
