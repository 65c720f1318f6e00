#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand::SeedableRng;
use sgb_core::protocols::Party;
use sgb_core::ring::{RingConfig, RingValue};
use sgb_core::session::{run_session, SessionOptions, SessionOutput};
use sgb_core::Result;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Splits secrets into two uniformly random additive shares.
pub fn split(ring: &RingConfig, rng: &mut ChaCha20Rng, xs: &[RingValue]) -> [Vec<RingValue>; 2] {
    let mut a = Vec::with_capacity(xs.len());
    let mut b = Vec::with_capacity(xs.len());
    for &x in xs {
        let r = ring.random(rng);
        a.push(ring.sub(x, r));
        b.push(r);
    }
    [a, b]
}

pub fn split_reals(ring: &RingConfig, rng: &mut ChaCha20Rng, xs: &[f64]) -> [Vec<RingValue>; 2] {
    split(ring, rng, &ring.encode_vec(xs).unwrap())
}

pub fn combine(ring: &RingConfig, a: &[RingValue], b: &[RingValue]) -> Vec<RingValue> {
    a.iter().zip(b).map(|(&x, &y)| ring.add(x, y)).collect()
}

/// Runs the same closure as both parties; the closure gets its party index.
pub fn both<T, F>(opts: &SessionOptions, f: F) -> SessionOutput<T, T>
where
    T: Send,
    F: Fn(&mut Party, usize) -> Result<T> + Sync,
{
    run_session(opts, |p| f(p, 0), |p| f(p, 1)).expect("session failed")
}

pub fn uniform(rng: &mut ChaCha20Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}
