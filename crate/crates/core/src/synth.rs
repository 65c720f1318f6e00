//! Seeded synthetic vertically split datasets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::binning::Dataset;
use crate::oracle::logistic;
use crate::train::Objective;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub rows: usize,
    pub features: [usize; 2],
    pub objective: Objective,
    pub seed: u64,
}

/// Both parties' data plus the joined view (A's columns, then B's, with
/// the label) used by the plaintext oracle.
pub struct SynthData {
    pub a: Dataset,
    pub b: Dataset,
    pub joined: Dataset,
}

/// Features are uniform on `[-2, 2]`, every third one rounded to a few
/// levels so ties and short columns occur. The target mixes a linear part,
/// a step and an interaction that crosses the two parties.
pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let m = spec.rows;
    let total = spec.features[0] + spec.features[1];
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(total);
    for j in 0..total {
        let col: Vec<f64> = (0..m)
            .map(|_| {
                let x: f64 = rng.gen_range(-2.0..2.0);
                if j % 3 == 2 {
                    x.round()
                } else {
                    (x * 1000.0).round() / 1000.0
                }
            })
            .collect();
        columns.push(col);
    }
    let coef: Vec<f64> = (0..total).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut label = Vec::with_capacity(m);
    #[allow(clippy::needless_range_loop)]
    for i in 0..m {
        let mut s: f64 = (0..total).map(|j| coef[j] * columns[j][i]).sum();
        if total > 0 {
            s += if columns[0][i] > 0.3 { 1.0 } else { -0.5 };
            s += columns[0][i] * columns[total - 1][i];
        }
        let noise: f64 = rng.gen_range(-0.5..0.5);
        label.push(match spec.objective {
            Objective::SquaredError => ((s + noise) * 1000.0).round() / 1000.0,
            Objective::Logistic => (rng.gen::<f64>() < logistic(s)) as u8 as f64,
        });
    }
    let names: Vec<String> = (0..spec.features[0])
        .map(|j| format!("a{j}"))
        .chain((0..spec.features[1]).map(|j| format!("b{j}")))
        .collect();
    let na = spec.features[0];
    let a = Dataset::with_rows(m, names[..na].to_vec(), columns[..na].to_vec(), Some(label.clone()))?;
    let b = Dataset::with_rows(m, names[na..].to_vec(), columns[na..].to_vec(), None)?;
    let joined = Dataset::new(names, columns, Some(label))?;
    Ok(SynthData { a, b, joined })
}
