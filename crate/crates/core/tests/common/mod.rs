#![allow(dead_code)]

use fdsketch::heavy_hitters::ItemId;
use fdsketch::DenseMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Zipf};

pub fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    DenseMatrix::from_vec(rows, cols, data).unwrap()
}

/// `n` item ids drawn from Zipf(universe, 1.2), ids `0..universe`.
pub fn zipf_stream(n: usize, universe: u64, seed: u64) -> Vec<ItemId> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Zipf::new(universe as f64, 1.2).unwrap();
    (0..n).map(|_| z.sample(&mut rng) as u64 - 1).collect()
}
