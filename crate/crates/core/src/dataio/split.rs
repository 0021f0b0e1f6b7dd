//! Deterministic train/val/test partitioning of a scene list.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Disjoint, exhaustive scene partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Shuffle the scenes with a seeded generator and cut them at the rounded
/// fraction boundaries. Fractions must be non-negative and sum to 1.
pub fn split_dataset<T: Clone>(
    scenes: &[T],
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplit<T>> {
    if scenes.is_empty() {
        return Err(Error::Input("scene list is empty".to_string()));
    }
    let (ft, fv, fe) = fractions;
    if ft < 0.0 || fv < 0.0 || fe < 0.0 || (ft + fv + fe - 1.0).abs() > 1e-9 {
        return Err(Error::Input(format!(
            "fractions ({ft}, {fv}, {fe}) must be non-negative and sum to 1"
        )));
    }
    let n = scenes.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let b1 = ((n as f64 * ft).round() as usize).min(n);
    let b2 = ((n as f64 * (ft + fv)).round() as usize).clamp(b1, n);
    let pick = |range: &[usize]| -> Vec<T> { range.iter().map(|&i| scenes[i].clone()).collect() };
    Ok(DatasetSplit {
        train: pick(&order[..b1]),
        val: pick(&order[b1..b2]),
        test: pick(&order[b2..]),
    })
}
