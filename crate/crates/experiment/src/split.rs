//! Train/test splits at sample-set granularity.

use fdd_core::scenario::MsSampleSet;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{ExperimentError, Result};

/// Set indices for each side of a split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    /// In shuffled order, so prefixes are random nested subsets.
    pub train: Vec<usize>,
    /// Ascending.
    pub test: Vec<usize>,
}

/// Holds out `round(fraction * n)` sets (at least one per side).
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<Split> {
    if n < 2 {
        return Err(ExperimentError::Plan(format!("splitting needs at least 2 sample sets, got {n}")));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(ExperimentError::Plan(format!("split fraction {fraction} outside (0, 1)")));
    }
    let n_test = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = order[..n_test].to_vec();
    test.sort_unstable();
    Ok(Split { train: order[n_test..].to_vec(), test })
}

pub fn split_dataset(sets: Vec<MsSampleSet>, fraction: f64, seed: u64) -> Result<(Vec<MsSampleSet>, Vec<MsSampleSet>)> {
    let split = split_indices(sets.len(), fraction, seed)?;
    let mut slots: Vec<Option<MsSampleSet>> = sets.into_iter().map(Some).collect();
    let mut take = |idx: &[usize]| idx.iter().map(|&i| slots[i].take().expect("indices are disjoint")).collect::<Vec<_>>();
    let test = take(&split.test);
    let train = take(&split.train);
    Ok((train, test))
}
