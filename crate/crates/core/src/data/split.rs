use crate::error::{ensure, Result};
use crate::seqcore::SeededRng;

use super::frame::SequenceSample;

/// Indices into the sample list for each part of the semi-supervised split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitResult {
    /// 90%: unlabeled next-step prediction data.
    pub predictor_set: Vec<usize>,
    /// 5%: labeled classifier training data.
    pub classifier_train_set: Vec<usize>,
    /// 5%: labeled classifier validation data.
    pub classifier_val_set: Vec<usize>,
    /// 10% of `predictor_set`.
    pub test_set: Vec<usize>,
    /// When true the test sequences are withheld from predictor training;
    /// when false they are also trained on.
    pub test_held_out: bool,
}

impl SplitResult {
    /// Predictor sequences stage 1 may actually train on.
    pub fn predictor_training_set(&self) -> Vec<usize> {
        if self.test_held_out {
            self.predictor_set
                .iter()
                .copied()
                .filter(|i| !self.test_set.contains(i))
                .collect()
        } else {
            self.predictor_set.clone()
        }
    }
}

pub fn select(samples: &[SequenceSample], idx: &[usize]) -> Vec<SequenceSample> {
    idx.iter().map(|&i| samples[i].clone()).collect()
}

pub const MIN_SPLIT_SEQUENCES: usize = 20;

/// Seeded 90/5/5 split by whole sequence.
///
/// The two 5% parts take `floor(n/20)` sequences each; the predictor part
/// gets the remainder. The test set is a seeded draw of `round(10%)` of the
/// predictor part (at least one). With `paper_literal` the test sequences
/// stay in predictor training.
pub fn split_semi_supervised(n: usize, seed: u64, paper_literal: bool) -> Result<SplitResult> {
    ensure!(
        n >= MIN_SPLIT_SEQUENCES,
        "the semi-supervised split needs at least {MIN_SPLIT_SEQUENCES} sequences, got {n}"
    );
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::derive(seed, 0x5e11).shuffle(&mut order);
    let cls = n / 20;
    let classifier_train_set = order[..cls].to_vec();
    let classifier_val_set = order[cls..2 * cls].to_vec();
    let predictor_set = order[2 * cls..].to_vec();

    let n_test = ((predictor_set.len() as f64 * 0.1).round() as usize).max(1);
    let mut pool = predictor_set.clone();
    SeededRng::derive(seed, 0x7e57).shuffle(&mut pool);
    let test_set = pool[..n_test].to_vec();
    Ok(SplitResult {
        predictor_set,
        classifier_train_set,
        classifier_val_set,
        test_set,
        test_held_out: !paper_literal,
    })
}

/// Seeded partition of `0..n` into `k` folds whose sizes differ by at most one.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    ensure!(k >= 2, "k-fold needs k >= 2, got {k}");
    ensure!(n >= k, "k-fold with k = {k} needs at least {k} items, got {n}");
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::derive(seed, 0xf01d).shuffle(&mut order);
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

pub fn kfold_partition<T: Clone>(items: &[T], k: usize, seed: u64) -> Result<Vec<Vec<T>>> {
    Ok(kfold_indices(items.len(), k, seed)?
        .into_iter()
        .map(|fold| fold.into_iter().map(|i| items[i].clone()).collect())
        .collect())
}
