use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FoldError {
    #[error("k-fold split needs k >= 2, got {0}")]
    TooFewFolds(usize),
    #[error("cannot split {len} items into {k} folds")]
    TooFewItems { len: usize, k: usize },
}

/// Stratified k-fold split over item labels.
///
/// Returns `k` folds of indices into `labels`, each sorted ascending. The folds
/// partition `0..labels.len()`, and for every label the per-fold counts differ
/// by at most one. Items of each label are shuffled with a seeded generator and
/// dealt round-robin; the dealing offset carries over from one label to the
/// next so overall fold sizes stay balanced too.
pub fn stratified_kfold<L: Ord + Copy>(
    labels: &[L],
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>, FoldError> {
    if k < 2 {
        return Err(FoldError::TooFewFolds(k));
    }
    if labels.len() < k {
        return Err(FoldError::TooFewItems { len: labels.len(), k });
    }
    let mut by_label: BTreeMap<L, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_label.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut offset = 0;
    for members in by_label.values_mut() {
        members.shuffle(&mut rng);
        for &idx in members.iter() {
            folds[offset % k].push(idx);
            offset += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}
