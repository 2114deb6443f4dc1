//! Seeded stratified k-fold assignment.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::Manifest;
use crate::{Error, Result};

/// Fold assignment aligned with the manifest's record order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// `assignment[i]` is the fold index of `manifest.records[i]`.
    pub assignment: Vec<usize>,
}

impl FoldPlan {
    /// Record indices of the test fold `fold` and its training complement.
    pub fn split_indices(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, &f) in self.assignment.iter().enumerate() {
            if f == fold {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }
}

/// Assign every slide to one of `k` folds so that per-class fold counts
/// differ by at most one. Deterministic given `(manifest, k, seed)`.
pub fn stratified_kfold(manifest: &Manifest, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Config(format!(
            "k must be at least 2 so a fold can be held out, got {k}"
        )));
    }
    let s = manifest.class_count();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); s];
    for (i, r) in manifest.records.iter().enumerate() {
        by_class[r.label].push(i);
    }
    for (label, members) in by_class.iter().enumerate() {
        if members.len() < k {
            return Err(Error::Config(format!(
                "class '{}' has {} slides, fewer than k={k}",
                manifest.class_name(label),
                members.len()
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; manifest.records.len()];
    for (label, members) in by_class.iter_mut().enumerate() {
        members.shuffle(&mut rng);
        // rotate the starting fold per class so remainders spread out
        let start = label % k;
        for (pos, &rec_idx) in members.iter().enumerate() {
            assignment[rec_idx] = (start + pos) % k;
        }
    }
    Ok(FoldPlan { k, seed, assignment })
}
