use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::TunevalError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldPlan {
    pub k: usize,
    /// Fold index per row.
    pub assignment: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|i| self.assignment[*i] == fold).collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|i| self.assignment[*i] != fold).collect()
    }
}

/// Shuffles each class and deals it round-robin; negatives continue where
/// positives stopped so fold sizes also differ by at most one.
pub fn stratified_kfold(labels: &[bool], k: usize, seed: u64) -> Result<FoldPlan, TunevalError> {
    let mut pos: Vec<usize> = (0..labels.len()).filter(|i| labels[*i]).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|i| !labels[*i]).collect();
    if k < 2 {
        return Err(TunevalError::Parameter(format!("k = {k}; need at least 2 folds")));
    }
    if k > pos.len().min(neg.len()) {
        return Err(TunevalError::Parameter(format!(
            "k = {k} exceeds the smaller class count {}",
            pos.len().min(neg.len())
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut assignment = vec![0; labels.len()];
    for (slot, &row) in pos.iter().chain(&neg).enumerate() {
        assignment[row] = slot % k;
    }
    Ok(FoldPlan { k, assignment, seed })
}
