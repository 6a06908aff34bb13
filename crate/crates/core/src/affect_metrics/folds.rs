use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MetricsError;

/// One person-independent split: no subject is on both sides.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub fold_id: usize,
    pub train_subjects: BTreeSet<String>,
    pub test_subjects: BTreeSet<String>,
}

/// Subject-disjoint k-fold partition. Test-set sizes differ by at most one;
/// the first `n mod k` folds take the extra subject.
pub fn make_folds<S: AsRef<str>>(
    subject_ids: &[S],
    k: usize,
    seed: u64,
) -> Result<Vec<FoldSpec>, MetricsError> {
    if k < 2 {
        return Err(MetricsError::TooFewFolds(k));
    }
    let unique: BTreeSet<String> = subject_ids.iter().map(|s| s.as_ref().to_owned()).collect();
    if unique.len() < k {
        return Err(MetricsError::TooFewSubjects { needed: k, got: unique.len() });
    }
    let mut order: Vec<String> = unique.iter().cloned().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (order.len() / k, order.len() % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for fold_id in 0..k {
        let size = base + usize::from(fold_id < extra);
        let test: BTreeSet<String> = order[start..start + size].iter().cloned().collect();
        start += size;
        let train = unique.difference(&test).cloned().collect();
        folds.push(FoldSpec { fold_id, train_subjects: train, test_subjects: test });
    }
    Ok(folds)
}
