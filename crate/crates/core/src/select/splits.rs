use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::SelectError;
use crate::math;
use crate::rng::RngSeed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Rrs,
    Kfold,
    OneSplit,
}

/// One train/validation partition of trajectory positions, each side sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
}

impl Split {
    /// The same partition with the roles of the two sides exchanged.
    pub fn swapped(&self) -> Split {
        Split { train: self.valid.clone(), valid: self.train.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub repetitions: Vec<Split>,
    pub scheme: Scheme,
}

impl SplitPlan {
    pub fn len(&self) -> usize {
        self.repetitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.repetitions.is_empty()
    }

    /// Checks that every repetition partitions `0..n`.
    pub fn check(&self, n: usize) -> Result<(), SelectError> {
        for split in &self.repetitions {
            let mut seen = alloc::vec![false; n];
            for &i in split.train.iter().chain(&split.valid) {
                if i >= n || seen[i] {
                    return Err(SelectError::BadPlan);
                }
                seen[i] = true;
            }
            if seen.iter().any(|s| !s) || split.train.is_empty() || split.valid.is_empty() {
                return Err(SelectError::BadPlan);
            }
        }
        Ok(())
    }
}

fn shuffled(n: usize, seed: RngSeed) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed.rng());
    idx
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

/// `k` independent shuffles of `0..n`, each cut at `floor(n * ratio)`.
/// Repetition `j` depends only on `(seed, j)`, so the first `k` repetitions of
/// a longer plan equal a shorter plan with the same seed.
pub fn rrs_splits(n: usize, k: usize, ratio: f64, seed: RngSeed) -> Result<SplitPlan, SelectError> {
    if k == 0 {
        return Err(SelectError::InvalidParam("need at least one repetition"));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(SelectError::InvalidParam("split ratio must lie in (0, 1)"));
    }
    let n_train = math::floor(n as f64 * ratio) as usize;
    if n_train == 0 || n_train >= n {
        return Err(SelectError::Degenerate { n, ratio });
    }
    let repetitions = (0..k)
        .map(|j| {
            let mut idx = shuffled(n, seed.derive(&[j as u64]));
            let valid = idx.split_off(n_train);
            Split { train: sorted(idx), valid: sorted(valid) }
        })
        .collect();
    let scheme = if k == 1 { Scheme::OneSplit } else { Scheme::Rrs };
    Ok(SplitPlan { repetitions, scheme })
}

/// The first repetition of [`rrs_splits`] with the same arguments.
pub fn one_split(n: usize, ratio: f64, seed: RngSeed) -> Result<SplitPlan, SelectError> {
    rrs_splits(n, 1, ratio, seed)
}

/// One seeded shuffle cut into `m` folds whose sizes differ by at most one;
/// repetition `j` validates on fold `j` and trains on the rest.
pub fn kfold_splits(n: usize, m: usize, seed: RngSeed) -> Result<SplitPlan, SelectError> {
    if m < 2 {
        return Err(SelectError::InvalidParam("need at least two folds"));
    }
    if m > n {
        return Err(SelectError::TooManyFolds { m, n });
    }
    let idx = shuffled(n, seed);
    let (base, extra) = (n / m, n % m);
    let mut bounds = Vec::with_capacity(m + 1);
    bounds.push(0);
    for j in 0..m {
        bounds.push(bounds[j] + base + usize::from(j < extra));
    }
    let repetitions = (0..m)
        .map(|j| {
            let valid = idx[bounds[j]..bounds[j + 1]].to_vec();
            let train = idx[..bounds[j]].iter().chain(&idx[bounds[j + 1]..]).copied().collect();
            Split { train: sorted(train), valid: sorted(valid) }
        })
        .collect();
    Ok(SplitPlan { repetitions, scheme: Scheme::Kfold })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rrs_sizes_and_prefix_property() {
        let plan = rrs_splits(200, 5, 0.5, RngSeed(3)).unwrap();
        assert_eq!(plan.len(), 5);
        plan.check(200).unwrap();
        for s in &plan.repetitions {
            assert_eq!((s.train.len(), s.valid.len()), (100, 100));
        }
        assert_ne!(plan.repetitions[0], plan.repetitions[1]);
        let short = rrs_splits(200, 2, 0.5, RngSeed(3)).unwrap();
        assert_eq!(short.repetitions[..], plan.repetitions[..2]);
        assert_eq!(one_split(200, 0.5, RngSeed(3)).unwrap().repetitions[0], plan.repetitions[0]);
        assert_eq!(rrs_splits(7, 1, 0.5, RngSeed(0)).unwrap().repetitions[0].train.len(), 3);
    }

    #[test]
    fn rrs_rejects_degenerate() {
        assert!(rrs_splits(1, 1, 0.5, RngSeed(0)).is_err());
        assert!(rrs_splits(10, 1, 0.05, RngSeed(0)).is_err());
        assert!(rrs_splits(10, 0, 0.5, RngSeed(0)).is_err());
        assert!(rrs_splits(10, 1, 1.0, RngSeed(0)).is_err());
    }

    #[test]
    fn kfold_examples() {
        let two = kfold_splits(200, 2, RngSeed(1)).unwrap();
        assert_eq!(two.repetitions[0], two.repetitions[1].swapped());
        let five = kfold_splits(200, 5, RngSeed(1)).unwrap();
        assert!(five.repetitions.iter().all(|s| s.valid.len() == 40));
        assert!(kfold_splits(3, 4, RngSeed(1)).is_err());
        assert!(kfold_splits(3, 1, RngSeed(1)).is_err());
    }

    proptest! {
        #[test]
        fn kfold_valid_folds_partition(n in 2usize..60, m in 2usize..10, seed in any::<u64>()) {
            prop_assume!(m <= n);
            let plan = kfold_splits(n, m, RngSeed(seed)).unwrap();
            plan.check(n).unwrap();
            let mut all: Vec<usize> = plan.repetitions.iter().flat_map(|s| s.valid.clone()).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let sizes: Vec<usize> = plan.repetitions.iter().map(|s| s.valid.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }

        #[test]
        fn rrs_is_a_partition(n in 2usize..80, k in 1usize..6, ratio in 0.05f64..0.95, seed in any::<u64>()) {
            if let Ok(plan) = rrs_splits(n, k, ratio, RngSeed(seed)) {
                plan.check(n).unwrap();
                let want = (n as f64 * ratio).floor() as usize;
                prop_assert!(plan.repetitions.iter().all(|s| s.train.len() == want));
            }
        }
    }
}
