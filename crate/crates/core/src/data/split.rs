use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DiscreteDataset;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldKind {
    Holdout { train_fraction: f64 },
    Kfold { k: usize },
}

/// How to split a dataset. Splits are unstratified.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub kind: FoldKind,
    pub seed: u64,
}

impl FoldSpec {
    pub fn holdout(train_fraction: f64, seed: u64) -> Self {
        FoldSpec {
            kind: FoldKind::Holdout { train_fraction },
            seed,
        }
    }

    pub fn kfold(k: usize, seed: u64) -> Self {
        FoldSpec {
            kind: FoldKind::Kfold { k },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            FoldKind::Holdout { train_fraction } if !(train_fraction > 0.0 && train_fraction < 1.0) => Err(
                Error::InvalidArgument(format!("train fraction {train_fraction} not in (0, 1)")),
            ),
            FoldKind::Kfold { k } if k < 2 => Err(Error::InvalidArgument(format!("k = {k} must be at least 2"))),
            _ => Ok(()),
        }
    }
}

/// `(train indices, test indices)` for each fold.
pub fn split_indices(n: usize, spec: &FoldSpec) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    spec.validate()?;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    match spec.kind {
        FoldKind::Holdout { train_fraction } => {
            let n_train = (train_fraction * n as f64).round() as usize;
            let test = perm.split_off(n_train);
            Ok(vec![(perm, test)])
        }
        FoldKind::Kfold { k } => {
            if n < k {
                return Err(Error::InvalidArgument(format!("{n} samples cannot form {k} folds")));
            }
            Ok((0..k)
                .map(|f| {
                    let (lo, hi) = (f * n / k, (f + 1) * n / k);
                    let test = perm[lo..hi].to_vec();
                    let train = perm[..lo].iter().chain(&perm[hi..]).copied().collect();
                    (train, test)
                })
                .collect())
        }
    }
}

pub fn split(ds: &DiscreteDataset, spec: &FoldSpec) -> Result<Vec<(DiscreteDataset, DiscreteDataset)>> {
    Ok(split_indices(ds.len(), spec)?
        .into_iter()
        .map(|(train, test)| (ds.subset(&train), ds.subset(&test)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn holdout_two_thirds() {
        let folds = split_indices(9, &FoldSpec::holdout(2.0 / 3.0, 3)).unwrap();
        assert_eq!(folds.len(), 1);
        assert_eq!(folds[0].0.len(), 6);
        assert_eq!(folds[0].1.len(), 3);
    }

    #[test]
    fn kfold_partitions_indices() {
        let folds = split_indices(10, &FoldSpec::kfold(5, 11)).unwrap();
        let mut seen = [0; 10];
        for (train, test) in &folds {
            assert_eq!(test.len(), 2);
            assert_eq!(train.len(), 8);
            for &i in test {
                seen[i] += 1;
                assert!(!train.contains(&i));
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn seeded_determinism() {
        let a = split_indices(100, &FoldSpec::holdout(0.5, 1)).unwrap();
        let b = split_indices(100, &FoldSpec::holdout(0.5, 1)).unwrap();
        let c = split_indices(100, &FoldSpec::holdout(0.5, 2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn too_few_samples_for_k() {
        assert!(split_indices(3, &FoldSpec::kfold(5, 0)).is_err());
        assert!(split_indices(3, &FoldSpec::kfold(1, 0)).is_err());
        assert!(split_indices(3, &FoldSpec::holdout(1.0, 0)).is_err());
    }
}
