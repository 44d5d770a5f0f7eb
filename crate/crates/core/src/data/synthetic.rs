use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::DiscreteDataset;
use crate::error::{Error, Result};
use crate::model::{BankLayout, CptBank, NormalizedBank, Ordering, TanStructure};

/// Draws `n` samples: `c ~ p(C)`, then each feature in ordering position
/// order from `p(X_i | pa(X_i), c)`.
pub fn sample_from_model(structure: &TanStructure, bank: &NormalizedBank, n: usize, seed: u64) -> Result<DiscreteDataset> {
    if structure.is_pseudo() {
        return Err(Error::InvalidStructure(
            "ancestral sampling needs parents earlier in the ordering".into(),
        ));
    }
    let layout = bank.layout();
    let selection = layout.resolve(structure)?;
    let ordering = structure.ordering();
    let d = structure.num_features();
    let c_count = bank.num_classes();
    let prior: Vec<f64> = bank.class_log_prior().iter().map(|v| v.exp()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = vec![0usize; n * d];
    let mut labels = Vec::with_capacity(n);
    let mut probs = Vec::new();
    for row in features.chunks_mut(d) {
        let c = draw(&prior, &mut rng);
        for (pos, &cand) in selection.iter().enumerate() {
            let slot = layout.slot(pos, cand);
            let pv = slot.parent.position().map_or(0, |j| row[ordering.feature(j)]);
            probs.clear();
            probs.extend((0..slot.child_arity).map(|k| bank.row(pos, cand, k, pv)[c].exp()));
            row[ordering.feature(pos)] = draw(&probs, &mut rng);
        }
        labels.push(c);
    }
    DiscreteDataset::from_flat(features, labels, layout.feature_arities(), c_count)
}

fn draw(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Bank with every logit drawn uniformly from `[-spread, spread]`.
pub fn random_bank(layout: Arc<BankLayout>, spread: f64, seed: u64) -> CptBank {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..layout.len()).map(|_| rng.gen_range(-spread..=spread)).collect();
    CptBank::from_values(layout, values).expect("finite values")
}

pub fn random_ordering(d: usize, seed: u64) -> Ordering {
    let mut perm: Vec<usize> = (0..d).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ordering::new(perm).expect("shuffled identity is a permutation")
}
