//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use tanbn_core::baselines::random_tan;
use tanbn_core::data::{random_bank, random_ordering, sample_from_model};
use tanbn_core::{BankLayout, DiscreteDataset, TanStructure};

/// A dataset of `n` rows sampled from a random TAN over `d` ternary features.
pub fn synthetic(d: usize, n: usize, seed: u64) -> (TanStructure, DiscreteDataset) {
    let structure = random_tan(&random_ordering(d, seed), seed);
    let layout = BankLayout::for_structure(&structure, &vec![3; d], 2).expect("valid layout");
    let bank = random_bank(Arc::new(layout), 2.0, seed).log_normalize();
    let data = sample_from_model(&structure, &bank, n, seed).expect("sampling succeeds");
    (structure, data)
}
