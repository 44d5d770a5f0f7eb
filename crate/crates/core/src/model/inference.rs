use super::{BankLayout, CptBank, NormalizedBank, TanStructure};
use crate::data::DiscreteDataset;
use crate::error::{Error, Result};

pub(crate) fn check_sample(layout: &BankLayout, x: &[usize]) -> Result<()> {
    if x.len() != layout.num_positions() {
        return Err(Error::ShapeMismatch(format!(
            "sample has {} features, model expects {}",
            x.len(),
            layout.num_positions()
        )));
    }
    let ordering = layout.candidates().ordering();
    for pos in 0..layout.num_positions() {
        let f = ordering.feature(pos);
        if x[f] >= layout.arity(pos) {
            return Err(Error::InvalidArgument(format!(
                "feature {f} has value {} but arity {}",
                x[f],
                layout.arity(pos)
            )));
        }
    }
    Ok(())
}

pub(crate) fn check_dataset(layout: &BankLayout, ds: &DiscreteDataset) -> Result<()> {
    let arities = layout.feature_arities();
    if ds.num_features() != arities.len() {
        return Err(Error::ShapeMismatch(format!(
            "dataset has {} features, model expects {}",
            ds.num_features(),
            arities.len()
        )));
    }
    for (f, (&have, &want)) in ds.arities().iter().zip(&arities).enumerate() {
        if have > want {
            return Err(Error::ShapeMismatch(format!(
                "feature {f} has arity {have} in the data but {want} in the model"
            )));
        }
    }
    if ds.num_classes() > layout.num_classes() {
        return Err(Error::ShapeMismatch(format!(
            "dataset has {} classes, model has {}",
            ds.num_classes(),
            layout.num_classes()
        )));
    }
    Ok(())
}

/// Adds `log p(x_i | x_pa(i), c)` of the selected tables to `out`, which
/// must already hold the class log-prior. `C * (D + 1)` lookups in total.
#[inline]
pub(crate) fn accumulate_log_joint(bank: &NormalizedBank, selection: &[usize], x: &[usize], out: &mut [f64]) {
    let layout = bank.layout();
    let ordering = layout.candidates().ordering();
    for (pos, &cand) in selection.iter().enumerate() {
        let slot = layout.slot(pos, cand);
        let parent_value = slot.parent.position().map_or(0, |j| x[ordering.feature(j)]);
        let row = bank.row(pos, cand, x[ordering.feature(pos)], parent_value);
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

#[inline]
pub(crate) fn log_joint_unchecked(bank: &NormalizedBank, selection: &[usize], x: &[usize], out: &mut [f64]) {
    out.copy_from_slice(bank.class_log_prior());
    accumulate_log_joint(bank, selection, x, out);
}

pub(crate) fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = c;
        }
    }
    best
}

/// `log p(x, c)` for every class `c` under `structure`.
pub fn log_joint_all_classes(bank: &NormalizedBank, structure: &TanStructure, x: &[usize]) -> Result<Vec<f64>> {
    let selection = bank.layout().resolve(structure)?;
    check_sample(bank.layout(), x)?;
    let mut out = vec![0.0; bank.num_classes()];
    log_joint_unchecked(bank, &selection, x, &mut out);
    Ok(out)
}

/// Most probable class; ties go to the lowest class index.
pub fn predict(bank: &NormalizedBank, structure: &TanStructure, x: &[usize]) -> Result<usize> {
    Ok(argmax_lowest(&log_joint_all_classes(bank, structure, x)?))
}

pub fn error_rate(bank: &NormalizedBank, structure: &TanStructure, ds: &DiscreteDataset) -> Result<f64> {
    TanClassifier::new(structure.clone(), bank.clone())?.error_rate(ds)
}

/// A structure together with its normalized tables.
#[derive(Clone, Debug, PartialEq)]
pub struct TanClassifier {
    structure: TanStructure,
    bank: NormalizedBank,
    selection: Vec<usize>,
}

impl TanClassifier {
    pub fn new(structure: TanStructure, bank: NormalizedBank) -> Result<Self> {
        let selection = bank.layout().resolve(&structure)?;
        Ok(TanClassifier {
            structure,
            bank,
            selection,
        })
    }

    /// Normalizes `bank` and keeps only the tables `structure` uses.
    pub fn from_bank(structure: TanStructure, bank: &CptBank) -> Result<Self> {
        let restricted = bank.restrict(&structure)?;
        TanClassifier::new(structure, restricted.log_normalize())
    }

    pub fn structure(&self) -> &TanStructure {
        &self.structure
    }

    pub fn bank(&self) -> &NormalizedBank {
        &self.bank
    }

    pub fn num_classes(&self) -> usize {
        self.bank.num_classes()
    }

    pub fn log_joint(&self, x: &[usize]) -> Result<Vec<f64>> {
        check_sample(self.bank.layout(), x)?;
        let mut out = vec![0.0; self.bank.num_classes()];
        log_joint_unchecked(&self.bank, &self.selection, x, &mut out);
        Ok(out)
    }

    pub fn predict(&self, x: &[usize]) -> Result<usize> {
        Ok(argmax_lowest(&self.log_joint(x)?))
    }

    pub fn error_rate(&self, ds: &DiscreteDataset) -> Result<f64> {
        check_dataset(self.bank.layout(), ds)?;
        let mut scratch = vec![0.0; self.bank.num_classes()];
        let mut errors = 0usize;
        for n in 0..ds.len() {
            log_joint_unchecked(&self.bank, &self.selection, ds.row(n), &mut scratch);
            if argmax_lowest(&scratch) != ds.label(n) {
                errors += 1;
            }
        }
        Ok(errors as f64 / ds.len() as f64)
    }

    /// Mean negative log-likelihood per sample.
    pub fn mean_nll(&self, ds: &DiscreteDataset) -> Result<f64> {
        check_dataset(self.bank.layout(), ds)?;
        let mut scratch = vec![0.0; self.bank.num_classes()];
        let mut total = 0.0;
        for n in 0..ds.len() {
            log_joint_unchecked(&self.bank, &self.selection, ds.row(n), &mut scratch);
            total -= scratch[ds.label(n)];
        }
        Ok(total / ds.len() as f64)
    }
}
