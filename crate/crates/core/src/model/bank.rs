use std::sync::Arc;

use super::{CandidateSets, ParentChoice, TanStructure};
use crate::error::{Error, Result};

/// Location of one conditional probability table inside a bank.
///
/// Entries are row-major over (child, parent, class). A table without a
/// feature parent has `parent_arity == 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableSlot {
    pub parent: ParentChoice,
    pub child_arity: usize,
    pub parent_arity: usize,
    pub offset: usize,
}

impl TableSlot {
    pub fn len(&self, num_classes: usize) -> usize {
        self.child_arity * self.parent_arity * num_classes
    }

    /// Offset of the `num_classes` contiguous entries for (child, parent).
    #[inline]
    pub fn row(&self, child: usize, parent: usize, num_classes: usize) -> usize {
        self.offset + (child * self.parent_arity + parent) * num_classes
    }
}

/// Shape information shared by a parameter bank and its gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct BankLayout {
    candidates: CandidateSets,
    arities: Vec<usize>,
    num_classes: usize,
    slots: Vec<Vec<TableSlot>>,
    len: usize,
}

impl BankLayout {
    /// `feature_arities` is indexed by dataset column.
    pub fn new(candidates: CandidateSets, feature_arities: &[usize], num_classes: usize) -> Result<Self> {
        let ordering = candidates.ordering();
        if feature_arities.len() != ordering.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} arities for {} features",
                feature_arities.len(),
                ordering.len()
            )));
        }
        if num_classes == 0 || feature_arities.contains(&0) {
            return Err(Error::ShapeMismatch("arities and class count must be positive".into()));
        }
        let arities: Vec<usize> = (0..ordering.len())
            .map(|pos| feature_arities[ordering.feature(pos)])
            .collect();
        let mut offset = num_classes;
        let slots = candidates
            .lists()
            .iter()
            .enumerate()
            .map(|(i, list)| {
                list.iter()
                    .map(|&parent| {
                        let parent_arity = parent.position().map_or(1, |j| arities[j]);
                        let slot = TableSlot {
                            parent,
                            child_arity: arities[i],
                            parent_arity,
                            offset,
                        };
                        offset += slot.len(num_classes);
                        slot
                    })
                    .collect()
            })
            .collect();
        Ok(BankLayout {
            candidates,
            arities,
            num_classes,
            slots,
            len: offset,
        })
    }

    pub fn for_structure(structure: &TanStructure, feature_arities: &[usize], num_classes: usize) -> Result<Self> {
        BankLayout::new(CandidateSets::from_structure(structure), feature_arities, num_classes)
    }

    pub fn candidates(&self) -> &CandidateSets {
        &self.candidates
    }

    pub fn num_positions(&self) -> usize {
        self.arities.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Arity of the feature at `position`.
    pub fn arity(&self, position: usize) -> usize {
        self.arities[position]
    }

    pub fn position_arities(&self) -> &[usize] {
        &self.arities
    }

    /// Arities indexed by dataset column.
    pub fn feature_arities(&self) -> Vec<usize> {
        let ordering = self.candidates.ordering();
        let mut out = vec![0; self.arities.len()];
        for (pos, &a) in self.arities.iter().enumerate() {
            out[ordering.feature(pos)] = a;
        }
        out
    }

    pub fn slots(&self, position: usize) -> &[TableSlot] {
        &self.slots[position]
    }

    pub fn slot(&self, position: usize, candidate: usize) -> &TableSlot {
        &self.slots[position][candidate]
    }

    pub fn find(&self, position: usize, parent: ParentChoice) -> Option<usize> {
        self.slots[position].iter().position(|s| s.parent == parent)
    }

    /// Candidate index per position selected by `structure`.
    pub fn resolve(&self, structure: &TanStructure) -> Result<Vec<usize>> {
        if structure.ordering() != self.candidates.ordering() {
            return Err(Error::InvalidStructure(
                "structure ordering differs from the bank ordering".into(),
            ));
        }
        (0..self.num_positions())
            .map(|pos| {
                let parent = structure.parent(pos);
                self.find(pos, parent).ok_or(Error::MissingTable {
                    position: pos,
                    parent: parent.to_string(),
                })
            })
            .collect()
    }

    /// Total number of scalar parameters, class prior included.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Unnormalized log-probabilities for the class prior and every candidate
/// table. Gradients with respect to the bank use the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct CptBank {
    layout: Arc<BankLayout>,
    values: Vec<f64>,
}

impl CptBank {
    pub fn zeros(layout: Arc<BankLayout>) -> Self {
        let values = vec![0.0; layout.len()];
        CptBank { layout, values }
    }

    pub fn from_values(layout: Arc<BankLayout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a layout of {}",
                values.len(),
                layout.len()
            )));
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite table entry at index {idx}")));
        }
        Ok(CptBank { layout, values })
    }

    pub fn layout(&self) -> &Arc<BankLayout> {
        &self.layout
    }

    pub fn num_classes(&self) -> usize {
        self.layout.num_classes
    }

    pub fn class_logits(&self) -> &[f64] {
        &self.values[..self.layout.num_classes]
    }

    pub fn class_logits_mut(&mut self) -> &mut [f64] {
        let c = self.layout.num_classes;
        &mut self.values[..c]
    }

    pub fn table(&self, position: usize, candidate: usize) -> &[f64] {
        let slot = self.layout.slot(position, candidate);
        &self.values[slot.offset..slot.offset + slot.len(self.layout.num_classes)]
    }

    pub fn table_mut(&mut self, position: usize, candidate: usize) -> &mut [f64] {
        let c = self.layout.num_classes;
        let slot = self.layout.slot(position, candidate);
        let (start, len) = (slot.offset, slot.len(c));
        &mut self.values[start..start + len]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Log-softmax over the child axis of every table and over the classes
    /// of the prior.
    pub fn log_normalize(&self) -> NormalizedBank {
        let c = self.layout.num_classes;
        let mut out = self.values.clone();
        log_softmax_strided(&mut out[..c], 0, c, 1);
        for slots in &self.layout.slots {
            for slot in slots {
                let stride = slot.parent_arity * c;
                for lane in 0..stride {
                    log_softmax_strided(&mut out, slot.offset + lane, slot.child_arity, stride);
                }
            }
        }
        NormalizedBank {
            bank: CptBank {
                layout: Arc::clone(&self.layout),
                values: out,
            },
        }
    }

    /// Copy of the tables selected by `structure`, in a single-candidate layout.
    pub fn restrict(&self, structure: &TanStructure) -> Result<CptBank> {
        let selection = self.layout.resolve(structure)?;
        let layout = Arc::new(BankLayout::for_structure(
            structure,
            &self.layout.feature_arities(),
            self.layout.num_classes,
        )?);
        let mut values = Vec::with_capacity(layout.len());
        values.extend_from_slice(self.class_logits());
        for (pos, &cand) in selection.iter().enumerate() {
            values.extend_from_slice(self.table(pos, cand));
        }
        Ok(CptBank { layout, values })
    }

    /// Backpropagates a gradient on normalized log-probabilities through the
    /// log-softmax: `dz_m = g_m - p_m * sum_k g_k` for every distribution.
    pub(crate) fn logsoftmax_backward(normalized: &NormalizedBank, grad_logp: &mut [f64]) {
        let layout = &normalized.bank.layout;
        let logp = &normalized.bank.values;
        let c = layout.num_classes;
        softmax_backward_strided(grad_logp, logp, 0, c, 1);
        for slots in &layout.slots {
            for slot in slots {
                let stride = slot.parent_arity * c;
                for lane in 0..stride {
                    softmax_backward_strided(grad_logp, logp, slot.offset + lane, slot.child_arity, stride);
                }
            }
        }
    }
}

fn log_softmax_strided(values: &mut [f64], start: usize, count: usize, stride: usize) {
    let idx = |k: usize| start + k * stride;
    let max = (0..count).map(|k| values[idx(k)]).fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = (0..count).map(|k| (values[idx(k)] - max).exp()).sum();
    let log_z = max + sum.ln();
    for k in 0..count {
        values[idx(k)] -= log_z;
    }
}

fn softmax_backward_strided(grad: &mut [f64], logp: &[f64], start: usize, count: usize, stride: usize) {
    let idx = |k: usize| start + k * stride;
    let total: f64 = (0..count).map(|k| grad[idx(k)]).sum();
    if total == 0.0 {
        return;
    }
    for k in 0..count {
        grad[idx(k)] -= logp[idx(k)].exp() * total;
    }
}

/// A bank whose tables are normalized log-probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedBank {
    bank: CptBank,
}

impl NormalizedBank {
    /// Wraps values that are already log-probabilities. Every distribution
    /// must sum to one within `1e-6`.
    pub fn from_log_probs(bank: CptBank) -> Result<Self> {
        let c = bank.layout.num_classes;
        let check = |start: usize, count: usize, stride: usize| -> Result<()> {
            let sum: f64 = (0..count).map(|k| bank.values[start + k * stride].exp()).sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidArgument(format!(
                    "distribution at index {start} sums to {sum}"
                )));
            }
            Ok(())
        };
        check(0, c, 1)?;
        for slots in &bank.layout.slots {
            for slot in slots {
                let stride = slot.parent_arity * c;
                for lane in 0..stride {
                    check(slot.offset + lane, slot.child_arity, stride)?;
                }
            }
        }
        Ok(NormalizedBank { bank })
    }

    pub fn layout(&self) -> &Arc<BankLayout> {
        &self.bank.layout
    }

    pub fn num_classes(&self) -> usize {
        self.bank.layout.num_classes
    }

    pub fn class_log_prior(&self) -> &[f64] {
        self.bank.class_logits()
    }

    pub fn table(&self, position: usize, candidate: usize) -> &[f64] {
        self.bank.table(position, candidate)
    }

    /// `log p(child | parent, c)` for all classes.
    #[inline]
    pub fn row(&self, position: usize, candidate: usize, child: usize, parent: usize) -> &[f64] {
        let c = self.bank.layout.num_classes;
        let start = self.bank.layout.slots[position][candidate].row(child, parent, c);
        &self.bank.values[start..start + c]
    }

    pub fn values(&self) -> &[f64] {
        &self.bank.values
    }

    pub fn as_bank(&self) -> &CptBank {
        &self.bank
    }

    pub fn into_bank(self) -> CptBank {
        self.bank
    }
}
