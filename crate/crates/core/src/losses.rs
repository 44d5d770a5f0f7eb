//! Generative, margin and hybrid losses with exact gradients with respect to
//! the unnormalized table logits.
//!
//! All batch losses are means over the batch, so the learning rate does not
//! depend on the batch size. The hybrid trade-off `lambda` is unaffected
//! because both terms are scaled the same way.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::DiscreteDataset;
use crate::error::{Error, Result};
use crate::model::inference::{check_dataset, log_joint_unchecked};
use crate::model::{CptBank, NormalizedBank, TanStructure};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Negative log-likelihood only.
    Ll,
    /// Hinge on the probabilistic margin only.
    Margin,
    /// `nll + lambda * margin`.
    Hybrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Desired log-margin.
    pub gamma: f64,
    /// Softness of the competitor maximum.
    pub eta: f64,
    pub lambda: f64,
    pub mode: LossMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            gamma: 1.0,
            eta: 10.0,
            lambda: 10.0,
            mode: LossMode::Hybrid,
        }
    }
}

impl LossConfig {
    pub fn ll() -> Self {
        LossConfig {
            mode: LossMode::Ll,
            lambda: 0.0,
            ..LossConfig::default()
        }
    }

    pub fn hybrid(lambda: f64, gamma: f64, eta: f64) -> Self {
        LossConfig {
            gamma,
            eta,
            lambda,
            mode: LossMode::Hybrid,
        }
    }

    pub fn uses_margin(&self) -> bool {
        match self.mode {
            LossMode::Ll => false,
            LossMode::Margin => true,
            LossMode::Hybrid => self.lambda != 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta >= 1.0) {
            return Err(Error::InvalidArgument(format!("eta = {} must be >= 1", self.eta)));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!("lambda = {} must be >= 0", self.lambda)));
        }
        if self.mode != LossMode::Ll && !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::InvalidArgument(format!("gamma = {} must be > 0", self.gamma)));
        }
        Ok(())
    }
}

/// Rows of a dataset forming one mini-batch.
#[derive(Clone, Copy, Debug)]
pub struct Batch<'a> {
    pub data: &'a DiscreteDataset,
    rows: Option<&'a [usize]>,
}

impl<'a> Batch<'a> {
    pub fn all(data: &'a DiscreteDataset) -> Self {
        Batch { data, rows: None }
    }

    pub fn rows(data: &'a DiscreteDataset, rows: &'a [usize]) -> Self {
        Batch { data, rows: Some(rows) }
    }

    pub fn len(&self) -> usize {
        self.rows.map_or(self.data.len(), <[usize]>::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sample indices into `data`.
    pub fn indices(&self) -> impl Iterator<Item = usize> + 'a {
        let n = self.data.len();
        let rows = self.rows;
        (0..rows.map_or(n, <[usize]>::len)).map(move |k| rows.map_or(k, |r| r[k]))
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Empty("batch has no samples".into()));
        }
        if let Some(&bad) = self.rows.and_then(|r| r.iter().find(|&&i| i >= self.data.len())) {
            return Err(Error::InvalidArgument(format!("batch row {bad} out of range")));
        }
        Ok(())
    }
}

/// `(log sum_i exp(eta * v_i)) / eta`, shifted by the maximum.
pub fn soft_max(values: &[f64], eta: f64) -> f64 {
    assert!(!values.is_empty(), "soft_max of an empty vector");
    if values.len() == 1 {
        return values[0];
    }
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = values.iter().map(|&v| (eta * (v - m)).exp()).sum();
    m + s.ln() / eta
}

/// Probabilistic log-margin: the true class log-joint minus the soft maximum
/// of the competitors.
pub fn margin(log_joints: &[f64], true_class: usize, eta: f64) -> Result<f64> {
    if log_joints.len() < 2 {
        return Err(Error::InvalidArgument("margin needs at least two classes".into()));
    }
    if true_class >= log_joints.len() {
        return Err(Error::InvalidArgument(format!("class {true_class} out of range")));
    }
    let competitors: Vec<f64> = log_joints
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != true_class)
        .map(|(_, &v)| v)
        .collect();
    Ok(log_joints[true_class] - soft_max(&competitors, eta))
}

/// Margin hinge `max(0, gamma - beta)` of one sample. Adds
/// `scale * d(hinge)/d(log_joints)` to `dlj` when given.
fn margin_hinge(lj: &[f64], y: usize, gamma: f64, eta: f64, scale: f64, dlj: Option<&mut [f64]>) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for (c, &v) in lj.iter().enumerate() {
        if c != y && v > m {
            m = v;
        }
    }
    let mut s = 0.0;
    for (c, &v) in lj.iter().enumerate() {
        if c != y {
            s += (eta * (v - m)).exp();
        }
    }
    let soft = m + s.ln() / eta;
    let beta = lj[y] - soft;
    let h = gamma - beta;
    if h <= 0.0 {
        return 0.0;
    }
    if let Some(dlj) = dlj {
        dlj[y] -= scale;
        for (c, &v) in lj.iter().enumerate() {
            if c != y {
                dlj[c] += scale * (eta * (v - m)).exp() / s;
            }
        }
    }
    h
}

/// Loss of one sample from its log-joint vector. When `dlj` is given,
/// `scale * d(loss)/d(log_joints)` is added to it.
pub(crate) fn sample_loss(lj: &[f64], y: usize, cfg: &LossConfig, scale: f64, mut dlj: Option<&mut [f64]>) -> f64 {
    let mut loss = 0.0;
    if cfg.mode != LossMode::Margin {
        loss -= lj[y];
        if let Some(d) = dlj.as_deref_mut() {
            d[y] -= scale;
        }
    }
    let weight = match cfg.mode {
        LossMode::Ll => return loss,
        LossMode::Margin => 1.0,
        LossMode::Hybrid if cfg.lambda == 0.0 => return loss,
        LossMode::Hybrid => cfg.lambda,
    };
    loss + weight * margin_hinge(lj, y, cfg.gamma, cfg.eta, scale * weight, dlj)
}

fn check_margin_classes(bank: &NormalizedBank, cfg: &LossConfig) -> Result<()> {
    if cfg.uses_margin() && bank.num_classes() < 2 {
        return Err(Error::InvalidArgument("margin losses need at least two classes".into()));
    }
    Ok(())
}

fn batch_mean(bank: &NormalizedBank, structure: &TanStructure, batch: Batch<'_>, f: impl Fn(&[f64], usize) -> f64) -> Result<f64> {
    batch.check()?;
    check_dataset(bank.layout(), batch.data)?;
    let selection = bank.layout().resolve(structure)?;
    let mut lj = vec![0.0; bank.num_classes()];
    let mut total = 0.0;
    for n in batch.indices() {
        log_joint_unchecked(bank, &selection, batch.data.row(n), &mut lj);
        total += f(&lj, batch.data.label(n));
    }
    Ok(total / batch.len() as f64)
}

/// Mean negative log-likelihood `-(1/N) sum log p(x_n, c_n)`.
pub fn nll(bank: &NormalizedBank, structure: &TanStructure, batch: Batch<'_>) -> Result<f64> {
    batch_mean(bank, structure, batch, |lj, y| -lj[y])
}

/// Mean of `max(0, gamma - beta_n)`.
pub fn margin_loss(bank: &NormalizedBank, structure: &TanStructure, batch: Batch<'_>, cfg: &LossConfig) -> Result<f64> {
    cfg.validate()?;
    check_margin_classes(bank, &LossConfig { mode: LossMode::Margin, ..*cfg })?;
    batch_mean(bank, structure, batch, |lj, y| margin_hinge(lj, y, cfg.gamma, cfg.eta, 0.0, None))
}

/// `nll + lambda * margin_loss`.
pub fn hybrid_loss(bank: &NormalizedBank, structure: &TanStructure, batch: Batch<'_>, cfg: &LossConfig) -> Result<f64> {
    let cfg = LossConfig {
        mode: LossMode::Hybrid,
        ..*cfg
    };
    loss(bank, structure, batch, &cfg)
}

/// The loss selected by `cfg.mode`.
pub fn loss(bank: &NormalizedBank, structure: &TanStructure, batch: Batch<'_>, cfg: &LossConfig) -> Result<f64> {
    cfg.validate()?;
    check_margin_classes(bank, cfg)?;
    batch_mean(bank, structure, batch, |lj, y| sample_loss(lj, y, cfg, 0.0, None))
}

/// Loss selected by `cfg.mode` and its gradient with respect to every
/// unnormalized logit of `bank`. Tables not used by `structure` get zero.
pub fn loss_and_grad(bank: &CptBank, structure: &TanStructure, batch: Batch<'_>, cfg: &LossConfig) -> Result<(f64, CptBank)> {
    cfg.validate()?;
    batch.check()?;
    let layout = bank.layout();
    check_dataset(layout, batch.data)?;
    let selection = layout.resolve(structure)?;
    let normalized = bank.log_normalize();
    check_margin_classes(&normalized, cfg)?;
    let weights: Vec<Vec<(usize, f64)>> = selection.iter().map(|&k| vec![(k, 1.0)]).collect();

    let scale = 1.0 / batch.len() as f64;
    let mut engine = SampleEngine::new(&normalized);
    let mut grad = vec![0.0; layout.len()];
    let mut total = 0.0;
    for n in batch.indices() {
        let x = batch.data.row(n);
        total += engine.forward(&weights, x, batch.data.label(n), cfg);
        engine.backward_tables(&weights, x, scale, &mut grad);
    }
    CptBank::logsoftmax_backward(&normalized, &mut grad);
    Ok((total * scale, CptBank::from_values(Arc::clone(layout), grad)?))
}

/// Per-sample forward/backward over weighted table selections.
///
/// The log-joint is `log p(c) + sum_i sum_k w_ik log p_ik(x_i | x_pa, c)`;
/// hard structures use a single weight of 1 per position.
pub(crate) struct SampleEngine<'a> {
    bank: &'a NormalizedBank,
    pub(crate) lj: Vec<f64>,
    /// d(sample loss)/d(log-joint), unscaled.
    pub(crate) dlj: Vec<f64>,
}

impl<'a> SampleEngine<'a> {
    pub(crate) fn new(bank: &'a NormalizedBank) -> Self {
        let c = bank.num_classes();
        SampleEngine {
            bank,
            lj: vec![0.0; c],
            dlj: vec![0.0; c],
        }
    }

    #[inline]
    fn parent_value(&self, position: usize, candidate: usize, x: &[usize]) -> (usize, usize) {
        let layout = self.bank.layout();
        let ordering = layout.candidates().ordering();
        let slot = layout.slot(position, candidate);
        let pv = slot.parent.position().map_or(0, |j| x[ordering.feature(j)]);
        (x[ordering.feature(position)], pv)
    }

    /// Computes the log-joint, the sample loss and its derivative.
    pub(crate) fn forward(&mut self, weights: &[Vec<(usize, f64)>], x: &[usize], y: usize, cfg: &LossConfig) -> f64 {
        self.lj.copy_from_slice(self.bank.class_log_prior());
        for (pos, list) in weights.iter().enumerate() {
            for &(k, w) in list {
                let (xv, pv) = self.parent_value(pos, k, x);
                let row = self.bank.row(pos, k, xv, pv);
                if w == 1.0 {
                    for (o, v) in self.lj.iter_mut().zip(row) {
                        *o += v;
                    }
                } else {
                    for (o, v) in self.lj.iter_mut().zip(row) {
                        *o += w * v;
                    }
                }
            }
        }
        self.dlj.iter_mut().for_each(|d| *d = 0.0);
        sample_loss(&self.lj, y, cfg, 1.0, Some(&mut self.dlj))
    }

    /// Adds `scale * w * dlj` to the log-probability gradient of every
    /// looked-up entry.
    pub(crate) fn backward_tables(&self, weights: &[Vec<(usize, f64)>], x: &[usize], scale: f64, grad: &mut [f64]) {
        let layout = self.bank.layout();
        let c = layout.num_classes();
        for (g, d) in grad[..c].iter_mut().zip(&self.dlj) {
            *g += scale * d;
        }
        for (pos, list) in weights.iter().enumerate() {
            for &(k, w) in list {
                let (xv, pv) = self.parent_value(pos, k, x);
                let start = layout.slot(pos, k).row(xv, pv, c);
                for (g, d) in grad[start..start + c].iter_mut().zip(&self.dlj) {
                    *g += scale * w * d;
                }
            }
        }
    }

    /// `out[offset(i) + k] += scale * sum_c dlj[c] * log p_ik(x_i | x_pa, c)`
    /// for every candidate `k` at every position with a choice.
    pub(crate) fn upstream(&self, x: &[usize], scale: f64, offsets: &[usize], out: &mut [f64]) {
        let layout = self.bank.layout();
        for pos in 0..layout.num_positions() {
            let n_cand = layout.slots(pos).len();
            if n_cand < 2 {
                continue;
            }
            for k in 0..n_cand {
                let (xv, pv) = self.parent_value(pos, k, x);
                let row = self.bank.row(pos, k, xv, pv);
                let dot: f64 = row.iter().zip(&self.dlj).map(|(a, b)| a * b).sum();
                out[offsets[pos] + k] += scale * dot;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::data::{random_bank, sample_from_model};
    use crate::model::{BankLayout, Ordering, ParentChoice};

    fn nb(d: usize) -> TanStructure {
        TanStructure::new(Ordering::identity(d), vec![ParentChoice::NoParent; d], false).unwrap()
    }

    fn chain3() -> TanStructure {
        TanStructure::new(
            Ordering::new(vec![1, 2, 0]).unwrap(),
            vec![ParentChoice::NoParent, ParentChoice::Feature(0), ParentChoice::Feature(0)],
            false,
        )
        .unwrap()
    }

    /// Probability of (x, c) built straight from the raw logits.
    fn joint_by_hand(bank: &CptBank, s: &TanStructure, x: &[usize], c: usize) -> f64 {
        let layout = bank.layout();
        let nc = layout.num_classes();
        let prior = bank.class_logits();
        let z: f64 = prior.iter().map(|v| v.exp()).sum();
        let mut p = prior[c].exp() / z;
        let sel = layout.resolve(s).unwrap();
        for pos in 0..s.num_features() {
            let slot = layout.slot(pos, sel[pos]);
            let t = bank.table(pos, sel[pos]);
            let pv = slot.parent.position().map_or(0, |j| x[s.ordering().feature(j)]);
            let at = |child: usize| t[(child * slot.parent_arity + pv) * nc + c].exp();
            let denom: f64 = (0..slot.child_arity).map(at).sum();
            p *= at(x[s.ordering().feature(pos)]) / denom;
        }
        p
    }

    #[test]
    fn soft_max_closed_forms() {
        assert!((soft_max(&[0.0, 0.0], 10.0) - 2f64.ln() / 10.0).abs() < 1e-15);
        assert_eq!(soft_max(&[3.7], 5.0), 3.7);
    }

    #[test]
    fn margin_closed_forms() {
        assert_eq!(margin(&[-1.0, -3.0], 0, 4.0).unwrap(), 2.0);
        let b = margin(&[0.5, 0.5, 0.5], 1, 10.0).unwrap();
        assert!((b + 2f64.ln() / 10.0).abs() < 1e-15);
        assert!(margin(&[0.0], 0, 10.0).is_err());
    }

    #[test]
    fn margin_bounded_by_exact_margin() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let v: Vec<f64> = (0..5).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let eta = rng.gen_range(1.0..20.0);
            let y = rng.gen_range(0..5);
            let exact = v[y] - v.iter().enumerate().filter(|&(c, _)| c != y).map(|(_, &x)| x).fold(f64::MIN, f64::max);
            let b = margin(&v, y, eta).unwrap();
            assert!(b <= exact + 1e-12 && b >= exact - 4f64.ln() / eta - 1e-12);
        }
    }

    #[test]
    fn nll_of_uniform_binary_model() {
        let s = nb(1);
        let bank = CptBank::zeros(Arc::new(BankLayout::for_structure(&s, &[2], 2).unwrap())).log_normalize();
        let ds = DiscreteDataset::new(vec![vec![0], vec![1]], vec![1, 0], vec![2], 2).unwrap();
        assert!((nll(&bank, &s, Batch::all(&ds)).unwrap() - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn nll_of_degenerate_model_is_zero() {
        let s = nb(1);
        let mut bank = CptBank::zeros(Arc::new(BankLayout::for_structure(&s, &[2], 2).unwrap()));
        bank.class_logits_mut().copy_from_slice(&[-800.0, 0.0]);
        bank.table_mut(0, 0).copy_from_slice(&[-800.0, -800.0, 0.0, 0.0]);
        let ds = DiscreteDataset::new(vec![vec![1]], vec![1], vec![2], 2).unwrap();
        assert_eq!(nll(&bank.log_normalize(), &s, Batch::all(&ds)).unwrap(), 0.0);
    }

    #[test]
    fn nll_matches_enumeration_oracle() {
        let s = chain3();
        let layout = Arc::new(BankLayout::for_structure(&s, &[2, 3, 2], 2).unwrap());
        let bank = random_bank(layout, 2.0, 17);
        let ds = sample_from_model(&s, &bank.log_normalize(), 40, 5).unwrap();
        let mut expect = 0.0;
        for n in 0..ds.len() {
            expect -= joint_by_hand(&bank, &s, ds.row(n), ds.label(n)).ln();
        }
        expect /= ds.len() as f64;
        let got = nll(&bank.log_normalize(), &s, Batch::all(&ds)).unwrap();
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn nll_rejects_empty_batch() {
        let s = nb(1);
        let bank = CptBank::zeros(Arc::new(BankLayout::for_structure(&s, &[2], 2).unwrap())).log_normalize();
        let ds = DiscreteDataset::new(vec![vec![0]], vec![0], vec![2], 2).unwrap();
        assert!(matches!(nll(&bank, &s, Batch::rows(&ds, &[])), Err(Error::Empty(_))));
    }

    #[test]
    fn margin_loss_arithmetic() {
        // C = 2 with a single competitor: beta = lj[y] - lj[other].
        let s = nb(1);
        let mut bank = CptBank::zeros(Arc::new(BankLayout::for_structure(&s, &[2], 2).unwrap()));
        // beta = ln(p0/p1) with uniform features; choose prior ratio e^1.
        bank.class_logits_mut().copy_from_slice(&[1.0, 0.0]);
        let bank = bank.log_normalize();
        let ds = DiscreteDataset::new(vec![vec![0]], vec![0], vec![2], 2).unwrap();
        let cfg = LossConfig { gamma: 2.0, eta: 10.0, lambda: 1.0, mode: LossMode::Margin };
        assert!((margin_loss(&bank, &s, Batch::all(&ds), &cfg).unwrap() - 1.0).abs() < 1e-12);
        let satisfied = LossConfig { gamma: 0.5, ..cfg };
        assert_eq!(margin_loss(&bank, &s, Batch::all(&ds), &satisfied).unwrap(), 0.0);
    }

    fn random_setup(seed: u64) -> (TanStructure, CptBank, DiscreteDataset) {
        let s = chain3();
        let layout = Arc::new(BankLayout::for_structure(&s, &[3, 2, 3], 3).unwrap());
        let bank = random_bank(layout, 1.0, seed);
        let ds = sample_from_model(&s, &bank.log_normalize(), 30, seed + 1).unwrap();
        (s, bank, ds)
    }

    #[test]
    fn margin_loss_monotone_in_gamma() {
        let (s, bank, ds) = random_setup(4);
        let nb = bank.log_normalize();
        let mut prev = 0.0;
        for g in [0.1, 0.5, 1.0, 2.0, 5.0, 20.0] {
            let cfg = LossConfig { gamma: g, eta: 5.0, lambda: 1.0, mode: LossMode::Margin };
            let l = margin_loss(&nb, &s, Batch::all(&ds), &cfg).unwrap();
            assert!(l >= prev);
            prev = l;
        }
    }

    #[test]
    fn hybrid_reductions() {
        let (s, bank, ds) = random_setup(8);
        let nb = bank.log_normalize();
        let b = Batch::all(&ds);
        let base = LossConfig::hybrid(0.0, 1.0, 10.0);
        assert_eq!(hybrid_loss(&nb, &s, b, &base).unwrap(), nll(&nb, &s, b).unwrap());
        let at = |l: f64| hybrid_loss(&nb, &s, b, &LossConfig { lambda: l, ..base }).unwrap();
        let lhs = at(0.7) + at(2.5);
        let rhs = at(0.0) + at(3.2);
        assert!((lhs - rhs).abs() < 1e-10);
        let m = margin_loss(&nb, &s, b, &base).unwrap();
        assert!((at(1.0) - (nll(&nb, &s, b).unwrap() + m)).abs() < 1e-12);
    }

    #[test]
    fn nll_grad_of_class_logits_is_softmax_minus_frequency() {
        let (s, bank, ds) = random_setup(12);
        let (_, grad) = loss_and_grad(&bank, &s, Batch::all(&ds), &LossConfig::ll()).unwrap();
        let prior: Vec<f64> = bank.log_normalize().class_log_prior().iter().map(|v| v.exp()).collect();
        for (c, p) in prior.iter().enumerate() {
            let freq = ds.labels().iter().filter(|&&y| y == c).count() as f64 / ds.len() as f64;
            assert!((grad.class_logits()[c] - (p - freq)).abs() < 1e-12);
        }
    }

    #[test]
    fn inactive_hinge_has_zero_margin_gradient() {
        let (s, bank, ds) = random_setup(2);
        let cfg = LossConfig { gamma: 1e-9, eta: 10.0, lambda: 1e6, mode: LossMode::Margin };
        // Keep only samples whose margins exceed gamma.
        let nbk = bank.log_normalize();
        let rows: Vec<usize> = (0..ds.len())
            .filter(|&n| margin(&log_joint(&nbk, &s, ds.row(n)), ds.label(n), cfg.eta).unwrap() > 1e-3)
            .collect();
        assert!(!rows.is_empty());
        let (l, g) = loss_and_grad(&bank, &s, Batch::rows(&ds, &rows), &cfg).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.values().iter().all(|&v| v == 0.0));
    }

    fn log_joint(bank: &NormalizedBank, s: &TanStructure, x: &[usize]) -> Vec<f64> {
        crate::model::log_joint_all_classes(bank, s, x).unwrap()
    }

    #[test]
    fn unused_tables_get_zero_gradient() {
        let s = chain3();
        let cands = crate::model::CandidateSets::new(
            s.ordering().clone(),
            vec![
                vec![ParentChoice::NoParent],
                vec![ParentChoice::NoParent, ParentChoice::Feature(0)],
                vec![ParentChoice::Feature(0), ParentChoice::Feature(1)],
            ],
            false,
        )
        .unwrap();
        let layout = Arc::new(BankLayout::new(cands, &[3, 2, 3], 3).unwrap());
        let bank = random_bank(layout, 1.0, 1);
        let ds = sample_from_model(&s, &bank.log_normalize(), 20, 1).unwrap();
        let (_, g) = loss_and_grad(&bank, &s, Batch::all(&ds), &LossConfig::default()).unwrap();
        assert!(g.table(1, 0).iter().all(|&v| v == 0.0));
        assert!(g.table(2, 1).iter().all(|&v| v == 0.0));
        assert!(g.table(1, 1).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..20 {
            let (s, bank, ds) = random_setup(100 + seed);
            for cfg in [
                LossConfig::ll(),
                LossConfig { mode: LossMode::Margin, gamma: 0.7, eta: 5.0, lambda: 1.0 },
                LossConfig::hybrid(10.0, 0.7, 5.0),
            ] {
                let (_, g) = loss_and_grad(&bank, &s, Batch::all(&ds), &cfg).unwrap();
                let f = |b: &CptBank| loss(&b.log_normalize(), &s, Batch::all(&ds), &cfg).unwrap();
                let h = 1e-4;
                for idx in 0..bank.values().len() {
                    let mut p = bank.clone();
                    p.values_mut()[idx] += h;
                    let mut m = bank.clone();
                    m.values_mut()[idx] -= h;
                    let fd = (f(&p) - f(&m)) / (2.0 * h);
                    let a = g.values()[idx];
                    let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-3);
                    assert!(err < 1e-5, "seed {seed} idx {idx}: {a} vs {fd}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn soft_max_bounds(v in prop::collection::vec(-50.0f64..50.0, 1..12), eta in 1.0f64..20.0) {
            let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let s = soft_max(&v, eta);
            prop_assert!(m <= s);
            prop_assert!(s <= m + (v.len() as f64).ln() / eta + 1e-12);
        }

        #[test]
        fn nll_is_mean_of_sample_nlls(seed in 0u64..1000) {
            let (s, bank, ds) = random_setup(seed);
            let nbk = bank.log_normalize();
            let whole = nll(&nbk, &s, Batch::all(&ds)).unwrap();
            let parts: f64 = (0..ds.len()).map(|n| nll(&nbk, &s, Batch::rows(&ds, &[n])).unwrap()).sum::<f64>() / ds.len() as f64;
            prop_assert!((whole - parts).abs() < 1e-10);
        }
    }
}
