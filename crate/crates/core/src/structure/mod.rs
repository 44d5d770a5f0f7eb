//! Learning a distribution over TAN structures.
//!
//! Each position `i` has free logits over its candidate parents; the
//! selection probabilities are `phi_i = softmax(logits_i)`. A structure is
//! drawn with the Gumbel-max trick and used hard in the forward pass. In the
//! backward pass the argmax is replaced by
//! `q_i = softmax((log phi_i + eps_i) / tau)` (straight-through Gumbel
//! softmax), which yields gradients for the logits.

mod candidates;

pub use candidates::{
    all_candidates, heuristic_candidates, heuristic_ordering, image_side, random_candidates, CandidateOptions,
    HeuristicOrdering,
};

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{Batch, LossConfig, SampleEngine};
use crate::model::inference::check_dataset;
use crate::model::{CandidateSets, CptBank, TanStructure};

/// Uniform draws are clamped to `[GUMBEL_CLAMP, 1 - GUMBEL_CLAMP]` so the
/// noise stays finite.
pub const GUMBEL_CLAMP: f64 = 1e-12;

/// Unnormalized log-probabilities over each position's candidate list.
/// Also used for their gradients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureLogits {
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl StructureLogits {
    /// All zeros: the uniform distribution over structures.
    pub fn zeros(candidates: &CandidateSets) -> Self {
        let mut offsets = Vec::with_capacity(candidates.len() + 1);
        offsets.push(0);
        for list in candidates.lists() {
            offsets.push(offsets.last().unwrap() + list.len());
        }
        let n = *offsets.last().unwrap();
        StructureLogits {
            offsets,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(candidates: &CandidateSets, values: Vec<f64>) -> Result<Self> {
        let mut out = StructureLogits::zeros(candidates);
        if values.len() != out.values.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} structure logits for {} candidates",
                values.len(),
                out.values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite structure logit".into()));
        }
        out.values = values;
        Ok(out)
    }

    pub fn num_positions(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn matches(&self, candidates: &CandidateSets) -> bool {
        self.num_positions() == candidates.len()
            && candidates
                .lists()
                .iter()
                .enumerate()
                .all(|(i, l)| self.offsets[i + 1] - self.offsets[i] == l.len())
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.values[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn position_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `log phi_i`.
    pub fn log_probs(&self, i: usize) -> Vec<f64> {
        let z = self.position(i);
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        z.iter().map(|v| v - lse).collect()
    }

    pub fn probs(&self, i: usize) -> Vec<f64> {
        self.log_probs(i).into_iter().map(f64::exp).collect()
    }
}

/// One draw of a structure: per position the selected candidate, the Gumbel
/// noise that produced it, and the temperature of the relaxation.
#[derive(Clone, Debug, PartialEq)]
pub struct StructureSample {
    pub selected: Vec<usize>,
    pub noise: Vec<Vec<f64>>,
    pub tau: f64,
}

impl StructureSample {
    pub fn to_structure(&self, candidates: &CandidateSets) -> Result<TanStructure> {
        let parents = self
            .selected
            .iter()
            .enumerate()
            .map(|(i, &k)| candidates.list(i)[k])
            .collect();
        TanStructure::new(candidates.ordering().clone(), parents, candidates.allow_pseudo())
    }

    /// `q_i = softmax((log phi_i + eps_i) / tau)` for every position.
    pub fn relaxed(&self, logits: &StructureLogits) -> Vec<Vec<f64>> {
        (0..logits.num_positions())
            .map(|i| {
                let a: Vec<f64> = logits
                    .log_probs(i)
                    .iter()
                    .zip(&self.noise[i])
                    .map(|(lp, e)| (lp + e) / self.tau)
                    .collect();
                softmax(&a)
            })
            .collect()
    }
}

fn softmax(a: &[f64]) -> Vec<f64> {
    let m = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = a.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn gumbel_noise(rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.gen::<f64>().clamp(GUMBEL_CLAMP, 1.0 - GUMBEL_CLAMP);
    -(-u.ln()).ln()
}

/// Gumbel-max draw: `argmax_j(log phi_ij + eps_j)`, ties to the lowest index.
pub fn gumbel_sample_with(logits: &StructureLogits, tau: f64, rng: &mut impl Rng) -> StructureSample {
    assert!(tau > 0.0, "temperature must be positive");
    let d = logits.num_positions();
    let mut selected = Vec::with_capacity(d);
    let mut noise = Vec::with_capacity(d);
    for i in 0..d {
        let lp = logits.log_probs(i);
        let eps: Vec<f64> = (0..lp.len()).map(|_| gumbel_noise(rng)).collect();
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for (j, (l, e)) in lp.iter().zip(&eps).enumerate() {
            if l + e > best_v {
                best_v = l + e;
                best = j;
            }
        }
        selected.push(best);
        noise.push(eps);
    }
    StructureSample { selected, noise, tau }
}

pub fn gumbel_sample(logits: &StructureLogits, tau: f64, seed: u64) -> StructureSample {
    gumbel_sample_with(logits, tau, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Straight-through backward pass: maps `dL/ds` (one value per candidate,
/// laid out like the logits) to `dL/dlogits` through the relaxed selection
/// `q = softmax((log_softmax(logits) + eps) / tau)`.
pub fn ste_backward(sample: &StructureSample, logits: &StructureLogits, upstream: &StructureLogits) -> StructureLogits {
    let mut grad = StructureLogits {
        offsets: logits.offsets.clone(),
        values: vec![0.0; logits.values.len()],
    };
    let q = sample.relaxed(logits);
    for i in 0..logits.num_positions() {
        let u = upstream.position(i);
        if u.len() < 2 {
            continue;
        }
        let qi = &q[i];
        let uq: f64 = u.iter().zip(qi).map(|(a, b)| a * b).sum();
        // d/d(log phi_k) of u . q
        let g_lp: Vec<f64> = qi.iter().zip(u).map(|(q, u)| q * (u - uq) / sample.tau).collect();
        // through log-softmax
        let total: f64 = g_lp.iter().sum();
        let phi = logits.probs(i);
        for ((g, glp), p) in grad.position_mut(i).iter_mut().zip(&g_lp).zip(&phi) {
            *g = glp - p * total;
        }
    }
    grad
}

/// Whether one structure is drawn per mini-batch or per sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    #[default]
    PerBatch,
    PerSample,
}

#[derive(Clone, Debug)]
pub struct StepOutput {
    pub loss: f64,
    pub bank_grad: CptBank,
    pub logits_grad: StructureLogits,
    /// The shared structure sample in per-batch mode.
    pub sample: Option<StructureSample>,
}

fn check_step_inputs(bank: &CptBank, logits: &StructureLogits, batch: &Batch<'_>, cfg: &LossConfig, tau: f64) -> Result<()> {
    cfg.validate()?;
    batch.check()?;
    check_dataset(bank.layout(), batch.data)?;
    if !logits.matches(bank.layout().candidates()) {
        return Err(Error::ShapeMismatch("structure logits do not match the bank candidates".into()));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("temperature {tau} must be positive")));
    }
    if cfg.uses_margin() && bank.num_classes() < 2 {
        return Err(Error::InvalidArgument("margin losses need at least two classes".into()));
    }
    Ok(())
}

fn hard_weights(selected: &[usize]) -> Vec<Vec<(usize, f64)>> {
    selected.iter().map(|&k| vec![(k, 1.0)]).collect()
}

/// One stochastic step on the structure loss.
///
/// The forward pass uses the hard sampled structure, so only the selected
/// tables (plus the class prior) receive bank gradients. The logits gradient
/// needs `log p_ik(x_i | x_j, c)` of every candidate, `O(K D)` lookups per
/// sample.
pub fn structure_loss_step_with(
    bank: &CptBank,
    logits: &StructureLogits,
    batch: Batch<'_>,
    cfg: &LossConfig,
    tau: f64,
    mode: SampleMode,
    rng: &mut impl Rng,
) -> Result<StepOutput> {
    check_step_inputs(bank, logits, &batch, cfg, tau)?;
    let layout = bank.layout();
    let normalized = bank.log_normalize();
    let scale = 1.0 / batch.len() as f64;
    let mut engine = SampleEngine::new(&normalized);
    let mut grad = vec![0.0; layout.len()];
    let mut total = 0.0;

    let (logits_grad, sample) = match mode {
        SampleMode::PerBatch => {
            let sample = gumbel_sample_with(logits, tau, rng);
            let weights = hard_weights(&sample.selected);
            let mut upstream = StructureLogits {
                offsets: logits.offsets.clone(),
                values: vec![0.0; logits.values.len()],
            };
            for n in batch.indices() {
                let x = batch.data.row(n);
                total += engine.forward(&weights, x, batch.data.label(n), cfg);
                engine.backward_tables(&weights, x, scale, &mut grad);
                engine.upstream(x, scale, &logits.offsets, &mut upstream.values);
            }
            (ste_backward(&sample, logits, &upstream), Some(sample))
        }
        SampleMode::PerSample => {
            let mut logits_grad = StructureLogits {
                offsets: logits.offsets.clone(),
                values: vec![0.0; logits.values.len()],
            };
            let mut upstream = logits_grad.clone();
            for n in batch.indices() {
                let sample = gumbel_sample_with(logits, tau, rng);
                let weights = hard_weights(&sample.selected);
                let x = batch.data.row(n);
                total += engine.forward(&weights, x, batch.data.label(n), cfg);
                engine.backward_tables(&weights, x, scale, &mut grad);
                upstream.values.iter_mut().for_each(|v| *v = 0.0);
                engine.upstream(x, scale, &logits.offsets, &mut upstream.values);
                let g = ste_backward(&sample, logits, &upstream);
                for (a, b) in logits_grad.values.iter_mut().zip(&g.values) {
                    *a += b;
                }
            }
            (logits_grad, None)
        }
    };
    CptBank::logsoftmax_backward(&normalized, &mut grad);
    Ok(StepOutput {
        loss: total * scale,
        bank_grad: CptBank::from_values(Arc::clone(layout), grad)?,
        logits_grad,
        sample,
    })
}

pub fn structure_loss_step(
    bank: &CptBank,
    logits: &StructureLogits,
    batch: Batch<'_>,
    cfg: &LossConfig,
    tau: f64,
    seed: u64,
) -> Result<StepOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    structure_loss_step_with(bank, logits, batch, cfg, tau, SampleMode::PerBatch, &mut rng)
}

/// Loss of the relaxed surrogate, where each position mixes its candidates'
/// log-probabilities with weights `q` from a fixed noise draw, and its exact
/// gradient with respect to the bank and the structure logits.
pub fn relaxed_loss_and_grad(
    bank: &CptBank,
    logits: &StructureLogits,
    sample: &StructureSample,
    batch: Batch<'_>,
    cfg: &LossConfig,
) -> Result<(f64, CptBank, StructureLogits)> {
    check_step_inputs(bank, logits, &batch, cfg, sample.tau)?;
    let layout = bank.layout();
    let normalized = bank.log_normalize();
    let weights: Vec<Vec<(usize, f64)>> = sample
        .relaxed(logits)
        .into_iter()
        .map(|q| q.into_iter().enumerate().collect())
        .collect();
    let scale = 1.0 / batch.len() as f64;
    let mut engine = SampleEngine::new(&normalized);
    let mut grad = vec![0.0; layout.len()];
    let mut upstream = StructureLogits {
        offsets: logits.offsets.clone(),
        values: vec![0.0; logits.values.len()],
    };
    let mut total = 0.0;
    for n in batch.indices() {
        let x = batch.data.row(n);
        total += engine.forward(&weights, x, batch.data.label(n), cfg);
        engine.backward_tables(&weights, x, scale, &mut grad);
        engine.upstream(x, scale, &logits.offsets, &mut upstream.values);
    }
    CptBank::logsoftmax_backward(&normalized, &mut grad);
    Ok((
        total * scale,
        CptBank::from_values(Arc::clone(layout), grad)?,
        ste_backward(sample, logits, &upstream),
    ))
}

/// Exponential temperature annealing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSchedule {
    pub tau_start: f64,
    pub tau_end: f64,
    pub total_steps: usize,
}

impl TemperatureSchedule {
    pub fn new(tau_start: f64, tau_end: f64, total_steps: usize) -> Result<Self> {
        if !(tau_start > 0.0 && tau_end > 0.0 && tau_start.is_finite() && tau_end.is_finite()) {
            return Err(Error::InvalidArgument("temperatures must be positive".into()));
        }
        Ok(TemperatureSchedule {
            tau_start,
            tau_end,
            total_steps,
        })
    }
}

impl Default for TemperatureSchedule {
    fn default() -> Self {
        TemperatureSchedule {
            tau_start: 10.0,
            tau_end: 0.1,
            total_steps: 1,
        }
    }
}

/// `tau_start * (tau_end / tau_start)^(step / total_steps)`.
pub fn temperature(step: usize, schedule: &TemperatureSchedule) -> f64 {
    if schedule.total_steps == 0 {
        return schedule.tau_start;
    }
    let frac = step.min(schedule.total_steps) as f64 / schedule.total_steps as f64;
    schedule.tau_start * (schedule.tau_end / schedule.tau_start).powf(frac)
}

/// Per position the candidate with the largest logit; ties go to the
/// earliest list entry.
pub fn most_probable_structure(logits: &StructureLogits, candidates: &CandidateSets) -> Result<TanStructure> {
    if !logits.matches(candidates) {
        return Err(Error::ShapeMismatch("structure logits do not match the candidates".into()));
    }
    let parents = (0..candidates.len())
        .map(|i| {
            let z = logits.position(i);
            let mut best = 0;
            for (k, &v) in z.iter().enumerate().skip(1) {
                if v > z[best] {
                    best = k;
                }
            }
            candidates.list(i)[best]
        })
        .collect();
    TanStructure::new(candidates.ordering().clone(), parents, candidates.allow_pseudo())
}
