//! Mini-batch training of fixed or learned structures.

mod search;

pub use search::{random_search, sample_hyperparameters, SearchResult, SearchSetting, SearchSpace};

use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::DiscreteDataset;
use crate::error::{Error, Result};
use crate::losses::{loss_and_grad, Batch, LossConfig};
use crate::model::inference::check_dataset;
use crate::model::{BankLayout, CandidateSets, CptBank, TanClassifier, TanStructure};
use crate::optim::{init_bank, AdamState, LrSchedule};
use crate::structure::{
    most_probable_structure, structure_loss_step_with, temperature, SampleMode, StructureLogits, TemperatureSchedule,
};

pub const REPORT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    FixedStructure(TanStructure),
    LearnStructure(CandidateSets),
}

impl TrainMode {
    pub fn candidates(&self) -> CandidateSets {
        match self {
            TrainMode::FixedStructure(s) => CandidateSets::from_structure(s),
            TrainMode::LearnStructure(c) => c.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub init: u64,
    pub shuffle: u64,
    pub structure: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            init: 0,
            shuffle: 1,
            structure: 2,
        }
    }
}

impl Seeds {
    pub fn from_base(seed: u64) -> Self {
        Seeds {
            init: seed,
            shuffle: seed.wrapping_add(1),
            structure: seed.wrapping_add(2),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_theta: f64,
    pub lr_phi: f64,
    /// Factor the parameter learning rate decays by over the run.
    pub lr_decay: f64,
    pub loss: LossConfig,
    /// `total_steps = 0` anneals over every optimizer step of the run.
    pub temperature: TemperatureSchedule,
    pub sample_mode: SampleMode,
    pub mode: TrainMode,
    pub seeds: Seeds,
    pub eval_each_epoch: bool,
}

impl TrainConfig {
    pub fn new(mode: TrainMode) -> Self {
        TrainConfig {
            epochs: 500,
            batch_size: 100,
            lr_theta: 3e-2,
            lr_phi: 1e-3,
            lr_decay: 1e-3,
            loss: LossConfig::default(),
            temperature: TemperatureSchedule {
                tau_start: 10.0,
                tau_end: 0.1,
                total_steps: 0,
            },
            sample_mode: SampleMode::PerBatch,
            mode,
            seeds: Seeds::default(),
            eval_each_epoch: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch_size must be at least 1".into()));
        }
        for (name, v) in [("lr_theta", self.lr_theta), ("lr_phi", self.lr_phi), ("lr_decay", self.lr_decay)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        TemperatureSchedule::new(self.temperature.tau_start, self.temperature.tau_end, 0)?;
        self.loss.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss over the epoch's mini-batches, weighted by batch size.
    pub train_loss: f64,
    pub lr_theta: f64,
    pub test_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: u32,
    pub config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
    pub final_structure: TanStructure,
    /// Set when the final graph may contain cycles and is not a Bayesian
    /// network.
    pub pseudo: bool,
    pub final_train_error: f64,
    pub final_test_error: f64,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,lr_theta,test_error\n");
        for r in &self.epochs {
            let err = r.test_error.map(|e| e.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", r.epoch, r.train_loss, r.lr_theta, err));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub report: RunReport,
    pub model: TanClassifier,
    /// Learned unnormalized parameters for every candidate table.
    pub bank: CptBank,
    pub logits: StructureLogits,
}

pub fn evaluate(model: &TanClassifier, ds: &DiscreteDataset) -> Result<f64> {
    model.error_rate(ds)
}

fn final_structure(mode: &TrainMode, logits: &StructureLogits) -> Result<TanStructure> {
    match mode {
        TrainMode::FixedStructure(s) => Ok(s.clone()),
        TrainMode::LearnStructure(c) => most_probable_structure(logits, c),
    }
}

/// Trains with Adam, a decaying learning rate for the tables and a constant
/// one for the structure logits. The data is reshuffled every epoch and the
/// last short batch is kept.
pub fn train(cfg: &TrainConfig, train_ds: &DiscreteDataset, test_ds: &DiscreteDataset) -> Result<TrainOutcome> {
    let started = Instant::now();
    cfg.validate()?;
    if train_ds.is_empty() || test_ds.is_empty() {
        return Err(Error::Empty("training and test sets must be non-empty".into()));
    }
    let candidates = cfg.mode.candidates();
    let layout = Arc::new(BankLayout::new(candidates, train_ds.arities(), train_ds.num_classes())?);
    check_dataset(&layout, train_ds)?;
    check_dataset(&layout, test_ds)?;
    if test_ds.num_features() != train_ds.num_features() {
        return Err(Error::InvalidDataset("train and test feature counts differ".into()));
    }

    let mut bank = init_bank(Arc::clone(&layout), cfg.seeds.init);
    let mut logits = StructureLogits::zeros(layout.candidates());
    let mut adam_theta = AdamState::new(layout.len());
    let mut adam_phi = AdamState::new(logits.values().len());
    let lr_sched = LrSchedule {
        base_lr: cfg.lr_theta,
        total_epochs: cfg.epochs,
        decay_factor: cfg.lr_decay,
        fixed: false,
    };
    let n = train_ds.len();
    let steps_per_epoch = n.div_ceil(cfg.batch_size);
    let mut tau_sched = cfg.temperature;
    if tau_sched.total_steps == 0 {
        tau_sched.total_steps = cfg.epochs * steps_per_epoch;
    }

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seeds.shuffle);
    let mut structure_rng = ChaCha8Rng::seed_from_u64(cfg.seeds.structure);
    let mut order: Vec<usize> = (0..n).collect();
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        let lr = lr_sched.lr_at(epoch);
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = Batch::rows(train_ds, chunk);
            let loss = match &cfg.mode {
                TrainMode::FixedStructure(s) => {
                    let (loss, grad) = loss_and_grad(&bank, s, batch, &cfg.loss)?;
                    adam_theta.step(bank.values_mut(), grad.values(), lr)?;
                    loss
                }
                TrainMode::LearnStructure(_) => {
                    let tau = temperature(step, &tau_sched);
                    let out =
                        structure_loss_step_with(&bank, &logits, batch, &cfg.loss, tau, cfg.sample_mode, &mut structure_rng)?;
                    adam_theta.step(bank.values_mut(), out.bank_grad.values(), lr)?;
                    adam_phi.step(logits.values_mut(), out.logits_grad.values(), cfg.lr_phi)?;
                    out.loss
                }
            };
            epoch_loss += loss * chunk.len() as f64;
            step += 1;
        }
        let test_error = if cfg.eval_each_epoch {
            let model = TanClassifier::from_bank(final_structure(&cfg.mode, &logits)?, &bank)?;
            Some(model.error_rate(test_ds)?)
        } else {
            None
        };
        records.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / n as f64,
            lr_theta: lr,
            test_error,
        });
    }

    let structure = final_structure(&cfg.mode, &logits)?;
    let model = TanClassifier::from_bank(structure.clone(), &bank)?;
    let report = RunReport {
        version: REPORT_VERSION,
        config: cfg.clone(),
        epochs: records,
        pseudo: structure.is_pseudo(),
        final_structure: structure,
        final_train_error: model.error_rate(train_ds)?,
        final_test_error: model.error_rate(test_ds)?,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome {
        report,
        model,
        bank,
        logits,
    })
}
