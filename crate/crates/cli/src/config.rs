use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use tanbn_core::baselines::{chow_liu, naive_bayes_structure, random_tan};
use tanbn_core::data::{load_csv, random_ordering, split, FoldSpec};
use tanbn_core::structure::{
    all_candidates, heuristic_candidates, heuristic_ordering, image_side, random_candidates, CandidateOptions,
    HeuristicOrdering,
};
use tanbn_core::train::Seeds;
use tanbn_core::{
    DiscreteDataset, LossConfig, LossMode, Ordering, SampleMode, Schema, TemperatureSchedule, TrainConfig, TrainMode,
};

/// Environment variable that relocates relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "TANBN_OUTPUT_ROOT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Nb,
    TanRandom,
    ChowLiu,
    TanSubset,
    TanAll,
    TanHeuristic,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderingKind {
    Identity,
    #[default]
    Random,
    A,
    B,
    C,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr_theta")]
    pub lr_theta: f64,
    #[serde(default = "default_lr_phi")]
    pub lr_phi: f64,
    #[serde(default = "default_tau_start")]
    pub tau_start: f64,
    #[serde(default = "default_tau_end")]
    pub tau_end: f64,
    #[serde(default)]
    pub sample_mode: SampleMode,
    #[serde(default)]
    pub eval_each_epoch: bool,
}

fn default_epochs() -> usize {
    500
}
fn default_batch() -> usize {
    100
}
fn default_lr_theta() -> f64 {
    3e-2
}
fn default_lr_phi() -> f64 {
    1e-3
}
fn default_tau_start() -> f64 {
    10.0
}
fn default_tau_end() -> f64 {
    0.1
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection {
            epochs: default_epochs(),
            batch_size: default_batch(),
            lr_theta: default_lr_theta(),
            lr_phi: default_lr_phi(),
            tau_start: default_tau_start(),
            tau_end: default_tau_end(),
            sample_mode: SampleMode::PerBatch,
            eval_each_epoch: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    #[serde(default = "default_loss_mode")]
    pub mode: LossMode,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
}

fn default_loss_mode() -> LossMode {
    LossMode::Hybrid
}
fn default_lambda() -> f64 {
    10.0
}
fn default_gamma() -> f64 {
    1.0
}
fn default_eta() -> f64 {
    10.0
}

impl Default for LossSection {
    fn default() -> Self {
        LossSection {
            mode: default_loss_mode(),
            lambda: default_lambda(),
            gamma: default_gamma(),
            eta: default_eta(),
        }
    }
}

fn default_train_fraction() -> f64 {
    2.0 / 3.0
}

/// An experiment file. Relative paths resolve against the file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub train: PathBuf,
    /// Without a test file the training data is split.
    #[serde(default)]
    pub test: Option<PathBuf>,
    #[serde(default)]
    pub schema: Option<PathBuf>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    pub output_dir: PathBuf,
    pub method: Method,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub ordering: OrderingKind,
    #[serde(default)]
    pub ordering_seed: Option<u64>,
    #[serde(default = "default_true")]
    pub include_no_parent: bool,
    #[serde(default)]
    pub pseudo: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub loss: LossSection,
    /// Directory of the config file.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_true() -> bool {
    true
}

/// Problems with the configuration itself, as opposed to failures while
/// running it.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.train = base.join(&cfg.train);
        cfg.test = cfg.test.map(|p| base.join(p));
        cfg.schema = cfg.schema.map(|p| base.join(p));
        cfg.base_dir = base.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for p in std::iter::once(&self.train).chain(&self.test).chain(&self.schema) {
            if !p.is_file() {
                return Err(ConfigError(format!("file not found: {}", p.display())));
            }
        }
        if matches!(self.method, Method::TanSubset | Method::TanHeuristic) && self.k.unwrap_or(0) == 0 {
            return Err(ConfigError(format!("method {:?} needs k >= 1", self.method)));
        }
        if self.method == Method::TanHeuristic && !matches!(self.ordering, OrderingKind::A | OrderingKind::B | OrderingKind::C) {
            return Err(ConfigError("tan-heuristic needs ordering a, b or c".into()));
        }
        if self.pseudo && !matches!(self.method, Method::TanSubset | Method::TanAll | Method::TanHeuristic) {
            return Err(ConfigError("pseudo applies only to learned-structure methods".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(ConfigError("train_fraction must lie in (0, 1)".into()));
        }
        self.train_config(TrainMode::FixedStructure(naive_bayes_structure(1)))
            .validate()
            .map_err(|e| ConfigError(e.to_string()))
    }

    /// `override_dir` wins. A relative `output_dir` sits under
    /// `$TANBN_OUTPUT_ROOT` when set, else next to the config file.
    pub fn output_dir(&self, override_dir: Option<&Path>) -> PathBuf {
        if let Some(d) = override_dir {
            return d.to_path_buf();
        }
        if self.output_dir.is_absolute() {
            return self.output_dir.clone();
        }
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) => PathBuf::from(root).join(&self.output_dir),
            None => self.base_dir.join(&self.output_dir),
        }
    }

    pub fn load_data(&self) -> anyhow::Result<(DiscreteDataset, DiscreteDataset)> {
        let schema = match &self.schema {
            Some(p) => Schema::load(p)?,
            None => Schema::default(),
        };
        let train = load_csv(&self.train, &schema)?;
        let (train, test) = match &self.test {
            Some(p) => (train, load_csv(p, &schema)?),
            None => split(&train, &FoldSpec::holdout(self.train_fraction, self.seed))?.remove(0),
        };
        Ok(DiscreteDataset::harmonize(train, test)?)
    }

    pub fn train_config(&self, mode: TrainMode) -> TrainConfig {
        let t = &self.training;
        let mut cfg = TrainConfig::new(mode);
        cfg.epochs = t.epochs;
        cfg.batch_size = t.batch_size;
        cfg.lr_theta = t.lr_theta;
        cfg.lr_phi = t.lr_phi;
        cfg.temperature = TemperatureSchedule {
            tau_start: t.tau_start,
            tau_end: t.tau_end,
            total_steps: 0,
        };
        cfg.sample_mode = t.sample_mode;
        cfg.eval_each_epoch = t.eval_each_epoch;
        cfg.loss = LossConfig {
            mode: self.loss.mode,
            lambda: self.loss.lambda,
            gamma: self.loss.gamma,
            eta: self.loss.eta,
        };
        cfg.seeds = Seeds::from_base(self.seed);
        cfg
    }

    fn ordering(&self, d: usize) -> anyhow::Result<Ordering> {
        let seed = self.ordering_seed.unwrap_or(self.seed);
        Ok(match self.ordering {
            OrderingKind::Identity => Ordering::identity(d),
            OrderingKind::Random => random_ordering(d, seed),
            OrderingKind::A => heuristic_ordering(HeuristicOrdering::A, image_side(d)?)?,
            OrderingKind::B => heuristic_ordering(HeuristicOrdering::B, image_side(d)?)?,
            OrderingKind::C => heuristic_ordering(HeuristicOrdering::C, image_side(d)?)?,
        })
    }

    /// Builds the structure or candidate sets for the configured method.
    pub fn train_mode(&self, train: &DiscreteDataset) -> anyhow::Result<TrainMode> {
        let d = train.num_features();
        let opts = CandidateOptions {
            k: self.k.unwrap_or(d.saturating_sub(1)).max(1),
            include_no_parent: self.include_no_parent,
            allow_pseudo: self.pseudo,
        };
        Ok(match self.method {
            Method::Nb => TrainMode::FixedStructure(naive_bayes_structure(d)),
            Method::TanRandom => TrainMode::FixedStructure(random_tan(&self.ordering(d)?, self.seed)),
            Method::ChowLiu => TrainMode::FixedStructure(chow_liu(train)?),
            Method::TanSubset => TrainMode::LearnStructure(random_candidates(&self.ordering(d)?, opts, self.seed)?),
            Method::TanAll if self.pseudo => TrainMode::LearnStructure(random_candidates(
                &self.ordering(d)?,
                CandidateOptions {
                    k: d.saturating_sub(1).max(1),
                    ..opts
                },
                self.seed,
            )?),
            Method::TanAll => TrainMode::LearnStructure(all_candidates(&self.ordering(d)?, self.include_no_parent)),
            Method::TanHeuristic => {
                TrainMode::LearnStructure(heuristic_candidates(&self.ordering(d)?, image_side(d)?, opts)?)
            }
        })
    }
}
