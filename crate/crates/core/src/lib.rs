//! Discrete Bayesian network classifiers with tree-augmented naive Bayes
//! (TAN) structures learned by gradient descent.
//!
//! Features are visited in a fixed [`Ordering`]; each position picks at most
//! one earlier feature as parent in addition to the class. Structure
//! learning keeps a categorical distribution over each position's candidate
//! parents and trains it jointly with the tables through Gumbel-max
//! sampling and a straight-through gradient.

pub mod baselines;
pub mod data;
mod error;
pub mod io;
pub mod losses;
pub mod model;
pub mod optim;
pub mod structure;
pub mod train;

pub use data::{DiscreteDataset, Schema};
pub use error::{Error, Result};
pub use losses::{Batch, LossConfig, LossMode};
pub use model::{
    BankLayout, CandidateSets, CptBank, NormalizedBank, Ordering, ParentChoice, TanClassifier, TanStructure,
};
pub use structure::{SampleMode, StructureLogits, TemperatureSchedule};
pub use train::{RunReport, TrainConfig, TrainMode};
