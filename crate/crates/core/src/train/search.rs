use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, RunReport, TrainConfig};
use crate::data::DiscreteDataset;
use crate::error::{Error, Result};
use crate::losses::LossConfig;

/// Hyperparameter distributions for the hybrid loss.
///
/// Setting I: `log10 lambda ~ U[0, 3]`, `log10 gamma ~ U[-1, 2]`,
/// `eta ~ U[1, 20]`. Setting II: `log10 lambda ~ U[1, 3]`,
/// `log10 gamma ~ U[-1, 2]`, `eta = 10`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SearchSetting {
    I,
    II,
}

impl std::str::FromStr for SearchSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" | "i" | "1" => Ok(SearchSetting::I),
            "II" | "ii" | "2" => Ok(SearchSetting::II),
            _ => Err(Error::InvalidArgument(format!("unknown search setting {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub setting: SearchSetting,
    pub draws: usize,
    /// Every configuration is trained once per rate; the better run counts.
    pub lr_candidates: Vec<f64>,
}

impl SearchSpace {
    pub fn new(setting: SearchSetting, draws: usize) -> Self {
        SearchSpace {
            setting,
            draws,
            lr_candidates: vec![3e-3, 3e-2],
        }
    }
}

/// Returns `(lambda, gamma, eta)`.
pub fn sample_hyperparameters(setting: SearchSetting, rng: &mut impl Rng) -> (f64, f64, f64) {
    let (lambda_lo, eta) = match setting {
        SearchSetting::I => (0.0, None),
        SearchSetting::II => (1.0, Some(10.0)),
    };
    let lambda = 10f64.powf(rng.gen_range(lambda_lo..=3.0));
    let gamma = 10f64.powf(rng.gen_range(-1.0..=2.0));
    let eta = eta.unwrap_or_else(|| rng.gen_range(1.0..=20.0));
    (lambda, gamma, eta)
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    pub lambda: f64,
    pub gamma: f64,
    pub eta: f64,
    pub lr_theta: f64,
    /// Error on the validation set.
    pub error: f64,
    pub report: RunReport,
}

/// Samples `space.draws` hybrid-loss configurations, trains each with every
/// learning-rate candidate on `train_ds`, scores on `val_ds`, and returns
/// the results sorted by ascending error (ties keep draw order).
///
/// Runs use `jobs` worker threads; results do not depend on `jobs`.
pub fn random_search(
    space: &SearchSpace,
    base: &TrainConfig,
    train_ds: &DiscreteDataset,
    val_ds: &DiscreteDataset,
    seed: u64,
    jobs: usize,
) -> Result<Vec<SearchResult>> {
    if space.draws == 0 || space.lr_candidates.is_empty() {
        return Err(Error::InvalidArgument("search needs at least one draw and one learning rate".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<(f64, f64, f64)> = (0..space.draws)
        .map(|_| sample_hyperparameters(space.setting, &mut rng))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let run = |&(lambda, gamma, eta): &(f64, f64, f64)| -> Result<SearchResult> {
        let mut best: Option<SearchResult> = None;
        for &lr in &space.lr_candidates {
            let mut cfg = base.clone();
            cfg.loss = LossConfig::hybrid(lambda, gamma, eta);
            cfg.lr_theta = lr;
            let out = train(&cfg, train_ds, val_ds)?;
            let error = out.report.final_test_error;
            if best.as_ref().is_none_or(|b| error < b.error) {
                best = Some(SearchResult {
                    lambda,
                    gamma,
                    eta,
                    lr_theta: lr,
                    error,
                    report: out.report,
                });
            }
        }
        Ok(best.expect("at least one learning rate"))
    };
    let mut results = pool.install(|| draws.par_iter().map(run).collect::<Result<Vec<_>>>())?;
    results.sort_by(|a, b| a.error.total_cmp(&b.error));
    Ok(results)
}
