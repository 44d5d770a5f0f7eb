//! Adam and learning-rate schedules.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BankLayout, CptBank};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for one flat parameter vector.
#[derive(Clone, Debug)]
pub struct AdamState {
    config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self::with_config(n, AdamConfig::default())
    }

    pub fn with_config(n: usize, config: AdamConfig) -> Self {
        AdamState {
            config,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Minimizes: `params -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "optimizer holds {} parameters, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidArgument("non-finite gradient".into()));
        }
        let AdamConfig { beta1, beta2, eps } = self.config;
        self.t += 1;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
        }
        Ok(())
    }
}

/// `base_lr * decay_factor^(epoch / total_epochs)`, or constant when `fixed`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub total_epochs: usize,
    pub decay_factor: f64,
    pub fixed: bool,
}

impl LrSchedule {
    pub fn decaying(base_lr: f64, total_epochs: usize) -> Self {
        LrSchedule {
            base_lr,
            total_epochs,
            decay_factor: 1e-3,
            fixed: false,
        }
    }

    pub fn constant(base_lr: f64) -> Self {
        LrSchedule {
            base_lr,
            total_epochs: 1,
            decay_factor: 1.0,
            fixed: true,
        }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        if self.fixed || self.total_epochs == 0 {
            return self.base_lr;
        }
        let frac = epoch.min(self.total_epochs) as f64 / self.total_epochs as f64;
        self.base_lr * self.decay_factor.powf(frac)
    }
}

/// Bank with every logit drawn from `U[-0.1, 0.1]`.
pub fn init_bank(layout: Arc<BankLayout>, seed: u64) -> CptBank {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..layout.len()).map(|_| rng.gen_range(-0.1..=0.1)).collect();
    CptBank::from_values(layout, values).expect("finite values")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Ordering, ParentChoice, TanStructure};

    #[test]
    fn adam_solves_a_quadratic_bowl() {
        let mut w = vec![3.0, -2.0, 0.5];
        let mut adam = AdamState::new(3);
        for _ in 0..500 {
            let g: Vec<f64> = w.iter().map(|x| 2.0 * x).collect();
            adam.step(&mut w, &g, 0.1).unwrap();
        }
        assert!(w.iter().all(|x| x.abs() < 1e-3), "{w:?}");
        assert_eq!(adam.steps(), 500);
    }

    #[test]
    fn first_adam_step_has_magnitude_lr() {
        let mut w = vec![1.0, 1.0];
        let mut adam = AdamState::new(2);
        adam.step(&mut w, &[5.0, -0.01], 0.01).unwrap();
        assert!((w[0] - 0.99).abs() < 1e-9);
        assert!((w[1] - 1.01).abs() < 1e-6);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut adam = AdamState::new(2);
        assert!(matches!(adam.step(&mut [0.0; 3], &[0.0; 3], 0.1), Err(Error::ShapeMismatch(_))));
        assert!(adam.step(&mut [0.0; 2], &[f64::NAN, 0.0], 0.1).is_err());
    }

    #[test]
    fn lr_schedule_endpoints() {
        let s = LrSchedule::decaying(0.03, 100);
        assert_eq!(s.lr_at(0), 0.03);
        assert!((s.lr_at(100) - 3e-5).abs() < 1e-15);
        assert!((s.lr_at(50) - 0.03 * 1e-3f64.sqrt()).abs() < 1e-15);
        assert_eq!(LrSchedule::constant(1e-3).lr_at(77), 1e-3);
    }

    #[test]
    fn init_bank_range() {
        let s = TanStructure::new(Ordering::identity(2), vec![ParentChoice::NoParent; 2], false).unwrap();
        let layout = Arc::new(BankLayout::for_structure(&s, &[3, 4], 2).unwrap());
        let b = init_bank(layout, 0);
        assert!(b.values().iter().all(|v| v.abs() <= 0.1));
        assert!(b.values().iter().any(|v| *v != 0.0));
    }
}
