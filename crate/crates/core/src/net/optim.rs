use serde::{Deserialize, Serialize};

use super::{Classifier, Gradients, Params};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            learning_rate,
            ..Default::default()
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        OptimizerConfig {
            learning_rate,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("optimizer.learning_rate", "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("optimizer.beta", "betas must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("optimizer.epsilon", "must be > 0"));
        }
        Ok(())
    }
}

/// Optimizer with its per-parameter moments. Moments are allocated lazily on
/// the first step so one state can be created before the model exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    /// Learning rate used for the next step; schedules overwrite this.
    pub current_lr: f64,
    pub step: u64,
    first_moment: Option<Params>,
    second_moment: Option<Params>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(OptimizerState {
            current_lr: config.learning_rate,
            config,
            step: 0,
            first_moment: None,
            second_moment: None,
        })
    }

    /// Applies one update to `model` in place.
    pub fn step(&mut self, model: &mut Classifier, grads: &Gradients) -> Result<()> {
        if !grads.same_shape(model.params()) {
            return Err(Error::Shape("gradient shapes do not match model".into()));
        }
        if let Some(location) = grads.first_non_finite() {
            return Err(Error::Numeric {
                location: format!("gradient {location}"),
            });
        }
        let lr = self.current_lr;
        match self.config.kind {
            OptimizerKind::Sgd => {
                model.params_mut().add_scaled(grads, -lr);
            }
            OptimizerKind::Adam => self.adam_step(model.params_mut(), grads, lr)?,
        }
        self.step += 1;
        Ok(())
    }

    fn adam_step(&mut self, params: &mut Params, grads: &Gradients, lr: f64) -> Result<()> {
        let (b1, b2, eps) = (self.config.beta1, self.config.beta2, self.config.epsilon);
        let m = self
            .first_moment
            .get_or_insert_with(|| Params::zeros_like(grads));
        let v = self
            .second_moment
            .get_or_insert_with(|| Params::zeros_like(grads));
        if !m.same_shape(grads) {
            return Err(Error::State("optimizer moments belong to another model".into()));
        }
        let t = (self.step + 1) as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);

        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for l in 0..params.weights.len() {
            ndarray::Zip::from(&mut params.weights[l])
                .and(&grads.weights[l])
                .and(&mut m.weights[l])
                .and(&mut v.weights[l])
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut params.biases[l])
                .and(&grads.biases[l])
                .and(&mut m.biases[l])
                .and(&mut v.biases[l])
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
        Ok(())
    }
}
