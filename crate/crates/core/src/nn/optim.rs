use super::layers::ParamSlot;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Scalar settings of the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SgdConfig {
    pub learning_rate: f64,
    /// L2 penalty added to the gradient.
    pub weight_decay: f64,
    pub momentum: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, weight_decay: 5e-4, momentum: 0.99 }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate.is_finite()
            && self.learning_rate > 0.0
            && self.weight_decay.is_finite()
            && self.weight_decay >= 0.0
            && (0.0..1.0).contains(&self.momentum);
        if !ok {
            return Err(Error::InvalidArgument(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }
}

/// Heavy-ball SGD with L2 weight decay:
/// `g' = g + decay * w; v = momentum * v - lr * g'; w = w + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    pub config: SgdConfig,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(config: SgdConfig) -> Self {
        Self { config, velocity: Vec::new() }
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }

    /// Applies one update. Fails without touching any parameter if a gradient
    /// is non-finite or the parameter list changed shape.
    pub fn step(&mut self, params: Vec<ParamSlot<'_>>) -> Result<()> {
        for p in &params {
            if p.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient(p.name.clone()));
            }
        }
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
        }
        if self.velocity.len() != params.len()
            || self.velocity.iter().zip(&params).any(|(v, p)| v.len() != p.value.len())
        {
            return Err(Error::Shape("optimizer state does not match parameters".into()));
        }
        let SgdConfig { learning_rate: lr, weight_decay: decay, momentum } = self.config;
        for (p, v) in params.into_iter().zip(&mut self.velocity) {
            for ((w, &g), vel) in p.value.iter_mut().zip(p.grad).zip(v.iter_mut()) {
                let g = g + decay * *w;
                *vel = momentum * *vel - lr * g;
                *w += *vel;
            }
        }
        Ok(())
    }
}
