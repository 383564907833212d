//! First-order optimizers over parameter tensors.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

struct Moments {
    first: Vec<f64>,
    second: Vec<f64>,
}

/// Optimizer state; moment buffers are keyed by parameter identity so one
/// state can drive any fixed set of parameters.
pub struct OptimizerState {
    kind: OptimizerKind,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step_count: u64,
    moments: HashMap<u64, Moments>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Result<Self> {
        if !learning_rate.is_finite() || learning_rate <= 0.0 {
            return Err(TensorError::Contract {
                op: "optimizer",
                message: format!("learning rate must be positive, got {learning_rate}"),
            });
        }
        Ok(OptimizerState {
            kind,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            moments: HashMap::new(),
        })
    }

    pub fn sgd(learning_rate: f64) -> Result<Self> {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Result<Self> {
        Self::new(OptimizerKind::Adam, learning_rate)
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
            return Err(TensorError::Contract {
                op: "optimizer",
                message: format!("betas must lie in [0, 1), got {beta1}, {beta2}"),
            });
        }
        self.beta1 = beta1;
        self.beta2 = beta2;
        Ok(self)
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    /// One update over `params`. Every parameter must hold a gradient;
    /// gradients are zeroed after the update.
    pub fn step(&mut self, params: &[Tensor]) -> Result<()> {
        for (i, p) in params.iter().enumerate() {
            if p.grad().is_none() {
                return Err(TensorError::Contract {
                    op: "optimizer_step",
                    message: format!("parameter #{i} (shape {:?}) has no gradient", p.shape()),
                });
            }
        }
        self.step_count += 1;
        let t = self.step_count;
        for p in params {
            let g = p.grad().expect("checked above");
            match self.kind {
                OptimizerKind::Sgd => {
                    let lr = self.learning_rate;
                    p.update_values(|v| {
                        for (x, gi) in v.iter_mut().zip(g.iter()) {
                            *x -= lr * gi;
                        }
                    });
                }
                OptimizerKind::Adam => {
                    let m = self.moments.entry(p.id()).or_insert_with(|| Moments {
                        first: vec![0.0; g.len()],
                        second: vec![0.0; g.len()],
                    });
                    if m.first.len() != g.len() {
                        return Err(TensorError::Contract {
                            op: "optimizer_step",
                            message: format!(
                                "moment buffer length {} does not match parameter length {}",
                                m.first.len(),
                                g.len()
                            ),
                        });
                    }
                    let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.epsilon, self.learning_rate);
                    let bc1 = 1.0 - b1.powi(t as i32);
                    let bc2 = 1.0 - b2.powi(t as i32);
                    p.update_values(|v| {
                        for i in 0..v.len() {
                            m.first[i] = b1 * m.first[i] + (1.0 - b1) * g[i];
                            m.second[i] = b2 * m.second[i] + (1.0 - b2) * g[i] * g[i];
                            let m_hat = m.first[i] / bc1;
                            let v_hat = m.second[i] / bc2;
                            v[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                        }
                    });
                }
            }
            p.zero_grad();
        }
        Ok(())
    }
}
