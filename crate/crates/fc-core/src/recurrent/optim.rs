//! Adam, Nadam, and Adagrad parameter updates over flat tensor views.

use serde::{Deserialize, Serialize};
use std::str::FromStr;

use super::cell::ParamTensors;
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Adam,
    Nadam,
    Adagrad,
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OptimizerKind::Adam => write!(f, "adam"),
            OptimizerKind::Nadam => write!(f, "nadam"),
            OptimizerKind::Adagrad => write!(f, "adagrad"),
        }
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "adam" => Ok(OptimizerKind::Adam),
            "nadam" => Ok(OptimizerKind::Nadam),
            "adagrad" => Ok(OptimizerKind::Adagrad),
            other => Err(Error::invalid(format!(
                "unknown optimizer {other:?} (expected adam, nadam, or adagrad)"
            ))),
        }
    }
}

/// Per-parameter accumulators: first/second moments for Adam and Nadam, the
/// squared-gradient sum for Adagrad. beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, params: &impl ParamTensors) -> Self {
        let shapes: Vec<Vec<f64>> = params
            .flat_views()
            .iter()
            .map(|s| vec![0.0; s.len()])
            .collect();
        OptimizerState {
            kind,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: shapes.clone(),
            v: shapes,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update in place. Accumulator shapes must match the
    /// parameter set the state was created for.
    pub fn step(&mut self, params: &mut impl ParamTensors, grads: &impl ParamTensors, lr: f64) {
        self.step += 1;
        let t = self.step as f64;
        let mut views = params.flat_views_mut();
        let gviews = grads.flat_views();
        debug_assert_eq!(views.len(), self.m.len());

        match self.kind {
            OptimizerKind::Adam => {
                let bc1 = 1.0 - self.beta1.powf(t);
                let bc2 = 1.0 - self.beta2.powf(t);
                for ((p, g), (m, v)) in views
                    .iter_mut()
                    .zip(&gviews)
                    .zip(self.m.iter_mut().zip(self.v.iter_mut()))
                {
                    for i in 0..p.len() {
                        m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                        v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                        let m_hat = m[i] / bc1;
                        let v_hat = v[i] / bc2;
                        p[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
                    }
                }
            }
            OptimizerKind::Nadam => {
                let bc1 = 1.0 - self.beta1.powf(t);
                let bc2 = 1.0 - self.beta2.powf(t);
                for ((p, g), (m, v)) in views
                    .iter_mut()
                    .zip(&gviews)
                    .zip(self.m.iter_mut().zip(self.v.iter_mut()))
                {
                    for i in 0..p.len() {
                        m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                        v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                        let m_hat = m[i] / bc1;
                        let v_hat = v[i] / bc2;
                        // Nesterov lookahead: blend the bias-corrected moment
                        // with the raw gradient.
                        let lookahead = self.beta1 * m_hat + (1.0 - self.beta1) * g[i] / bc1;
                        p[i] -= lr * lookahead / (v_hat.sqrt() + self.eps);
                    }
                }
            }
            OptimizerKind::Adagrad => {
                for ((p, g), v) in views.iter_mut().zip(&gviews).zip(self.v.iter_mut()) {
                    for i in 0..p.len() {
                        v[i] += g[i] * g[i];
                        p[i] -= lr * g[i] / (v[i].sqrt() + self.eps);
                    }
                }
            }
        }
    }
}
