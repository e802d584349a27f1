//! Single-layer LSTM / GRU classifiers: cells with manual BPTT, the
//! Adam / Nadam / Adagrad optimizers, and the early-stopped training loop.

mod cell;
mod optim;
mod train;

pub use cell::{
    gru_forward, gru_loss_and_grads, gru_step, lstm_forward, lstm_loss_and_grads, lstm_step,
    GruParams, GruRun, LstmParams, LstmRun, ParamTensors,
};
pub use optim::{OptimizerKind, OptimizerState};
pub use train::{train, EpochRecord, StopRule, TrainConfig, TrainOutcome};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

use crate::classical::{sigmoid, Classifier};
use crate::connectivity::FeatureMatrix;
use crate::error::{Error, Result};

/// Which recurrent cell a model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellKind {
    Lstm,
    Gru,
}

impl std::fmt::Display for CellKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CellKind::Lstm => write!(f, "lstm"),
            CellKind::Gru => write!(f, "gru"),
        }
    }
}

impl FromStr for CellKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lstm" => Ok(CellKind::Lstm),
            "gru" => Ok(CellKind::Gru),
            other => Err(Error::invalid(format!(
                "unknown cell kind {other:?} (expected lstm or gru)"
            ))),
        }
    }
}

/// Either cell's full parameter set behind one dispatch point, so training,
/// tuning, and prediction code handles LSTM and GRU uniformly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum RecurrentParams {
    Lstm(LstmParams),
    Gru(GruParams),
}

impl RecurrentParams {
    pub fn init(kind: CellKind, k: usize, d: usize, seed: u64) -> Self {
        match kind {
            CellKind::Lstm => RecurrentParams::Lstm(LstmParams::init(k, d, seed)),
            CellKind::Gru => RecurrentParams::Gru(GruParams::init(k, d, seed)),
        }
    }

    pub fn kind(&self) -> CellKind {
        match self {
            RecurrentParams::Lstm(_) => CellKind::Lstm,
            RecurrentParams::Gru(_) => CellKind::Gru,
        }
    }

    pub fn input_width(&self) -> usize {
        match self {
            RecurrentParams::Lstm(p) => p.input_width(),
            RecurrentParams::Gru(p) => p.input_width(),
        }
    }

    pub fn hidden_size(&self) -> usize {
        match self {
            RecurrentParams::Lstm(p) => p.hidden_size(),
            RecurrentParams::Gru(p) => p.hidden_size(),
        }
    }

    /// Mean BCE loss and gradients over a batch of sequences.
    pub fn loss_and_grads(
        &self,
        batch: &[Array2<f64>],
        labels: &[u8],
    ) -> Result<(f64, RecurrentParams)> {
        match self {
            RecurrentParams::Lstm(p) => {
                let (loss, g) = lstm_loss_and_grads(p, batch, labels)?;
                Ok((loss, RecurrentParams::Lstm(g)))
            }
            RecurrentParams::Gru(p) => {
                let (loss, g) = gru_loss_and_grads(p, batch, labels)?;
                Ok((loss, RecurrentParams::Gru(g)))
            }
        }
    }

    /// P(label = 1) for one sequence.
    pub fn predict_sequence(&self, seq: &Array2<f64>) -> Result<f64> {
        match self {
            RecurrentParams::Lstm(p) => {
                let run = lstm_forward(p, seq)?;
                Ok(sigmoid(p.head_w.dot(&run.h_final) + p.head_b[0]))
            }
            RecurrentParams::Gru(p) => {
                let run = gru_forward(p, seq)?;
                Ok(sigmoid(p.head_w.dot(&run.h_final) + p.head_b[0]))
            }
        }
    }

    /// Mean BCE over (sequence, label) pairs without computing gradients.
    pub fn loss(&self, batch: &[Array2<f64>], labels: &[u8]) -> Result<f64> {
        if batch.is_empty() || batch.len() != labels.len() {
            return Err(Error::invalid(
                "batch and labels must be nonempty and aligned",
            ));
        }
        let mut loss = 0.0;
        for (seq, &y) in batch.iter().zip(labels) {
            let p = self.predict_sequence(seq)?.clamp(1e-12, 1.0 - 1e-12);
            let y = f64::from(y);
            loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        }
        Ok(loss / batch.len() as f64)
    }
}

impl ParamTensors for RecurrentParams {
    fn flat_views(&self) -> Vec<&[f64]> {
        match self {
            RecurrentParams::Lstm(p) => p.flat_views(),
            RecurrentParams::Gru(p) => p.flat_views(),
        }
    }

    fn flat_views_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            RecurrentParams::Lstm(p) => p.flat_views_mut(),
            RecurrentParams::Gru(p) => p.flat_views_mut(),
        }
    }
}

/// Rows of a feature matrix as length-1 sequences (the [subjects, 1,
/// features] input layout).
pub fn rows_as_sequences(fm: &FeatureMatrix) -> Vec<Array2<f64>> {
    fm.values
        .rows()
        .into_iter()
        .map(|row| Array2::from_shape_vec((1, row.len()), row.to_vec()).expect("row is contiguous"))
        .collect()
}

impl Classifier for RecurrentParams {
    fn feature_width(&self) -> usize {
        self.input_width()
    }

    fn predict_proba(&self, fm: &FeatureMatrix) -> Result<Vec<f64>> {
        if fm.f() != self.input_width() {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} features, matrix has {}",
                self.input_width(),
                fm.f()
            )));
        }
        rows_as_sequences(fm)
            .iter()
            .map(|seq| self.predict_sequence(seq))
            .collect()
    }
}
