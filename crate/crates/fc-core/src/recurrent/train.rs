//! Mini-batch training with seeded shuffling and early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{OptimizerKind, OptimizerState};
use super::{rows_as_sequences, RecurrentParams};
use crate::connectivity::FeatureMatrix;
use crate::error::{Error, Result};
use crate::evaluation::derive_seed;

/// When to stop training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopRule {
    /// Stop after `patience` consecutive epochs without a new best
    /// validation loss (the default).
    Patience,
    /// Stop as soon as the validation loss fails to decrease over two
    /// consecutive epochs: loss(n) <= loss(n+1) <= loss(n+2).
    TwoEpochNondecrease,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub stop_rule: StopRule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Adam,
            learning_rate: 0.01,
            batch_size: 32,
            max_epochs: 100,
            patience: 5,
            seed: 0,
            stop_rule: StopRule::Patience,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.learning_rate < 0.0 {
            return Err(Error::invalid("learning_rate must be nonnegative"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::invalid("max_epochs must be at least 1"));
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience must be at least 1"));
        }
        Ok(())
    }
}

/// Train and validation losses after one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub trace: Vec<EpochRecord>,
    /// Number of completed epochs.
    pub stop_epoch: usize,
    /// 1-based epoch whose parameters were restored.
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// Mini-batch epochs with seeded shuffling; stops per `cfg.stop_rule` or at
/// `max_epochs`, then restores the best-validation parameters. A non-finite
/// loss aborts with the offending epoch and learning rate.
pub fn train(
    params: &mut RecurrentParams,
    train_set: &FeatureMatrix,
    val_set: &FeatureMatrix,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.n() == 0 || val_set.n() == 0 {
        return Err(Error::invalid("train and validation sets must be nonempty"));
    }

    let train_seqs = rows_as_sequences(train_set);
    let val_seqs = rows_as_sequences(val_set);
    let mut opt = OptimizerState::new(cfg.optimizer, params);

    let mut best_params = params.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut stall = 0usize;
    let mut trace: Vec<EpochRecord> = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..train_seqs.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, epoch as u64));
        order.shuffle(&mut rng);

        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<_> = chunk.iter().map(|&i| train_seqs[i].clone()).collect();
            let labels: Vec<u8> = chunk.iter().map(|&i| train_set.labels[i]).collect();
            let (loss, grads) = params.loss_and_grads(&batch, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    lr: cfg.learning_rate,
                });
            }
            opt.step(params, &grads, cfg.learning_rate);
        }

        let train_loss = params.loss(&train_seqs, &train_set.labels)?;
        let val_loss = params.loss(&val_seqs, &val_set.labels)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                lr: cfg.learning_rate,
            });
        }
        trace.push(EpochRecord {
            train_loss,
            val_loss,
        });

        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best_params = params.clone();
            stall = 0;
        } else {
            stall += 1;
        }

        let stop = match cfg.stop_rule {
            StopRule::Patience => stall >= cfg.patience,
            StopRule::TwoEpochNondecrease => {
                let n = trace.len();
                n >= 3
                    && trace[n - 3].val_loss <= trace[n - 2].val_loss
                    && trace[n - 2].val_loss <= trace[n - 1].val_loss
            }
        };
        if stop {
            break;
        }
    }

    *params = best_params;
    Ok(TrainOutcome {
        stop_epoch: trace.len(),
        best_epoch,
        best_val_loss: best_val,
        trace,
    })
}
