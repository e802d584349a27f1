//! Exhaustive optimizer x learning-rate x batch-size grid search with
//! replicate averaging, plus k-fold grid search for the classical models.

use serde::{Deserialize, Serialize};

use crate::connectivity::FeatureMatrix;
use crate::error::{Error, Result};
use crate::evaluation::{self, derive_seed};
use crate::exec;
use crate::recurrent::{train, CellKind, OptimizerKind, RecurrentParams, StopRule, TrainConfig};

/// Hyperparameter axes swept in optimizer -> learning rate -> batch size
/// order, with `replicates` trainings per cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HyperGrid {
    pub optimizers: Vec<OptimizerKind>,
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    pub neurons: Vec<usize>,
    pub replicates: usize,
}

impl Default for HyperGrid {
    fn default() -> Self {
        HyperGrid {
            optimizers: vec![
                OptimizerKind::Adam,
                OptimizerKind::Nadam,
                OptimizerKind::Adagrad,
            ],
            learning_rates: vec![0.01, 0.005, 0.001, 0.0005, 0.0001],
            batch_sizes: vec![4, 8, 16, 32],
            neurons: vec![10, 30, 50, 100, 150, 200, 250],
            replicates: 3,
        }
    }
}

impl HyperGrid {
    pub fn validate(&self) -> Result<()> {
        if self.optimizers.is_empty()
            || self.learning_rates.is_empty()
            || self.batch_sizes.is_empty()
            || self.replicates == 0
        {
            return Err(Error::invalid(
                "grid axes must be nonempty and replicates at least 1",
            ));
        }
        Ok(())
    }

    /// Cells in sweep order.
    pub fn cells(&self) -> Vec<GridCell> {
        let mut out = Vec::new();
        for &optimizer in &self.optimizers {
            for &learning_rate in &self.learning_rates {
                for &batch_size in &self.batch_sizes {
                    out.push(GridCell {
                        optimizer,
                        learning_rate,
                        batch_size,
                    });
                }
            }
        }
        out
    }
}

/// One (optimizer, learning rate, batch size) combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
}

/// Replicate scores and their mean for one cell; a diverged replicate scores
/// zero and leaves a diagnostic instead of aborting the sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellScore {
    pub cell: GridCell,
    pub replicate_scores: Vec<f64>,
    pub mean_score: f64,
    pub diagnostics: Vec<String>,
}

/// Every cell in sweep order plus the argmax (first cell on ties).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuningResult {
    pub cells: Vec<CellScore>,
    pub best_index: usize,
    pub best_score: f64,
}

impl TuningResult {
    pub fn best_cell(&self) -> &GridCell {
        &self.cells[self.best_index].cell
    }
}

/// Sweep the grid with a caller-supplied evaluator. The evaluator receives
/// (cell index, cell, replicate index) and returns a validation score; an
/// error is recorded as a zero score with a diagnostic. Cells run in
/// parallel; the selected cell is the strict maximum of replicate means with
/// first-in-grid-order tie-breaking, independent of scheduling.
pub fn grid_search<E>(grid: &HyperGrid, eval: E) -> Result<TuningResult>
where
    E: Fn(usize, &GridCell, usize) -> Result<f64> + Sync,
{
    grid.validate()?;
    let cells = grid.cells();
    let scored: Vec<CellScore> = exec::map(cells.len(), |ci| {
        let cell = cells[ci];
        let mut replicate_scores = Vec::with_capacity(grid.replicates);
        let mut diagnostics = Vec::new();
        for rep in 0..grid.replicates {
            match eval(ci, &cell, rep) {
                Ok(score) => replicate_scores.push(score),
                Err(e) => {
                    replicate_scores.push(0.0);
                    diagnostics.push(format!("replicate {rep}: {e}"));
                }
            }
        }
        let mean_score = replicate_scores.iter().sum::<f64>() / replicate_scores.len() as f64;
        CellScore {
            cell,
            replicate_scores,
            mean_score,
            diagnostics,
        }
    });

    let mut best_index = 0;
    for (i, cs) in scored.iter().enumerate() {
        if cs.mean_score > scored[best_index].mean_score {
            best_index = i;
        }
    }
    let best_score = scored[best_index].mean_score;
    Ok(TuningResult {
        cells: scored,
        best_index,
        best_score,
    })
}

/// Algorithm-1 driver for the recurrent models: each replicate initializes
/// fresh parameters, trains with early stopping (patience 5, epoch cap from
/// `max_epochs`), and scores accuracy on the validation set.
pub fn grid_search_recurrent(
    kind: CellKind,
    neurons: usize,
    train_set: &FeatureMatrix,
    val_set: &FeatureMatrix,
    grid: &HyperGrid,
    max_epochs: usize,
    seed: u64,
) -> Result<TuningResult> {
    let k = train_set.f();
    if val_set.f() != k {
        return Err(Error::DimensionMismatch(
            "train and validation feature widths differ".into(),
        ));
    }
    grid_search(grid, |ci, cell, rep| {
        let item_seed = derive_seed(seed, (ci * grid.replicates + rep) as u64);
        let mut params = RecurrentParams::init(kind, k, neurons, item_seed);
        let cfg = TrainConfig {
            optimizer: cell.optimizer,
            learning_rate: cell.learning_rate,
            batch_size: cell.batch_size,
            max_epochs,
            patience: 5,
            seed: derive_seed(item_seed, 1),
            stop_rule: StopRule::Patience,
        };
        train(&mut params, train_set, val_set, &cfg)?;
        let scores = crate::classical::Classifier::predict_proba(&params, val_set)?;
        let preds: Vec<u8> = scores.iter().map(|&p| u8::from(p >= 0.5)).collect();
        let cc = evaluation::confusion(&val_set.labels, &preds)?;
        Ok(evaluation::accuracy(&cc))
    })
}

/// Grid search result for a classical-model parameter list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassicalTuningResult<P> {
    pub scores: Vec<f64>,
    pub best_index: usize,
    pub best_params: P,
    pub best_score: f64,
}

/// Mean stratified k-fold accuracy per candidate parameter set; argmax with
/// first-in-order tie-breaking.
pub fn grid_search_classical<P, F>(
    candidates: &[P],
    fm: &FeatureMatrix,
    k: usize,
    seed: u64,
    fit_score: F,
) -> Result<ClassicalTuningResult<P>>
where
    P: Clone + Sync,
    F: Fn(&P, &FeatureMatrix, &FeatureMatrix, u64) -> Result<Vec<f64>> + Sync,
{
    if candidates.is_empty() {
        return Err(Error::invalid("candidate list must be nonempty"));
    }
    let folds = evaluation::stratified_kfold(&fm.labels, k, seed)?;
    let splits: Vec<(FeatureMatrix, FeatureMatrix)> = folds
        .iter()
        .map(|(train_idx, holdout_idx)| (fm.subset_rows(train_idx), fm.subset_rows(holdout_idx)))
        .collect();

    let scores: Vec<Result<f64>> = exec::map(candidates.len(), |ci| {
        let mut acc_sum = 0.0;
        for (f, (train, holdout)) in splits.iter().enumerate() {
            let probs = fit_score(
                &candidates[ci],
                train,
                holdout,
                derive_seed(seed, (ci * splits.len() + f) as u64),
            )?;
            let preds: Vec<u8> = probs.iter().map(|&p| u8::from(p >= 0.5)).collect();
            let cc = evaluation::confusion(&holdout.labels, &preds)?;
            acc_sum += evaluation::accuracy(&cc);
        }
        Ok(acc_sum / splits.len() as f64)
    });
    let scores: Vec<f64> = scores.into_iter().collect::<Result<_>>()?;

    let mut best_index = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best_index] {
            best_index = i;
        }
    }
    Ok(ClassicalTuningResult {
        best_index,
        best_params: candidates[best_index].clone(),
        best_score: scores[best_index],
        scores,
    })
}

/// A fixed (optimizer, learning rate, batch size) -> score table, used as a
/// mock evaluator: tuning fixtures ship in this shape and `fc tune` results
/// render back into it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreTable {
    entries: Vec<(GridCell, f64)>,
}

impl ScoreTable {
    /// Parse `optimizer,learning_rate,batch_size,score` lines; `#` comments
    /// and the header are skipped.
    pub fn from_csv_str(text: &str) -> Result<ScoreTable> {
        let mut entries = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("optimizer") {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(Error::invalid(format!(
                    "line {}: expected 4 fields, got {}",
                    ln + 1,
                    fields.len()
                )));
            }
            let cell = GridCell {
                optimizer: fields[0].parse()?,
                learning_rate: fields[1]
                    .parse()
                    .map_err(|e| Error::invalid(format!("line {}: {e}", ln + 1)))?,
                batch_size: fields[2]
                    .parse()
                    .map_err(|e| Error::invalid(format!("line {}: {e}", ln + 1)))?,
            };
            let score: f64 = fields[3]
                .parse()
                .map_err(|e| Error::invalid(format!("line {}: {e}", ln + 1)))?;
            entries.push((cell, score));
        }
        if entries.is_empty() {
            return Err(Error::invalid("empty score table"));
        }
        Ok(ScoreTable { entries })
    }

    pub fn from_csv_path(path: &std::path::Path) -> Result<ScoreTable> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_csv_str(&text)
    }

    pub fn lookup(&self, cell: &GridCell) -> Option<f64> {
        self.entries
            .iter()
            .find(|(c, _)| {
                c.optimizer == cell.optimizer
                    && c.batch_size == cell.batch_size
                    && (c.learning_rate - cell.learning_rate).abs() < 1e-12
            })
            .map(|(_, s)| *s)
    }

    /// Grid whose axes are the distinct values in first-appearance order;
    /// replicates is 1 since the table is deterministic.
    pub fn grid(&self) -> HyperGrid {
        let mut optimizers = Vec::new();
        let mut learning_rates: Vec<f64> = Vec::new();
        let mut batch_sizes = Vec::new();
        for (cell, _) in &self.entries {
            if !optimizers.contains(&cell.optimizer) {
                optimizers.push(cell.optimizer);
            }
            if !learning_rates
                .iter()
                .any(|&lr| (lr - cell.learning_rate).abs() < 1e-12)
            {
                learning_rates.push(cell.learning_rate);
            }
            if !batch_sizes.contains(&cell.batch_size) {
                batch_sizes.push(cell.batch_size);
            }
        }
        HyperGrid {
            optimizers,
            learning_rates,
            batch_sizes,
            neurons: vec![],
            replicates: 1,
        }
    }

    pub fn entries(&self) -> &[(GridCell, f64)] {
        &self.entries
    }
}

/// Run the grid sweep against a fixed score table.
pub fn grid_search_mock(table: &ScoreTable) -> Result<TuningResult> {
    let grid = table.grid();
    grid_search(&grid, |_, cell, _| {
        table
            .lookup(cell)
            .ok_or_else(|| Error::invalid(format!("cell missing from table: {cell:?}")))
    })
}
