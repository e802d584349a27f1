//! Glue between the configuration surface and the core fitters: feature
//! selection, per-kind training, scoring, and model persistence.

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use fc_core::classical::{
    default_gamma, fit_adaboost, fit_kernel_svm, fit_linear_svm, fit_logistic, fit_random_forest,
    rfe_select, select_from_model, AdaBoostModel, Classifier, ForestModel, KernelSvmModel,
    LinearModel, Penalty, SfmThreshold, SplitCriterion,
};
use fc_core::connectivity::FeatureMatrix;
use fc_core::dataset::split_stratified_labels;
use fc_core::evaluation::derive_seed;
use fc_core::recurrent::{
    train, CellKind, OptimizerKind, RecurrentParams, StopRule, TrainConfig, TrainOutcome,
};

use crate::config::{ModelConfig, ModelKind};

/// Any trained model plus the context needed to reuse it. Payloads are
/// boxed so the enum stays pointer-sized regardless of model family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TrainedModel {
    Linear(Box<LinearModel>),
    Kernel(Box<KernelSvmModel>),
    Forest(Box<ForestModel>),
    Boost(Box<AdaBoostModel>),
    Recurrent(Box<RecurrentParams>),
}

impl TrainedModel {
    pub fn predict_proba(&self, fm: &FeatureMatrix) -> Result<Vec<f64>> {
        let scores = match self {
            TrainedModel::Linear(m) => m.predict_proba(fm),
            TrainedModel::Kernel(m) => m.predict_proba(fm),
            TrainedModel::Forest(m) => m.predict_proba(fm),
            TrainedModel::Boost(m) => m.predict_proba(fm),
            TrainedModel::Recurrent(m) => m.predict_proba(fm),
        }?;
        Ok(scores)
    }
}

/// A fitted model together with the feature subset it was trained on
/// (identity when no selection ran) and the training trace for recurrent
/// models.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitArtifacts {
    pub model: TrainedModel,
    pub selected_features: Option<Vec<usize>>,
    pub train_outcome: Option<TrainOutcome>,
}

impl FitArtifacts {
    /// Score a matrix in the original (pre-selection) feature space.
    pub fn predict_proba(&self, fm: &FeatureMatrix) -> Result<Vec<f64>> {
        match &self.selected_features {
            Some(cols) => self.model.predict_proba(&fm.subset_columns(cols)),
            None => self.model.predict_proba(fm),
        }
    }

    pub fn save_json(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn load_json(path: &std::path::Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn parse_penalty(s: &str) -> Result<Penalty> {
    if let Some(alpha) = s.strip_prefix("elasticnet:") {
        return Ok(Penalty::ElasticNet(alpha.parse()?));
    }
    match s.to_ascii_lowercase().as_str() {
        "l1" => Ok(Penalty::L1),
        "l2" => Ok(Penalty::L2),
        "elasticnet" => Ok(Penalty::ElasticNet(0.5)),
        other => bail!("unknown penalty {other:?} (l1, l2, elasticnet, elasticnet:<alpha>)"),
    }
}

pub fn parse_criterion(s: &str) -> Result<SplitCriterion> {
    match s.to_ascii_lowercase().as_str() {
        "gini" => Ok(SplitCriterion::Gini),
        "entropy" => Ok(SplitCriterion::Entropy),
        other => bail!("unknown split criterion {other:?} (gini or entropy)"),
    }
}

pub fn parse_optimizer(s: &str) -> Result<OptimizerKind> {
    s.parse::<OptimizerKind>().map_err(|e| anyhow!("{e}"))
}

pub fn parse_stop_rule(s: &str) -> Result<StopRule> {
    match s.to_ascii_lowercase().as_str() {
        "patience" => Ok(StopRule::Patience),
        "two_epoch_nondecrease" => Ok(StopRule::TwoEpochNondecrease),
        other => bail!("unknown stop rule {other:?} (patience or two_epoch_nondecrease)"),
    }
}

/// Feature-selection stage from the config strings ("off", "half", a count
/// for RFE; "off", "mean", a value for SFM). Returns the surviving column
/// indices, or `None` when both are off.
fn select_features(cfg: &ModelConfig, fm: &FeatureMatrix, seed: u64) -> Result<Option<Vec<usize>>> {
    let mut cols: Option<Vec<usize>> = None;

    if cfg.sfm != "off" {
        let threshold = match cfg.sfm.as_str() {
            "mean" => SfmThreshold::Mean,
            v => SfmThreshold::Value(
                v.parse()
                    .with_context(|| format!("sfm must be off, mean, or a number, got {v:?}"))?,
            ),
        };
        // SelectFromModel fits a ridge-penalized logistic regression and
        // thresholds its |weights|.
        let probe = fit_logistic(fm, Penalty::L2, cfg.c_reg)?;
        cols = Some(select_from_model(&probe, threshold)?);
    }

    if cfg.rfe != "off" {
        let base = match &cols {
            Some(c) => fm.subset_columns(c),
            None => fm.clone(),
        };
        let target = match cfg.rfe.as_str() {
            "half" => (base.f() / 2).max(1),
            v => v
                .parse()
                .with_context(|| format!("rfe must be off, half, or a count, got {v:?}"))?,
        };
        let penalty = parse_penalty(&cfg.penalty)?;
        let criterion = parse_criterion(&cfg.criterion)?;
        let picked = match cfg.kind {
            ModelKind::Lr => rfe_select(&base, target, |sub| {
                let m = fit_logistic(sub, penalty, cfg.c_reg)?;
                Ok(m.weights.iter().map(|w| w.abs()).collect())
            })?,
            ModelKind::Lsvc => rfe_select(&base, target, |sub| {
                let m = fit_linear_svm(sub, cfg.c_reg)?;
                Ok(m.weights.iter().map(|w| w.abs()).collect())
            })?,
            ModelKind::Rfc => rfe_select(&base, target, |sub| {
                let m = fit_random_forest(sub, cfg.trees.min(200), cfg.depth, criterion, seed)?;
                Ok(m.feature_importances())
            })?,
            other => bail!("rfe is supported for lr, lsvc, and rfc (got {other})"),
        };
        // Map back into original column indices when SFM ran first.
        cols = Some(match cols {
            Some(prior) => picked.into_iter().map(|i| prior[i]).collect(),
            None => picked,
        });
    }

    Ok(cols)
}

/// Fit the configured model on the full matrix (recurrent models carve a
/// stratified validation slice out of it for early stopping).
pub fn fit_model(cfg: &ModelConfig, fm: &FeatureMatrix, seed: u64) -> Result<FitArtifacts> {
    let selected = select_features(cfg, fm, derive_seed(seed, 101))?;
    let train_fm = match &selected {
        Some(cols) => fm.subset_columns(cols),
        None => fm.clone(),
    };

    let (model, outcome) = match cfg.kind {
        ModelKind::Lr => (
            TrainedModel::Linear(Box::new(fit_logistic(
                &train_fm,
                parse_penalty(&cfg.penalty)?,
                cfg.c_reg,
            )?)),
            None,
        ),
        ModelKind::Lsvc => (
            TrainedModel::Linear(Box::new(fit_linear_svm(&train_fm, cfg.c_reg)?)),
            None,
        ),
        ModelKind::Ksvc => {
            let gamma = cfg.gamma.unwrap_or_else(|| default_gamma(&train_fm));
            (
                TrainedModel::Kernel(Box::new(fit_kernel_svm(&train_fm, cfg.c_reg, gamma)?)),
                None,
            )
        }
        ModelKind::Rfc => (
            TrainedModel::Forest(Box::new(fit_random_forest(
                &train_fm,
                cfg.trees,
                cfg.depth,
                parse_criterion(&cfg.criterion)?,
                seed,
            )?)),
            None,
        ),
        ModelKind::Abc => (
            TrainedModel::Boost(Box::new(fit_adaboost(
                &train_fm,
                cfg.estimators,
                cfg.ab_learning_rate,
            )?)),
            None,
        ),
        ModelKind::Lstm | ModelKind::Gru => {
            let kind = if cfg.kind == ModelKind::Lstm {
                CellKind::Lstm
            } else {
                CellKind::Gru
            };
            // Carve the validation slice: train/val via the (train, 0, test)
            // splitter, reading its test part as validation.
            let vf = cfg.val_fraction;
            let plan = split_stratified_labels(&train_fm.labels, (1.0 - vf, 0.0, vf), seed)?;
            let inner_train = train_fm.subset_rows(&plan.train_idx);
            let inner_val = train_fm.subset_rows(&plan.test_idx);

            let mut params =
                RecurrentParams::init(kind, train_fm.f(), cfg.neurons, derive_seed(seed, 7));
            let tc = TrainConfig {
                optimizer: parse_optimizer(&cfg.optimizer)?,
                learning_rate: cfg.learning_rate,
                batch_size: cfg.batch_size,
                max_epochs: cfg.max_epochs,
                patience: cfg.patience,
                seed: derive_seed(seed, 13),
                stop_rule: parse_stop_rule(&cfg.stop_rule)?,
            };
            let outcome = train(&mut params, &inner_train, &inner_val, &tc)?;
            (TrainedModel::Recurrent(Box::new(params)), Some(outcome))
        }
    };

    Ok(FitArtifacts {
        model,
        selected_features: selected,
        train_outcome: outcome,
    })
}

/// Fit on `train` and score `test`, both in the original feature space; the
/// uniform callback shape the evaluation protocols expect.
pub fn fit_score(
    cfg: &ModelConfig,
    train: &FeatureMatrix,
    test: &FeatureMatrix,
    seed: u64,
) -> fc_core::Result<Vec<f64>> {
    let to_core = |e: anyhow::Error| fc_core::Error::InvalidInput(format!("{e:#}"));
    let artifacts = fit_model(cfg, train, seed).map_err(to_core)?;
    artifacts.predict_proba(test).map_err(to_core)
}
