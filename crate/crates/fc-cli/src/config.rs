//! Pipeline configuration: a TOML schema whose resolved form (defaults
//! filled in) is echoed verbatim into every report, so each run documents
//! the constants it used.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use fc_core::evaluation::StdMode;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    #[serde(default)]
    pub connectivity: ConnectivityConfig,
    #[serde(default)]
    pub pca: PcaConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub tuning: TuningConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

impl PipelineConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: PipelineConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        if self.tuning.enabled && !matches!(self.model.kind, ModelKind::Lstm | ModelKind::Gru) {
            bail!("tuning.enabled requires a recurrent model (lstm or gru)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub struct DataConfig {
    pub source: DataSource,
    #[serde(default)]
    pub series_dir: Option<PathBuf>,
    #[serde(default)]
    pub labels_file: Option<PathBuf>,
    #[serde(default = "default_n_per_class")]
    pub n_per_class: usize,
    #[serde(default = "default_t")]
    pub t: usize,
    #[serde(default = "default_r")]
    pub r: usize,
    #[serde(default)]
    pub effect: f64,
}

fn default_n_per_class() -> usize {
    50
}
fn default_t() -> usize {
    60
}
fn default_r() -> usize {
    20
}

impl DataConfig {
    fn validate(&self) -> Result<()> {
        if self.source == DataSource::Directory
            && (self.series_dir.is_none() || self.labels_file.is_none())
        {
            bail!("data.source = \"directory\" requires series_dir and labels_file");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Directory,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectivityConfig {
    #[serde(default = "default_method")]
    pub method: String,
    /// Shrinkage weight for the partial-correlation precision matrix.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

fn default_method() -> String {
    "pearson".into()
}
fn default_lambda() -> f64 {
    0.1
}

impl Default for ConnectivityConfig {
    fn default() -> Self {
        ConnectivityConfig {
            method: default_method(),
            lambda: default_lambda(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub struct PcaConfig {
    #[serde(default = "default_pca_mode")]
    pub mode: PcaMode,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default = "default_variance_target")]
    pub variance_target: f64,
    /// Fit on training rows only instead of the whole matrix (the
    /// leakage-safe variant; off by default to mirror the original flow).
    #[serde(default)]
    pub fit_on_train_only: bool,
}

fn default_pca_mode() -> PcaMode {
    PcaMode::Variance
}
fn default_variance_target() -> f64 {
    0.8
}

impl Default for PcaConfig {
    fn default() -> Self {
        PcaConfig {
            mode: default_pca_mode(),
            k: None,
            variance_target: default_variance_target(),
            fit_on_train_only: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaMode {
    Components,
    Variance,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Lr,
    Lsvc,
    Ksvc,
    Rfc,
    Abc,
    Lstm,
    Gru,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ModelKind::Lr => "lr",
            ModelKind::Lsvc => "lsvc",
            ModelKind::Ksvc => "ksvc",
            ModelKind::Rfc => "rfc",
            ModelKind::Abc => "abc",
            ModelKind::Lstm => "lstm",
            ModelKind::Gru => "gru",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for ModelKind {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "lr" => ModelKind::Lr,
            "lsvc" => ModelKind::Lsvc,
            "ksvc" => ModelKind::Ksvc,
            "rfc" => ModelKind::Rfc,
            "abc" => ModelKind::Abc,
            "lstm" => ModelKind::Lstm,
            "gru" => ModelKind::Gru,
            other => bail!("unknown model kind {other:?}"),
        })
    }
}

/// Model hyperparameters. Every constant the pipeline depends on lives here
/// with its default spelled out, so the resolved config is self-describing.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub struct ModelConfig {
    pub kind: ModelKind,
    // Linear / logistic / SVM
    #[serde(default = "default_c_reg")]
    pub c_reg: f64,
    #[serde(default = "default_penalty")]
    pub penalty: String,
    /// RBF gamma; `None` means 1 / (F * mean feature variance).
    #[serde(default)]
    pub gamma: Option<f64>,
    // Random forest
    #[serde(default = "default_trees")]
    pub trees: usize,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_criterion")]
    pub criterion: String,
    // AdaBoost
    #[serde(default = "default_estimators")]
    pub estimators: usize,
    #[serde(default = "default_ab_learning_rate")]
    pub ab_learning_rate: f64,
    // Recurrent
    #[serde(default = "default_neurons")]
    pub neurons: usize,
    #[serde(default = "default_optimizer")]
    pub optimizer: String,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Early-stopping patience for final fits (the tuning sweep always
    /// uses 5).
    #[serde(default = "default_patience")]
    pub patience: usize,
    /// "patience" or the literal "two_epoch_nondecrease" stopping rule.
    #[serde(default = "default_stop_rule")]
    pub stop_rule: String,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    /// Fraction of the training rows reserved as the validation set for
    /// early stopping.
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    /// Recurrent weight init scale: uniform +-1/sqrt(fan-in).
    #[serde(default = "default_init")]
    pub init: String,
    // Feature selection, applied before fitting: "half", a count, or "off".
    #[serde(default = "default_off")]
    pub rfe: String,
    /// SelectFromModel threshold: "mean", a number, or "off".
    #[serde(default = "default_off")]
    pub sfm: String,
}

fn default_c_reg() -> f64 {
    1.0
}
fn default_penalty() -> String {
    "l2".into()
}
fn default_trees() -> usize {
    2500
}
fn default_depth() -> usize {
    5
}
fn default_criterion() -> String {
    "gini".into()
}
fn default_estimators() -> usize {
    500
}
fn default_ab_learning_rate() -> f64 {
    0.01
}
fn default_neurons() -> usize {
    10
}
fn default_optimizer() -> String {
    "adam".into()
}
fn default_learning_rate() -> f64 {
    0.01
}
fn default_batch_size() -> usize {
    32
}
fn default_patience() -> usize {
    3
}
fn default_stop_rule() -> String {
    "patience".into()
}
fn default_max_epochs() -> usize {
    100
}
fn default_val_fraction() -> f64 {
    0.2
}
fn default_init() -> String {
    "uniform-1/sqrt(fan_in)".into()
}
fn default_off() -> String {
    "off".into()
}

impl ModelConfig {
    pub fn new(kind: ModelKind) -> Self {
        ModelConfig {
            kind,
            c_reg: default_c_reg(),
            penalty: default_penalty(),
            gamma: None,
            trees: default_trees(),
            depth: default_depth(),
            criterion: default_criterion(),
            estimators: default_estimators(),
            ab_learning_rate: default_ab_learning_rate(),
            neurons: default_neurons(),
            optimizer: default_optimizer(),
            learning_rate: default_learning_rate(),
            batch_size: default_batch_size(),
            patience: default_patience(),
            stop_rule: default_stop_rule(),
            max_epochs: default_max_epochs(),
            val_fraction: default_val_fraction(),
            init: default_init(),
            rfe: default_off(),
            sfm: default_off(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningConfig {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_tuning_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub optimizers: Option<Vec<String>>,
    #[serde(default)]
    pub learning_rates: Option<Vec<f64>>,
    #[serde(default)]
    pub batch_sizes: Option<Vec<usize>>,
    #[serde(default = "default_tuning_epochs")]
    pub max_epochs: usize,
}

fn default_tuning_replicates() -> usize {
    3
}
fn default_tuning_epochs() -> usize {
    100
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig {
            enabled: false,
            replicates: default_tuning_replicates(),
            optimizers: None,
            learning_rates: None,
            batch_sizes: None,
            max_epochs: default_tuning_epochs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Cv,
    Split,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub struct EvaluationConfig {
    #[serde(default = "default_protocol")]
    pub protocol: Protocol,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_std")]
    pub std: String,
}

fn default_protocol() -> Protocol {
    Protocol::Split
}
fn default_k() -> usize {
    10
}
fn default_repeats() -> usize {
    10
}
fn default_replicates() -> usize {
    10
}
fn default_test_fraction() -> f64 {
    0.2
}
fn default_std() -> String {
    "sample".into()
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            protocol: default_protocol(),
            k: default_k(),
            repeats: default_repeats(),
            replicates: default_replicates(),
            test_fraction: default_test_fraction(),
            std: default_std(),
        }
    }
}

impl EvaluationConfig {
    pub fn std_mode(&self) -> Result<StdMode> {
        match self.std.as_str() {
            "sample" => Ok(StdMode::Sample),
            "population" => Ok(StdMode::Population),
            other => bail!("unknown std convention {other:?} (sample or population)"),
        }
    }
}
