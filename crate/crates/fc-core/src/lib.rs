//! Functional-connectivity classification toolkit.
//!
//! The crate covers the full path from labeled ROI time-series cohorts to
//! aggregated classification reports:
//!
//! * [`dataset`] — loading, validation, synthesis, and stratified splitting
//!   of subject cohorts,
//! * [`connectivity`] — Pearson / Spearman / shrinkage-partial connectivity
//!   matrices and their upper-triangle feature vectors,
//! * [`dimred`] — PCA fitting, component selection, and projection,
//! * [`classical`] — logistic regression, linear and RBF-kernel SVMs,
//!   random forests, AdaBoost, and the RFE / SelectFromModel wrappers,
//! * [`recurrent`] — single-layer LSTM and GRU cells with manual
//!   backpropagation through time and Adam / Nadam / Adagrad optimizers,
//! * [`evaluation`] — confusion metrics, ROC AUC, stratified k-fold,
//!   repeated cross-validation and replicated split protocols,
//! * [`tuning`] — exhaustive optimizer × learning-rate × batch-size grid
//!   search with replicate averaging.
//!
//! Data-parallel inner loops (per-subject connectivity, fold × repeat
//! evaluation, per-tree fitting, grid cells) run on rayon when the default
//! `parallel` feature is enabled and fall back to equivalent sequential
//! loops otherwise; results are identical either way.

pub mod classical;
pub mod connectivity;
pub mod dataset;
pub mod dimred;
pub mod error;
pub mod evaluation;
pub mod exec;
pub(crate) mod linalg;
pub mod recurrent;
pub mod tuning;

pub use error::{Error, Result};
