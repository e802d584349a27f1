//! Resting-state functional connectivity: Pearson, Spearman, and
//! shrinkage-partial correlation matrices plus their upper-triangle feature
//! vectors.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::dataset::Cohort;
use crate::error::{Error, Result};
use crate::exec;
use crate::linalg;

/// Connectivity estimator family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Pearson,
    Spearman,
    Partial,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Pearson => write!(f, "pearson"),
            Method::Spearman => write!(f, "spearman"),
            Method::Partial => write!(f, "partial"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pearson" => Ok(Method::Pearson),
            "spearman" => Ok(Method::Spearman),
            "partial" => Ok(Method::Partial),
            other => Err(Error::invalid(format!(
                "unknown connectivity method {other:?} (expected pearson, spearman, or partial)"
            ))),
        }
    }
}

/// Symmetric R x R connectivity matrix for one subject.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConnectivityMatrix {
    pub values: Array2<f64>,
    pub method: Method,
    pub subject_id: String,
}

impl ConnectivityMatrix {
    pub fn r(&self) -> usize {
        self.values.nrows()
    }

    pub fn with_subject(mut self, id: impl Into<String>) -> Self {
        self.subject_id = id.into();
        self
    }
}

/// Convex shrinkage weight toward the identity target on the
/// correlation-standardized covariance.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ShrinkageConfig {
    pub lambda: f64,
}

impl Default for ShrinkageConfig {
    fn default() -> Self {
        ShrinkageConfig { lambda: 0.1 }
    }
}

impl ShrinkageConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::invalid("shrinkage lambda must lie in [0, 1]"));
        }
        Ok(ShrinkageConfig { lambda })
    }
}

fn validate_series(series: &Array2<f64>) -> Result<()> {
    let (t, r) = series.dim();
    if t < 3 || r < 2 {
        return Err(Error::invalid(format!(
            "series must be at least 3x2, got {t}x{r}"
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("series contains non-finite values"));
    }
    Ok(())
}

/// Column-standardized correlation matrix (product-moment, (T-1) denominator).
/// Diagonal is exactly 1; off-diagonals clamped into [-1, 1].
fn correlation_matrix(series: &Array2<f64>) -> Result<Array2<f64>> {
    let (t, r) = series.dim();
    let mut centered = series.clone();
    let mut inv_norm = vec![0.0f64; r];
    for (c, mut col) in centered.columns_mut().into_iter().enumerate() {
        let mean = col.sum() / t as f64;
        col.mapv_inplace(|v| v - mean);
        let ss: f64 = col.iter().map(|v| v * v).sum();
        if ss <= 0.0 {
            return Err(Error::invalid(format!(
                "column {c} has zero sample variance"
            )));
        }
        inv_norm[c] = 1.0 / ss.sqrt();
    }
    let mut out = Array2::<f64>::zeros((r, r));
    for i in 0..r {
        out[[i, i]] = 1.0;
        let ci = centered.column(i);
        for j in (i + 1)..r {
            let dot: f64 = ci
                .iter()
                .zip(centered.column(j).iter())
                .map(|(a, b)| a * b)
                .sum();
            let v = (dot * inv_norm[i] * inv_norm[j]).clamp(-1.0, 1.0);
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    Ok(out)
}

/// Product-moment correlation of each ROI pair.
pub fn pearson_matrix(series: &Array2<f64>) -> Result<ConnectivityMatrix> {
    validate_series(series)?;
    Ok(ConnectivityMatrix {
        values: correlation_matrix(series)?,
        method: Method::Pearson,
        subject_id: String::new(),
    })
}

/// Column-wise average ranks, ties mapped to the mean of their rank span
/// (1-based ranks).
pub fn rank_transform(series: &Array2<f64>) -> Array2<f64> {
    let (t, r) = series.dim();
    let mut out = Array2::<f64>::zeros((t, r));
    let mut order: Vec<usize> = Vec::with_capacity(t);
    for c in 0..r {
        let col = series.column(c);
        order.clear();
        order.extend(0..t);
        order.sort_by(|&a, &b| col[a].partial_cmp(&col[b]).unwrap());
        let mut i = 0;
        while i < t {
            let mut j = i;
            while j + 1 < t && col[order[j + 1]] == col[order[i]] {
                j += 1;
            }
            // Average of 1-based ranks i+1 ..= j+1.
            let rank = (i + j) as f64 / 2.0 + 1.0;
            for &row in &order[i..=j] {
                out[[row, c]] = rank;
            }
            i = j + 1;
        }
    }
    out
}

/// Spearman rank correlation: Pearson applied to the rank transform.
pub fn spearman_matrix(series: &Array2<f64>) -> Result<ConnectivityMatrix> {
    validate_series(series)?;
    let ranks = rank_transform(series);
    let values = correlation_matrix(&ranks)?;
    Ok(ConnectivityMatrix {
        values,
        method: Method::Spearman,
        subject_id: String::new(),
    })
}

/// Partial correlation from the shrinkage precision matrix: the sample
/// correlation matrix C is shrunk to (1-lambda) C + lambda I, inverted, and
/// entry (i, j) becomes -P_ij / sqrt(P_ii P_jj).
pub fn partial_matrix(series: &Array2<f64>, cfg: &ShrinkageConfig) -> Result<ConnectivityMatrix> {
    validate_series(series)?;
    if !(0.0..=1.0).contains(&cfg.lambda) {
        return Err(Error::invalid("shrinkage lambda must lie in [0, 1]"));
    }
    let corr = correlation_matrix(series)?;
    let r = corr.nrows();
    let mut shrunk = corr * (1.0 - cfg.lambda);
    for i in 0..r {
        shrunk[[i, i]] += cfg.lambda;
    }
    let precision = linalg::spd_inverse(&shrunk).ok_or(Error::NotPositiveDefinite {
        lambda: cfg.lambda,
        suggested: if cfg.lambda < 0.1 {
            0.1
        } else {
            (cfg.lambda * 2.0).min(1.0)
        },
    })?;
    let mut out = Array2::<f64>::zeros((r, r));
    for i in 0..r {
        out[[i, i]] = 1.0;
        for j in (i + 1)..r {
            let v = (-precision[[i, j]] / (precision[[i, i]] * precision[[j, j]]).sqrt())
                .clamp(-1.0, 1.0);
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    Ok(ConnectivityMatrix {
        values: out,
        method: Method::Partial,
        subject_id: String::new(),
    })
}

/// Row-major strict upper triangle (i < j), length R(R-1)/2. The diagonal is
/// excluded.
pub fn vectorize_upper(cm: &ConnectivityMatrix) -> Array1<f64> {
    let r = cm.r();
    let mut out = Array1::<f64>::zeros(r * (r - 1) / 2);
    let mut k = 0;
    for i in 0..r {
        for j in (i + 1)..r {
            out[k] = cm.values[[i, j]];
            k += 1;
        }
    }
    out
}

/// Inverse of [`vectorize_upper`]: rebuilds the symmetric matrix with a unit
/// diagonal.
pub fn unvectorize_upper(v: &Array1<f64>, r: usize) -> Result<Array2<f64>> {
    if v.len() != r * (r - 1) / 2 {
        return Err(Error::DimensionMismatch(format!(
            "vector length {} does not match r = {r}",
            v.len()
        )));
    }
    let mut out = Array2::<f64>::eye(r);
    let mut k = 0;
    for i in 0..r {
        for j in (i + 1)..r {
            out[[i, j]] = v[k];
            out[[j, i]] = v[k];
            k += 1;
        }
    }
    Ok(out)
}

/// Where a feature matrix came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    RawRsfc(Method),
    Pca(usize),
    /// Loaded from a file without embedded provenance.
    External,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::RawRsfc(m) => write!(f, "raw-rsfc({m})"),
            Provenance::Pca(k) => write!(f, "pca({k})"),
            Provenance::External => write!(f, "external"),
        }
    }
}

/// N x F design matrix with an aligned binary label vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub values: Array2<f64>,
    pub labels: Vec<u8>,
    pub feature_names: Vec<String>,
    pub provenance: Provenance,
}

impl FeatureMatrix {
    pub fn new(
        values: Array2<f64>,
        labels: Vec<u8>,
        feature_names: Vec<String>,
        provenance: Provenance,
    ) -> Result<Self> {
        if values.nrows() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} rows but {} labels",
                values.nrows(),
                labels.len()
            )));
        }
        if values.ncols() != feature_names.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} columns but {} feature names",
                values.ncols(),
                feature_names.len()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::invalid("labels must be 0 or 1"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature matrix contains non-finite values"));
        }
        Ok(FeatureMatrix {
            values,
            labels,
            feature_names,
            provenance,
        })
    }

    /// Number of subjects (rows).
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Number of features (columns).
    pub fn f(&self) -> usize {
        self.values.ncols()
    }

    /// Row subset in the given index order.
    pub fn subset_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let values =
            Array2::from_shape_fn((rows.len(), self.f()), |(i, j)| self.values[[rows[i], j]]);
        let labels = rows.iter().map(|&i| self.labels[i]).collect();
        FeatureMatrix {
            values,
            labels,
            feature_names: self.feature_names.clone(),
            provenance: self.provenance.clone(),
        }
    }

    /// Column subset in the given index order.
    pub fn subset_columns(&self, cols: &[usize]) -> FeatureMatrix {
        let values =
            Array2::from_shape_fn((self.n(), cols.len()), |(i, j)| self.values[[i, cols[j]]]);
        let feature_names = cols
            .iter()
            .map(|&c| self.feature_names[c].clone())
            .collect();
        FeatureMatrix {
            values,
            labels: self.labels.clone(),
            feature_names,
            provenance: self.provenance.clone(),
        }
    }

    /// Delimited text with a header of feature names and a trailing `label`
    /// column.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&self.feature_names.join(","));
        out.push_str(",label\n");
        for (row, label) in self.values.rows().into_iter().zip(&self.labels) {
            for v in row.iter() {
                out.push_str(&format!("{v},"));
            }
            out.push_str(&format!("{label}\n"));
        }
        std::fs::write(path, out).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    /// Read a feature file written by [`FeatureMatrix::write_csv`].
    pub fn read_csv(path: &Path) -> Result<FeatureMatrix> {
        let path_str = path.display().to_string();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| Error::Parse {
                path: path_str.clone(),
                reason: e.to_string(),
            })?;
        let headers = reader
            .headers()
            .map_err(|e| Error::Parse {
                path: path_str.clone(),
                reason: e.to_string(),
            })?
            .clone();
        if headers.len() < 2 || &headers[headers.len() - 1] != "label" {
            return Err(Error::Parse {
                path: path_str,
                reason: "feature file must end with a label column".into(),
            });
        }
        let f = headers.len() - 1;
        let feature_names: Vec<String> = headers.iter().take(f).map(str::to_string).collect();
        let mut rows: Vec<f64> = Vec::new();
        let mut labels: Vec<u8> = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::Parse {
                path: path_str.clone(),
                reason: e.to_string(),
            })?;
            for field in record.iter().take(f) {
                rows.push(field.trim().parse::<f64>().map_err(|e| Error::Parse {
                    path: path_str.clone(),
                    reason: format!("bad numeric field: {e}"),
                })?);
            }
            labels.push(record[f].trim().parse::<u8>().map_err(|e| Error::Parse {
                path: path_str.clone(),
                reason: format!("bad label field: {e}"),
            })?);
        }
        let n = labels.len();
        let values = Array2::from_shape_vec((n, f), rows).map_err(|e| Error::Parse {
            path: path_str,
            reason: e.to_string(),
        })?;
        let provenance = if feature_names.iter().all(|n| n.starts_with("pc")) {
            Provenance::Pca(f)
        } else {
            Provenance::External
        };
        FeatureMatrix::new(values, labels, feature_names, provenance)
    }
}

/// ROI-pair feature names in the same row-major order as
/// [`vectorize_upper`].
pub fn roi_pair_names(r: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(r * (r - 1) / 2);
    for i in 0..r {
        for j in (i + 1)..r {
            names.push(format!("r{i}_r{j}"));
        }
    }
    names
}

/// Per-subject connectivity vectorized into the cohort feature matrix. Rows
/// follow cohort order; subjects fan out in parallel with results written to
/// pre-assigned rows.
pub fn build_feature_matrix(
    cohort: &Cohort,
    method: Method,
    cfg: &ShrinkageConfig,
) -> Result<FeatureMatrix> {
    let subjects = cohort.subjects();
    let rows: Vec<Result<Array1<f64>>> = exec::map(subjects.len(), |i| {
        let s = &subjects[i];
        let cm = match method {
            Method::Pearson => pearson_matrix(&s.series),
            Method::Spearman => spearman_matrix(&s.series),
            Method::Partial => partial_matrix(&s.series, cfg),
        }
        .map_err(|e| Error::Subject {
            subject: s.id.clone(),
            reason: e.to_string(),
        })?;
        Ok(vectorize_upper(&cm))
    });

    let r = cohort.r();
    let f = r * (r - 1) / 2;
    let mut values = Array2::<f64>::zeros((subjects.len(), f));
    for (i, row) in rows.into_iter().enumerate() {
        let row = row?;
        values.row_mut(i).assign(&row);
    }
    FeatureMatrix::new(
        values,
        cohort.labels(),
        roi_pair_names(r),
        Provenance::RawRsfc(method),
    )
}
