//! PCA fitting, component selection by count or explained-variance target,
//! and projection of feature matrices.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::connectivity::{FeatureMatrix, Provenance};
use crate::error::{Error, Result};
use crate::linalg;

/// How many components to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PcaSelect {
    /// Fixed component count.
    Components(usize),
    /// Smallest k whose cumulative explained ratio reaches the target.
    VarianceTarget(f64),
}

/// Fitted PCA basis: feature means, orthonormal component rows, and the
/// per-component variances of the training scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    /// k x F, rows orthonormal.
    pub components: Array2<f64>,
    pub explained_variance: Array1<f64>,
    pub explained_ratio: Array1<f64>,
    pub total_variance: f64,
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.nrows()
    }

    pub fn input_width(&self) -> usize {
        self.components.ncols()
    }
}

/// Mean-centered PCA. The smaller of the two Gram matrices is decomposed:
/// the F x F covariance when features are few, the N x N subject Gram matrix
/// otherwise (right singular vectors recovered by back-projection), so wide
/// RSFC matrices never require an F x F eigenproblem.
///
/// Component signs are deterministic: the largest-magnitude loading of each
/// component is made positive.
pub fn fit_pca(fm: &FeatureMatrix, select: PcaSelect) -> Result<PcaModel> {
    let n = fm.n();
    let f = fm.f();
    if n < 2 {
        return Err(Error::invalid("PCA needs at least 2 rows"));
    }
    let rank_cap = (n - 1).min(f);
    if let PcaSelect::Components(k) = select {
        if k == 0 || k > rank_cap {
            return Err(Error::invalid(format!(
                "component count {k} outside 1..={rank_cap} (min(N-1, F))"
            )));
        }
    }
    if let PcaSelect::VarianceTarget(t) = select {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::invalid("variance target must lie in (0, 1]"));
        }
    }

    let mut centered = fm.values.clone();
    let mut mean = Array1::<f64>::zeros(f);
    for (c, mut col) in centered.columns_mut().into_iter().enumerate() {
        let m = col.sum() / n as f64;
        mean[c] = m;
        col.mapv_inplace(|v| v - m);
    }
    let denom = (n - 1) as f64;
    let total_variance: f64 = centered.iter().map(|v| v * v).sum::<f64>() / denom;
    if total_variance <= 1e-300 {
        return Err(Error::invalid(
            "degenerate input: all rows identical, nothing to decompose",
        ));
    }

    // Eigenvalues and component rows, sorted by decreasing variance.
    let (eigvals, mut components) = if f <= n {
        let cov = centered.t().dot(&centered) / denom;
        let eig = linalg::sym_eigen(&cov);
        let comp = eig.vectors.t().to_owned();
        (eig.values, comp)
    } else {
        let gram = centered.dot(&centered.t()) / denom;
        let eig = linalg::sym_eigen(&gram);
        let mut comp = Array2::<f64>::zeros((n, f));
        for (i, lambda) in eig.values.iter().enumerate() {
            if *lambda <= 0.0 {
                continue;
            }
            let u = eig.vectors.column(i);
            let scale = 1.0 / (denom * lambda).sqrt();
            let v = centered.t().dot(&u) * scale;
            comp.row_mut(i).assign(&v);
        }
        (eig.values, comp)
    };

    let eps = 1e-12 * eigvals[0].max(1.0);
    let effective_rank = eigvals.iter().take(rank_cap).filter(|&&l| l > eps).count();

    let k = match select {
        PcaSelect::Components(k) => {
            if k > effective_rank {
                return Err(Error::invalid(format!(
                    "component count {k} exceeds the numeric rank {effective_rank}"
                )));
            }
            k
        }
        PcaSelect::VarianceTarget(target) => {
            let mut acc = 0.0;
            let mut k = effective_rank;
            for (i, lambda) in eigvals.iter().take(effective_rank).enumerate() {
                acc += lambda / total_variance;
                if acc >= target - 1e-12 {
                    k = i + 1;
                    break;
                }
            }
            k
        }
    };

    for mut row in components.rows_mut().into_iter().take(k) {
        let mut lead = 0usize;
        let mut best = 0.0f64;
        for (j, v) in row.iter().enumerate() {
            if v.abs() > best {
                best = v.abs();
                lead = j;
            }
        }
        if row[lead] < 0.0 {
            row.mapv_inplace(|v| -v);
        }
    }

    let explained_variance = Array1::from_iter(eigvals.iter().take(k).map(|&l| l.max(0.0)));
    let explained_ratio = &explained_variance / total_variance;
    let components = components.slice(ndarray::s![..k, ..]).to_owned();
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        explained_ratio,
        total_variance,
    })
}

/// Project rows onto the fitted basis; labels carry through and provenance
/// becomes `pca(k)`.
pub fn transform(model: &PcaModel, fm: &FeatureMatrix) -> Result<FeatureMatrix> {
    if fm.f() != model.input_width() {
        return Err(Error::DimensionMismatch(format!(
            "feature width {} does not match PCA input width {}",
            fm.f(),
            model.input_width()
        )));
    }
    let mut centered = fm.values.clone();
    for (c, mut col) in centered.columns_mut().into_iter().enumerate() {
        let m = model.mean[c];
        col.mapv_inplace(|v| v - m);
    }
    let scores = centered.dot(&model.components.t());
    let names = (1..=model.k()).map(|i| format!("pc{i}")).collect();
    FeatureMatrix::new(scores, fm.labels.clone(), names, Provenance::Pca(model.k()))
}

/// Map scores back to the original feature space (training-mean restored).
pub fn inverse_transform(model: &PcaModel, scores: &Array2<f64>) -> Result<Array2<f64>> {
    if scores.ncols() != model.k() {
        return Err(Error::DimensionMismatch(format!(
            "score width {} does not match k = {}",
            scores.ncols(),
            model.k()
        )));
    }
    let mut out = scores.dot(&model.components);
    for (c, mut col) in out.columns_mut().into_iter().enumerate() {
        let m = model.mean[c];
        col.mapv_inplace(|v| v + m);
    }
    Ok(out)
}

fn push_row(out: &mut String, row: impl IntoIterator<Item = f64>) {
    let fields: Vec<String> = row.into_iter().map(|v| format!("{v}")).collect();
    out.push_str(&fields.join(","));
    out.push('\n');
}

/// Serialize the model as labeled delimited-text blocks (mean, components,
/// variances).
pub fn save_model(model: &PcaModel, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("pca {} {}\n", model.k(), model.input_width()));
    out.push_str("mean\n");
    push_row(&mut out, model.mean.iter().copied());
    out.push_str("components\n");
    for row in model.components.rows() {
        push_row(&mut out, row.iter().copied());
    }
    out.push_str("explained_variance\n");
    push_row(&mut out, model.explained_variance.iter().copied());
    out.push_str("explained_ratio\n");
    push_row(&mut out, model.explained_ratio.iter().copied());
    out.push_str("total_variance\n");
    push_row(&mut out, [model.total_variance]);
    std::fs::write(path, out).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Read a model written by [`save_model`].
pub fn load_model(path: &Path) -> Result<PcaModel> {
    let path_str = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path_str.clone(),
        source: e,
    })?;
    let parse_err = |reason: &str| Error::Parse {
        path: path_str.clone(),
        reason: reason.into(),
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err("empty model file"))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some("pca") {
        return Err(parse_err("missing pca header"));
    }
    let k: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| parse_err("bad k"))?;
    let f: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| parse_err("bad input width"))?;

    let expect = |tag: &str, lines: &mut std::str::Lines| -> Result<()> {
        match lines.next() {
            Some(l) if l.trim() == tag => Ok(()),
            _ => Err(parse_err(&format!("expected section {tag}"))),
        }
    };
    let parse_row = |line: Option<&str>| -> Result<Vec<f64>> {
        let line = line.ok_or_else(|| parse_err("unexpected end of file"))?;
        line.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| parse_err(&e.to_string()))
            })
            .collect()
    };

    expect("mean", &mut lines)?;
    let mean = parse_row(lines.next())?;
    if mean.len() != f {
        return Err(parse_err("mean width mismatch"));
    }
    expect("components", &mut lines)?;
    let mut comp = Vec::with_capacity(k * f);
    for _ in 0..k {
        let row = parse_row(lines.next())?;
        if row.len() != f {
            return Err(parse_err("component width mismatch"));
        }
        comp.extend(row);
    }
    expect("explained_variance", &mut lines)?;
    let ev = parse_row(lines.next())?;
    expect("explained_ratio", &mut lines)?;
    let er = parse_row(lines.next())?;
    expect("total_variance", &mut lines)?;
    let tv = parse_row(lines.next())?;
    if ev.len() != k || er.len() != k || tv.len() != 1 {
        return Err(parse_err("variance block size mismatch"));
    }

    Ok(PcaModel {
        mean: Array1::from_vec(mean),
        components: Array2::from_shape_vec((k, f), comp).map_err(|e| parse_err(&e.to_string()))?,
        explained_variance: Array1::from_vec(ev),
        explained_ratio: Array1::from_vec(er),
        total_variance: tv[0],
    })
}
