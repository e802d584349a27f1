//! Labeled ROI time-series cohorts: loading, validation, synthesis, and
//! stratified splitting.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One subject's ROI time-series matrix (T rows of time points, R columns of
/// ROIs) plus a binary diagnosis label (1 = positive class, 0 = control).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    pub series: Array2<f64>,
    pub label: u8,
}

impl SubjectRecord {
    pub fn new(id: impl Into<String>, series: Array2<f64>, label: u8) -> Result<Self> {
        let id = id.into();
        if label > 1 {
            return Err(Error::Subject {
                subject: id,
                reason: format!("label must be 0 or 1, got {label}"),
            });
        }
        let (t, r) = series.dim();
        if t < 3 || r < 2 {
            return Err(Error::Subject {
                subject: id,
                reason: format!("series must be at least 3x2, got {t}x{r}"),
            });
        }
        if series.iter().any(|v| !v.is_finite()) {
            return Err(Error::Subject {
                subject: id,
                reason: "series contains non-finite values".into(),
            });
        }
        for (c, col) in series.columns().into_iter().enumerate() {
            let mean = col.sum() / t as f64;
            if col.iter().all(|v| (v - mean).abs() < 1e-300) {
                return Err(Error::ConstantColumn {
                    subject: id,
                    column: c,
                });
            }
        }
        Ok(SubjectRecord { id, series, label })
    }

    /// Time points.
    pub fn t(&self) -> usize {
        self.series.nrows()
    }

    /// ROI count.
    pub fn r(&self) -> usize {
        self.series.ncols()
    }
}

/// An ordered list of subjects sharing identical T and R.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cohort {
    subjects: Vec<SubjectRecord>,
}

impl Cohort {
    /// Validates the cohort invariants: at least two subjects, unique ids,
    /// matching dimensions, and both labels present.
    pub fn new(mut subjects: Vec<SubjectRecord>) -> Result<Self> {
        if subjects.len() < 2 {
            return Err(Error::invalid("a cohort needs at least 2 subjects"));
        }
        subjects.sort_by(|a, b| a.id.cmp(&b.id));
        let mut seen = HashSet::new();
        for s in &subjects {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::invalid(format!("duplicate subject id {}", s.id)));
            }
        }
        let (t, r) = (subjects[0].t(), subjects[0].r());
        for s in &subjects[1..] {
            if s.t() != t || s.r() != r {
                return Err(Error::DimensionMismatch(format!(
                    "subject {} is {}x{}, expected {}x{}",
                    s.id,
                    s.t(),
                    s.r(),
                    t,
                    r
                )));
            }
        }
        let positives = subjects.iter().filter(|s| s.label == 1).count();
        if positives == 0 || positives == subjects.len() {
            return Err(Error::invalid("both labels must be present in a cohort"));
        }
        Ok(Cohort { subjects })
    }

    pub fn subjects(&self) -> &[SubjectRecord] {
        &self.subjects
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn t(&self) -> usize {
        self.subjects[0].t()
    }

    pub fn r(&self) -> usize {
        self.subjects[0].r()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.subjects.iter().map(|s| s.label).collect()
    }

    /// (positives, controls)
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.subjects.iter().filter(|s| s.label == 1).count();
        (pos, self.subjects.len() - pos)
    }

    pub fn summary(&self) -> CohortSummary {
        let (pos, neg) = self.class_counts();
        CohortSummary {
            subjects: self.len(),
            time_points: self.t(),
            rois: self.r(),
            positives: pos,
            controls: neg,
        }
    }
}

/// Printable cohort overview.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortSummary {
    pub subjects: usize,
    pub time_points: usize,
    pub rois: usize,
    pub positives: usize,
    pub controls: usize,
}

impl fmt::Display for CohortSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "subjects:    {}", self.subjects)?;
        writeln!(f, "time points: {}", self.time_points)?;
        writeln!(f, "rois:        {}", self.rois)?;
        writeln!(f, "positives:   {}", self.positives)?;
        write!(f, "controls:    {}", self.controls)
    }
}

/// Disjoint train/validation/test index lists into a cohort.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub seed: u64,
}

fn series_delimiter(path: &Path) -> u8 {
    match path.extension().and_then(|e| e.to_str()) {
        Some("tsv") => b'\t',
        _ => b',',
    }
}

fn read_series_file(path: &Path, delimiter: Option<u8>) -> Result<Array2<f64>> {
    let delim = delimiter.unwrap_or_else(|| series_delimiter(path));
    let path_str = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(delim)
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: path_str.clone(),
            reason: e.to_string(),
        })?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            path: path_str.clone(),
            reason: e.to_string(),
        })?;
        let row: std::result::Result<Vec<f64>, _> = record
            .iter()
            .map(|field| field.trim().parse::<f64>())
            .collect();
        let row = row.map_err(|e| Error::Parse {
            path: path_str.clone(),
            reason: format!("bad numeric field: {e}"),
        })?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: path_str,
            reason: "empty series file".into(),
        });
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Parse {
            path: path_str,
            reason: "ragged rows in series file".into(),
        });
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let nrows = flat.len() / cols;
    Array2::from_shape_vec((nrows, cols), flat).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn read_labels(path: &Path) -> Result<BTreeMap<String, u8>> {
    let path_str = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: path_str.clone(),
            reason: e.to_string(),
        })?;
    let mut labels = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            path: path_str.clone(),
            reason: e.to_string(),
        })?;
        if record.len() < 2 {
            return Err(Error::Parse {
                path: path_str,
                reason: "labels file needs id,label columns".into(),
            });
        }
        let id = record[0].trim().to_string();
        let label: u8 = record[1].trim().parse().map_err(|_| Error::Parse {
            path: path_str.clone(),
            reason: format!("label for {id} must be 0 or 1, got {:?}", &record[1]),
        })?;
        labels.insert(id, label);
    }
    Ok(labels)
}

/// Load every `<id>.csv` / `<id>.tsv` matrix under `series_dir` and attach
/// labels from `labels_file` (header `id,label`). Subjects come back sorted
/// by id, so loading order never depends on directory iteration order.
pub fn load_cohort(series_dir: &Path, labels_file: &Path) -> Result<Cohort> {
    load_cohort_with(series_dir, labels_file, None)
}

/// [`load_cohort`] with an explicit field delimiter (default: by extension,
/// tab for `.tsv`, comma otherwise).
pub fn load_cohort_with(
    series_dir: &Path,
    labels_file: &Path,
    delimiter: Option<u8>,
) -> Result<Cohort> {
    let labels = read_labels(labels_file)?;

    let mut paths: Vec<_> = std::fs::read_dir(series_dir)
        .map_err(|e| Error::Io {
            path: series_dir.display().to_string(),
            source: e,
        })?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("csv") | Some("tsv")
            )
        })
        .collect();
    paths.sort();

    if paths.is_empty() {
        return Err(Error::invalid(format!(
            "no .csv or .tsv series files in {}",
            series_dir.display()
        )));
    }

    let mut subjects = Vec::with_capacity(paths.len());
    for path in &paths {
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let label = *labels
            .get(&id)
            .ok_or_else(|| Error::MissingLabel(id.clone()))?;
        let series = read_series_file(path, delimiter)?;
        subjects.push(SubjectRecord::new(id, series, label)?);
    }
    Cohort::new(subjects)
}

/// Write a cohort back to `<id>.csv` files plus a `labels.csv`, using the
/// shortest decimal encoding that round-trips f64 exactly.
pub fn save_cohort(cohort: &Cohort, series_dir: &Path, labels_file: &Path) -> Result<()> {
    std::fs::create_dir_all(series_dir).map_err(|e| Error::Io {
        path: series_dir.display().to_string(),
        source: e,
    })?;
    for s in cohort.subjects() {
        let path = series_dir.join(format!("{}.csv", s.id));
        let mut out = String::new();
        for row in s.series.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        std::fs::write(&path, out).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
    }
    let mut labels = String::from("id,label\n");
    for s in cohort.subjects() {
        labels.push_str(&format!("{},{}\n", s.id, s.label));
    }
    std::fs::write(labels_file, labels).map_err(|e| Error::Io {
        path: labels_file.display().to_string(),
        source: e,
    })
}

/// Synthesize a balanced two-class cohort. Class 0 draws every ROI i.i.d.
/// standard normal; class 1 adds `effect`-scaled correlation on a fixed set
/// of ROI pairs, so connectivity features carry the class signal. Equal
/// seeds produce bit-identical cohorts.
pub fn generate_synthetic_cohort(
    n_per_class: usize,
    t: usize,
    r: usize,
    effect: f64,
    seed: u64,
) -> Result<Cohort> {
    if n_per_class < 1 {
        return Err(Error::invalid("n_per_class must be at least 1"));
    }
    if t < 3 || r < 2 {
        return Err(Error::invalid(format!(
            "series must be at least 3x2, got {t}x{r}"
        )));
    }
    if !(0.0..=1.0).contains(&effect) {
        return Err(Error::invalid("effect must lie in [0, 1]"));
    }

    // Class-1 covariance perturbation, scaled by `effect`:
    //  * a shared factor loads every even ROI (beta), correlating all even
    //    pairs with each other,
    //  * each odd ROI mixes toward its even partner (rho).
    // Together the signal spans on the order of r^2/8 connectivity
    // features; at effect 0 both transforms vanish.
    let n_pairs = (r / 2).max(1);
    let rho = 0.9 * effect;
    let mix = (1.0 - rho * rho).sqrt();
    let beta = 0.6 * effect;
    let keep = (1.0 - beta * beta).sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = n_per_class.to_string().len().max(3);
    let mut subjects = Vec::with_capacity(2 * n_per_class);
    for class in 0..2u8 {
        for n in 0..n_per_class {
            let mut series =
                Array2::from_shape_fn((t, r), |_| rng.sample::<f64, _>(StandardNormal));
            if class == 1 {
                let shared: Vec<f64> = (0..t)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                for p in 0..n_pairs {
                    let (a, b) = (2 * p, 2 * p + 1);
                    if a >= r {
                        break;
                    }
                    for row in 0..t {
                        series[[row, a]] = keep * series[[row, a]] + beta * shared[row];
                    }
                    if b >= r {
                        continue;
                    }
                    for row in 0..t {
                        series[[row, b]] = rho * series[[row, a]] + mix * series[[row, b]];
                    }
                }
            }
            let id = format!("c{class}_{n:0width$}");
            subjects.push(SubjectRecord::new(id, series, class)?);
        }
    }
    Cohort::new(subjects)
}

/// Largest-remainder apportionment of `n` items over `fractions`; exact when
/// `n * fraction` is integral, otherwise within one of the exact target.
fn apportion(n: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let targets: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts = [0usize; 3];
    let mut assigned = 0;
    for (i, t) in targets.iter().enumerate() {
        counts[i] = t.floor() as usize;
        assigned += counts[i];
    }
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = targets[a] - targets[a].floor();
        let fb = targets[b] - targets[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(n - assigned) {
        counts[i] += 1;
    }
    counts
}

/// Per-class shuffled split into train/val/test with the given fractions
/// (val may be zero). Class proportions are preserved within one subject per
/// partition.
pub fn split_stratified(
    cohort: &Cohort,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<SplitPlan> {
    split_stratified_labels(&cohort.labels(), fractions, seed)
}

/// [`split_stratified`] on a bare label vector; used wherever rows are
/// already feature-matrix indices rather than cohort subjects.
pub fn split_stratified_labels(
    labels: &[u8],
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<SplitPlan> {
    let fr = [fractions.0, fractions.1, fractions.2];
    if fr[0] <= 0.0 || fr[2] <= 0.0 || fr[1] < 0.0 {
        return Err(Error::invalid(
            "train and test fractions must be positive (val may be 0)",
        ));
    }
    if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("split fractions must sum to 1"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for class in [0u8, 1u8] {
        let mut members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let counts = apportion(members.len(), &fr);
        for (p, &count) in counts.iter().enumerate() {
            if fr[p] > 0.0 && count == 0 {
                return Err(Error::invalid(format!(
                    "class {class} has too few subjects ({}) to cover every requested partition",
                    members.len()
                )));
            }
        }
        let mut cursor = 0;
        for (p, &count) in counts.iter().enumerate() {
            parts[p].extend_from_slice(&members[cursor..cursor + count]);
            cursor += count;
        }
    }
    let [mut train_idx, mut val_idx, mut test_idx] = parts;
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok(SplitPlan {
        train_idx,
        val_idx,
        test_idx,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_series(t: usize, r: usize, salt: f64) -> Array2<f64> {
        Array2::from_shape_fn((t, r), |(i, j)| {
            (i as f64 + 1.0) * (j as f64 + 1.0) + salt * i as f64
        })
    }

    #[test]
    fn subject_rejects_constant_column() {
        let mut series = tiny_series(4, 3, 0.1);
        for i in 0..4 {
            series[[i, 1]] = 2.5;
        }
        let err = SubjectRecord::new("a", series, 1).unwrap_err();
        match err {
            Error::ConstantColumn { subject, column } => {
                assert_eq!(subject, "a");
                assert_eq!(column, 1);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn subject_rejects_non_finite() {
        let mut series = tiny_series(4, 3, 0.1);
        series[[0, 0]] = f64::NAN;
        assert!(SubjectRecord::new("a", series, 0).is_err());
    }

    #[test]
    fn cohort_requires_both_labels_and_unique_ids() {
        let a = SubjectRecord::new("a", tiny_series(4, 3, 0.1), 1).unwrap();
        let b = SubjectRecord::new("b", tiny_series(4, 3, 0.2), 1).unwrap();
        assert!(Cohort::new(vec![a.clone(), b]).is_err());
        let a2 = SubjectRecord::new("a", tiny_series(4, 3, 0.3), 0).unwrap();
        assert!(Cohort::new(vec![a, a2]).is_err());
    }

    #[test]
    fn load_round_trip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let series_dir = dir.path().join("series");
        let labels = dir.path().join("labels.csv");
        let cohort = generate_synthetic_cohort(3, 5, 4, 0.5, 11).unwrap();
        save_cohort(&cohort, &series_dir, &labels).unwrap();
        let reloaded = load_cohort(&series_dir, &labels).unwrap();
        assert_eq!(cohort.len(), reloaded.len());
        for (a, b) in cohort.subjects().iter().zip(reloaded.subjects()) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.label, b.label);
            assert_eq!(a.series, b.series);
        }
    }

    #[test]
    fn load_minimal_cohort() {
        let dir = tempfile::tempdir().unwrap();
        let series_dir = dir.path().join("series");
        std::fs::create_dir_all(&series_dir).unwrap();
        std::fs::write(series_dir.join("a.csv"), "1,2,3\n2,1,4\n3,5,0\n4,2,9\n").unwrap();
        std::fs::write(series_dir.join("b.csv"), "0,1,2\n4,3,1\n2,8,5\n1,0,7\n").unwrap();
        std::fs::write(dir.path().join("labels.csv"), "id,label\na,1\nb,0\n").unwrap();
        let cohort = load_cohort(&series_dir, &dir.path().join("labels.csv")).unwrap();
        assert_eq!(cohort.len(), 2);
        assert_eq!(cohort.t(), 4);
        assert_eq!(cohort.r(), 3);
    }

    #[test]
    fn load_reports_missing_label() {
        let dir = tempfile::tempdir().unwrap();
        let series_dir = dir.path().join("series");
        std::fs::create_dir_all(&series_dir).unwrap();
        std::fs::write(series_dir.join("a.csv"), "1,2\n2,1\n3,5\n").unwrap();
        std::fs::write(series_dir.join("b.csv"), "0,1\n4,3\n2,8\n").unwrap();
        std::fs::write(dir.path().join("labels.csv"), "id,label\na,1\n").unwrap();
        let err = load_cohort(&series_dir, &dir.path().join("labels.csv")).unwrap_err();
        assert!(matches!(err, Error::MissingLabel(id) if id == "b"));
    }

    #[test]
    fn load_reports_dimension_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let series_dir = dir.path().join("series");
        std::fs::create_dir_all(&series_dir).unwrap();
        std::fs::write(series_dir.join("a.csv"), "1,2\n2,1\n3,5\n").unwrap();
        std::fs::write(series_dir.join("b.csv"), "0,1,9\n4,3,2\n2,8,1\n").unwrap();
        std::fs::write(dir.path().join("labels.csv"), "id,label\na,1\nb,0\n").unwrap();
        let err = load_cohort(&series_dir, &dir.path().join("labels.csv")).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn synthetic_cohort_is_deterministic() {
        let a = generate_synthetic_cohort(4, 6, 5, 0.7, 99).unwrap();
        let b = generate_synthetic_cohort(4, 6, 5, 0.7, 99).unwrap();
        for (x, y) in a.subjects().iter().zip(b.subjects()) {
            assert_eq!(x.series, y.series);
        }
        let c = generate_synthetic_cohort(4, 6, 5, 0.7, 100).unwrap();
        assert_ne!(a.subjects()[0].series, c.subjects()[0].series);
    }

    #[test]
    fn split_exact_divisibility() {
        let cohort = generate_synthetic_cohort(10, 5, 4, 0.0, 1).unwrap();
        let plan = split_stratified(&cohort, (0.8, 0.0, 0.2), 42).unwrap();
        assert_eq!(plan.train_idx.len(), 16);
        assert!(plan.val_idx.is_empty());
        assert_eq!(plan.test_idx.len(), 4);
        let labels = cohort.labels();
        let train_pos = plan.train_idx.iter().filter(|&&i| labels[i] == 1).count();
        assert_eq!(train_pos, 8);
        let test_pos = plan.test_idx.iter().filter(|&&i| labels[i] == 1).count();
        assert_eq!(test_pos, 2);
    }

    #[test]
    fn split_matches_nested_eighty_twenty_scheme() {
        let cohort = generate_synthetic_cohort(50, 5, 4, 0.0, 1).unwrap();
        let plan = split_stratified(&cohort, (0.64, 0.16, 0.20), 3).unwrap();
        assert_eq!(plan.train_idx.len(), 64);
        assert_eq!(plan.val_idx.len(), 16);
        assert_eq!(plan.test_idx.len(), 20);
        let labels = cohort.labels();
        for (part, want_pos) in [
            (&plan.train_idx, 32),
            (&plan.val_idx, 8),
            (&plan.test_idx, 10),
        ] {
            let pos = part.iter().filter(|&&i| labels[i] == 1).count();
            assert_eq!(pos, want_pos);
        }
    }

    #[test]
    fn split_is_deterministic() {
        let cohort = generate_synthetic_cohort(7, 5, 4, 0.0, 1).unwrap();
        let a = split_stratified(&cohort, (0.6, 0.2, 0.2), 5).unwrap();
        let b = split_stratified(&cohort, (0.6, 0.2, 0.2), 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_rejects_too_small_class() {
        let mut subjects = vec![SubjectRecord::new("p", tiny_series(5, 4, 0.3), 1).unwrap()];
        for i in 0..6 {
            subjects.push(
                SubjectRecord::new(format!("n{i}"), tiny_series(5, 4, 0.1 * i as f64 + 0.5), 0)
                    .unwrap(),
            );
        }
        let cohort = Cohort::new(subjects).unwrap();
        // One positive subject cannot cover train, val, and test.
        assert!(split_stratified(&cohort, (0.6, 0.2, 0.2), 1).is_err());
    }
}
