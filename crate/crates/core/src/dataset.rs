//! Pima Indians Diabetes ingestion, per-feature statistics, z-score
//! standardization and stratified fold assignment.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::Scalar;

/// Number of clinical features per Pima record.
pub const PIMA_FEATURES: usize = 8;

pub const FEATURE_NAMES: [&str; PIMA_FEATURES] = [
    "pregnancies",
    "plasma_glucose",
    "diastolic_bp",
    "triceps_skinfold",
    "serum_insulin",
    "bmi",
    "pedigree",
    "age",
];

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("line {line}: expected {expected} fields, found {found}")]
    FieldCount {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("line {line}, field {field}: `{value}` is not a number")]
    NonNumeric {
        line: u64,
        field: usize,
        value: String,
    },
    #[error("line {line}, field {field}: value is not finite")]
    NonFinite { line: u64, field: usize },
    #[error("line {line}: label `{value}` is not 0 or 1")]
    InvalidLabel { line: u64, value: String },
    #[error("csv read failed: {0}")]
    Csv(String),
    #[error("no samples")]
    Empty,
    #[error("{rows} feature rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("need at least {needed} samples, got {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("feature column {column} is constant (zero standard deviation)")]
    ConstantColumn { column: usize },
    #[error("dimension mismatch: expected {expected} features, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid fold count {k} for {n} samples")]
    InvalidFoldCount { k: usize, n: usize },
    #[error("class {label} has {count} samples; at least {needed} required")]
    ClassTooSmall {
        label: Label,
        count: usize,
        needed: usize,
    },
}

/// Binary class label. Diabetic (`1` in the file) is the positive class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn from_sign<T: Scalar>(v: T) -> Self {
        if v >= T::zero() {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn sign<T: Scalar>(self) -> T {
        match self {
            Label::Positive => T::one(),
            Label::Negative => -T::one(),
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

impl From<Label> for i8 {
    fn from(l: Label) -> i8 {
        match l {
            Label::Positive => 1,
            Label::Negative => -1,
        }
    }
}

impl TryFrom<i8> for Label {
    type Error = String;

    fn try_from(v: i8) -> Result<Self, String> {
        match v {
            1 => Ok(Label::Positive),
            -1 => Ok(Label::Negative),
            other => Err(format!("label must be +1 or -1, got {other}")),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Positive => "+1",
            Label::Negative => "-1",
        })
    }
}

/// One parsed line of the Pima file.
#[derive(Clone, Debug, PartialEq)]
pub struct RawRecord {
    pub features: [f64; PIMA_FEATURES],
    /// 1 = tested positive for diabetes, 0 = negative.
    pub label: u8,
}

fn parse_number(line: u64, field: usize, raw: &str) -> Result<f64, DatasetError> {
    let v: f64 = raw.parse().map_err(|_| DatasetError::NonNumeric {
        line,
        field,
        value: raw.to_string(),
    })?;
    if !v.is_finite() {
        return Err(DatasetError::NonFinite { line, field });
    }
    Ok(v)
}

/// Parses Pima CSV text: 9 numeric fields per line (8 features and a 0/1
/// label). A single leading header line is skipped when its first field is
/// not numeric. Blank lines are ignored.
pub fn parse_csv(text: &str) -> Result<Vec<RawRecord>, DatasetError> {
    parse_reader(text.as_bytes())
}

pub fn parse_reader<R: Read>(reader: R) -> Result<Vec<RawRecord>, DatasetError> {
    parse_rows(reader, true)?
        .into_iter()
        .map(|q| {
            Ok(RawRecord {
                features: q.features,
                label: q.label.expect("labels required"),
            })
        })
        .collect()
}

/// A row to classify; the label column is optional.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryRow {
    pub line: u64,
    pub features: [f64; PIMA_FEATURES],
    pub label: Option<u8>,
}

/// Like [`parse_reader`], but each line may carry 8 fields (features only)
/// or 9 (features and label).
pub fn parse_query_reader<R: Read>(reader: R) -> Result<Vec<QueryRow>, DatasetError> {
    parse_rows(reader, false)
}

fn parse_rows<R: Read>(reader: R, require_label: bool) -> Result<Vec<QueryRow>, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut rows = Vec::new();
    let mut first = true;
    for result in rdr.records() {
        let rec = result.map_err(|e| DatasetError::Csv(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if first {
            first = false;
            if rec.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
                continue;
            }
        }
        let labelled = rec.len() == PIMA_FEATURES + 1;
        if !labelled && (require_label || rec.len() != PIMA_FEATURES) {
            return Err(DatasetError::FieldCount {
                line,
                expected: PIMA_FEATURES + 1,
                found: rec.len(),
            });
        }
        let mut features = [0.0; PIMA_FEATURES];
        for (j, slot) in features.iter_mut().enumerate() {
            *slot = parse_number(line, j + 1, &rec[j])?;
        }
        let label = if labelled {
            let raw_label = &rec[PIMA_FEATURES];
            Some(match parse_number(line, PIMA_FEATURES + 1, raw_label) {
                Ok(v) if v == 0.0 => 0,
                Ok(v) if v == 1.0 => 1,
                Ok(_) => {
                    return Err(DatasetError::InvalidLabel {
                        line,
                        value: raw_label.to_string(),
                    })
                }
                Err(e) => return Err(e),
            })
        } else {
            None
        };
        rows.push(QueryRow { line, features, label });
    }
    Ok(rows)
}

/// Feature matrix with one row per sample and a ±1 label per row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: crate::Scalar")]
pub struct SampleMatrix<T> {
    #[serde(with = "crate::nested::matrix")]
    x: Array2<T>,
    y: Vec<Label>,
}

impl<T: Scalar> SampleMatrix<T> {
    pub fn new(x: Array2<T>, y: Vec<Label>) -> Result<Self, DatasetError> {
        if x.nrows() != y.len() {
            return Err(DatasetError::LengthMismatch {
                rows: x.nrows(),
                labels: y.len(),
            });
        }
        if x.ncols() == 0 {
            return Err(DatasetError::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        Ok(Self { x, y })
    }

    pub fn from_rows(rows: &[Vec<T>], y: Vec<Label>) -> Result<Self, DatasetError> {
        let d = rows.first().map_or(0, Vec::len);
        let mut x = Array2::zeros((rows.len(), d));
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(DatasetError::DimensionMismatch {
                    expected: d,
                    found: r.len(),
                });
            }
            x.row_mut(i).assign(&ArrayView1::from(r.as_slice()));
        }
        Self::new(x, y)
    }

    pub fn n_samples(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn features(&self) -> &Array2<T> {
        &self.x
    }

    pub fn labels(&self) -> &[Label] {
        &self.y
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, T> {
        self.x.row(i)
    }

    pub fn n_positive(&self) -> usize {
        self.y.iter().filter(|l| l.is_positive()).count()
    }

    /// Copies the given rows, in order, into a new matrix.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            x: self.x.select(Axis(0), indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
        }
    }

    /// Same labels, new features (used after projection).
    pub fn with_features(&self, x: Array2<T>) -> Result<Self, DatasetError> {
        Self::new(x, self.y.clone())
    }
}

/// Converts parsed records to a matrix, mapping label 1 to +1 and 0 to -1.
pub fn to_matrix<T: Scalar>(records: &[RawRecord]) -> Result<SampleMatrix<T>, DatasetError> {
    if records.is_empty() {
        return Err(DatasetError::Empty);
    }
    let x = Array2::from_shape_fn((records.len(), PIMA_FEATURES), |(i, j)| {
        T::lit(records[i].features[j])
    });
    let y = records
        .iter()
        .map(|r| {
            if r.label == 1 {
                Label::Positive
            } else {
                Label::Negative
            }
        })
        .collect();
    SampleMatrix::new(x, y)
}

/// Per-feature descriptive statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    /// 1-based feature number.
    pub feature: usize,
    pub name: String,
    pub mean: f64,
    /// Bessel-corrected (n − 1) standard deviation; 0 for a single sample.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

pub fn summary_stats<T: Scalar>(m: &SampleMatrix<T>) -> Vec<FeatureSummary> {
    let n = m.n_samples();
    m.x.columns()
        .into_iter()
        .enumerate()
        .map(|(j, col)| {
            let vals: Vec<f64> = col.iter().map(|v| v.as_f64()).collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let ss: f64 = vals.iter().map(|v| (v - mean).powi(2)).sum();
            let std = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            FeatureSummary {
                feature: j + 1,
                name: FEATURE_NAMES.get(j).map_or_else(|| format!("f{}", j + 1), |s| s.to_string()),
                mean,
                std,
                min,
                max,
            }
        })
        .collect()
}

/// Renders summaries as an aligned text table: mean and std to one decimal,
/// min/max in their shortest exact form.
pub fn render_summary_table(rows: &[FeatureSummary]) -> String {
    let mut out = format!(
        "{:<8} {:>8} {:>20} {:>12}\n",
        "Feature", "Mean", "Standard deviation", "Min/max"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<8} {:>8.1} {:>20.1} {:>12}\n",
            r.feature,
            r.mean,
            r.std,
            format!("{}/{}", r.min, r.max)
        ));
    }
    out
}

/// Column means and population standard deviations for z-scoring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: crate::Scalar")]
pub struct StandardizationParams<T> {
    #[serde(with = "crate::nested::vector")]
    pub means: Array1<T>,
    #[serde(with = "crate::nested::vector")]
    pub stds: Array1<T>,
}

impl<T: Scalar> StandardizationParams<T> {
    pub fn identity(d: usize) -> Self {
        Self {
            means: Array1::zeros(d),
            stds: Array1::ones(d),
        }
    }

    pub fn n_features(&self) -> usize {
        self.means.len()
    }

    pub fn fit(m: &SampleMatrix<T>) -> Result<Self, DatasetError> {
        standardize_fit(m)
    }

    pub fn apply(&self, m: &SampleMatrix<T>) -> Result<SampleMatrix<T>, DatasetError> {
        standardize_apply(self, m)
    }

    pub fn apply_row(&self, x: ArrayView1<'_, T>) -> Result<Array1<T>, DatasetError> {
        if x.len() != self.n_features() {
            return Err(DatasetError::DimensionMismatch {
                expected: self.n_features(),
                found: x.len(),
            });
        }
        Ok((&x - &self.means) / &self.stds)
    }
}

pub fn standardize_fit<T: Scalar>(m: &SampleMatrix<T>) -> Result<StandardizationParams<T>, DatasetError> {
    let n = m.n_samples();
    if n < 2 {
        return Err(DatasetError::TooFewSamples { needed: 2, found: n });
    }
    let nf = T::lit(n as f64);
    let means = m.x.sum_axis(Axis(0)) / nf;
    let mut stds = Array1::zeros(m.n_features());
    for (j, col) in m.x.columns().into_iter().enumerate() {
        let mu = means[j];
        let var = col.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() / nf;
        if var <= T::zero() {
            return Err(DatasetError::ConstantColumn { column: j });
        }
        stds[j] = var.sqrt();
    }
    Ok(StandardizationParams { means, stds })
}

pub fn standardize_apply<T: Scalar>(
    params: &StandardizationParams<T>,
    m: &SampleMatrix<T>,
) -> Result<SampleMatrix<T>, DatasetError> {
    if params.n_features() != m.n_features() {
        return Err(DatasetError::DimensionMismatch {
            expected: params.n_features(),
            found: m.n_features(),
        });
    }
    let x = (&m.x - &params.means) / &params.stds;
    m.with_features(x)
}

/// Assignment of every sample to one of `k` folds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    /// Sorted (train, test) row indices for fold `f`.
    pub fn split(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        let (test, train): (Vec<usize>, Vec<usize>) =
            (0..self.assignments.len()).partition(|&i| self.assignments[i] == f);
        (train, test)
    }

    pub fn fold_size(&self, f: usize) -> usize {
        self.assignments.iter().filter(|&&a| a == f).count()
    }
}

fn class_members(y: &[Label]) -> BTreeMap<Label, Vec<usize>> {
    let mut by_class: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
    for (i, &l) in y.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    by_class
}

/// Stratified k-fold assignment.
///
/// Each class is shuffled with the seeded generator and dealt round-robin
/// over the folds; the dealing position carries over from one class to the
/// next, so per-class counts and total fold sizes each differ by at most one.
/// Requires `2 <= k <= n` and at least two members per class.
pub fn stratified_kfold(y: &[Label], k: usize, seed: u64) -> Result<FoldPlan, DatasetError> {
    let n = y.len();
    if k < 2 || k > n {
        return Err(DatasetError::InvalidFoldCount { k, n });
    }
    let by_class = class_members(y);
    for (&label, members) in &by_class {
        if members.len() < 2 {
            return Err(DatasetError::ClassTooSmall {
                label,
                count: members.len(),
                needed: 2,
            });
        }
    }
    let mut rng = rng::derived(seed, "stratified_kfold", k as u64);
    let mut assignments = vec![0; n];
    let mut next = 0;
    // Negatives first, then positives (BTreeMap order).
    for members in by_class.values() {
        let mut members = members.clone();
        members.shuffle(&mut rng);
        for i in members {
            assignments[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldPlan { k, assignments, seed })
}

/// Stratified single train/test split with exactly `test_size` test rows.
/// Per-class test counts are proportional to class frequencies (largest
/// remainder rounding). Returns sorted (train, test) indices.
pub fn stratified_holdout(
    y: &[Label],
    test_size: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), DatasetError> {
    let n = y.len();
    if test_size == 0 || test_size >= n {
        return Err(DatasetError::InvalidFoldCount { k: test_size, n });
    }
    let by_class = class_members(y);
    let quotas: Vec<(f64, usize)> = by_class
        .values()
        .map(|m| {
            let exact = m.len() as f64 * test_size as f64 / n as f64;
            (exact, exact.floor() as usize)
        })
        .collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.1).collect();
    let mut remaining = test_size - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a].0 - quotas[a].1 as f64;
        let rb = quotas[b].0 - quotas[b].1 as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &c in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        counts[c] += 1;
        remaining -= 1;
    }

    let mut rng = rng::derived(seed, "stratified_holdout", test_size as u64);
    let mut test = Vec::with_capacity(test_size);
    for ((&label, members), &count) in by_class.iter().zip(&counts) {
        if count >= members.len() {
            return Err(DatasetError::ClassTooSmall {
                label,
                count: members.len(),
                needed: count + 1,
            });
        }
        let mut members = members.clone();
        members.shuffle(&mut rng);
        test.extend_from_slice(&members[..count]);
    }
    test.sort_unstable();
    let mut is_test = vec![false; n];
    for &i in &test {
        is_test[i] = true;
    }
    let train = (0..n).filter(|&i| !is_test[i]).collect();
    Ok((train, test))
}
